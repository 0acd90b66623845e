//! Closed-form laws of winding hitting times.
//!
//! Conventions: Brownian motions are standard (unit variance per unit time
//! and per coordinate), planar processes start at `z0 = 1` on the positive
//! real axis unless an [`OuSpec`] says otherwise. Starting at `z0` scales
//! every hitting time by `z0²` and shifts every log-moment by `2 ln z0`.

use std::f64::consts::{FRAC_PI_2, LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    arcsinh_a, kummer_sum, ln_sinh, log_gamma, quad_semi_infinite, sech, Decay, SeriesEval,
    SeriesTruncation,
};

/// Euler-Mascheroni constant `c_E = -Γ'(1)`.
pub const EULER_MASCHERONI: f64 = 0.5772156649015329;

/// Quadrature tolerance used when a law needs an integral and the caller
/// did not supply one.
pub const DEFAULT_QUAD_TOL: f64 = 1e-12;

/// Cone `{-d < θ < c}` and the constants the paper derives from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub c: f64,
    pub d: f64,
}

impl ConeSpec {
    pub fn new(c: f64, d: f64) -> Result<Self> {
        for (name, v) in [("c", c), ("d", d)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::domain("ConeSpec", format!("{name} = {v} must be finite and > 0")));
            }
        }
        Ok(Self { c, d })
    }

    pub fn symmetric(c: f64) -> Result<Self> {
        Self::new(c, c)
    }

    pub fn is_symmetric(&self) -> bool {
        self.c == self.d
    }

    pub(crate) fn require_symmetric(&self, op: &'static str) -> Result<()> {
        if self.is_symmetric() {
            Ok(())
        } else {
            Err(Error::domain(op, format!("needs a symmetric cone, got c = {}, d = {}", self.c, self.d)))
        }
    }

    /// `ψ = 2c`.
    pub fn psi(&self) -> f64 {
        2.0 * self.c
    }

    /// `ζ = π / (2c)`.
    pub fn zeta(&self) -> f64 {
        PI / (2.0 * self.c)
    }

    /// `ζ̂ = π / c`.
    pub fn zeta_hat(&self) -> f64 {
        PI / self.c
    }

    /// `ν_k = π (2k+1) / (4c)`.
    pub fn nu(&self, k: usize) -> f64 {
        PI * (2 * k + 1) as f64 / (4.0 * self.c)
    }
}

/// Complex Ornstein-Uhlenbeck dynamics `dZ = √(2D) dB - λ Z dt`, `Z_0 = z0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuSpec {
    pub lambda: f64,
    pub diffusion: f64,
    pub z0: f64,
}

impl Default for OuSpec {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            diffusion: 0.5,
            z0: 1.0,
        }
    }
}

impl OuSpec {
    pub fn new(lambda: f64, diffusion: f64, z0: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::domain("OuSpec", format!("lambda = {lambda} must be finite and >= 0")));
        }
        if !(diffusion > 0.0) || !diffusion.is_finite() {
            return Err(Error::domain("OuSpec", format!("D = {diffusion} must be finite and > 0")));
        }
        if !(z0 > 0.0) || !z0.is_finite() {
            return Err(Error::domain("OuSpec", format!("z0 = {z0} must be finite and > 0")));
        }
        Ok(Self {
            lambda,
            diffusion,
            z0,
        })
    }

    /// Deterministic clock `α(t) = 2D ∫₀ᵗ e^{2λs} ds`.
    pub fn alpha(&self, t: f64) -> f64 {
        if self.lambda == 0.0 {
            2.0 * self.diffusion * t
        } else {
            self.diffusion * (2.0 * self.lambda * t).exp_m1() / self.lambda
        }
    }

    /// Inverse clock `α⁻¹(s) = ln(1 + λs/D) / (2λ)`.
    pub fn alpha_inv(&self, s: f64) -> f64 {
        if self.lambda == 0.0 {
            s / (2.0 * self.diffusion)
        } else {
            (self.lambda * s / self.diffusion).ln_1p() / (2.0 * self.lambda)
        }
    }
}

fn check_positive(op: &'static str, name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(op, format!("{name} = {v} must be finite and > 0")))
    }
}

fn check_nonneg(op: &'static str, name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && !v.is_nan() {
        Ok(())
    } else {
        Err(Error::domain(op, format!("{name} = {v} must be >= 0")))
    }
}

pub fn cauchy_density(y: f64, scale: f64) -> Result<f64> {
    check_positive("cauchy_density", "scale", scale)?;
    Ok(scale / (PI * (scale * scale + y * y)))
}

pub fn cauchy_cdf(y: f64, scale: f64) -> Result<f64> {
    check_positive("cauchy_cdf", "scale", scale)?;
    Ok(0.5 + (y / scale).atan() / PI)
}

/// Density of `β` at the exit time of `γ` from `(-c, c)`:
/// `(1/2c) / cosh(πx / 2c)`.
pub fn exit_density_symmetric(x: f64, cone: ConeSpec) -> Result<f64> {
    cone.require_symmetric("exit_density_symmetric")?;
    let c = cone.c;
    Ok(sech(PI * x / (2.0 * c)) / (2.0 * c))
}

/// CDF matching [`exit_density_symmetric`]: `(2/π) atan(e^{πx/2c})`.
pub fn exit_cdf_symmetric(x: f64, cone: ConeSpec) -> Result<f64> {
    cone.require_symmetric("exit_cdf_symmetric")?;
    Ok(2.0 / PI * (PI * x / (2.0 * cone.c)).exp().atan())
}

/// `E[exp(iλ β_{T})] = cosh(λ(c-d)/2) / cosh(λ(c+d)/2)` for the exit of `γ`
/// from `(-d, c)`.
pub fn exit_charfn(lambda: f64, cone: ConeSpec) -> f64 {
    let l = lambda.abs();
    let a = 0.5 * l * (cone.c - cone.d).abs();
    let b = 0.5 * l * (cone.c + cone.d);
    // ratio of cosh written with decaying exponentials only
    (a - b).exp() * (1.0 + (-2.0 * a).exp()) / (1.0 + (-2.0 * b).exp())
}

/// Density of `β` at the first time the range of `γ` reaches `c`:
/// `(2|y|/c²) / sinh(π|y|/c)`, equal to `2/(πc)` at `y = 0`.
pub fn range_density(y: f64, cone: ConeSpec) -> Result<f64> {
    check_positive("range_density", "c", cone.c)?;
    let c = cone.c;
    let u = PI * y.abs() / c;
    if u < 1e-8 {
        return Ok(2.0 / (PI * c));
    }
    if u > 700.0 {
        return Ok((2.0 * y.abs() / (c * c)).ln().exp() * 2.0 * (-u).exp());
    }
    Ok(2.0 * y.abs() / (c * c) / u.sinh())
}

/// CDF matching [`range_density`].
pub fn range_cdf(y: f64, cone: ConeSpec, tol: f64) -> Result<f64> {
    check_positive("range_cdf", "c", cone.c)?;
    if y == 0.0 {
        return Ok(0.5);
    }
    // P(|β| > |y|) = (4/π²) ∫_X^∞ v / sinh v dv with X = π|y|/c
    let x = PI * y.abs() / cone.c;
    let tail = quad_semi_infinite(
        |s| {
            let v = x + s;
            if v < 1e-8 {
                1.0
            } else {
                v / v.sinh()
            }
        },
        Decay::Exponential { rate: 1.0 },
        tol,
    )?;
    let upper = 0.5 * 4.0 / (PI * PI) * tail.value;
    Ok(if y > 0.0 { 1.0 - upper } else { upper })
}

/// `E[(2πT)^{-1/2} e^{-x/(2T)}]` for the one-sided winding time `T^θ_c`:
/// `(1/√(1+x)) · c / (π(c² + a(√x)²))`.
pub fn laplace_one_sided(x: f64, c: f64) -> Result<f64> {
    check_nonneg("laplace_one_sided", "x", x)?;
    check_positive("laplace_one_sided", "c", c)?;
    if x.is_infinite() {
        return Ok(0.0);
    }
    let a = arcsinh_a(x.sqrt());
    Ok(c / (PI * (c * c + a * a)) / (1.0 + x).sqrt())
}

/// Laplace transform of `1/(2T^θ_c)` under the measure `Q_c`.
pub fn q_laplace(x: f64, c: f64) -> Result<f64> {
    check_nonneg("q_laplace", "x", x)?;
    check_positive("q_laplace", "c", c)?;
    if x.is_infinite() {
        return Ok(0.0);
    }
    let a = arcsinh_a(x.sqrt());
    Ok(1.0 / ((1.0 + x).sqrt() * (1.0 + a * a / (c * c))))
}

/// `E[exp(-x / (2T^θ_c))]` under the original measure, reconstructed from
/// the one-sided transform `φ` as `∫_x^∞ φ(w) / √(w-x) dw`.
pub fn p_laplace_from_phi(x: f64, c: f64, tol: f64) -> Result<f64> {
    check_nonneg("p_laplace_from_phi", "x", x)?;
    check_positive("p_laplace_from_phi", "c", c)?;
    if x.is_infinite() {
        return Ok(0.0);
    }
    // w = x + (1+x) sinh²v turns the integrand into 2(c/π) / (c² + a(√w)²)
    let half_ln_1px = 0.5 * x.ln_1p();
    let integrand = |v: f64| {
        let a = if v > 20.0 {
            // a(√w) ≈ ln(2√w) and √w ≈ √(1+x) e^v / 2
            half_ln_1px + v
        } else {
            let s = v.sinh();
            arcsinh_a((x + (1.0 + x) * s * s).sqrt())
        };
        2.0 * c / (PI * (c * c + a * a))
    };
    Ok(quad_semi_infinite(integrand, Decay::Algebraic, tol)?.value)
}

/// `E[(2πT)^{-1/2} e^{-x/(2T)}]` for the symmetric cone exit time
/// `T^θ_{-c,c}`: `1 / (2c √(1+x) cosh(ζ a(√x)))`.
pub fn laplace_two_sided(x: f64, cone: ConeSpec) -> Result<f64> {
    cone.require_symmetric("laplace_two_sided")?;
    check_nonneg("laplace_two_sided", "x", x)?;
    if x.is_infinite() {
        return Ok(0.0);
    }
    let a = arcsinh_a(x.sqrt());
    Ok(sech(cone.zeta() * a) / (2.0 * cone.c * (1.0 + x).sqrt()))
}

/// `E[(2πT̂)^{-1/2} e^{-x/(2T̂)}]` for the range time `T̂^θ_c`:
/// `(4/c²) (1/√(1+x)) a / (2 sinh(ζ̂ a))` with `a = a(√x)`, equal to
/// `2/(πc)` at `x = 0`.
pub fn laplace_range(x: f64, cone: ConeSpec) -> Result<f64> {
    check_positive("laplace_range", "c", cone.c)?;
    check_nonneg("laplace_range", "x", x)?;
    if x.is_infinite() {
        return Ok(0.0);
    }
    let c = cone.c;
    let zh = cone.zeta_hat();
    let a = arcsinh_a(x.sqrt());
    let u = zh * a;
    let ratio = if u < 1e-8 {
        1.0 / (2.0 * zh)
    } else {
        // a / (2 sinh(u)) = (u / sinh u) / (2ζ̂)
        (u.ln() - ln_sinh(u)).exp() / (2.0 * zh)
    };
    Ok(4.0 / (c * c) * ratio / (1.0 + x).sqrt())
}

/// Partial sum `f_{K,N}(t)` of the series for the density of `T^θ_{-c,c}`.
///
/// The returned [`SeriesEval`] carries the value (negative values are
/// reported, never clamped), the magnitude of the last outer term and the
/// orders used.
pub fn exit_cone_density(t: f64, cone: ConeSpec, trunc: SeriesTruncation) -> Result<SeriesEval> {
    cone.require_symmetric("exit_cone_density")?;
    check_positive("exit_cone_density", "t", t)?;
    trunc.validate()?;
    let c = cone.c;
    let w = 0.5 / t;
    let ln_w = w.ln();
    let base = (2f64.sqrt() / c).ln() - 0.5 * t.ln() - w;
    let adaptive = trunc.is_adaptive();

    let mut total = 0.0;
    let mut pair = 0.0;
    let mut last;
    let mut prev_abs = f64::INFINITY;
    let mut inner_max = 0;
    let mut k = 0usize;
    loop {
        let nu = cone.nu(k);
        let ln_pref = base + nu.ln() + (nu + 0.5) * ln_w + log_gamma(nu)? - log_gamma(2.0 * nu + 1.0)?;
        let s = kummer_sum(nu, w, ln_pref, trunc.mode, trunc.n_max, trunc.tail_tol)?;
        inner_max = inner_max.max(s.terms);
        let mag = (ln_pref + s.ln_sum).exp();
        pair += if k % 2 == 0 { mag } else { -mag };
        if k % 2 == 1 {
            total += pair;
            pair = 0.0;
        }
        last = mag;
        let done = if adaptive {
            mag <= trunc.tail_tol && mag < prev_abs
        } else {
            k >= trunc.k_max
        };
        if done {
            break;
        }
        if adaptive && k >= trunc.k_max {
            return Err(Error::non_convergence(
                "exit_cone_density",
                format!("outer term {mag:e} above {:e} after {} terms at t = {t}", trunc.tail_tol, k + 1),
            ));
        }
        prev_abs = mag;
        k += 1;
    }
    total += pair;
    Ok(SeriesEval {
        value: total,
        last_term: last,
        outer_terms: k + 1,
        inner_terms: inner_max,
    })
}

/// Below `c²/80` the density of `T^θ_{-c,c}` is smaller than `e^{-40}`;
/// tables and mass checks treat it as zero there.
pub fn exit_cone_density_floor(cone: ConeSpec) -> f64 {
    cone.c * cone.c / 80.0
}

/// `∫₀^∞ f(t) dt` for the series density, by quadrature.
pub fn exit_cone_density_mass(cone: ConeSpec, trunc: SeriesTruncation, tol: f64) -> Result<f64> {
    cone.require_symmetric("exit_cone_density_mass")?;
    let floor = exit_cone_density_floor(cone);
    let err = std::cell::RefCell::new(None);
    let q = quad_semi_infinite(
        |t| {
            if t < floor {
                return 0.0;
            }
            match exit_cone_density(t, cone, trunc) {
                Ok(v) => v.value,
                Err(e) => {
                    err.borrow_mut().get_or_insert(e);
                    0.0
                }
            }
        },
        Decay::Algebraic,
        tol,
    )?;
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    Ok(q.value)
}

/// Tabulated CDF of `T^θ_{-c,c}` built by integrating the series density in
/// `ln t` with Simpson's rule.
#[derive(Debug, Clone)]
pub struct ExitCdfTable {
    ln_t0: f64,
    step: f64,
    cdf: Vec<f64>,
}

impl ExitCdfTable {
    const STEP: f64 = 0.01;

    pub fn build(cone: ConeSpec, trunc: SeriesTruncation) -> Result<Self> {
        cone.require_symmetric("ExitCdfTable")?;
        let ln_t0 = exit_cone_density_floor(cone).ln();
        // the tail decays like t^{-ν₀}; stop where it is below e^{-25}
        let ln_t1 = (25.0 / cone.nu(0)).clamp(1e6f64.ln(), 230.0);
        let cells = ((ln_t1 - ln_t0) / Self::STEP).ceil() as usize;
        let h = Self::STEP;
        let g = |j: usize| -> Result<f64> {
            let t = (ln_t0 + h * j as f64 * 0.5).exp();
            Ok(exit_cone_density(t, cone, trunc)?.value * t)
        };
        let mut cdf = Vec::with_capacity(cells + 1);
        cdf.push(0.0);
        let mut left = g(0)?;
        let mut acc = 0.0;
        for i in 0..cells {
            let mid = g(2 * i + 1)?;
            let right = g(2 * i + 2)?;
            acc += h / 6.0 * (left + 4.0 * mid + right);
            cdf.push(acc);
            left = right;
        }
        Ok(Self {
            ln_t0,
            step: h,
            cdf,
        })
    }

    /// Mass captured by the table.
    pub fn total(&self) -> f64 {
        *self.cdf.last().expect("table is never empty")
    }

    pub fn cdf(&self, t: f64) -> f64 {
        if !(t > 0.0) {
            return 0.0;
        }
        let x = (t.ln() - self.ln_t0) / self.step;
        if x <= 0.0 {
            return 0.0;
        }
        let i = x.floor() as usize;
        if i + 1 >= self.cdf.len() {
            return self.total().min(1.0);
        }
        let frac = x - i as f64;
        (self.cdf[i] + frac * (self.cdf[i + 1] - self.cdf[i])).clamp(0.0, 1.0)
    }
}

/// `F(c, δ) = ∫₀^∞ ln(sinh(cz)) / cosh(δz) dz`.
pub fn log_sinh_integral(c: f64, delta: f64, tol: f64) -> Result<f64> {
    check_positive("log_sinh_integral", "c", c)?;
    check_positive("log_sinh_integral", "delta", delta)?;
    let q = quad_semi_infinite(
        |z| ln_sinh(c * z) * sech(delta * z),
        Decay::Exponential { rate: delta },
        tol,
    )?;
    Ok(q.value)
}

/// `E[ln T^θ_{-c,c}] = 2 F(c, π/2) + ln 2 + c_E` for a unit start point.
pub fn expected_log_exit(cone: ConeSpec, tol: f64) -> Result<f64> {
    cone.require_symmetric("expected_log_exit")?;
    Ok(2.0 * log_sinh_integral(cone.c, FRAC_PI_2, tol)? + LN_2 + EULER_MASCHERONI)
}

/// `E[(sinh β_{T^γ_{-c,c}})²] = (1/cos 2c - 1)/2`, which is also
/// `E[T^θ_{-c,c}]`; finite only for `c < π/4`.
pub fn sinh_moment2(c: f64) -> Result<f64> {
    if !(c > 0.0 && c < PI / 4.0) {
        return Err(Error::domain("sinh_moment2", format!("c = {c} must lie in (0, π/4)")));
    }
    Ok(0.5 * (1.0 / (2.0 * c).cos() - 1.0))
}

/// `E[(sinh β_{T^γ_{-c,c}})⁴] = (1/cos 4c - 4/cos 2c + 3)/8`; finite only for
/// `c < π/8`.
pub fn sinh_moment4(c: f64) -> Result<f64> {
    if !(c > 0.0 && c < PI / 8.0) {
        return Err(Error::domain("sinh_moment4", format!("c = {c} must lie in (0, π/8)")));
    }
    if c < 0.02 {
        // the closed form cancels to O(c⁴); use the Taylor series
        let c2 = c * c;
        return Ok(5.0 * c2 * c2 * (1.0 + c2 * (122.0 / 15.0 + c2 * (277.0 / 5.0 + c2 * 1717714.0 / 4725.0))));
    }
    Ok(0.125 * (1.0 / (4.0 * c).cos() - 4.0 / (2.0 * c).cos() + 3.0))
}

/// `∫₀^∞ sinh(cz)^p / cosh(πz/2) dz = E[(sinh β_{T^γ_{-c,c}})^p]`.
pub fn sinh_moment_integral(c: f64, p: i32, tol: f64) -> Result<f64> {
    check_positive("sinh_moment_integral", "c", c)?;
    let rate = FRAC_PI_2 - p as f64 * c;
    if !(p > 0 && rate > 0.0) {
        return Err(Error::domain(
            "sinh_moment_integral",
            format!("moment {p} is infinite at c = {c}"),
        ));
    }
    let q = quad_semi_infinite(
        |z| {
            let l = p as f64 * ln_sinh(c * z) - FRAC_PI_2 * z;
            // sech(πz/2) = 2e^{-πz/2} / (1 + e^{-πz})
            2.0 * l.exp() / (1.0 + (-PI * z).exp())
        },
        Decay::Exponential { rate },
        tol,
    )?;
    Ok(q.value)
}

/// `E[(T^θ_{-d,c})^p] < ∞` iff `p < π / (2(c+d))`.
pub fn spitzer_moment_finite(p: f64, cone: ConeSpec) -> bool {
    p < PI / (2.0 * (cone.c + cone.d))
}

/// Limit of `(ln t) P(T^θ_c > t)`, namely `4c/π`.
pub fn tail_constant(c: f64) -> Result<f64> {
    check_positive("tail_constant", "c", c)?;
    Ok(4.0 * c / PI)
}

/// `E[(ln T^θ_c)_+^η] < ∞` iff `η < 1`.
pub fn log_moment_finite(eta: f64) -> bool {
    eta < 1.0
}

/// OU winding exit time from the Brownian one through the clock inverse.
pub fn ou_exit_from_bm_exit(t_bm: f64, ou: OuSpec) -> Result<f64> {
    check_nonneg("ou_exit_from_bm_exit", "t_bm", t_bm)?;
    Ok(ou.alpha_inv(t_bm))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuRegime {
    LargeLambda,
    SmallLambda,
}

/// Asymptotic approximation of `E[T^{(λ)}_c]`.
///
/// Large λ: `(ln(λ/D) + 2 ln z0 + E[ln T^θ_{-c,c}]) / (2λ)`.
/// Small λ: `s E[sinh²] - λ s² E[sinh⁴]/3` with `s = z0²/(2D)`.
pub fn ou_mean_exit_asymptotics(cone: ConeSpec, ou: OuSpec, regime: OuRegime, tol: f64) -> Result<f64> {
    cone.require_symmetric("ou_mean_exit_asymptotics")?;
    match regime {
        OuRegime::LargeLambda => {
            check_positive("ou_mean_exit_asymptotics", "lambda", ou.lambda)?;
            let shift = (ou.lambda / ou.diffusion).ln() + 2.0 * ou.z0.ln();
            Ok((shift + expected_log_exit(cone, tol)?) / (2.0 * ou.lambda))
        }
        OuRegime::SmallLambda => {
            if !(cone.c < PI / 8.0) {
                return Err(Error::domain(
                    "ou_mean_exit_asymptotics",
                    format!("small-lambda expansion needs c < π/8, got {}", cone.c),
                ));
            }
            let s = ou.z0 * ou.z0 / (2.0 * ou.diffusion);
            Ok(s * sinh_moment2(cone.c)? - ou.lambda * s * s * sinh_moment4(cone.c)? / 3.0)
        }
    }
}
