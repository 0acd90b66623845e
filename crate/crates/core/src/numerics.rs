//! Scalar special-function and quadrature kernels.
//!
//! Everything here is pure and reentrant. The Whittaker series is summed
//! through the term recurrence in log space so that the large Gamma ratios
//! never materialise, and the quadrature is a double-exponential rule on
//! `(0, ∞)` that absorbs integrable endpoint singularities such as `ln z`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default absolute tail tolerance for adaptive series.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;

/// Default cap on the number of inner (`n`) terms of a series.
pub const DEFAULT_MAX_INNER: usize = 10_000;

/// Default cap on the number of outer (`k`) terms of a series.
pub const DEFAULT_MAX_OUTER: usize = 100_000;

/// `ln Γ(x)` for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain("log_gamma", format!("x = {x} must be finite and > 0")));
    }
    Ok(libm::lgamma(x))
}

/// `a(x) = arg sinh(x) = ln(x + √(1 + x²))`, evaluated without cancellation
/// for negative or tiny arguments.
pub fn arcsinh_a(x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax > 1e8 {
        std::f64::consts::LN_2 + ax.ln()
    } else {
        (ax + ax * ax / (1.0 + (1.0 + ax * ax).sqrt())).ln_1p()
    };
    v.copysign(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TruncationMode {
    /// Sum exactly the terms `k <= k_max`, `n <= n_max`.
    Fixed,
    /// Grow the orders until the tail bound drops below `tail_tol`;
    /// `k_max`/`n_max` act as hard caps.
    Adaptive,
}

/// Truncation orders for the double series of the exit-time density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesTruncation {
    pub k_max: usize,
    pub n_max: usize,
    pub tail_tol: f64,
    pub mode: TruncationMode,
}

impl SeriesTruncation {
    pub fn fixed(k_max: usize, n_max: usize) -> Self {
        Self {
            k_max,
            n_max,
            tail_tol: DEFAULT_TAIL_TOL,
            mode: TruncationMode::Fixed,
        }
    }

    pub fn adaptive(tail_tol: f64) -> Result<Self> {
        let t = Self {
            k_max: DEFAULT_MAX_OUTER,
            n_max: DEFAULT_MAX_INNER,
            tail_tol,
            mode: TruncationMode::Adaptive,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn with_caps(mut self, k_max: usize, n_max: usize) -> Self {
        self.k_max = k_max;
        self.n_max = n_max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tail_tol > 0.0) || !self.tail_tol.is_finite() {
            return Err(Error::domain(
                "SeriesTruncation",
                format!("tail_tol = {} must be > 0", self.tail_tol),
            ));
        }
        Ok(())
    }

    pub fn is_adaptive(&self) -> bool {
        self.mode == TruncationMode::Adaptive
    }
}

impl Default for SeriesTruncation {
    fn default() -> Self {
        Self::adaptive(DEFAULT_TAIL_TOL).expect("default tolerance is valid")
    }
}

/// Value of a truncated series together with what the truncation did.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesEval {
    pub value: f64,
    /// Magnitude of the last summand that was kept.
    pub last_term: f64,
    /// Number of outer terms kept (zero for single series).
    pub outer_terms: usize,
    /// Largest number of inner terms kept for any outer index.
    pub inner_terms: usize,
}

impl SeriesEval {
    pub fn is_negative(&self) -> bool {
        self.value < 0.0
    }
}

/// Running `ln Σ exp(l_i)` that never overflows.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogSum {
    max: f64,
    acc: f64,
}

impl LogSum {
    pub(crate) fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            acc: 0.0,
        }
    }

    pub(crate) fn push(&mut self, l: f64) {
        if l == f64::NEG_INFINITY {
            return;
        }
        if l > self.max {
            self.acc = self.acc * (self.max - l).exp() + 1.0;
            self.max = l;
        } else {
            self.acc += (l - self.max).exp();
        }
    }

    pub(crate) fn ln(&self) -> f64 {
        self.max + self.acc.ln()
    }
}

/// Outcome of summing the confluent series `Σ (ν)_n / (2ν+1)_n · wⁿ / n!`
/// in log space.
#[derive(Debug, Clone, Copy)]
pub(crate) struct KummerSum {
    /// `ln` of the sum.
    pub ln_sum: f64,
    /// `ln` of the last kept term (unscaled).
    pub ln_last: f64,
    pub terms: usize,
}

/// Sums `Σ_n r_n` with `r_0 = 1`, `r_{n+1} = r_n (ν+n) w / ((2ν+1+n)(n+1))`.
///
/// `ln_scale` is the log of the factor multiplying every term in the final
/// quantity; in adaptive mode the sum stops once the scaled tail bound is
/// below `tail_tol`.
pub(crate) fn kummer_sum(
    nu: f64,
    w: f64,
    ln_scale: f64,
    mode: TruncationMode,
    n_max: usize,
    tail_tol: f64,
) -> Result<KummerSum> {
    let ln_w = w.ln();
    let ln_tol = tail_tol.ln();
    let mut sum = LogSum::new();
    let mut ln_r = 0.0;
    let mut n = 0usize;
    loop {
        sum.push(ln_r);
        let nf = n as f64;
        let ratio_ln = (nu + nf).ln() + ln_w - (2.0 * nu + 1.0 + nf).ln() - (nf + 1.0).ln();
        let ln_next = ln_r + ratio_ln;
        match mode {
            TruncationMode::Fixed => {
                if n >= n_max {
                    break;
                }
            }
            TruncationMode::Adaptive => {
                if ln_next == f64::NEG_INFINITY {
                    // nu == 0 kills every term after the first
                    break;
                }
                if n >= 1 {
                    let n1 = nf + 1.0;
                    let q = (nu + n1) * w / ((2.0 * nu + 1.0 + n1) * (n1 + 1.0));
                    if q < 1.0 {
                        let ln_bound = ln_scale + ln_next - (1.0 - q).ln();
                        if ln_bound <= ln_tol && ln_scale + ln_r <= ln_tol.max(ln_scale + ln_r - 36.0)
                        {
                            break;
                        }
                    }
                }
                if n >= n_max {
                    return Err(Error::non_convergence(
                        "kummer_sum",
                        format!("tail above {tail_tol:e} after {n_max} terms (nu = {nu}, w = {w})"),
                    ));
                }
            }
        }
        ln_r = ln_next;
        n += 1;
    }
    Ok(KummerSum {
        ln_sum: sum.ln(),
        ln_last: ln_r,
        terms: n + 1,
    })
}

/// Whittaker function `M_{1/2,ν}(w)` for `ν > 0`, `w > 0`:
/// `w^{ν+1/2} e^{-w/2} Γ(2ν+1)/Γ(ν) Σ_n Γ(ν+n)/Γ(2ν+1+n) wⁿ/n!`.
pub fn whittaker_m_half(nu: f64, w: f64, trunc: SeriesTruncation) -> Result<SeriesEval> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::domain("whittaker_m_half", format!("nu = {nu} must be > 0")));
    }
    whittaker_m_half_nonneg(nu, w, trunc)
}

/// Same series as [`whittaker_m_half`] but also accepting `ν = 0`, where
/// `M_{1/2,0}(w) = √w e^{-w/2}`.
pub fn whittaker_m_half_nonneg(nu: f64, w: f64, trunc: SeriesTruncation) -> Result<SeriesEval> {
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(Error::domain("whittaker_m_half", format!("nu = {nu} must be >= 0")));
    }
    if !(w > 0.0) || !w.is_finite() {
        return Err(Error::domain("whittaker_m_half", format!("w = {w} must be > 0")));
    }
    trunc.validate()?;
    let ln_pref = (nu + 0.5) * w.ln() - 0.5 * w;
    let s = kummer_sum(nu, w, ln_pref, trunc.mode, trunc.n_max, trunc.tail_tol)?;
    Ok(SeriesEval {
        value: (ln_pref + s.ln_sum).exp(),
        last_term: (ln_pref + s.ln_last).exp(),
        outer_terms: 0,
        inner_terms: s.terms,
    })
}

/// How the integrand decays at infinity; selects the variable substitution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decay {
    /// `|f(z)| ≲ e^{-rate·z}`.
    Exponential { rate: f64 },
    /// Power-law decay, `|f(z)| ≲ z^{-1-ε}`.
    Algebraic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    pub abs_err_estimate: f64,
    pub evaluations: usize,
}

const QUAD_MIN_LEVEL: usize = 3;
const QUAD_MAX_LEVEL: usize = 12;

/// `∫₀^∞ f(z) dz` by a double-exponential rule.
///
/// The trapezoid step in the transformed variable is halved until two
/// successive levels agree to `tol`. Nodes are fixed per level, so the
/// result is bit-identical for identical input.
pub fn quad_semi_infinite<F>(f: F, decay: Decay, tol: f64) -> Result<QuadResult>
where
    F: Fn(f64) -> f64,
{
    if !(tol > 0.0) {
        return Err(Error::domain("quad_semi_infinite", format!("tol = {tol} must be > 0")));
    }
    let (lo, hi, map): (f64, f64, Box<dyn Fn(f64) -> (f64, f64)>) = match decay {
        Decay::Exponential { rate } => {
            if !(rate > 0.0) || !rate.is_finite() {
                return Err(Error::domain(
                    "quad_semi_infinite",
                    format!("decay rate = {rate} must be > 0"),
                ));
            }
            // z = exp(τ - e^{-τ}) / rate
            (
                -6.5,
                7.0,
                Box::new(move |tau: f64| {
                    let e = (-tau).exp();
                    let y = (tau - e).exp();
                    (y / rate, y * (1.0 + e) / rate)
                }),
            )
        }
        Decay::Algebraic => (
            -5.0,
            5.0,
            // z = exp(π/2 · sinh τ)
            Box::new(|tau: f64| {
                let half_pi = std::f64::consts::FRAC_PI_2;
                let z = (half_pi * tau.sinh()).exp();
                (z, z * half_pi * tau.cosh())
            }),
        ),
    };

    let mut evaluations = 0usize;
    let mut eval = |tau: f64| -> Result<(f64, f64)> {
        let (z, dz) = map(tau);
        if z == 0.0 || dz == 0.0 || !z.is_finite() || !dz.is_finite() {
            return Ok((0.0, 0.0));
        }
        evaluations += 1;
        let g = f(z) * dz;
        if g.is_nan() {
            return Err(Error::non_convergence(
                "quad_semi_infinite",
                format!("integrand is NaN at z = {z}"),
            ));
        }
        if g.is_infinite() {
            return Err(Error::non_convergence(
                "quad_semi_infinite",
                format!("integrand is infinite at z = {z}"),
            ));
        }
        Ok((g, g.abs()))
    };

    let mut h = 0.5;
    let k_lo = (lo / h).floor() as i64;
    let k_hi = (hi / h).ceil() as i64;
    let mut sum = 0.0;
    let mut abs_sum = 0.0;
    for k in k_lo..=k_hi {
        let (g, a) = eval(k as f64 * h)?;
        sum += g;
        abs_sum += a;
    }
    let mut estimate = h * sum;
    let mut err = f64::INFINITY;
    for level in 1..=QUAD_MAX_LEVEL {
        h *= 0.5;
        let k_lo = (lo / h).floor() as i64;
        let k_hi = (hi / h).ceil() as i64;
        let mut odd = 0.0;
        // only odd multiples of the new step are new nodes
        let start = if k_lo.rem_euclid(2) == 0 { k_lo + 1 } else { k_lo };
        let mut k = start;
        while k <= k_hi {
            let (g, a) = eval(k as f64 * h)?;
            odd += g;
            abs_sum += a;
            k += 2;
        }
        let refined = 0.5 * estimate + h * odd;
        let rounding = 4.0 * f64::EPSILON * h * abs_sum;
        err = (refined - estimate).abs().max(rounding);
        estimate = refined;
        if level >= QUAD_MIN_LEVEL && err <= tol {
            return Ok(QuadResult {
                value: estimate,
                abs_err_estimate: err,
                evaluations,
            });
        }
    }
    Err(Error::non_convergence(
        "quad_semi_infinite",
        format!("error estimate {err:e} above tol {tol:e} after {QUAD_MAX_LEVEL} levels"),
    ))
}

/// `ln sinh(x)` for `x > 0`, stable for both tiny and huge `x`.
pub fn ln_sinh(x: f64) -> f64 {
    if x > 20.0 {
        x - std::f64::consts::LN_2 + (-(-2.0 * x).exp()).ln_1p()
    } else if x < 1e-4 {
        x.ln() + x * x / 6.0
    } else {
        x.sinh().ln()
    }
}

/// `1 / cosh(x)` without overflow.
pub fn sech(x: f64) -> f64 {
    let e = (-x.abs()).exp();
    2.0 * e / (1.0 + e * e)
}
