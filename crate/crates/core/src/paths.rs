//! Random sampling of winding hitting times.
//!
//! Two families live here. Exact-in-law samplers use the skew-product
//! representation `T^θ = z0² A_τ` with `A_u = ∫₀ᵘ e^{2β_s} ds` and `τ` a
//! hitting time of an independent Brownian motion `γ`. Direct simulators
//! move the planar (or Ornstein-Uhlenbeck) process itself with exact
//! Gaussian transitions and accumulate the angle step by step; they share no
//! code with the exact samplers and serve as their oracles.
//!
//! Randomness comes from [`RngStream`]: one ChaCha8 stream per
//! `(master_seed, stream_id)`. Batches are cut into fixed chunks, one stream
//! per chunk, so results do not depend on the number of worker threads.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laws::{ConeSpec, OuSpec};
use crate::numerics::arcsinh_a;

/// Samples drawn per RNG stream when a batch is generated.
pub const CHUNK: usize = 4096;

/// A reproducible random stream: a fixed generator for each
/// `(master_seed, stream_id)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// I.i.d. real samples with the seed range that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub values: Vec<f64>,
    pub master_seed: u64,
    /// Half-open range of stream ids consumed.
    pub streams: (u64, u64),
    pub label: String,
}

impl SampleBatch {
    pub fn new(label: impl Into<String>, values: Vec<f64>, master_seed: u64, streams: (u64, u64)) -> Result<Self> {
        let label = label.into();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(
                "SampleBatch",
                format!("value {} at index {i} of batch '{label}' is not finite", values[i]),
            ));
        }
        Ok(Self {
            values,
            master_seed,
            streams,
            label,
        })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// New batch with `f` applied to every value, keeping the provenance.
    pub fn map(&self, label: impl Into<String>, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(label, self.values.iter().map(|&v| f(v)).collect(), self.master_seed, self.streams)
    }
}

/// Runs `f` for `n` samples, chunk `i` drawing from stream
/// `first_stream + i`. Output order is fixed by stream id.
pub fn generate<T, F>(n: usize, master_seed: u64, first_stream: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> Result<T> + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Result<Vec<T>>> = (0..chunks)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(master_seed, first_stream + i as u64).rng();
            let len = CHUNK.min(n - i * CHUNK);
            (0..len).map(|_| f(&mut rng)).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// [`generate`] for scalar samplers, packaged as a [`SampleBatch`].
pub fn generate_batch<F>(label: &str, n: usize, master_seed: u64, first_stream: u64, f: F) -> Result<SampleBatch>
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync,
{
    let values = generate(n, master_seed, first_stream, f)?;
    let end = first_stream + n.div_ceil(CHUNK) as u64;
    SampleBatch::new(label, values, master_seed, (first_stream, end))
}

#[inline]
fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Uniform on the open interval `(0, 1)`.
#[inline]
fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    }
}

/// Probability that a Brownian bridge from `a` to `b` with variance `v`
/// touches `level`, both endpoints lying below it.
#[inline]
fn bridge_cross_up(a: f64, b: f64, v: f64, level: f64) -> f64 {
    if a >= level || b >= level {
        return 1.0;
    }
    if v <= 0.0 {
        return 0.0;
    }
    (-2.0 * (level - a) * (level - b) / v).exp()
}

/// Maximum of a Brownian bridge from `a` to `b` with variance `v`.
#[inline]
fn bridge_max<R: Rng + ?Sized>(a: f64, b: f64, v: f64, rng: &mut R) -> f64 {
    let d = b - a;
    0.5 * (a + b + (d * d - 2.0 * v * open01(rng).ln()).sqrt())
}

fn check_pos(op: &'static str, name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(op, format!("{name} = {v} must be finite and > 0")))
    }
}

/// Hitting time of level `c` by a standard Brownian motion: `c² / N²`.
pub fn sample_one_sided_hit<R: Rng + ?Sized>(c: f64, rng: &mut R) -> Result<f64> {
    check_pos("sample_one_sided_hit", "c", c)?;
    loop {
        let n = normal(rng);
        if n != 0.0 {
            return Ok(c * c / (n * n));
        }
    }
}

/// Bridge pruning threshold: intervals whose exit probability is below this
/// are not refined.
const PRUNE: f64 = 1e-15;

/// First exit from `(-c, c)` by the Brownian bridge `(t0, a) → (t0+h, b)`,
/// located by midpoint refinement down to width `dt`.
fn bridge_first_exit<R: Rng + ?Sized>(t0: f64, a: f64, h: f64, b: f64, c: f64, dt: f64, rng: &mut R) -> Option<f64> {
    let p = if b.abs() >= c {
        1.0
    } else {
        (bridge_cross_up(a, b, h, c) + bridge_cross_up(-a, -b, h, c)).min(1.0)
    };
    if p < PRUNE {
        return None;
    }
    if h <= dt {
        return if p >= 1.0 || open01(rng) < p {
            Some(t0 + 0.5 * h)
        } else {
            None
        };
    }
    let half = 0.5 * h;
    let m = 0.5 * (a + b) + (0.25 * h).sqrt() * normal(rng);
    bridge_first_exit(t0, a, half, m, c, dt, rng).or_else(|| bridge_first_exit(t0 + half, m, half, b, c, dt, rng))
}

/// Exit time of a standard Brownian motion from `(-c, c)`.
///
/// The path is drawn exactly on a coarse grid; every grid interval with a
/// non-negligible bridge exit probability is bisected with exact midpoint
/// draws until its width is at most `dt`, where the bridge crossing
/// probability decides. The result is exact in law up to the resolution
/// `dt`.
pub fn sample_two_sided_hit<R: Rng + ?Sized>(c: f64, dt: f64, rng: &mut R) -> Result<f64> {
    check_pos("sample_two_sided_hit", "c", c)?;
    check_pos("sample_two_sided_hit", "dt", dt)?;
    let h = (c * c / 16.0).max(dt);
    let sd = h.sqrt();
    let mut t = 0.0;
    let mut x = 0.0;
    loop {
        let y = x + sd * normal(rng);
        if let Some(s) = bridge_first_exit(t, x, h, y, c, dt, rng) {
            return Ok(s);
        }
        t += h;
        x = y;
    }
}

/// Trapezoid estimate of `A = ∫₀^stop e^{2β_s} ds`, with `β` drawn exactly on
/// a grid of step `dt` (shorter final step), and `β_stop`.
pub fn exp_functional<R: Rng + ?Sized>(stop: f64, dt: f64, rng: &mut R) -> Result<(f64, f64)> {
    check_pos("exp_functional", "stop", stop)?;
    check_pos("exp_functional", "dt", dt)?;
    let full = (stop / dt).floor();
    let steps = full as u64;
    let rest = stop - full * dt;
    let sd = dt.sqrt();
    let mut beta = 0.0f64;
    let mut f = 1.0f64;
    let mut acc = 0.0;
    for _ in 0..steps {
        beta += sd * normal(rng);
        let g = (2.0 * beta).exp();
        acc += f + g;
        f = g;
    }
    let mut a = 0.5 * dt * acc;
    if rest > 1e-15 * stop {
        beta += rest.sqrt() * normal(rng);
        let g = (2.0 * beta).exp();
        a += 0.5 * rest * (f + g);
    }
    Ok((a, beta))
}

/// `A_τ` for a possibly huge horizon `τ`, kept in log form.
///
/// Step sizes grow with the distance of `β` below `½ ln A`, the level from
/// which `e^{2β}` starts to matter: while `β` sits `g` below it the step is
/// `(g/6)²`, so excursions of any depth cost a logarithmic number of steps.
/// Stops early, flagging censoring, once `ln A` exceeds `ln_cap`.
fn log_exp_functional_multiscale<R: Rng + ?Sized>(tau: f64, dt: f64, ln_cap: f64, rng: &mut R) -> (f64, bool) {
    let mut s = 0.0;
    let mut beta = 0.0f64;
    let mut ln_a = f64::NEG_INFINITY;
    while s < tau {
        let gap = 0.5 * ln_a - beta;
        let mut h = if gap.is_finite() && gap > 0.0 {
            (gap / 6.0).powi(2).max(dt)
        } else {
            dt
        };
        h = h.min(tau - s);
        let b1 = beta + h.sqrt() * normal(rng);
        // ln(h (e^{2β} + e^{2β₁}) / 2)
        let (hi, lo) = if beta > b1 { (beta, b1) } else { (b1, beta) };
        let piece = (0.5 * h).ln() + 2.0 * hi + (2.0 * (lo - hi)).exp().ln_1p();
        ln_a = if ln_a == f64::NEG_INFINITY {
            piece
        } else {
            let m = ln_a.max(piece);
            m + ((ln_a - m).exp() + (piece - m).exp()).ln()
        };
        beta = b1;
        s += h;
        if ln_a > ln_cap {
            return (ln_a, true);
        }
    }
    (ln_a, false)
}

/// A one-sided winding time, possibly censored at a cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CappedSample {
    /// The sample, or a value above the cap when censored.
    pub value: f64,
    pub censored: bool,
}

/// One-sided exit time `T^θ_c = z0² A_{T^γ_c}` from the skew product.
///
/// `T^γ_c` has no mean, so `A` is integrated with the multiscale scheme and
/// the walk stops once `T` exceeds `cap`.
pub fn sample_one_sided_exit<R: Rng + ?Sized>(c: f64, z0: f64, dt: f64, cap: f64, rng: &mut R) -> Result<CappedSample> {
    check_pos("sample_one_sided_exit", "z0", z0)?;
    check_pos("sample_one_sided_exit", "dt", dt)?;
    if !(cap > 0.0) {
        return Err(Error::domain("sample_one_sided_exit", format!("cap = {cap} must be > 0")));
    }
    let tau = sample_one_sided_hit(c, rng)?;
    let shift = 2.0 * z0.ln();
    let (ln_a, censored) = log_exp_functional_multiscale(tau, dt, cap.ln() - shift, rng);
    Ok(CappedSample {
        value: (ln_a + shift).exp(),
        censored,
    })
}

/// Symmetric cone exit time `T^θ_{-c,c} = z0² A_{T^γ_{-c,c}}`.
///
/// `dt` is the grid of the exponential functional; the two-sided hitting
/// time is resolved to `dt / 1000`.
pub fn sample_exit_cone<R: Rng + ?Sized>(cone: ConeSpec, z0: f64, dt: f64, rng: &mut R) -> Result<f64> {
    cone.require_symmetric("sample_exit_cone")?;
    check_pos("sample_exit_cone", "z0", z0)?;
    check_pos("sample_exit_cone", "dt", dt)?;
    let tau = sample_two_sided_hit(cone.c, dt * 1e-3, rng)?;
    let (a, _) = exp_functional(tau, dt, rng)?;
    Ok(z0 * z0 * a)
}

/// OU winding exit time through the clock: `α⁻¹(T^θ_{-c,c})`, with the
/// Brownian exit time drawn for a start at `z0`.
pub fn sample_ou_exit<R: Rng + ?Sized>(cone: ConeSpec, ou: OuSpec, dt: f64, rng: &mut R) -> Result<f64> {
    let t = sample_exit_cone(cone, ou.z0, dt, rng)?;
    Ok(ou.alpha_inv(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HitMode {
    Exact,
    Simulated,
}

/// Winding angle at the hitting time of `b` by an independent linear
/// Brownian motion started at 0.
///
/// Exact mode draws `a(b) tan(π(U - 1/2))`; simulated mode runs the planar
/// motion from 1 up to that hitting time. With `sup` set the running maximum
/// of the angle is returned instead.
pub fn sample_winding_at_indep_hit<R: Rng + ?Sized>(b: f64, mode: HitMode, sup: bool, rng: &mut R) -> Result<f64> {
    check_pos("sample_winding_at_indep_hit", "b", b)?;
    match mode {
        HitMode::Exact => {
            let c = arcsinh_a(b) * (PI * (open01(rng) - 0.5)).tan();
            Ok(if sup { c.abs() } else { c })
        }
        HitMode::Simulated => {
            let obs = simulate_at_indep_hit(b, &PlanarConfig::brownian(), rng)?;
            Ok(if sup { obs.sup_angle } else { obs.angle })
        }
    }
}

/// Planar state observed at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarObs {
    pub time: f64,
    pub log_modulus: f64,
    pub angle: f64,
    pub sup_angle: f64,
    pub clock: f64,
}

/// Planar motion from 1 observed at the hitting time of `b` by an
/// independent linear Brownian motion from 0 (drawn exactly as `b²/N²`).
pub fn simulate_at_indep_hit<R: Rng + ?Sized>(b: f64, cfg: &PlanarConfig, rng: &mut R) -> Result<PlanarObs> {
    let t = sample_one_sided_hit(b, rng)?;
    let obs = cfg.observe(1.0, &[t], rng)?;
    Ok(obs[0])
}

/// Direct-simulation configuration for `dZ = √(2D) dW - λZ dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarConfig {
    pub lambda: f64,
    pub diffusion: f64,
    /// Target variance of the relative noise `|ΔZ|/|Z|` per coordinate and
    /// step; the natural step is `κ |Z|² / (2D)`.
    pub kappa: f64,
    /// Largest step in time.
    pub dt_max: f64,
    /// Fixed rotation applied to the driving noise.
    pub noise_phase: f64,
    /// Step deep excursions towards the origin in the Bessel clock.
    pub deep_steps: bool,
    /// Track the running maximum of the angle.
    pub track_sup: bool,
}

/// Depth (half log ratio of reference to natural step) beyond which a
/// clock step replaces a spatial one.
const DEEP_DEPTH: f64 = 2.0;

/// Fine-step floor relative to the horizon.
pub const STEP_FLOOR: f64 = 1e-14;

impl PlanarConfig {
    /// Standard planar Brownian motion with the `0.01 |Z|²` step policy.
    pub fn brownian() -> Self {
        Self {
            lambda: 0.0,
            diffusion: 0.5,
            kappa: 0.01,
            dt_max: f64::INFINITY,
            noise_phase: 0.0,
            deep_steps: true,
            track_sup: true,
        }
    }

    pub fn ou(ou: OuSpec, dt_max: f64) -> Self {
        Self {
            lambda: ou.lambda,
            diffusion: ou.diffusion,
            dt_max,
            ..Self::brownian()
        }
    }

    fn validate(&self, op: &'static str) -> Result<()> {
        check_pos(op, "diffusion", self.diffusion)?;
        check_pos(op, "kappa", self.kappa)?;
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::domain(op, format!("lambda = {} must be >= 0", self.lambda)));
        }
        if !(self.dt_max > 0.0) {
            return Err(Error::domain(op, format!("dt = {} must be > 0", self.dt_max)));
        }
        Ok(())
    }

    fn start(&self, z0: f64) -> State {
        State {
            t: 0.0,
            rho: z0.ln(),
            theta: 0.0,
            sup: 0.0,
            clock: 0.0,
            dir: (1.0, 0.0),
            scale0: z0 * z0 / (2.0 * self.diffusion),
            phase: (self.noise_phase.cos(), self.noise_phase.sin()),
        }
    }

    /// One step, never passing `t_limit` and never longer than `h_cap`.
    fn step<R: Rng + ?Sized>(&self, st: &mut State, t_limit: f64, h_cap: f64, floor: f64, rng: &mut R) -> Result<Step> {
        let lam = self.lambda;
        let two_d = 2.0 * self.diffusion;
        let r2 = (2.0 * st.rho).exp();
        let remaining = t_limit - st.t;
        // natural step: relative noise variance κ, drift factor e^{-λh} ≥ e^{-0.1}
        let h_nat = if lam == 0.0 {
            self.kappa * r2 / two_d
        } else {
            let x = self.kappa * lam * r2 / self.diffusion;
            let h_var = if x < 1.0 { -(-x).ln_1p() / (2.0 * lam) } else { f64::INFINITY };
            h_var.min(0.1 / lam)
        };
        let theta0 = st.theta;
        let t0 = st.t;

        if self.deep_steps {
            let mut h_ref = self.dt_max.min(self.kappa * st.t.max(st.scale0).max(floor * 1e4));
            if lam > 0.0 {
                h_ref = h_ref.min(0.1 / lam);
            }
            // in logs: e^{2ρ} underflows on deep excursions
            let mut ln_h_nat = (self.kappa / two_d).ln() + 2.0 * st.rho;
            if lam > 0.0 {
                ln_h_nat = ln_h_nat.min((0.1 / lam).ln());
            }
            let depth = 0.5 * (h_ref.ln() - ln_h_nat);
            if depth > DEEP_DEPTH {
                let grow = (1.0 + depth - DEEP_DEPTH).powi(2);
                let ln_cost = 50f64.ln() + ln_h_nat + grow.ln();
                if ln_cost < remaining.ln() && ln_cost < h_cap.ln() {
                    let du = self.kappa * grow;
                    let sd = du.sqrt();
                    let rho1 = st.rho - lam * r2 * du / two_d + sd * normal(rng);
                    let dtheta = sd * normal(rng);
                    let dt = 0.5 * (r2 + (2.0 * rho1).exp()) * du / two_d;
                    st.rho = rho1;
                    st.theta += dtheta;
                    st.clock += du;
                    st.t = (st.t + dt).min(t_limit);
                    let (s, c) = dtheta.sin_cos();
                    let (dx, dy) = st.dir;
                    let (nx, ny) = (dx * c - dy * s, dx * s + dy * c);
                    let norm = (nx * nx + ny * ny).sqrt();
                    st.dir = (nx / norm, ny / norm);
                    return Ok(self.finish_step(st, t0, theta0, du, rng));
                }
            }
        }

        let h = h_nat.min(self.dt_max).min(h_cap).min(remaining);
        if h == h_nat && h_nat < floor {
            return Err(Error::StepUnderflow {
                step: h_nat,
                floor,
                t: st.t,
            });
        }
        let (decay, s2) = if lam == 0.0 {
            (1.0, two_d * h)
        } else {
            ((-lam * h).exp(), -self.diffusion * (-2.0 * lam * h).exp_m1() / lam)
        };
        let sig = (s2 / r2).sqrt();
        let (w1, w2) = (normal(rng), normal(rng));
        let (pc, ps) = st.phase;
        let (w1, w2) = (w1 * pc - w2 * ps, w1 * ps + w2 * pc);
        let (dx, dy) = st.dir;
        // Z₁/|Z₀| in the fixed frame, then the ratio Z₁/Z₀
        let zx = decay * dx + sig * w1;
        let zy = decay * dy + sig * w2;
        let re = zx * dx + zy * dy;
        let im = zy * dx - zx * dy;
        let m2 = zx * zx + zy * zy;
        let m = m2.sqrt();
        st.dir = (zx / m, zy / m);
        st.theta += im.atan2(re);
        let rho1 = st.rho + 0.5 * m2.ln();
        // trapezoid on 2D / |Z|²
        let du = 0.5 * two_d * h * ((-2.0 * st.rho).exp() + (-2.0 * rho1).exp());
        st.rho = rho1;
        st.clock += du;
        st.t = if h == remaining { t_limit } else { st.t + h };
        Ok(self.finish_step(st, t0, theta0, du, rng))
    }

    fn finish_step<R: Rng + ?Sized>(&self, st: &mut State, t0: f64, theta0: f64, du: f64, rng: &mut R) -> Step {
        if self.track_sup {
            let m = bridge_max(theta0, st.theta, du, rng);
            st.sup = st.sup.max(m);
        }
        Step {
            t0,
            theta0,
            du,
        }
    }

    /// Observes the motion started at `z0 > 0` at each of the increasing
    /// `times`.
    pub fn observe<R: Rng + ?Sized>(&self, z0: f64, times: &[f64], rng: &mut R) -> Result<Vec<PlanarObs>> {
        self.validate("observe")?;
        check_pos("observe", "z0", z0)?;
        let horizon = times.last().copied().unwrap_or(0.0);
        let floor = STEP_FLOOR * horizon;
        let mut st = self.start(z0);
        let mut out = Vec::with_capacity(times.len());
        for &target in times {
            if !(target >= st.t) {
                return Err(Error::domain("observe", "observation times must be increasing and >= 0"));
            }
            while st.t < target {
                self.step(&mut st, target, f64::INFINITY, floor, rng)?;
            }
            out.push(st.obs());
        }
        Ok(out)
    }

    /// First time `|θ|` (or `θ`, if `two_sided` is false) reaches `c`.
    ///
    /// Each step is tested with the Brownian-bridge crossing probability of
    /// the angle; the exit time is taken at the middle of the crossing step.
    /// Returns `None` if the motion is still inside at `t_cap`.
    pub fn cone_exit<R: Rng + ?Sized>(&self, z0: f64, c: f64, two_sided: bool, t_cap: f64, rng: &mut R) -> Result<Option<f64>> {
        self.validate("cone_exit")?;
        check_pos("cone_exit", "c", c)?;
        check_pos("cone_exit", "z0", z0)?;
        let floor = if t_cap.is_finite() { STEP_FLOOR * t_cap } else { 0.0 };
        let mut st = self.start(z0);
        while st.t < t_cap {
            let s = self.step(&mut st, t_cap, f64::INFINITY, floor, rng)?;
            let mut p = bridge_cross_up(s.theta0, st.theta, s.du, c);
            if two_sided {
                p += bridge_cross_up(-s.theta0, -st.theta, s.du, c);
            }
            if p >= 1.0 || (p > PRUNE && open01(rng) < p) {
                return Ok(Some(0.5 * (s.t0 + st.t)));
            }
        }
        Ok(None)
    }

    /// Observes the motion at the first time the real process `V_t`, a
    /// Brownian motion from 0 run in the clock `α`, reaches `b`. For an OU
    /// configuration `V_t = e^{λt} U_t` with `U` an independent real OU
    /// process started at 0.
    pub fn stop_at_clocked_hit<R: Rng + ?Sized>(&self, z0: f64, b: f64, rng: &mut R) -> Result<PlanarObs> {
        self.validate("stop_at_clocked_hit")?;
        check_pos("stop_at_clocked_hit", "b", b)?;
        let ou = OuSpec::new(self.lambda, self.diffusion, z0)?;
        let var_floor = (1e-6 * b).powi(2);
        let mut st = self.start(z0);
        let mut v = 0.0f64;
        loop {
            // keep the α-variance of a step below d²/4 near the barrier
            let d = b - v;
            // at late times α(t) grows like e^{2λt}; keep the target resolvable
            let a0 = ou.alpha(st.t);
            let target = (0.25 * d * d).max(var_floor).max(1e-10 * a0);
            let h_cap = (ou.alpha_inv(a0 + target) - st.t).max(1e-15 * (1.0 + st.t));
            self.step(&mut st, f64::INFINITY, h_cap, 0.0, rng)?;
            let var = ou.alpha(st.t) - a0;
            let v1 = v + var.max(0.0).sqrt() * normal(rng);
            let p = bridge_cross_up(v, v1, var, b);
            if p >= 1.0 || (p > PRUNE && open01(rng) < p) {
                return Ok(st.obs());
            }
            v = v1;
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct State {
    t: f64,
    rho: f64,
    theta: f64,
    sup: f64,
    clock: f64,
    /// Unit vector `Z/|Z|`.
    dir: (f64, f64),
    /// `z0² / (2D)`, the initial time scale.
    scale0: f64,
    phase: (f64, f64),
}

impl State {
    fn obs(&self) -> PlanarObs {
        PlanarObs {
            time: self.t,
            log_modulus: self.rho,
            angle: self.theta,
            sup_angle: self.sup,
            clock: self.clock,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Step {
    t0: f64,
    theta0: f64,
    du: f64,
}

/// A discretised winding trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindingPath {
    pub times: Vec<f64>,
    pub log_modulus: Vec<f64>,
    pub angle: Vec<f64>,
    /// `H_t = ∫₀ᵗ ds / |Z_s|²`.
    pub clock: Vec<f64>,
}

impl WindingPath {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Planar Brownian motion from `z0 > 0` on `[0, horizon]`, every step
/// recorded. Steps are `min(dt, 0.01|Z|²)`; deep excursions towards the
/// origin are stepped in the clock `H` when `deep_steps` is set.
pub fn simulate_planar_winding<R: Rng + ?Sized>(horizon: f64, z0: f64, dt: f64, deep_steps: bool, rng: &mut R) -> Result<WindingPath> {
    check_pos("simulate_planar_winding", "horizon", horizon)?;
    check_pos("simulate_planar_winding", "z0", z0)?;
    let cfg = PlanarConfig {
        dt_max: dt,
        deep_steps,
        track_sup: false,
        ..PlanarConfig::brownian()
    };
    cfg.validate("simulate_planar_winding")?;
    let floor = STEP_FLOOR * horizon;
    let mut st = cfg.start(z0);
    let mut path = WindingPath {
        times: vec![0.0],
        log_modulus: vec![st.rho],
        angle: vec![0.0],
        clock: vec![0.0],
    };
    while st.t < horizon {
        cfg.step(&mut st, horizon, f64::INFINITY, floor, rng)?;
        path.times.push(st.t);
        path.log_modulus.push(st.rho);
        path.angle.push(st.theta);
        path.clock.push(st.clock);
    }
    Ok(path)
}

/// OU winding exit time by direct simulation of `Z` (exact Gaussian
/// transitions, step at most `dt`).
pub fn sample_ou_exit_direct<R: Rng + ?Sized>(cone: ConeSpec, ou: OuSpec, dt: f64, rng: &mut R) -> Result<f64> {
    cone.require_symmetric("sample_ou_exit_direct")?;
    check_pos("sample_ou_exit_direct", "dt", dt)?;
    let cfg = PlanarConfig {
        track_sup: false,
        ..PlanarConfig::ou(ou, dt)
    };
    cfg.cone_exit(ou.z0, cone.c, true, f64::INFINITY, rng)?
        .ok_or_else(|| Error::non_convergence("sample_ou_exit_direct", "no exit before an infinite horizon"))
}

/// Winding of an OU process `Z` from 1 at the first time `e^{λt} U_t = b`
/// for an independent real OU process `U` from 0.
pub fn sample_ou_bougerol<R: Rng + ?Sized>(b: f64, ou: OuSpec, dt: f64, rng: &mut R) -> Result<f64> {
    let cfg = PlanarConfig {
        track_sup: false,
        ..PlanarConfig::ou(ou, dt)
    };
    Ok(cfg.stop_at_clocked_hit(ou.z0, b, rng)?.angle)
}

/// One draw of the range time of `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeSample {
    /// `T̂^γ_c`: first time `sup γ - inf γ` reaches `c`.
    pub gamma_time: f64,
    /// First exit of the same path from `(-c/2, c/2)`.
    pub half_exit_time: f64,
    /// `β` at `T̂^γ_c`.
    pub beta: f64,
    /// `T̂^θ_c = A_{T̂^γ_c}`.
    pub winding_time: f64,
}

/// Range time `T̂^θ_c = A_{T̂^γ_c}` of the winding process.
///
/// `γ` is drawn exactly with steps that shrink with the distance to the
/// stopping condition (down to `dt · 1e-3`); within each step the bridge
/// maximum and minimum are sampled to update the running extremes.
pub fn sample_range_exit<R: Rng + ?Sized>(c: f64, dt: f64, rng: &mut R) -> Result<RangeSample> {
    check_pos("sample_range_exit", "c", c)?;
    check_pos("sample_range_exit", "dt", dt)?;
    let dt_min = dt * 1e-3;
    let half = 0.5 * c;
    let mut t = 0.0;
    let mut x = 0.0f64;
    let mut hi = 0.0f64;
    let mut lo = 0.0f64;
    let mut half_exit = None;
    let gamma_time = loop {
        // distance to a new extreme that would complete the range
        let mut d = (lo + c - x).min(x - (hi - c));
        if half_exit.is_none() {
            d = d.min(half - x.abs());
        }
        let h = (d / 6.0).powi(2).max(dt_min);
        let y = x + h.sqrt() * normal(rng);
        let mx = bridge_max(x, y, h, rng);
        let mn = -bridge_max(-x, -y, h, rng);
        hi = hi.max(mx);
        lo = lo.min(mn);
        t += h;
        x = y;
        if half_exit.is_none() && hi.max(-lo) >= half {
            half_exit = Some(t);
        }
        if hi - lo >= c {
            break t;
        }
    };
    let (a, beta) = exp_functional(gamma_time, dt, rng)?;
    Ok(RangeSample {
        gamma_time,
        half_exit_time: half_exit.unwrap_or(gamma_time),
        beta,
        winding_time: a,
    })
}

/// First passage of a standard Brownian motion above `upper` (and below
/// `-lower`, when given) by plain stepping with bridge crossing tests;
/// the step shrinks with the distance to the barriers down to `dt`.
/// Returns `cap` if no passage occurs before it.
pub fn simulate_first_passage<R: Rng + ?Sized>(upper: f64, lower: Option<f64>, dt: f64, cap: f64, rng: &mut R) -> Result<f64> {
    check_pos("simulate_first_passage", "upper", upper)?;
    check_pos("simulate_first_passage", "dt", dt)?;
    let mut t = 0.0;
    let mut x = 0.0f64;
    while t < cap {
        let mut d = upper - x;
        if let Some(l) = lower {
            d = d.min(x + l);
        }
        let h = (d / 6.0).powi(2).max(dt).min(cap - t);
        let y = x + h.sqrt() * normal(rng);
        let mut p = bridge_cross_up(x, y, h, upper);
        if let Some(l) = lower {
            p += bridge_cross_up(-x, -y, h, l);
        }
        if p >= 1.0 || (p > PRUNE && open01(rng) < p) {
            return Ok(t + 0.5 * h);
        }
        t += h;
        x = y;
    }
    Ok(cap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(id: u64) -> ChaCha8Rng {
        RngStream::new(12345, id).rng()
    }

    fn mean_se(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, (var / n).sqrt())
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..8).map(|_| RngStream::new(1, 3).rng().gen()).collect();
        let mut r = RngStream::new(1, 3).rng();
        let b: Vec<u64> = (0..8).map(|_| r.gen()).collect();
        let mut r = RngStream::new(1, 3).rng();
        let c: Vec<u64> = (0..8).map(|_| r.gen()).collect();
        assert_eq!(b, c);
        assert!(a.iter().all(|&x| x == a[0]));
        let mut r4 = RngStream::new(1, 4).rng();
        let d: Vec<u64> = (0..8).map(|_| r4.gen()).collect();
        assert_ne!(b, d);
    }

    #[test]
    fn batches_do_not_depend_on_thread_count() {
        let f = |r: &mut ChaCha8Rng| sample_one_sided_hit(1.0, r);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| generate_batch("x", 10_000, 9, 0, f)).unwrap();
        let b = three.install(|| generate_batch("x", 10_000, 9, 0, f)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n(), 10_000);
        assert_eq!(a.streams, (0, 3));
    }

    #[test]
    fn batch_rejects_non_finite() {
        assert!(SampleBatch::new("x", vec![1.0, f64::NAN], 0, (0, 1)).is_err());
    }

    #[test]
    fn one_sided_hit_median() {
        let mut r = rng(0);
        let mut v: Vec<f64> = (0..100_001).map(|_| sample_one_sided_hit(1.0, &mut r).unwrap()).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // median of 1/N² is 1/0.6745² = 2.198
        let med = v[50_000];
        assert!((med - 2.198).abs() < 0.05, "median {med}");
    }

    #[test]
    fn two_sided_hit_moments() {
        let mut r = rng(1);
        let v: Vec<f64> = (0..100_000).map(|_| sample_two_sided_hit(1.0, 1e-6, &mut r).unwrap()).collect();
        let (m, se) = mean_se(&v);
        assert!((m - 1.0).abs() < 4.0 * se, "{m} ± {se}");
        let w: Vec<f64> = v.iter().map(|t| (-t / 2.0).exp()).collect();
        let (m, se) = mean_se(&w);
        assert!((m - 1.0 / 1f64.cosh()).abs() < 4.0 * se, "{m} ± {se}");
    }

    #[test]
    fn exp_functional_mean_and_small_time() {
        let mut r = rng(2);
        let v: Vec<f64> = (0..20_000).map(|_| exp_functional(1.0, 1e-2, &mut r).unwrap().0).collect();
        let (m, se) = mean_se(&v);
        let target = (2f64.exp() - 1.0) / 2.0;
        assert!((m - target).abs() < 4.0 * se, "{m} ± {se} vs {target}");
        let v: Vec<f64> = (0..2_000).map(|_| exp_functional(1e-4, 1e-6, &mut r).unwrap().0 / 1e-4).collect();
        let (m, _) = mean_se(&v);
        assert!((m - 1.0).abs() < 1e-2);
    }

    #[test]
    fn exp_functional_partial_step() {
        let mut r = rng(3);
        let (a, _) = exp_functional(0.35, 0.1, &mut r).unwrap();
        assert!(a > 0.0);
        assert!(exp_functional(0.0, 0.1, &mut r).is_err());
    }

    #[test]
    fn exit_cone_mean() {
        let cone = ConeSpec::symmetric(PI / 8.0).unwrap();
        let mut r = rng(4);
        let v: Vec<f64> = (0..50_000).map(|_| sample_exit_cone(cone, 1.0, 1e-3, &mut r).unwrap()).collect();
        let (m, se) = mean_se(&v);
        let target = (2f64.sqrt() - 1.0) / 2.0;
        assert!((m - target).abs() < 4.0 * se, "{m} ± {se}");
    }

    #[test]
    fn exit_cone_start_point_scaling() {
        let cone = ConeSpec::symmetric(0.5).unwrap();
        let a = sample_exit_cone(cone, 1.0, 1e-3, &mut rng(5)).unwrap();
        let b = sample_exit_cone(cone, 2.0, 1e-3, &mut rng(5)).unwrap();
        assert!((b - 4.0 * a).abs() <= 1e-12 * b);
    }

    #[test]
    fn ou_sampler_at_zero_lambda_is_the_brownian_one() {
        let cone = ConeSpec::symmetric(0.5).unwrap();
        for id in 0..20 {
            let a = sample_exit_cone(cone, 1.0, 1e-3, &mut rng(id)).unwrap();
            let b = sample_ou_exit(cone, OuSpec::default(), 1e-3, &mut rng(id)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn exact_indep_hit_has_unit_scale_at_sinh_one() {
        let mut r = rng(6);
        let mut v: Vec<f64> = (0..40_001)
            .map(|_| sample_winding_at_indep_hit(1f64.sinh(), HitMode::Exact, false, &mut r).unwrap())
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // quartiles of a unit Cauchy are ±1
        assert!((v[30_000] - 1.0).abs() < 0.03 && (v[10_000] + 1.0).abs() < 0.03);
        let s = sample_winding_at_indep_hit(1.0, HitMode::Exact, true, &mut r).unwrap();
        assert!(s >= 0.0);
    }

    #[test]
    fn planar_path_invariants() {
        let path = simulate_planar_winding(2.0, 1.0, 0.01, true, &mut rng(7)).unwrap();
        assert_eq!(path.angle[0], 0.0);
        assert_eq!(path.clock[0], 0.0);
        assert_eq!(*path.times.last().unwrap(), 2.0);
        for w in 1..path.len() {
            assert!(path.times[w] > path.times[w - 1]);
            assert!(path.clock[w] >= path.clock[w - 1]);
            assert!((path.angle[w] - path.angle[w - 1]).abs() < PI);
        }
    }

    #[test]
    fn planar_winding_mean_is_zero() {
        let cfg = PlanarConfig::brownian();
        let v = generate(4_000, 8, 0, |r| Ok(cfg.observe(1.0, &[1.0], r)?[0].angle)).unwrap();
        let (m, se) = mean_se(&v);
        assert!(m.abs() < 4.0 * se);
    }

    #[test]
    fn step_floor_trips_without_deep_steps() {
        // a start very close to the origin forces tiny steps at once
        let mut r = rng(9);
        let err = simulate_planar_winding(1e6, 1e-5, f64::INFINITY, false, &mut r).unwrap_err();
        assert!(matches!(err, Error::StepUnderflow { .. }));
        assert!(simulate_planar_winding(1e6, 1e-5, f64::INFINITY, true, &mut r).is_ok());
    }

    #[test]
    fn ou_direct_exit_is_finite() {
        let cone = ConeSpec::symmetric(PI / 4.0).unwrap();
        let ou = OuSpec::new(1.0, 0.5, 1.0).unwrap();
        let t = sample_ou_exit_direct(cone, ou, 1e-3, &mut rng(10)).unwrap();
        assert!(t > 0.0 && t.is_finite());
    }

    #[test]
    fn range_time_dominates_half_exit() {
        let mut r = rng(11);
        for _ in 0..2_000 {
            let s = sample_range_exit(1.0, 1e-3, &mut r).unwrap();
            assert!(s.gamma_time >= s.half_exit_time);
            assert!(s.winding_time > 0.0);
        }
    }

    #[test]
    fn range_time_mgf() {
        let mut r = rng(12);
        let v: Vec<f64> = (0..40_000)
            .map(|_| (-sample_range_exit(1.0, 1e-3, &mut r).unwrap().gamma_time / 2.0).exp())
            .collect();
        let (m, se) = mean_se(&v);
        let target = 1.0 / 0.5f64.cosh().powi(2);
        assert!((m - target).abs() < 4.0 * se, "{m} ± {se} vs {target}");
    }

    #[test]
    fn first_passage_matches_two_sided_mean() {
        let mut r = rng(13);
        let v: Vec<f64> = (0..40_000)
            .map(|_| simulate_first_passage(1.0, Some(1.0), 1e-6, f64::INFINITY, &mut r).unwrap())
            .collect();
        let (m, se) = mean_se(&v);
        assert!((m - 1.0).abs() < 4.0 * se, "{m} ± {se}");
    }

    #[test]
    fn one_sided_exit_is_censored_above_cap() {
        let mut r = rng(14);
        let mut censored = 0;
        for _ in 0..2_000 {
            let s = sample_one_sided_exit(PI / 4.0, 1.0, 1e-2, 1e3, &mut r).unwrap();
            if s.censored {
                censored += 1;
                assert!(s.value > 1e3);
            } else {
                assert!(s.value <= 1e3);
            }
        }
        // P(T > 1e3) ≈ 1/ln(1e3)
        assert!(censored > 150 && censored < 450, "{censored}");
    }
}
