//! Statistical verdicts: Kolmogorov-Smirnov tests, CLT moment checks, the
//! tail-constant and Spitzer trend checks, and the acceptance suite.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laws::cauchy_cdf;
use crate::paths::{generate, sample_one_sided_exit, PlanarConfig};

pub mod suite;

/// Default significance level of the KS tests.
pub const DEFAULT_ALPHA: f64 = 0.01;

/// Largest acceptable `|z|` in a moment check.
pub const MAX_Z: f64 = 3.0;

/// Pass bar of the Spitzer check. Convergence is logarithmic in `t`, so an
/// α-level test would fail at any reachable horizon.
pub const SPITZER_BAR: f64 = 0.05;

/// Asymptotic KS critical value `c(α) = √(-ln(α/2)/2)`; `c(0.01) = 1.628`.
pub fn ks_critical(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain("ks_critical", format!("alpha = {alpha} must lie in (0, 1)")));
    }
    Ok((-0.5 * (0.5 * alpha).ln()).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub statistic: f64,
    pub n: usize,
    /// Second sample size for two-sample tests.
    pub m: Option<usize>,
    pub alpha: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl KsReport {
    /// The same statistic judged against a fixed bar instead of `c(α)`.
    pub fn with_bar(mut self, bar: f64) -> Self {
        self.threshold = bar;
        self.pass = self.statistic <= bar;
        self
    }
}

fn sorted(values: &[f64], op: &'static str) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::domain(op, "batch contains NaN"));
    }
    let mut v = values.to_vec();
    v.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    Ok(v)
}

/// One-sample KS statistic `sup |F_n - F|`, threshold `c(α)/√n`.
pub fn ks_one_sample(values: &[f64], cdf: impl Fn(f64) -> f64, alpha: f64) -> Result<KsReport> {
    let v = sorted(values, "ks_one_sample")?;
    let n = v.len();
    let nf = n as f64;
    let mut d = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::domain("ks_one_sample", format!("cdf({x}) = {f} is not in [0, 1]")));
        }
        d = d.max((i + 1) as f64 / nf - f).max(f - i as f64 / nf);
    }
    let threshold = ks_critical(alpha)? / nf.sqrt();
    Ok(KsReport {
        statistic: d,
        n,
        m: None,
        alpha,
        threshold,
        pass: d < threshold,
    })
}

/// Two-sample KS statistic `sup |F_n - G_m|`, threshold
/// `c(α)√((n+m)/(nm))`.
pub fn ks_two_sample(a: &[f64], b: &[f64], alpha: f64) -> Result<KsReport> {
    let x = sorted(a, "ks_two_sample")?;
    let y = sorted(b, "ks_two_sample")?;
    let (n, m) = (x.len(), y.len());
    let (nf, mf) = (n as f64, m as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < n && j < m {
        let t = x[i].min(y[j]);
        while i < n && x[i] <= t {
            i += 1;
        }
        while j < m && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / nf - j as f64 / mf).abs());
    }
    let threshold = ks_critical(alpha)? * ((nf + mf) / (nf * mf)).sqrt();
    Ok(KsReport {
        statistic: d,
        n,
        m: Some(m),
        alpha,
        threshold,
        pass: d < threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub estimate: f64,
    pub std_error: f64,
    pub target: f64,
    pub z_score: f64,
    pub n: usize,
    pub pass: bool,
}

/// CLT check of `E[transform(X)] = target`; passes iff `|z| ≤ 3`.
pub fn moment_check(values: &[f64], transform: impl Fn(f64) -> f64, target: f64) -> Result<MomentReport> {
    if values.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let y: Vec<f64> = values.iter().map(|&v| transform(v)).collect();
    moment_of(&y, target)
}

/// [`moment_check`] on already transformed values.
pub fn moment_of(y: &[f64], target: f64) -> Result<MomentReport> {
    let n = y.len();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::domain("moment_check", format!("transformed value {v} is not finite")));
    }
    let nf = n as f64;
    let mean = y.iter().sum::<f64>() / nf;
    let var = if n > 1 {
        y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0)
    } else {
        0.0
    };
    let se = (var / nf).sqrt();
    let z = if se > 0.0 {
        (mean - target) / se
    } else if mean == target {
        0.0
    } else {
        return Err(Error::ZeroVariance {
            estimate: mean,
            target,
        });
    };
    Ok(MomentReport {
        estimate: mean,
        std_error: se,
        target,
        z_score: z,
        n,
        pass: z.abs() <= MAX_Z,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub t: f64,
    pub exceedances: usize,
    /// `(ln t) P̂(T > t)`.
    pub estimate: f64,
    /// `|estimate - limit| / limit`.
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub c: f64,
    pub limit: f64,
    pub n: usize,
    pub points: Vec<TailPoint>,
    /// Relative errors over the last three grid points never increase.
    pub eventually_decreasing: bool,
    pub final_within_tolerance: bool,
    pub pass: bool,
}

/// Tolerance on the last grid point of the tail check.
pub const TAIL_TOLERANCE: f64 = 0.15;

/// Estimates `(ln t) P(T^θ_c > t)` on `t_grid` from `n` exact one-sided
/// samples and compares it with `4c/π`.
pub fn tail_trend_check(c: f64, t_grid: &[f64], n: usize, seed: u64, first_stream: u64) -> Result<TailReport> {
    let limit = crate::laws::tail_constant(c)?;
    if t_grid.len() < 3 || t_grid.windows(2).any(|w| !(w[1] > w[0])) || !(t_grid[0] > 1.0) {
        return Err(Error::domain(
            "tail_trend_check",
            "t_grid needs at least 3 increasing points above 1",
        ));
    }
    let decades = (t_grid[t_grid.len() - 1] / t_grid[0]).log10();
    if decades < 3.0 {
        return Err(Error::DegenerateGrid { decades, needed: 3.0 });
    }
    let cap = t_grid[t_grid.len() - 1] * 1.01;
    let samples = generate(n, seed, first_stream, |r| Ok(sample_one_sided_exit(c, 1.0, 1e-2, cap, r)?.value))?;
    let mut points = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let k = samples.iter().filter(|&&v| v > t).count();
        let est = t.ln() * k as f64 / n as f64;
        points.push(TailPoint {
            t,
            exceedances: k,
            estimate: est,
            rel_error: (est - limit).abs() / limit,
        });
    }
    let last = &points[points.len() - 1];
    if last.exceedances < 100 {
        return Err(Error::InsufficientTail {
            t: last.t,
            found: last.exceedances,
            needed: 100,
        });
    }
    let tail = &points[points.len() - 3..];
    let eventually_decreasing = tail.windows(2).all(|w| w[1].rel_error <= w[0].rel_error);
    let final_within_tolerance = last.rel_error <= TAIL_TOLERANCE;
    Ok(TailReport {
        c,
        limit,
        n,
        eventually_decreasing,
        final_within_tolerance,
        pass: eventually_decreasing && final_within_tolerance,
        points,
    })
}

/// KS statistics of `2θ_t / ln t` against a standard Cauchy law at each
/// of the increasing `times`, from `n` planar paths started at 1.
pub fn spitzer_statistics(times: &[f64], n: usize, seed: u64, first_stream: u64) -> Result<Vec<KsReport>> {
    let cfg = PlanarConfig {
        track_sup: false,
        ..PlanarConfig::brownian()
    };
    let obs = generate(n, seed, first_stream, |r| cfg.observe(1.0, times, r))?;
    let mut out = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let x: Vec<f64> = obs.iter().map(|o| 2.0 * o[k].angle / t.ln()).collect();
        out.push(ks_one_sample(&x, |y| cauchy_cdf(y, 1.0).unwrap_or(f64::NAN), DEFAULT_ALPHA)?.with_bar(SPITZER_BAR));
    }
    Ok(out)
}

/// One-sample KS of `2θ_t / ln t` against Cauchy(1), judged against the
/// loose bar [`SPITZER_BAR`].
pub fn spitzer_limit_check(t: f64, n: usize, seed: u64, first_stream: u64) -> Result<KsReport> {
    if !(t >= 1e4) {
        return Err(Error::domain("spitzer_limit_check", format!("t = {t} must be >= 1e4")));
    }
    Ok(spitzer_statistics(&[t], n, seed, first_stream)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::RngStream;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, id: u64) -> Vec<f64> {
        let mut r = RngStream::new(5, id).rng();
        (0..n).map(|_| StandardNormal.sample(&mut r)).collect()
    }

    fn phi(x: f64) -> f64 {
        0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
    }

    #[test]
    fn critical_value() {
        assert!((ks_critical(0.01).unwrap() - 1.628).abs() < 5e-4);
        assert!(ks_critical(0.0).is_err());
    }

    #[test]
    fn one_sample_calibration_and_shift() {
        let x = normals(100_000, 0);
        assert!(ks_one_sample(&x, phi, 0.01).unwrap().pass);
        let y: Vec<f64> = x.iter().map(|v| v + 5.0).collect();
        let r = ks_one_sample(&y, phi, 0.01).unwrap();
        assert!(!r.pass && r.statistic > 0.9);
    }

    #[test]
    fn quantile_coupled_sample_is_at_granularity() {
        let n = 1000;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let r = ks_one_sample(&x, |u| u.clamp(0.0, 1.0), 0.01).unwrap();
        assert!((r.statistic - 0.5 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn two_sample_calibration() {
        let r = ks_two_sample(&normals(100_000, 1), &normals(100_000, 2), 0.01).unwrap();
        assert!(r.pass);
        assert_eq!(r.m, Some(100_000));
        let shifted: Vec<f64> = normals(1000, 3).iter().map(|v| v + 1.0).collect();
        assert!(!ks_two_sample(&normals(1000, 4), &shifted, 0.01).unwrap().pass);
    }

    #[test]
    fn two_sample_handles_ties() {
        let a = vec![1.0, 1.0, 2.0, 2.0];
        let b = vec![1.0, 2.0];
        assert_eq!(ks_two_sample(&a, &b, 0.01).unwrap().statistic, 0.0);
    }

    #[test]
    fn empty_batches_are_errors() {
        assert!(matches!(ks_one_sample(&[], phi, 0.01), Err(Error::EmptyBatch)));
        assert!(matches!(ks_two_sample(&[1.0], &[], 0.01), Err(Error::EmptyBatch)));
        assert!(matches!(moment_check(&[], |x| x, 0.0), Err(Error::EmptyBatch)));
    }

    #[test]
    fn moment_zero_variance() {
        assert!(matches!(moment_check(&[2.0, 2.0], |x| x, 1.0), Err(Error::ZeroVariance { .. })));
        let r = moment_check(&[2.0, 2.0], |x| x, 2.0).unwrap();
        assert!(r.pass && r.z_score == 0.0);
    }

    #[test]
    fn moment_z_score() {
        let mut r = RngStream::new(5, 9).rng();
        let x: Vec<f64> = (0..10_000).map(|_| r.gen::<f64>()).collect();
        let m = moment_check(&x, |v| v, 0.5).unwrap();
        assert!(m.pass);
        assert!((m.z_score - (m.estimate - 0.5) / m.std_error).abs() < 1e-12);
        assert!(!moment_check(&x, |v| v, 0.6).unwrap().pass);
    }

    #[test]
    fn degenerate_tail_grid() {
        let err = tail_trend_check(1.0, &[10.0, 30.0, 100.0], 100, 0, 0).unwrap_err();
        assert!(matches!(err, Error::DegenerateGrid { .. }));
    }

    #[test]
    fn insufficient_tail() {
        let err = tail_trend_check(0.1, &[1e3, 1e5, 1e7], 200, 0, 0).unwrap_err();
        assert!(matches!(err, Error::InsufficientTail { .. }));
    }

    #[test]
    fn spitzer_needs_large_t() {
        assert!(spitzer_limit_check(100.0, 10, 0, 0).is_err());
    }
}
