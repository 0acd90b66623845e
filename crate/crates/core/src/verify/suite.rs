//! The acceptance suite: criteria 1 to 10, each a list of checks with a
//! serializable verdict.
//!
//! Every batch draws from its own fixed range of RNG streams, so a
//! criterion produces the same statistics whether it runs alone or with the
//! others, and regardless of the worker count.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, PI};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ks_one_sample, ks_two_sample, moment_check, moment_of, spitzer_statistics, tail_trend_check};
use super::{KsReport, MomentReport, TailReport, DEFAULT_ALPHA, SPITZER_BAR};
use crate::error::Result;
use crate::laws::{self, ConeSpec, ExitCdfTable, OuSpec};
use crate::numerics::{arcsinh_a, quad_semi_infinite, Decay, SeriesTruncation};
use crate::paths::{self, generate, HitMode, PlanarConfig};

/// Criterion ids run by the full suite.
pub const ALL: [u32; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub master_seed: u64,
    /// Upper bound on every batch size; `None` runs the stated sizes.
    pub max_samples: Option<usize>,
    pub criteria: Vec<u32>,
}

impl SuiteConfig {
    pub fn all(master_seed: u64) -> Self {
        Self {
            master_seed,
            max_samples: None,
            criteria: ALL.to_vec(),
        }
    }

    fn n(&self, stated: usize) -> usize {
        self.max_samples.map_or(stated, |m| stated.min(m.max(1)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Detail {
    Ks(KsReport),
    Moment(MomentReport),
    /// A deterministic value against a target; `error` is absolute or
    /// relative as named by the check.
    Value { value: f64, target: f64, error: f64, tolerance: f64 },
    Tail(TailReport),
    /// A sequence that must not increase.
    Trend { values: Vec<f64> },
    Flag { holds: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: Detail,
}

impl Check {
    fn ks(name: impl Into<String>, r: KsReport) -> Self {
        Self {
            name: name.into(),
            pass: r.pass,
            detail: Detail::Ks(r),
        }
    }

    fn moment(name: impl Into<String>, r: MomentReport) -> Self {
        Self {
            name: name.into(),
            pass: r.pass,
            detail: Detail::Moment(r),
        }
    }

    fn value(name: impl Into<String>, value: f64, target: f64, tolerance: f64, relative: bool) -> Self {
        let mut error = (value - target).abs();
        if relative {
            error /= target.abs();
        }
        Self {
            name: name.into(),
            pass: error <= tolerance,
            detail: Detail::Value {
                value,
                target,
                error,
                tolerance,
            },
        }
    }

    fn trend(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            pass: values.windows(2).all(|w| w[1] <= w[0]),
            detail: Detail::Trend { values },
        }
    }

    fn flag(name: impl Into<String>, holds: bool) -> Self {
        Self {
            name: name.into(),
            pass: holds,
            detail: Detail::Flag { holds },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u32,
    pub title: String,
    pub pass: bool,
    pub checks: Vec<Check>,
    /// Set when a computation failed before the checks completed.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub master_seed: u64,
    pub max_samples: Option<usize>,
    pub criteria: Vec<CriterionReport>,
    pub pass: bool,
}

pub fn title(id: u32) -> &'static str {
    match id {
        1 => "quadrature constant of the log moment",
        2 => "fourth sinh moment: closed form vs integral",
        3 => "exact exit-cone sampler moments",
        4 => "identities in law",
        5 => "series density vs sampler",
        6 => "expected log exit time",
        7 => "Laplace transforms",
        8 => "Spitzer limit",
        9 => "tail constant",
        10 => "OU asymptotics",
        _ => "unknown criterion",
    }
}

/// First stream of batch `k` of criterion `id`.
fn stream(id: u64, k: u64) -> u64 {
    (id << 40) | (k << 32)
}

/// Exit-cone batches shared between criteria, drawn once.
struct Shared<'a> {
    cfg: &'a SuiteConfig,
    pi8: Option<Vec<f64>>,
    pi4: Option<Vec<f64>>,
}

/// Step of the exponential functional in the exact exit-cone batches.
const DT: f64 = 1e-3;

impl Shared<'_> {
    fn cone_batch(&self, c: f64, k: u64) -> Result<Vec<f64>> {
        let cone = ConeSpec::symmetric(c)?;
        generate(self.cfg.n(1_000_000), self.cfg.master_seed, stream(0, k), |r| {
            paths::sample_exit_cone(cone, 1.0, DT, r)
        })
    }

    fn pi8(&mut self) -> Result<&[f64]> {
        if self.pi8.is_none() {
            self.pi8 = Some(self.cone_batch(FRAC_PI_8, 1)?);
        }
        Ok(self.pi8.as_deref().unwrap_or_default())
    }

    fn pi4(&mut self) -> Result<&[f64]> {
        if self.pi4.is_none() {
            self.pi4 = Some(self.cone_batch(FRAC_PI_4, 2)?);
        }
        Ok(self.pi4.as_deref().unwrap_or_default())
    }
}

/// Runs the selected criteria.
pub fn run(cfg: &SuiteConfig) -> SuiteReport {
    let mut shared = Shared {
        cfg,
        pi8: None,
        pi4: None,
    };
    let mut criteria = Vec::new();
    for &id in &cfg.criteria {
        let mut checks = Vec::new();
        let outcome = run_one(id, cfg, &mut shared, &mut checks);
        let error = outcome.err().map(|e| e.to_string());
        let pass = error.is_none() && !checks.is_empty() && checks.iter().all(|c| c.pass);
        criteria.push(CriterionReport {
            id,
            title: title(id).to_string(),
            pass,
            checks,
            error,
        });
    }
    SuiteReport {
        master_seed: cfg.master_seed,
        max_samples: cfg.max_samples,
        pass: criteria.iter().all(|c| c.pass),
        criteria,
    }
}

fn run_one(id: u32, cfg: &SuiteConfig, shared: &mut Shared, out: &mut Vec<Check>) -> Result<()> {
    match id {
        1 => quadrature_constant(out),
        2 => fourth_moment(out),
        3 => sampler_moments(cfg, shared, out),
        4 => identities(cfg, out),
        5 => density_vs_sampler(cfg, shared, out),
        6 => log_exit(shared, out),
        7 => laplace(cfg, shared, out),
        8 => spitzer(cfg, out),
        9 => tail(cfg, out),
        10 => ou(cfg, shared, out),
        _ => Err(crate::Error::domain("suite", format!("unknown criterion {id}"))),
    }
}

fn quadrature_constant(out: &mut Vec<Check>) -> Result<()> {
    let q = quad_semi_infinite(|z| z.ln() / (FRAC_PI_2 * z).cosh(), Decay::Exponential { rate: FRAC_PI_2 }, 1e-12)?;
    out.push(Check::value("integral of ln z / cosh(pi z / 2)", q.value, -0.7832, 5e-4, false));
    Ok(())
}

fn fourth_moment(out: &mut Vec<Check>) -> Result<()> {
    for c in [0.05, 0.1, 0.3] {
        let closed = laws::sinh_moment4(c)?;
        let integral = laws::sinh_moment_integral(c, 4, 1e-13)?;
        out.push(Check::value(format!("closed form vs integral, c = {c}"), closed, integral, 1e-8, true));
    }
    let c = 0.01f64;
    out.push(Check::value("small-c limit 5c^4, c = 0.01", laws::sinh_moment4(c)?, 5.0 * c.powi(4), 0.02, true));
    Ok(())
}

fn sampler_moments(cfg: &SuiteConfig, shared: &mut Shared, out: &mut Vec<Check>) -> Result<()> {
    let target = laws::sinh_moment2(FRAC_PI_8)?;
    out.push(Check::moment("E[T] at c = pi/8", moment_check(shared.pi8()?, |t| t, target)?));
    let hits = generate(cfg.n(1_000_000), cfg.master_seed, stream(3, 0), |r| paths::sample_two_sided_hit(1.0, 1e-6, r))?;
    out.push(Check::moment("E[(T^gamma_{-1,1})^2] = 5/3", moment_check(&hits, |t| t * t, 5.0 / 3.0)?));
    out.push(Check::moment("E[exp(-T^gamma_{-1,1}/2)] = 1/cosh 1", moment_check(&hits, |t| (-0.5 * t).exp(), 1.0 / 1f64.cosh())?));
    Ok(())
}

fn identities(cfg: &SuiteConfig, out: &mut Vec<Check>) -> Result<()> {
    let seed = cfg.master_seed;
    let n = cfg.n(100_000);

    let lhs = generate(n, seed, stream(4, 0), |r| {
        let (a, _) = paths::exp_functional(1.0, DT, r)?;
        let z: f64 = StandardNormal.sample(r);
        Ok(a.sqrt() * z)
    })?;
    let rhs = generate(n, seed, stream(4, 1), |r| {
        let z: f64 = StandardNormal.sample(r);
        Ok(z.sinh())
    })?;
    out.push(Check::ks("Bougerol: sinh(beta_1) vs sqrt(A_1) N", ks_two_sample(&rhs, &lhs, DEFAULT_ALPHA)?));

    let b = 1.0;
    let a = arcsinh_a(b);
    let planar = PlanarConfig::brownian();
    let sim = generate(n, seed, stream(4, 2), |r| paths::simulate_at_indep_hit(b, &planar, r))?;
    let clock: Vec<f64> = sim.iter().map(|o| o.clock).collect();
    let angle: Vec<f64> = sim.iter().map(|o| o.angle).collect();
    let sup: Vec<f64> = sim.iter().map(|o| o.sup_angle).collect();
    let hit = generate(n, seed, stream(4, 3), |r| paths::sample_one_sided_hit(a, r))?;
    out.push(Check::ks("law (i): H at T^delta_1 vs T^beta_a(1)", ks_two_sample(&clock, &hit, DEFAULT_ALPHA)?));
    let cauchy = generate(n, seed, stream(4, 4), |r| paths::sample_winding_at_indep_hit(b, HitMode::Exact, false, r))?;
    out.push(Check::ks("law (ii): theta at T^delta_1 vs C_a(1)", ks_two_sample(&angle, &cauchy, DEFAULT_ALPHA)?));
    let abs = generate(n, seed, stream(4, 5), |r| paths::sample_winding_at_indep_hit(b, HitMode::Exact, true, r))?;
    out.push(Check::ks("law (iii): sup theta at T^delta_1 vs |C_a(1)|", ks_two_sample(&sup, &abs, DEFAULT_ALPHA)?));

    let m = cfg.n(10_000);
    let ou = OuSpec::new(1.0, 0.5, 1.0)?;
    let bou = generate(m, seed, stream(4, 6), |r| paths::sample_ou_bougerol(b, ou, f64::INFINITY, r))?;
    let ks = ks_one_sample(&bou, |y| laws::cauchy_cdf(y, a).unwrap_or(f64::NAN), DEFAULT_ALPHA)?;
    out.push(Check::ks("OU Bougerol (simulated) vs C_a(1), lambda = 1", ks));

    let cone = ConeSpec::symmetric(FRAC_PI_4)?;
    let direct = generate(m, seed, stream(4, 7), |r| paths::sample_ou_exit_direct(cone, ou, 5e-4, r))?;
    let clocked = generate(m, seed, stream(4, 8), |r| paths::sample_ou_exit(cone, ou, DT, r))?;
    out.push(Check::ks("OU exit: time change vs direct simulation", ks_two_sample(&clocked, &direct, DEFAULT_ALPHA)?));
    Ok(())
}

fn density_vs_sampler(cfg: &SuiteConfig, shared: &mut Shared, out: &mut Vec<Check>) -> Result<()> {
    let cone = ConeSpec::symmetric(FRAC_PI_4)?;
    let trunc = SeriesTruncation::default();
    let table = ExitCdfTable::build(cone, trunc)?;
    let n = cfg.n(100_000);
    let batch = shared.pi4()?;
    let sample = &batch[..n.min(batch.len())];
    out.push(Check::ks("exact samples vs integrated series CDF, c = pi/4", ks_one_sample(sample, |t| table.cdf(t), DEFAULT_ALPHA)?));
    let mass = laws::exit_cone_density_mass(cone, trunc, 1e-10)?;
    out.push(Check::value("density mass", mass, 1.0, 1e-3, false));
    Ok(())
}

fn log_exit(shared: &mut Shared, out: &mut Vec<Check>) -> Result<()> {
    let t8 = laws::expected_log_exit(ConeSpec::symmetric(FRAC_PI_8)?, 1e-12)?;
    out.push(Check::moment("E[ln T] at c = pi/8", moment_check(shared.pi8()?, f64::ln, t8)?));
    let t4 = laws::expected_log_exit(ConeSpec::symmetric(FRAC_PI_4)?, 1e-12)?;
    out.push(Check::moment("E[ln T] at c = pi/4", moment_check(shared.pi4()?, f64::ln, t4)?));
    for (c, delta) in [(1.0, 1.0), (0.3, 2.0), (FRAC_PI_8, 0.7)] {
        let lhs = laws::log_sinh_integral(c, delta, 1e-14)?;
        let k = FRAC_PI_2 / delta;
        let rhs = k * laws::log_sinh_integral(c * k, FRAC_PI_2, 1e-14)?;
        out.push(Check::value(format!("F(c, delta) scaling, c = {c}, delta = {delta}"), lhs, rhs, 1e-10, false));
    }
    Ok(())
}

fn laplace(cfg: &SuiteConfig, shared: &mut Shared, out: &mut Vec<Check>) -> Result<()> {
    let c = 1.0;
    let one = generate(cfg.n(200_000), cfg.master_seed, stream(7, 0), |r| {
        Ok(paths::sample_one_sided_exit(c, 1.0, 2e-3, 1e9, r)?.value)
    })?;
    let kernel = |x: f64| move |t: f64| (-x / (2.0 * t)).exp() / (2.0 * PI * t).sqrt();
    for x in [0.0, 1.0, 4.0] {
        let target = laws::laplace_one_sided(x, c)?;
        out.push(Check::moment(format!("one-sided, c = 1, x = {x}"), moment_check(&one, kernel(x), target)?));
    }
    let cone = ConeSpec::symmetric(FRAC_PI_4)?;
    for x in [0.0, 1.0, 4.0] {
        let target = laws::laplace_two_sided(x, cone)?;
        out.push(Check::moment(format!("two-sided, c = pi/4, x = {x}"), moment_check(shared.pi4()?, kernel(x), target)?));
    }
    let target = laws::p_laplace_from_phi(1.0, c, 1e-12)?;
    out.push(Check::moment("E[exp(-1/(2T))] vs reconstruction from phi", moment_check(&one, |t| (-0.5 / t).exp(), target)?));
    Ok(())
}

fn spitzer(cfg: &SuiteConfig, out: &mut Vec<Check>) -> Result<()> {
    let n = cfg.n(10_000);
    let mut early = 0.0;
    let mut late = 0.0;
    for k in 0..5u64 {
        let r = spitzer_statistics(&[1e3, 1e6], n, cfg.master_seed, stream(8, k))?;
        if k == 0 {
            out.push(Check::ks("KS of 2 theta_t / ln t vs Cauchy(1), t = 1e6", r[1].clone().with_bar(SPITZER_BAR)));
        }
        early += r[0].statistic / 5.0;
        late += r[1].statistic / 5.0;
    }
    out.push(Check::trend("mean KS over 5 seeds, t = 1e3 then 1e6", vec![early, late]));
    Ok(())
}

fn tail(cfg: &SuiteConfig, out: &mut Vec<Check>) -> Result<()> {
    let r = tail_trend_check(FRAC_PI_4, &[1e3, 1e5, 1e7, 1e9], cfg.n(200_000), cfg.master_seed, stream(9, 0))?;
    out.push(Check {
        name: "(ln t) P(T > t) -> 4c/pi, c = pi/4".into(),
        pass: r.pass,
        detail: Detail::Tail(r),
    });
    Ok(())
}

fn ou(cfg: &SuiteConfig, shared: &mut Shared, out: &mut Vec<Check>) -> Result<()> {
    let seed = cfg.master_seed;
    let cone = ConeSpec::symmetric(0.1)?;
    let bm = OuSpec::default();
    let m = cfg.n(10_000);
    let a = generate(m, seed, stream(10, 0), |r| paths::sample_exit_cone(cone, 1.0, DT, r))?;
    let b = generate(m, seed, stream(10, 0), |r| paths::sample_ou_exit(cone, bm, DT, r))?;
    out.push(Check::flag("lambda = 0 sampler equals the Brownian one pathwise", a == b));

    // common random numbers: each OU time is the clock image of a BM time
    let lambda = 1e-2;
    let ou = OuSpec::new(lambda, 0.5, 1.0)?;
    let t0 = generate(cfg.n(1_000_000), seed, stream(10, 1), |r| paths::sample_exit_cone(cone, 1.0, 1e-4, r))?;
    let diff: Vec<f64> = t0.iter().map(|&t| (ou.alpha_inv(t) - t) / lambda).collect();
    let target = -laws::sinh_moment4(0.1)? / 3.0;
    out.push(Check::moment("(E[T^lambda] - E[T^0]) / lambda at lambda = 1e-2, c = 0.1", moment_of(&diff, target)?));

    let big = ConeSpec::symmetric(FRAC_PI_4)?;
    let ele = laws::expected_log_exit(big, 1e-12)?;
    let batch = shared.pi4()?;
    let mut gaps = Vec::new();
    for lambda in [1e2, 1e3] {
        let ou = OuSpec::new(lambda, 0.5, 1.0)?;
        let mean = batch.iter().map(|&t| ou.alpha_inv(t)).sum::<f64>() / batch.len() as f64;
        gaps.push((2.0 * lambda * mean - (2.0 * lambda).ln() - ele).abs());
    }
    out.push(Check::trend("|2 lambda E[T^lambda] - ln 2 lambda - E ln T|, lambda = 1e2, 1e3", gaps));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_criteria_pass() {
        let cfg = SuiteConfig {
            master_seed: 1,
            max_samples: Some(100),
            criteria: vec![1, 2],
        };
        let r = run(&cfg);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn unknown_criterion_fails_with_error() {
        let cfg = SuiteConfig {
            master_seed: 1,
            max_samples: Some(100),
            criteria: vec![42],
        };
        let r = run(&cfg);
        assert!(!r.pass);
        assert!(r.criteria[0].error.is_some());
    }

    #[test]
    fn sample_cap() {
        let mut cfg = SuiteConfig::all(0);
        assert_eq!(cfg.n(1000), 1000);
        cfg.max_samples = Some(10);
        assert_eq!(cfg.n(1000), 10);
    }
}
