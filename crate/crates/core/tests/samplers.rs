//! Exact-in-law samplers against direct simulation and known laws.

use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, SQRT_2};

use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};
use windings::laws::{self, ConeSpec, OuSpec};
use windings::paths::{self, generate, generate_batch, PlanarConfig, RngStream};
use windings::verify::{ks_one_sample, ks_two_sample, moment_check};

const SEED: u64 = 2024;
/// Many fixed-seed KS checks run here, so each uses a stricter level.
const ALPHA: f64 = 1e-3;

fn half_normal_cdf(y: f64) -> f64 {
    if y <= 0.0 {
        0.0
    } else {
        1.0 - libm::erfc(y / SQRT_2)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn batches_are_bit_reproducible(seed in any::<u64>(), stream in 0u64..1 << 40, c in 0.1f64..1.5) {
        let cone = ConeSpec::symmetric(c).unwrap();
        let f = |r: &mut rand_chacha::ChaCha8Rng| paths::sample_exit_cone(cone, 1.0, 1e-2, r);
        let a = generate_batch("a", 64, seed, stream, f).unwrap();
        let b = generate_batch("a", 64, seed, stream, f).unwrap();
        prop_assert_eq!(a.values, b.values);
    }
}

/// Censors at `cap` so heavy-tailed batches compare on a common support.
fn censor(v: &[f64], cap: f64) -> Vec<f64> {
    v.iter().map(|&x| x.min(cap)).collect()
}

#[test]
fn one_sided_exit_matches_direct_simulation() {
    let (c, cap, n) = (FRAC_PI_4, 50.0, 10_000);
    let exact = generate(n, SEED, 0, |r| Ok(paths::sample_one_sided_exit(c, 1.0, 1e-3, cap, r)?.value)).unwrap();
    let exact = censor(&exact, cap);
    for (k, dt) in [(1, 1e-2), (2, 5e-3)] {
        let cfg = PlanarConfig {
            dt_max: dt,
            track_sup: false,
            ..PlanarConfig::brownian()
        };
        let direct = generate(n, SEED, k << 32, |r| Ok(cfg.cone_exit(1.0, c, false, cap, r)?.unwrap_or(cap))).unwrap();
        let r = ks_two_sample(&exact, &direct, ALPHA).unwrap();
        assert!(r.pass, "dt = {dt}: {r:?}");
    }
}

#[test]
fn two_sided_exit_matches_direct_simulation() {
    let cone = ConeSpec::symmetric(FRAC_PI_4).unwrap();
    let n = 10_000;
    let exact = generate(n, SEED, 0, |r| paths::sample_exit_cone(cone, 1.0, 1e-3, r)).unwrap();
    for (k, dt) in [(1, 1e-3), (2, 5e-4)] {
        let cfg = PlanarConfig {
            dt_max: dt,
            track_sup: false,
            ..PlanarConfig::brownian()
        };
        let direct = generate(n, SEED, k << 32, |r| Ok(cfg.cone_exit(1.0, cone.c, true, f64::INFINITY, r)?.unwrap())).unwrap();
        let r = ks_two_sample(&exact, &direct, ALPHA).unwrap();
        assert!(r.pass, "dt = {dt}: {r:?}");
    }
}

#[test]
fn ou_exit_matches_direct_simulation() {
    let cone = ConeSpec::symmetric(FRAC_PI_4).unwrap();
    let ou = OuSpec::new(1.0, 0.5, 1.0).unwrap();
    let n = 10_000;
    let clocked = generate(n, SEED, 0, |r| paths::sample_ou_exit(cone, ou, 1e-3, r)).unwrap();
    for (k, dt) in [(1, 1e-3), (2, 5e-4)] {
        let direct = generate(n, SEED, k << 32, |r| paths::sample_ou_exit_direct(cone, ou, dt, r)).unwrap();
        let r = ks_two_sample(&clocked, &direct, ALPHA).unwrap();
        assert!(r.pass, "dt = {dt}: {r:?}");
    }
}

#[test]
fn start_point_scales_exit_time_by_its_square() {
    let cone = ConeSpec::symmetric(0.6).unwrap();
    let n = 20_000;
    let one = generate(n, SEED, 0, |r| paths::sample_exit_cone(cone, 1.0, 1e-3, r)).unwrap();
    let two = generate(n, SEED, 1 << 32, |r| Ok(paths::sample_exit_cone(cone, 2.0, 1e-3, r)? / 4.0)).unwrap();
    assert!(ks_two_sample(&one, &two, ALPHA).unwrap().pass);
}

#[test]
fn exp_functional_richardson() {
    let target = (1f64.exp().powi(2) - 1.0) / 2.0;
    let n = 40_000;
    let mut means = Vec::new();
    for (k, dt) in [(0, 2e-2), (1, 1e-2)] {
        let a = generate(n, SEED, k << 32, |r| Ok(paths::exp_functional(1.0, dt, r)?.0)).unwrap();
        let m = moment_check(&a, |x| x, target).unwrap();
        assert!(m.pass, "dt = {dt}: {m:?}");
        means.push(m);
    }
    let se = means[0].std_error.hypot(means[1].std_error);
    assert!((means[0].estimate - means[1].estimate).abs() < 4.0 * se);
}

#[test]
fn clock_asymptotic_law() {
    let t = 1e6f64;
    let cfg = PlanarConfig {
        track_sup: false,
        ..PlanarConfig::brownian()
    };
    let obs = generate(10_000, SEED, 0, |r| cfg.observe(1.0, &[t], r)).unwrap();
    let x: Vec<f64> = obs.iter().map(|o| t.ln() / (2.0 * o[0].clock.sqrt())).collect();
    let r = ks_one_sample(&x, half_normal_cdf, ALPHA).unwrap();
    assert!(r.statistic <= 0.05, "{r:?}");
}

#[test]
fn rotating_the_noise_leaves_the_winding_law_unchanged() {
    let n = 10_000;
    let run = |phase: f64, k: u64| {
        let cfg = PlanarConfig {
            noise_phase: phase,
            ..PlanarConfig::brownian()
        };
        generate(n, SEED, k << 32, |r| Ok(cfg.observe(1.0, &[1.0], r)?[0].angle)).unwrap()
    };
    let r = ks_two_sample(&run(0.0, 0), &run(1.0, 1), ALPHA).unwrap();
    assert!(r.pass, "{r:?}");
}

#[test]
fn winding_is_angular_motion_run_on_the_clock() {
    let n = 10_000;
    let cfg = PlanarConfig::brownian();
    let obs = generate(n, SEED, 0, |r| Ok(cfg.observe(1.0, &[1.0], r)?[0])).unwrap();
    let theta: Vec<f64> = obs.iter().map(|o| o.angle).collect();
    let mut r = RngStream::new(SEED, 1 << 32).rng();
    let skew: Vec<f64> = obs
        .iter()
        .map(|o| {
            let z: f64 = StandardNormal.sample(&mut r);
            o.clock.sqrt() * z
        })
        .collect();
    let ks = ks_two_sample(&theta, &skew, ALPHA).unwrap();
    assert!(ks.pass, "{ks:?}");
}

#[test]
fn radial_motion_at_range_time_has_the_range_density() {
    let cone = ConeSpec::symmetric(1.0).unwrap();
    let n = 100_000;
    let beta = generate(n, SEED, 0, |r| Ok(paths::sample_range_exit(1.0, 1e-3, r)?.beta)).unwrap();
    let r = ks_one_sample(&beta, |y| laws::range_cdf(y, cone, 1e-10).unwrap_or(f64::NAN), ALPHA).unwrap();
    assert!(r.pass, "{r:?}");
}

#[test]
fn indep_hit_modes_agree() {
    let n = 10_000;
    for sup in [false, true] {
        let exact = generate(n, SEED, 0, |r| paths::sample_winding_at_indep_hit(1.0, paths::HitMode::Exact, sup, r)).unwrap();
        let sim = generate(n, SEED, 1 << 32, |r| paths::sample_winding_at_indep_hit(1.0, paths::HitMode::Simulated, sup, r)).unwrap();
        let r = ks_two_sample(&exact, &sim, ALPHA).unwrap();
        assert!(r.pass, "sup = {sup}: {r:?}");
    }
}

#[test]
fn exact_cauchy_draws_track_the_quantiles() {
    let a = laws::cauchy_cdf(1.0, 1.0).unwrap();
    assert!((a - 0.75).abs() < 1e-15);
    let n = 100_000;
    let b = 1f64.sinh();
    let v = generate(n, SEED, 0, |r| paths::sample_winding_at_indep_hit(b, paths::HitMode::Exact, false, r)).unwrap();
    let r = ks_one_sample(&v, |y| laws::cauchy_cdf(y, 1.0).unwrap(), ALPHA).unwrap();
    assert!(r.pass);
}

#[test]
fn mean_exit_time_at_pi_over_8() {
    let cone = ConeSpec::symmetric(FRAC_PI_8).unwrap();
    let v = generate(100_000, SEED, 0, |r| paths::sample_exit_cone(cone, 1.0, 1e-3, r)).unwrap();
    let m = moment_check(&v, |t| t, laws::sinh_moment2(FRAC_PI_8).unwrap()).unwrap();
    assert!(m.pass, "{m:?}");
}
