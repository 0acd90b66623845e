//! `windings`: evaluate the hitting-time laws, draw samples and run the
//! verification suite.
//!
//! Exit codes: 0 success, 1 suite failure or I/O error, 2 invalid
//! arguments, 3 numerical non-convergence.

mod grid;
mod table;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use windings::laws::{self, ConeSpec, OuRegime, OuSpec};
use windings::numerics::SeriesTruncation;
use windings::paths::{self, generate, HitMode, PlanarConfig, CHUNK};
use windings::verify::{self, suite};
use windings::Error;

use table::{Cell, Table};

#[derive(Parser, Debug)]
#[command(name = "windings", version, about = "Hitting times of planar Brownian windings")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Global {
    /// Output format (default: csv, or json for `verify`).
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Write to this file instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Worker threads; overrides WINDINGS_THREADS. Default: all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Series density of the symmetric cone exit time on a time grid.
    Density(DensityArgs),
    /// Laplace-type transforms on an x grid.
    Laplace(LaplaceArgs),
    /// Moments and asymptotic constants.
    Moments(MomentArgs),
    /// Draw samples from one of the samplers.
    Sample(SampleArgs),
    /// Run the acceptance suite and emit a report.
    Verify(VerifyArgs),
    /// KS statistics of 2θ_t/ln t against Cauchy(1) on a time grid.
    Spitzer(SpitzerArgs),
}

#[derive(Args, Debug)]
struct DensityArgs {
    #[arg(long)]
    c: f64,
    /// Lower half-angle; only the symmetric case d = c is supported.
    #[arg(long)]
    d: Option<f64>,
    /// Outer truncation (fixed mode, or a cap with --adaptive).
    #[arg(long = "K")]
    k: Option<usize>,
    /// Inner truncation (fixed mode, or a cap with --adaptive).
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long)]
    adaptive: bool,
    #[arg(long, default_value_t = windings::numerics::DEFAULT_TAIL_TOL)]
    tail_tol: f64,
    /// Time grid, e.g. 0.01:10:200 or log:1e-3:1e3:100.
    #[arg(long)]
    t: String,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum LaplaceKind {
    /// E[(2πT)^{-1/2} e^{-x/2T}] for the one-sided time.
    OneSided,
    /// The same for the symmetric cone exit time.
    TwoSided,
    /// The same for the range time.
    Range,
    /// Transform of 1/(2T) under Q_c.
    Q,
    /// E[e^{-x/2T}] reconstructed from the one-sided transform.
    P,
}

#[derive(Args, Debug)]
struct LaplaceArgs {
    #[arg(long, value_enum)]
    kind: LaplaceKind,
    #[arg(long)]
    c: f64,
    #[arg(long)]
    x: String,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
}

#[derive(Args, Debug)]
#[group(id = "quantity", required = true, multiple = false)]
struct Quantity {
    /// E[T] = E[sinh²(β_τ)] (c < π/4).
    #[arg(long)]
    second: bool,
    /// E[sinh⁴(β_τ)] (c < π/8).
    #[arg(long)]
    fourth: bool,
    /// E[ln T^θ_{-c,c}].
    #[arg(long)]
    log: bool,
    /// E[sinh^p(β_τ)] by quadrature.
    #[arg(long, value_name = "P")]
    integral: Option<i32>,
    /// Tail constant 4c/π.
    #[arg(long)]
    tail: bool,
    /// OU mean exit time asymptotic.
    #[arg(long, value_enum, value_name = "REGIME")]
    ou: Option<Regime>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Regime {
    Large,
    Small,
}

#[derive(Args, Debug)]
struct MomentArgs {
    #[command(flatten)]
    quantity: Quantity,
    #[arg(long)]
    c: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long = "D", default_value_t = 0.5)]
    diffusion: f64,
    #[arg(long, default_value_t = 1.0)]
    z0: f64,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Law {
    /// Symmetric cone exit time (exact in law).
    ExitCone,
    /// One-sided winding time, censored above --cap.
    OneSidedExit,
    /// Exit time of a linear BM from (-c, c).
    TwoSidedHit,
    /// Hitting time of c by a linear BM.
    OneSidedHit,
    /// Range time of the winding process.
    Range,
    /// OU winding exit time (time change, or --direct simulation).
    OuExit,
    /// Winding at an independent hitting time of b.
    IndepHit,
    /// OU winding at the hitting time of b by e^{λt}U_t.
    OuBougerol,
    /// Planar Brownian winding at --horizon.
    Winding,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Exact,
    Simulated,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long, value_enum)]
    law: Law,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_4)]
    c: f64,
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 1.0)]
    z0: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long = "D", default_value_t = 0.5)]
    diffusion: f64,
    #[arg(long, value_enum, default_value_t = Mode::Exact)]
    mode: Mode,
    /// Return the running maximum of the angle (indep-hit).
    #[arg(long)]
    sup: bool,
    /// Simulate the OU process directly (ou-exit).
    #[arg(long)]
    direct: bool,
    /// Censoring level (one-sided-exit).
    #[arg(long, default_value_t = 1e12)]
    cap: f64,
    /// Observation time (winding).
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// `all` or a comma-separated list of criterion ids.
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long)]
    seed: u64,
    /// Cap on every batch size.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args, Debug)]
struct SpitzerArgs {
    #[arg(long)]
    t: String,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long)]
    seed: u64,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NonConvergence { .. } | Error::StepUnderflow { .. } => 3,
            _ => 2,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        // a closed downstream pipe (`| head`) is not a failure
        let code = if e.kind() == io::ErrorKind::BrokenPipe { 0 } else { 1 };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

enum Output {
    Table(Table),
    Report(Value, bool),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            if f.code != 0 {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}

fn threads(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var("WINDINGS_THREADS") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::usage(format!("WINDINGS_THREADS = '{s}' is not a count"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    if let Some(n) = threads(cli.global.threads)? {
        if n == 0 {
            return Err(Failure::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(e.to_string()))?;
    }
    let default_format = if matches!(cli.cmd, Cmd::Verify(_)) { Format::Json } else { Format::Csv };
    let format = cli.global.format.unwrap_or(default_format);
    let output = match cli.cmd {
        Cmd::Density(a) => Output::Table(density(a)?),
        Cmd::Laplace(a) => Output::Table(laplace(a)?),
        Cmd::Moments(a) => Output::Table(moments(a)?),
        Cmd::Sample(a) => Output::Table(sample(a)?),
        Cmd::Verify(a) => verify_cmd(a)?,
        Cmd::Spitzer(a) => Output::Table(spitzer(a)?),
    };
    let mut sink: Box<dyn Write> = match &cli.global.output {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let code = match output {
        Output::Table(t) => {
            match format {
                Format::Csv => t.write_csv(&mut sink)?,
                Format::Json => writeln!(sink, "{}", pretty(&t.to_json()))?,
            }
            0
        }
        Output::Report(v, pass) => {
            match format {
                Format::Json => writeln!(sink, "{}", pretty(&v))?,
                Format::Csv => report_csv(&v, &mut sink)?,
            }
            u8::from(!pass)
        }
    };
    sink.flush()?;
    Ok(code)
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).unwrap_or_else(|_| v.to_string())
}

fn grid(spec: &str) -> Result<Vec<f64>, Failure> {
    grid::parse(spec).map_err(Failure::usage)
}

fn density(a: DensityArgs) -> Result<Table, Failure> {
    let cone = ConeSpec::new(a.c, a.d.unwrap_or(a.c))?;
    let trunc = match (a.adaptive, a.k, a.n) {
        (false, Some(k), Some(n)) => SeriesTruncation::fixed(k, n),
        (false, None, None) | (true, None, None) => SeriesTruncation::adaptive(a.tail_tol)?,
        (true, Some(k), Some(n)) => SeriesTruncation::adaptive(a.tail_tol)?.with_caps(k, n),
        _ => return Err(Failure::usage("--K and --N must be given together")),
    };
    trunc.validate()?;
    let ts = grid(&a.t)?;
    let mut t = Table::new(vec!["t", "density", "negative"])
        .with("c", cone.c)
        .with("mode", if trunc.is_adaptive() { "adaptive" } else { "fixed" })
        .with("K", trunc.k_max)
        .with("N", trunc.n_max);
    for x in ts {
        let e = laws::exit_cone_density(x, cone, trunc)?;
        t.push(vec![x.into(), e.value.into(), e.is_negative().into()]);
    }
    Ok(t)
}

fn laplace(a: LaplaceArgs) -> Result<Table, Failure> {
    let xs = grid(&a.x)?;
    let cone = ConeSpec::symmetric(a.c)?;
    let mut t = Table::new(vec!["x", "value"]).with("c", a.c).with("kind", format!("{:?}", a.kind));
    for x in xs {
        let v = match a.kind {
            LaplaceKind::OneSided => laws::laplace_one_sided(x, a.c)?,
            LaplaceKind::TwoSided => laws::laplace_two_sided(x, cone)?,
            LaplaceKind::Range => laws::laplace_range(x, cone)?,
            LaplaceKind::Q => laws::q_laplace(x, a.c)?,
            LaplaceKind::P => laws::p_laplace_from_phi(x, a.c, a.tol)?,
        };
        t.push(vec![x.into(), v.into()]);
    }
    Ok(t)
}

fn moments(a: MomentArgs) -> Result<Table, Failure> {
    let q = &a.quantity;
    let cone = || ConeSpec::symmetric(a.c);
    let (name, value) = if q.second {
        ("second", laws::sinh_moment2(a.c)?)
    } else if q.fourth {
        ("fourth", laws::sinh_moment4(a.c)?)
    } else if q.log {
        let mut v = laws::expected_log_exit(cone()?, a.tol)?;
        v += 2.0 * positive("z0", a.z0)?.ln();
        ("log", v)
    } else if let Some(p) = q.integral {
        ("integral", laws::sinh_moment_integral(a.c, p, a.tol)?)
    } else if q.tail {
        ("tail", laws::tail_constant(a.c)?)
    } else if let Some(r) = q.ou {
        let ou = OuSpec::new(a.lambda, a.diffusion, a.z0)?;
        let regime = match r {
            Regime::Large => OuRegime::LargeLambda,
            Regime::Small => OuRegime::SmallLambda,
        };
        ("ou_mean_exit", laws::ou_mean_exit_asymptotics(cone()?, ou, regime, a.tol)?)
    } else {
        return Err(Failure::usage("choose one quantity"));
    };
    let mut t = Table::new(vec!["quantity", "c", "value"]);
    t.push(vec![Cell::Text(name.into()), a.c.into(), value.into()]);
    Ok(t)
}

fn positive(name: &str, v: f64) -> Result<f64, Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Failure::usage(format!("--{name} = {v} must be > 0")))
    }
}

fn sample(a: SampleArgs) -> Result<Table, Failure> {
    if a.n == 0 {
        return Err(Failure::usage("--n must be at least 1"));
    }
    let (n, seed) = (a.n, a.seed);
    let mut table;
    match a.law {
        Law::Range => {
            let v = generate(n, seed, 0, |r| paths::sample_range_exit(a.c, a.dt, r))?;
            table = Table::new(vec!["index", "gamma_time", "half_exit_time", "beta", "winding_time"]);
            for (i, s) in v.iter().enumerate() {
                table.push(vec![i.into(), s.gamma_time.into(), s.half_exit_time.into(), s.beta.into(), s.winding_time.into()]);
            }
        }
        Law::OneSidedExit => {
            let v = generate(n, seed, 0, |r| paths::sample_one_sided_exit(a.c, a.z0, a.dt, a.cap, r))?;
            table = Table::new(vec!["index", "value", "censored"]);
            for (i, s) in v.iter().enumerate() {
                table.push(vec![i.into(), s.value.into(), s.censored.into()]);
            }
        }
        Law::Winding => {
            let cfg = PlanarConfig {
                dt_max: a.dt,
                ..PlanarConfig::brownian()
            };
            positive("horizon", a.horizon)?;
            let v = generate(n, seed, 0, |r| Ok(cfg.observe(a.z0, &[a.horizon], r)?[0]))?;
            table = Table::new(vec!["index", "angle", "log_modulus", "clock", "sup_angle"]);
            for (i, o) in v.iter().enumerate() {
                table.push(vec![i.into(), o.angle.into(), o.log_modulus.into(), o.clock.into(), o.sup_angle.into()]);
            }
        }
        law => {
            let ou = || OuSpec::new(a.lambda, a.diffusion, a.z0);
            let cone = ConeSpec::symmetric(a.c)?;
            let v = match law {
                Law::ExitCone => generate(n, seed, 0, |r| paths::sample_exit_cone(cone, a.z0, a.dt, r))?,
                Law::TwoSidedHit => generate(n, seed, 0, |r| paths::sample_two_sided_hit(a.c, a.dt, r))?,
                Law::OneSidedHit => generate(n, seed, 0, |r| paths::sample_one_sided_hit(a.c, r))?,
                Law::OuExit => {
                    let ou = ou()?;
                    if a.direct {
                        generate(n, seed, 0, |r| paths::sample_ou_exit_direct(cone, ou, a.dt, r))?
                    } else {
                        generate(n, seed, 0, |r| paths::sample_ou_exit(cone, ou, a.dt, r))?
                    }
                }
                Law::IndepHit => {
                    let mode = match a.mode {
                        Mode::Exact => HitMode::Exact,
                        Mode::Simulated => HitMode::Simulated,
                    };
                    generate(n, seed, 0, |r| paths::sample_winding_at_indep_hit(a.b, mode, a.sup, r))?
                }
                Law::OuBougerol => {
                    let ou = ou()?;
                    generate(n, seed, 0, |r| paths::sample_ou_bougerol(a.b, ou, a.dt, r))?
                }
                Law::Range | Law::OneSidedExit | Law::Winding => unreachable!("handled above"),
            };
            table = Table::new(vec!["index", "value"]);
            for (i, x) in v.iter().enumerate() {
                table.push(vec![i.into(), (*x).into()]);
            }
        }
    }
    Ok(table
        .with("law", format!("{:?}", a.law))
        .with("seed", seed)
        .with("streams", format!("0..{}", n.div_ceil(CHUNK))))
}

fn parse_suite(s: &str) -> Result<Vec<u32>, Failure> {
    if s == "all" {
        return Ok(suite::ALL.to_vec());
    }
    s.split(',')
        .map(|p| match p.trim().parse::<u32>() {
            Ok(id) if suite::ALL.contains(&id) => Ok(id),
            _ => Err(Failure::usage(format!("unknown criterion '{p}' (expected 1..10 or all)"))),
        })
        .collect()
}

fn verify_cmd(a: VerifyArgs) -> Result<Output, Failure> {
    if a.samples == Some(0) {
        return Err(Failure::usage("--samples must be at least 1"));
    }
    let cfg = suite::SuiteConfig {
        master_seed: a.seed,
        max_samples: a.samples,
        criteria: parse_suite(&a.suite)?,
    };
    let report = suite::run(&cfg);
    for c in &report.criteria {
        eprintln!("criterion {:>2} {}: {}", c.id, if c.pass { "PASS" } else { "FAIL" }, c.title);
    }
    let pass = report.pass;
    let v = serde_json::to_value(&report).map_err(|e| Failure {
        code: 1,
        message: e.to_string(),
    })?;
    Ok(Output::Report(v, pass))
}

fn report_csv(v: &Value, w: &mut dyn Write) -> io::Result<()> {
    writeln!(w, "# master_seed={} max_samples={}", v["master_seed"], v["max_samples"])?;
    writeln!(w, "criterion,check,pass")?;
    for c in v["criteria"].as_array().into_iter().flatten() {
        for ch in c["checks"].as_array().into_iter().flatten() {
            writeln!(w, "{},\"{}\",{}", c["id"], ch["name"].as_str().unwrap_or(""), ch["pass"])?;
        }
    }
    Ok(())
}

fn spitzer(a: SpitzerArgs) -> Result<Table, Failure> {
    let ts = grid(&a.t)?;
    if ts.iter().any(|&t| !(t > 1.0)) || ts.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Failure::usage("--t must be an increasing grid above 1"));
    }
    if a.n == 0 {
        return Err(Failure::usage("--n must be at least 1"));
    }
    let reports = verify::spitzer_statistics(&ts, a.n, a.seed, 0)?;
    let mut t = Table::new(vec!["t", "statistic", "bar", "pass"])
        .with("seed", a.seed)
        .with("n", a.n);
    for (x, r) in ts.iter().zip(&reports) {
        t.push(vec![(*x).into(), r.statistic.into(), r.threshold.into(), r.pass.into()]);
    }
    Ok(t)
}
