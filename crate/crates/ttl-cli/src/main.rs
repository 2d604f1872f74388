//! `ttl`: command-line front end for tolerant goodness-of-fit testing.
//!
//! Every subcommand is a thin wrapper over the library: this file parses
//! flags, merges `--config` defaults, routes randomness through a single
//! seed, and serializes results (JSON for single decisions and
//! certificates, CSV for sweeps). Exit codes: 0 success, 1 validation or
//! refusal, 2 certificate recheck failure, 3 bracket/convergence failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::RngCore;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use ttl_core::calibration::{
    chebyshev_threshold, estimation_based_test, mc_worst_case_threshold, phi_for_l1_plugin,
    phi_for_tv, run_test, Calibration, Direction, TestData, TestSpec,
};
use ttl_core::error::{Error, Result};
use ttl_core::experiments::{
    chi2_suboptimality_demo, physics_demo, regime_map, tolerance_factor, PowerCurveRow,
    RegimePoint,
};
use ttl_core::lower_bounds::{
    assemble_certificate, best_poly_approx, default_grid_size, feasible_delta,
    free_tolerance_two_point, mp_even_bracket, scaled_mp_value, solve_mp, solve_mp_constrained,
    verify_certificate, LowerBoundCertificate,
};
use ttl_core::models::{FunctionSample, HypothesisPair, RandomStream, ReferenceDensity};
use ttl_core::reductions::{
    choose_dimension, density_tolerance_factor, transport_density_test,
    transport_white_noise_test, white_noise_tolerance_factor, ReductionSpec,
};
use ttl_core::statistics::{envelope, statistic_value, tv_plugin_statistic, StatisticKind};

#[derive(Parser)]
#[command(
    name = "ttl",
    version,
    about = "Tolerant goodness-of-fit tests in sequence, function, and count models",
    max_term_width = 100
)]
struct Cli {
    /// Master seed for all randomness; drawn from the OS and printed to
    /// stderr when absent
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// JSON object of parameter defaults, keys matching the long option
    /// names in snake_case; explicit flags win
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Write the result here instead of stdout
    #[arg(long, short = 'o', global = true, value_name = "PATH")]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one tolerant test on observed data
    Test(TestArgs),
    /// Print the calibrated rejection cutoff for a test family
    Calibrate(CalibrateArgs),
    /// Moment problems, polynomial approximation, and lower-bound
    /// certificates
    Lowerbound(LowerboundArgs),
    /// Recheck a lower-bound certificate file
    Verify(VerifyArgs),
    /// Sweep the null tolerance and record empirical critical separations
    RegimeMap(RegimeMapArgs),
    /// Head-to-head power of the chi-squared and plugin tests under an
    /// l1 tolerance
    Suboptimality(SuboptimalityArgs),
    /// Largest null tolerance at which the data still reject
    ToleranceFactor(ToleranceFactorArgs),
    /// Transport a function-model problem to the sequence or count model
    Reduce(ReduceArgs),
    /// Tolerant total-variation test of counts against a reference
    PhysicsDemo(PhysicsDemoArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StatisticArg {
    Plugin,
    Debiased,
    Chi2,
}

impl StatisticArg {
    fn kind(self) -> StatisticKind {
        match self {
            StatisticArg::Plugin => StatisticKind::PluginLp,
            StatisticArg::Debiased => StatisticKind::DebiasedLp,
            StatisticArg::Chi2 => StatisticKind::Chi2,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CalibrationArg {
    Envelope,
    Mc,
    Estimation,
}

impl CalibrationArg {
    fn method(self) -> Calibration {
        match self {
            CalibrationArg::Envelope => Calibration::CantelliEnvelope,
            CalibrationArg::Mc => Calibration::McWorstCase,
            CalibrationArg::Estimation => Calibration::EstimationBased,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DirectionArg {
    Detection,
    Equivalence,
}

impl DirectionArg {
    fn direction(self) -> Direction {
        match self {
            DirectionArg::Detection => Direction::Detection,
            DirectionArg::Equivalence => Direction::Equivalence,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    WhiteNoise,
    Density,
}

#[derive(Args)]
struct TestArgs {
    /// Norm index of the hypothesis radii
    #[arg(long)]
    p: Option<f64>,
    /// Null tolerance: accept means ||v||_p <= eps0 is plausible
    #[arg(long)]
    eps0: Option<f64>,
    /// Alternative separation (default eps0 + sigma d^{3/4})
    #[arg(long)]
    eps1: Option<f64>,
    /// Type-I error level (default 0.05)
    #[arg(long)]
    alpha: Option<f64>,
    /// Type-II error target (default 0.1)
    #[arg(long)]
    beta: Option<f64>,
    /// Noise level for Gaussian data (default: data file, then 1.0)
    #[arg(long)]
    sigma: Option<f64>,
    /// Expected dimension, checked against the data length
    #[arg(long)]
    d: Option<usize>,
    /// Statistic (default: plugin for p <= 2, debiased above)
    #[arg(long)]
    statistic: Option<StatisticArg>,
    /// Threshold calibration (default: envelope; counts use estimation)
    #[arg(long)]
    calibration: Option<CalibrationArg>,
    /// Which separation to reject (default detection)
    #[arg(long)]
    direction: Option<DirectionArg>,
    /// Replications for worst-case Monte Carlo calibration (default 2000)
    #[arg(long)]
    mc_reps: Option<usize>,
    /// JSON data file: {"x":[..]} for Gaussian observations or
    /// {"counts":[..],"reference":[..]} for multinomial counts
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Norm index of the hypothesis radii
    #[arg(long)]
    p: Option<f64>,
    /// Null tolerance
    #[arg(long)]
    eps0: Option<f64>,
    /// Alternative separation (default eps0 + sigma d^{3/4})
    #[arg(long)]
    eps1: Option<f64>,
    /// Type-I error level (default 0.05)
    #[arg(long)]
    alpha: Option<f64>,
    /// Type-II error target (default 0.1)
    #[arg(long)]
    beta: Option<f64>,
    /// Noise level (default 1.0)
    #[arg(long)]
    sigma: Option<f64>,
    /// Dimension
    #[arg(long)]
    d: Option<usize>,
    /// Statistic (default: plugin for p <= 2, debiased above)
    #[arg(long)]
    statistic: Option<StatisticArg>,
    /// Threshold calibration (default envelope)
    #[arg(long)]
    calibration: Option<CalibrationArg>,
    /// Which separation to reject (default detection)
    #[arg(long)]
    direction: Option<DirectionArg>,
    /// Replications for worst-case Monte Carlo calibration (default 2000)
    #[arg(long)]
    mc_reps: Option<usize>,
}

#[derive(Args)]
struct LowerboundArgs {
    /// Norm index
    #[arg(long)]
    p: Option<f64>,
    /// Number of matched moments
    #[arg(long = "L")]
    l: Option<usize>,
    /// Support grid size for the moment LP (default max(512, 16 L))
    #[arg(long)]
    grid: Option<usize>,
    /// Null tolerance of the constrained problem, in normalized units
    /// (support scaled to [-1, 1])
    #[arg(long)]
    eps: Option<f64>,
    /// Scale the constrained value to d coordinates of size delta
    /// (needs --d, --delta, --eps)
    #[arg(long)]
    scaled: bool,
    /// Best uniform polynomial approximation error of |x|^p on [-1, 1]
    /// instead of the moment problem
    #[arg(long)]
    approx: bool,
    /// Closed-form bracket for the even-p moment problem value
    #[arg(long)]
    bracket: bool,
    /// Assemble the free-tolerance two-point certificate (needs --d)
    #[arg(long)]
    free_tolerance: bool,
    /// Largest per-coordinate scale whose tensorized chi-squared stays
    /// below --target (needs --L, --d)
    #[arg(long)]
    feasible_delta: bool,
    /// Tensorized chi-squared budget for --feasible-delta
    #[arg(long)]
    target: Option<f64>,
    /// Dimension for --scaled, --free-tolerance, --feasible-delta
    #[arg(long)]
    d: Option<usize>,
    /// Per-coordinate scale for --scaled
    #[arg(long)]
    delta: Option<f64>,
    /// Noise level (default 1.0)
    #[arg(long)]
    sigma: Option<f64>,
    /// Type-I error level (default 0.05)
    #[arg(long)]
    alpha: Option<f64>,
    /// Type-II error target (default 0.1)
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Certificate JSON, e.g. from `ttl lowerbound --free-tolerance`
    #[arg(value_name = "CERT")]
    cert: PathBuf,
}

#[derive(Args)]
struct RegimeMapArgs {
    /// Norm index (the regime formulas are the l1 ones; default 1)
    #[arg(long)]
    p: Option<f64>,
    /// Dimension
    #[arg(long)]
    d: Option<usize>,
    /// Noise level (default 1.0)
    #[arg(long)]
    sigma: Option<f64>,
    /// Type-I error level (default 0.05)
    #[arg(long)]
    alpha: Option<f64>,
    /// Type-II error target (default 0.1)
    #[arg(long)]
    beta: Option<f64>,
    /// Monte Carlo replications per power evaluation (default 2000)
    #[arg(long)]
    n_reps: Option<usize>,
    /// Comma-separated strictly increasing null tolerances
    #[arg(long, value_name = "LIST")]
    eps0: Option<String>,
    /// Also write every bisection power evaluation to this CSV file
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SuboptimalityArgs {
    /// Dimension, at least 256 (default 4096)
    #[arg(long)]
    d: Option<usize>,
    /// Noise level (default 1.0)
    #[arg(long)]
    sigma: Option<f64>,
    /// Type-I error level (default 0.05)
    #[arg(long)]
    alpha: Option<f64>,
    /// Type-II error target (default 0.1)
    #[arg(long)]
    beta: Option<f64>,
    /// C in the separation eps1 = C sigma d^{3/4} (default 4)
    #[arg(long)]
    sep_multiple: Option<f64>,
    /// Monte Carlo replications per power estimate (default 2000)
    #[arg(long)]
    n_reps: Option<usize>,
}

#[derive(Args)]
struct ToleranceFactorArgs {
    /// Norm index for Gaussian data (default 2)
    #[arg(long)]
    p: Option<f64>,
    /// Level of the inverted test family (default 0.05)
    #[arg(long)]
    alpha: Option<f64>,
    /// Noise level for Gaussian data (default: data file, then 1.0)
    #[arg(long)]
    sigma: Option<f64>,
    /// Statistic for Gaussian data (default: plugin for p <= 2)
    #[arg(long)]
    statistic: Option<StatisticArg>,
    /// Upper end of the tolerance bracket (required for Gaussian data;
    /// default 1.0 for counts)
    #[arg(long)]
    bracket_hi: Option<f64>,
    /// JSON data file, Gaussian {"x":[..]} or counts
    /// {"counts":[..],"reference":[..]}
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct ReduceArgs {
    /// Source model of the data file
    #[arg(long)]
    model: Option<ModelArg>,
    /// Norm index of the function-space radii
    #[arg(long)]
    p: Option<f64>,
    /// Null tolerance in function space
    #[arg(long)]
    eps0: Option<f64>,
    /// Alternative separation in function space
    #[arg(long)]
    eps1: Option<f64>,
    /// Type-I error level (default 0.05)
    #[arg(long)]
    alpha: Option<f64>,
    /// Smoothness index of the function class (default 1.0)
    #[arg(long)]
    s: Option<f64>,
    /// Radius of the smoothness ball (default 1.0)
    #[arg(long)]
    l_radius: Option<f64>,
    /// Secondary norm index of the smoothness class (default: same as p)
    #[arg(long)]
    q: Option<f64>,
    /// Constant in the dimension rule d = c eps1^{-1/s} (default 1.0)
    #[arg(long)]
    c: Option<f64>,
    /// JSON data file: {"increments":[..],"m":..,"sigma":..} for
    /// white-noise paths or {"observations":[..]} for density samples
    /// (tested against the uniform reference)
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct PhysicsDemoArgs {
    /// Radius of the total-variation ball of acceptable references
    #[arg(long)]
    r: Option<f64>,
    /// Type-I error level (default 0.05)
    #[arg(long)]
    alpha: Option<f64>,
    /// Sample size, checked against the counts (default: their sum)
    #[arg(long)]
    n: Option<u64>,
    /// JSON data file: {"counts":[..],"reference":[..]}
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,
}

/// Input data file. One schema for every subcommand; which fields must
/// be present depends on the model being exercised.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DataFile {
    /// Gaussian sequence observations.
    x: Option<Vec<f64>>,
    /// Noise level recorded with the data.
    sigma: Option<f64>,
    /// Multinomial cell counts.
    counts: Option<Vec<u64>>,
    /// Sample size; defaults to the sum of the counts.
    n: Option<u64>,
    /// Reference cell masses.
    reference: Option<Vec<f64>>,
    /// White-noise path increments.
    increments: Option<Vec<f64>>,
    /// White-noise discretization resolution.
    m: Option<usize>,
    /// Density-model observations on [0, 1].
    observations: Option<Vec<f64>>,
}

/// Defaults loaded from --config; keys mirror the long option names.
struct Config(serde_json::Map<String, Value>);

impl Config {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Config(serde_json::Map::new()));
        };
        let value: Value = read_json(path)?;
        match value {
            Value::Object(map) => Ok(Config(map)),
            other => Err(Error::invalid(format!(
                "config {} must be a JSON object, got {other}",
                path.display()
            ))),
        }
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| Error::invalid(format!("config key {key} must be a number, got {v}"))),
        }
    }

    fn u64(&self, key: &str) -> Result<Option<u64>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_u64()
                .map(Some)
                .ok_or_else(|| Error::invalid(format!("config key {key} must be a nonnegative integer, got {v}"))),
        }
    }

    fn usize(&self, key: &str) -> Result<Option<usize>> {
        Ok(self.u64(key)?.map(|v| v as usize))
    }

    fn string(&self, key: &str) -> Result<Option<String>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(Error::invalid(format!("config key {key} must be a string, got {v}"))),
        }
    }

    fn path(&self, key: &str) -> Result<Option<PathBuf>> {
        Ok(self.string(key)?.map(PathBuf::from))
    }

    fn choice<T: ValueEnum + Clone + Send + Sync + 'static>(&self, key: &str) -> Result<Option<T>> {
        self.string(key)?
            .map(|s| {
                T::from_str(&s, true)
                    .map_err(|e| Error::invalid(format!("config key {key}: {e}")))
            })
            .transpose()
    }

    /// Number list: either a JSON array or a comma-separated string.
    fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => parse_f64_list(s).map(Some),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| {
                    v.as_f64()
                        .ok_or_else(|| Error::invalid(format!("config key {key} must list numbers, got {v}")))
                })
                .collect::<Result<Vec<f64>>>()
                .map(Some),
            Some(v) => Err(Error::invalid(format!(
                "config key {key} must be an array or comma-separated string, got {v}"
            ))),
        }
    }
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("cannot parse '{tok}' as a number")))
        })
        .collect()
}

fn require<T>(value: Option<T>, name: &str) -> Result<T> {
    value.ok_or_else(|| Error::invalid(format!("missing required parameter --{name}")))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

fn write_output(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, content)
            .map_err(|e| Error::invalid(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn to_pretty(value: &impl serde::Serialize) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Error::invalid(format!("serialization: {e}")))
}

/// 17 significant digits: enough to round-trip any f64.
fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

fn power_rows_csv(rows: &[PowerCurveRow]) -> String {
    let mut out = String::from("eps0,eps1,d,sigma,alpha,n_reps,type1,power,stderr,seed\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            sig17(r.eps0),
            sig17(r.eps1),
            r.d,
            sig17(r.sigma),
            sig17(r.alpha),
            r.n_reps,
            sig17(r.empirical_type1),
            sig17(r.empirical_power),
            sig17(r.mc_stderr),
            r.seed,
        ));
    }
    out
}

fn regime_points_csv(points: &[RegimePoint]) -> String {
    let mut out = String::from("eps0,critical_sep,predicted,label\n");
    for pt in points {
        let label = match pt.regime_label {
            ttl_core::experiments::RegimeLabel::Free => "free",
            ttl_core::experiments::RegimeLabel::Interpolation => "interpolation",
            ttl_core::experiments::RegimeLabel::FunctionalEstimation => "functional_estimation",
        };
        out.push_str(&format!(
            "{},{},{},{}\n",
            sig17(pt.eps0),
            sig17(pt.empirical_critical_sep),
            sig17(pt.predicted_rate),
            label,
        ));
    }
    out
}

fn default_statistic(p: f64) -> StatisticArg {
    if p > 2.0 {
        StatisticArg::Debiased
    } else {
        StatisticArg::Plugin
    }
}

fn statistic_name(kind: StatisticKind) -> &'static str {
    match kind {
        StatisticKind::PluginLp => "plugin",
        StatisticKind::DebiasedLp => "debiased",
        StatisticKind::Chi2 => "chi2",
    }
}

fn calibration_name(c: Calibration) -> &'static str {
    match c {
        Calibration::CantelliEnvelope => "envelope",
        Calibration::McWorstCase => "mc",
        Calibration::EstimationBased => "estimation",
    }
}

fn direction_name(d: Direction) -> &'static str {
    match d {
        Direction::Detection => "detection",
        Direction::Equivalence => "equivalence",
    }
}

/// Default separation when only the tolerance is supplied: the free-regime
/// scale eps0 + sigma d^{3/4}.
fn default_eps1(eps0: f64, sigma: f64, d: usize) -> f64 {
    eps0 + sigma * (d as f64).powf(0.75)
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap exits 2 by default; route usage problems to the
            // validation exit code and keep help/version at 0.
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("{err}");
        std::process::exit(err.exit_code());
    }
}

fn run(cli: Cli) -> Result<()> {
    init_thread_pool()?;
    let cfg = Config::load(cli.config.as_deref())?;
    let seed = match cli.seed {
        Some(s) => s,
        None => match cfg.u64("seed")? {
            Some(s) => s,
            None => {
                let s = rand::rngs::OsRng.next_u64();
                eprintln!("seed: {s}");
                s
            }
        },
    };
    let stream = RandomStream::new(seed);
    let out = cli.output.as_deref();
    match cli.command {
        Command::Test(args) => cmd_test(args, &cfg, out, &stream),
        Command::Calibrate(args) => cmd_calibrate(args, &cfg, out, &stream),
        Command::Lowerbound(args) => cmd_lowerbound(args, &cfg, out),
        Command::Verify(args) => cmd_verify(args, out),
        Command::RegimeMap(args) => cmd_regime_map(args, &cfg, out, &stream),
        Command::Suboptimality(args) => cmd_suboptimality(args, &cfg, out, &stream),
        Command::ToleranceFactor(args) => cmd_tolerance_factor(args, &cfg, out),
        Command::Reduce(args) => cmd_reduce(args, &cfg, out),
        Command::PhysicsDemo(args) => cmd_physics_demo(args, &cfg, out),
    }
}

fn init_thread_pool() -> Result<()> {
    let Ok(raw) = std::env::var("TTL_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("TTL_THREADS must be a positive integer, got '{raw}'")))?;
    if n == 0 {
        return Err(Error::invalid("TTL_THREADS must be a positive integer"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))
}

/// Shared resolution of the test-family flags for `test` and `calibrate`.
struct ResolvedFamily {
    spec: TestSpec,
    sigma: f64,
}

#[allow(clippy::too_many_arguments)]
fn resolve_family(
    cfg: &Config,
    p: Option<f64>,
    eps0: Option<f64>,
    eps1: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    sigma: Option<f64>,
    d: usize,
    statistic: Option<StatisticArg>,
    calibration: Option<CalibrationArg>,
    direction: Option<DirectionArg>,
    mc_reps: Option<usize>,
    default_cal: CalibrationArg,
) -> Result<ResolvedFamily> {
    let p = require(p.or(cfg.f64("p")?), "p")?;
    let eps0 = require(eps0.or(cfg.f64("eps0")?), "eps0")?;
    let alpha = alpha.or(cfg.f64("alpha")?).unwrap_or(0.05);
    let beta = beta.or(cfg.f64("beta")?).unwrap_or(0.1);
    let sigma = sigma.or(cfg.f64("sigma")?).unwrap_or(1.0);
    let eps1 = eps1.or(cfg.f64("eps1")?).unwrap_or_else(|| default_eps1(eps0, sigma, d));
    let kind_arg = statistic.or(cfg.choice("statistic")?).unwrap_or_else(|| default_statistic(p));
    let cal_arg = calibration.or(cfg.choice("calibration")?).unwrap_or(default_cal);
    let dir_arg = direction.or(cfg.choice("direction")?).unwrap_or(DirectionArg::Detection);
    let mc_reps = mc_reps.or(cfg.usize("mc_reps")?).unwrap_or(2000);

    let pair = HypothesisPair::new(p, eps0, eps1)?;
    let mut spec = TestSpec::new(pair, kind_arg.kind(), alpha, beta);
    spec.calibration = cal_arg.method();
    spec.direction = dir_arg.direction();
    spec.mc_reps = mc_reps;
    Ok(ResolvedFamily { spec, sigma })
}

fn cmd_test(args: TestArgs, cfg: &Config, out: Option<&Path>, stream: &RandomStream) -> Result<()> {
    let data_path = require(args.data.or(cfg.path("data")?), "data")?;
    let file: DataFile = read_json(&data_path)?;

    if let Some(x) = &file.x {
        let d = args.d.or(cfg.usize("d")?).unwrap_or(x.len());
        if d != x.len() {
            return Err(Error::invalid(format!("--d is {d} but the data have {} coordinates", x.len())));
        }
        let sigma_flag = args.sigma.or(cfg.f64("sigma")?).or(file.sigma);
        let family = resolve_family(
            cfg,
            args.p,
            args.eps0,
            args.eps1,
            args.alpha,
            args.beta,
            sigma_flag,
            d,
            args.statistic,
            args.calibration,
            args.direction,
            args.mc_reps,
            CalibrationArg::Envelope,
        )?;
        let decision = run_test(
            &family.spec,
            &TestData::Gaussian { x, sigma: family.sigma },
            stream,
        )?;
        let report = json!({
            "model": "gaussian",
            "p": family.spec.hypothesis.p,
            "eps0": family.spec.hypothesis.eps0,
            "eps1": family.spec.hypothesis.eps1,
            "alpha": family.spec.alpha,
            "beta": family.spec.beta,
            "sigma": family.sigma,
            "d": d,
            "statistic": statistic_name(family.spec.statistic_kind),
            "calibration": calibration_name(family.spec.calibration),
            "direction": direction_name(family.spec.direction),
            "seed": stream.master_seed,
            "decision": decision,
        });
        return write_output(out, &to_pretty(&report)?);
    }

    if let Some(counts) = &file.counts {
        let reference = file
            .reference
            .as_deref()
            .ok_or_else(|| Error::invalid("count data need a \"reference\" field of cell masses"))?;
        let n = file.n.unwrap_or_else(|| counts.iter().sum());
        let d = args.d.or(cfg.usize("d")?).unwrap_or(counts.len());
        if d != counts.len() {
            return Err(Error::invalid(format!("--d is {d} but the data have {} cells", counts.len())));
        }
        let family = resolve_family(
            cfg,
            args.p,
            args.eps0,
            args.eps1,
            args.alpha,
            args.beta,
            args.sigma,
            d,
            args.statistic,
            args.calibration,
            args.direction,
            args.mc_reps,
            CalibrationArg::Estimation,
        )?;
        let decision = run_test(
            &family.spec,
            &TestData::Multinomial { counts, n, reference },
            stream,
        )?;
        let report = json!({
            "model": "multinomial",
            "p": family.spec.hypothesis.p,
            "eps0": family.spec.hypothesis.eps0,
            "eps1": family.spec.hypothesis.eps1,
            "alpha": family.spec.alpha,
            "n": n,
            "d": d,
            "calibration": calibration_name(family.spec.calibration),
            "seed": stream.master_seed,
            "decision": decision,
        });
        return write_output(out, &to_pretty(&report)?);
    }

    Err(Error::invalid(format!(
        "{} has neither \"x\" nor \"counts\"",
        data_path.display()
    )))
}

fn cmd_calibrate(
    args: CalibrateArgs,
    cfg: &Config,
    out: Option<&Path>,
    stream: &RandomStream,
) -> Result<()> {
    let d = require(args.d.or(cfg.usize("d")?), "d")?;
    let family = resolve_family(
        cfg,
        args.p,
        args.eps0,
        args.eps1,
        args.alpha,
        args.beta,
        args.sigma,
        d,
        args.statistic,
        args.calibration,
        args.direction,
        args.mc_reps,
        CalibrationArg::Envelope,
    )?;
    let spec = &family.spec;
    spec.validate()?;
    let sigma = family.sigma;
    let p = spec.hypothesis.p;

    let (threshold, reject_below) = match spec.direction {
        Direction::Detection => {
            let t = match spec.calibration {
                Calibration::CantelliEnvelope => {
                    chebyshev_threshold(spec.statistic_kind, p, sigma, d, spec.hypothesis.eps0, spec.alpha)?
                }
                Calibration::McWorstCase => mc_worst_case_threshold(spec, d, sigma, stream)?,
                Calibration::EstimationBased => {
                    if p != 1.0 || spec.statistic_kind != StatisticKind::PluginLp {
                        return Err(Error::invalid(
                            "estimation-based calibration on Gaussian data is defined for the p = 1 plugin statistic",
                        ));
                    }
                    spec.hypothesis.eps0 + (phi_for_l1_plugin(sigma, d) / spec.alpha).sqrt()
                }
            };
            (t, false)
        }
        Direction::Equivalence => {
            if spec.calibration != Calibration::CantelliEnvelope {
                return Err(Error::invalid(
                    "equivalence direction is calibrated from envelopes; other calibrations are not supported",
                ));
            }
            let e = envelope(p, sigma, d, spec.hypothesis.eps1)?;
            (e.mean_lower - (e.var_upper / spec.alpha).sqrt(), true)
        }
    };

    let report = json!({
        "p": p,
        "eps0": spec.hypothesis.eps0,
        "eps1": spec.hypothesis.eps1,
        "alpha": spec.alpha,
        "d": d,
        "sigma": sigma,
        "statistic": statistic_name(spec.statistic_kind),
        "calibration": calibration_name(spec.calibration),
        "direction": direction_name(spec.direction),
        "threshold": threshold,
        "reject_below": reject_below,
        "seed": stream.master_seed,
    });
    write_output(out, &to_pretty(&report)?)
}

fn cmd_lowerbound(args: LowerboundArgs, cfg: &Config, out: Option<&Path>) -> Result<()> {
    let modes = [args.scaled, args.approx, args.bracket, args.free_tolerance, args.feasible_delta];
    if modes.iter().filter(|&&m| m).count() > 1 {
        return Err(Error::invalid(
            "choose at most one of --scaled, --approx, --bracket, --free-tolerance, --feasible-delta",
        ));
    }
    let sigma = args.sigma.or(cfg.f64("sigma")?).unwrap_or(1.0);
    let alpha = args.alpha.or(cfg.f64("alpha")?).unwrap_or(0.05);
    let beta = args.beta.or(cfg.f64("beta")?).unwrap_or(0.1);

    if args.free_tolerance {
        let d = require(args.d.or(cfg.usize("d")?), "d")?;
        let pair = free_tolerance_two_point(d, sigma, alpha, beta)?;
        let cert = assemble_certificate(&pair, d, sigma, alpha, beta)?;
        return write_output(out, &to_pretty(&cert)?);
    }

    if args.feasible_delta {
        let l = require(args.l.or(cfg.usize("L")?), "L")?;
        let d = require(args.d.or(cfg.usize("d")?), "d")?;
        let target = require(args.target.or(cfg.f64("target")?), "target")?;
        let delta = feasible_delta(l, d, sigma, target)?;
        let report = json!({
            "L": l, "d": d, "sigma": sigma, "target": target, "delta": delta,
        });
        return write_output(out, &to_pretty(&report)?);
    }

    let p = require(args.p.or(cfg.f64("p")?), "p")?;
    let l = require(args.l.or(cfg.usize("L")?), "L")?;

    if args.approx {
        let approx = best_poly_approx(p, l)?;
        let report = json!({
            "p": p, "L": l, "degree": approx.degree, "error": approx.error,
            "coefficients": approx.coefficients,
        });
        return write_output(out, &to_pretty(&report)?);
    }

    if args.bracket {
        if p <= 0.0 || p.fract() != 0.0 || (p as u64) % 2 != 0 {
            return Err(Error::invalid(format!("--bracket needs a positive even integer p, got {p}")));
        }
        let (lower, upper) = mp_even_bracket(p as u32, l);
        let report = json!({ "p": p, "L": l, "lower": lower, "upper": upper });
        return write_output(out, &to_pretty(&report)?);
    }

    let grid = args.grid.or(cfg.usize("grid")?).unwrap_or_else(|| default_grid_size(l));

    if args.scaled {
        let eps = require(args.eps.or(cfg.f64("eps")?), "eps")?;
        let d = require(args.d.or(cfg.usize("d")?), "d")?;
        let delta = require(args.delta.or(cfg.f64("delta")?), "delta")?;
        let value = scaled_mp_value(p, eps, l, d, delta, grid)?;
        let report = json!({
            "p": p, "L": l, "grid": grid, "eps": eps, "d": d, "delta": delta, "value": value,
        });
        return write_output(out, &to_pretty(&report)?);
    }

    let (value, pair, eps) = match args.eps.or(cfg.f64("eps")?) {
        Some(eps) => {
            let (value, pair) = solve_mp_constrained(p, eps, l, grid)?;
            (value, pair, Some(eps))
        }
        None => {
            let (value, pair) = solve_mp(p, l, grid)?;
            (value, pair, None)
        }
    };
    let report = json!({
        "p": p, "L": l, "grid": grid, "eps": eps, "value": value, "pair": pair,
    });
    write_output(out, &to_pretty(&report)?)
}

fn cmd_verify(args: VerifyArgs, out: Option<&Path>) -> Result<()> {
    let cert: LowerBoundCertificate = read_json(&args.cert)?;
    verify_certificate(&cert)?;
    let report = json!({
        "ok": true,
        "d": cert.d,
        "eps0": cert.eps0,
        "eps1": cert.eps1,
        "chi2_upper": cert.chi2_value_upper,
        "target_risk_floor": cert.target_risk_floor,
    });
    write_output(out, &to_pretty(&report)?)
}

fn cmd_regime_map(
    args: RegimeMapArgs,
    cfg: &Config,
    out: Option<&Path>,
    stream: &RandomStream,
) -> Result<()> {
    let p = args.p.or(cfg.f64("p")?).unwrap_or(1.0);
    let d = require(args.d.or(cfg.usize("d")?), "d")?;
    let sigma = args.sigma.or(cfg.f64("sigma")?).unwrap_or(1.0);
    let alpha = args.alpha.or(cfg.f64("alpha")?).unwrap_or(0.05);
    let beta = args.beta.or(cfg.f64("beta")?).unwrap_or(0.1);
    let n_reps = args.n_reps.or(cfg.usize("n_reps")?).unwrap_or(2000);
    let grid = match args.eps0 {
        Some(s) => parse_f64_list(&s)?,
        None => require(cfg.f64_list("eps0")?, "eps0")?,
    };
    let trace_path = args.trace.or(cfg.path("trace")?);

    let map = regime_map(p, d, sigma, alpha, beta, &grid, n_reps, stream)?;
    if let Some(path) = trace_path {
        write_output(Some(&path), &power_rows_csv(&map.traces))?;
    }
    write_output(out, &regime_points_csv(&map.points))
}

fn cmd_suboptimality(
    args: SuboptimalityArgs,
    cfg: &Config,
    out: Option<&Path>,
    stream: &RandomStream,
) -> Result<()> {
    let d = args.d.or(cfg.usize("d")?).unwrap_or(4096);
    let sigma = args.sigma.or(cfg.f64("sigma")?).unwrap_or(1.0);
    let alpha = args.alpha.or(cfg.f64("alpha")?).unwrap_or(0.05);
    let beta = args.beta.or(cfg.f64("beta")?).unwrap_or(0.1);
    let sep = args.sep_multiple.or(cfg.f64("sep_multiple")?).unwrap_or(4.0);
    let n_reps = args.n_reps.or(cfg.usize("n_reps")?).unwrap_or(2000);
    let report = chi2_suboptimality_demo(d, sigma, alpha, beta, sep, n_reps, stream)?;
    write_output(out, &to_pretty(&report)?)
}

fn cmd_tolerance_factor(args: ToleranceFactorArgs, cfg: &Config, out: Option<&Path>) -> Result<()> {
    let data_path = require(args.data.or(cfg.path("data")?), "data")?;
    let file: DataFile = read_json(&data_path)?;
    let alpha = args.alpha.or(cfg.f64("alpha")?).unwrap_or(0.05);

    if let Some(counts) = &file.counts {
        let reference = file
            .reference
            .as_deref()
            .ok_or_else(|| Error::invalid("count data need a \"reference\" field of cell masses"))?;
        let n = file.n.unwrap_or_else(|| counts.iter().sum());
        let value = tv_plugin_statistic(counts, n, reference)?;
        let phi = phi_for_tv(counts.len(), n);
        let bracket_hi = args.bracket_hi.or(cfg.f64("bracket_hi")?).unwrap_or(1.0);
        let factor =
            tolerance_factor(|eps| Ok(estimation_based_test(value, eps, phi, alpha)?.reject), bracket_hi)?;
        let report = json!({
            "model": "multinomial",
            "alpha": alpha,
            "n": n,
            "d": counts.len(),
            "statistic_value": value,
            "bracket_hi": bracket_hi,
            "tolerance_factor": factor.value,
            "censored": factor.censored,
        });
        return write_output(out, &to_pretty(&report)?);
    }

    if let Some(x) = &file.x {
        let p = args.p.or(cfg.f64("p")?).unwrap_or(2.0);
        let sigma = args.sigma.or(cfg.f64("sigma")?).or(file.sigma).unwrap_or(1.0);
        let kind = args
            .statistic
            .or(cfg.choice("statistic")?)
            .unwrap_or_else(|| default_statistic(p))
            .kind();
        let bracket_hi = require(
            args.bracket_hi.or(cfg.f64("bracket_hi")?),
            "bracket-hi (required for Gaussian data)",
        )?;
        let d = x.len();
        let value = statistic_value(kind, x, p, sigma)?;
        // The envelope threshold is nondecreasing in the tolerance, so
        // the rejection family is monotone as required.
        let factor = tolerance_factor(
            |eps| Ok(value > chebyshev_threshold(kind, p, sigma, d, eps, alpha)?),
            bracket_hi,
        )?;
        let report = json!({
            "model": "gaussian",
            "p": p,
            "alpha": alpha,
            "sigma": sigma,
            "d": d,
            "statistic": statistic_name(kind),
            "statistic_value": value,
            "bracket_hi": bracket_hi,
            "tolerance_factor": factor.value,
            "censored": factor.censored,
        });
        return write_output(out, &to_pretty(&report)?);
    }

    Err(Error::invalid(format!(
        "{} has neither \"x\" nor \"counts\"",
        data_path.display()
    )))
}

fn cmd_reduce(args: ReduceArgs, cfg: &Config, out: Option<&Path>) -> Result<()> {
    let model = require(args.model.or(cfg.choice("model")?), "model")?;
    let data_path = require(args.data.or(cfg.path("data")?), "data")?;
    let file: DataFile = read_json(&data_path)?;
    let p = require(args.p.or(cfg.f64("p")?), "p")?;
    let eps0 = require(args.eps0.or(cfg.f64("eps0")?), "eps0")?;
    let eps1 = require(args.eps1.or(cfg.f64("eps1")?), "eps1")?;
    let alpha = args.alpha.or(cfg.f64("alpha")?).unwrap_or(0.05);
    let spec = ReductionSpec {
        s: args.s.or(cfg.f64("s")?).unwrap_or(1.0),
        l_radius: args.l_radius.or(cfg.f64("l_radius")?).unwrap_or(1.0),
        p,
        q: args.q.or(cfg.f64("q")?).unwrap_or(p),
        d_rule_constant: args.c.or(cfg.f64("c")?).unwrap_or(1.0),
    };
    let hypothesis = HypothesisPair::new(p, eps0, eps1)?;
    let d = choose_dimension(eps1, &spec)?;

    let (decision, model_name, factor) = match model {
        ModelArg::WhiteNoise => {
            let increments = file
                .increments
                .ok_or_else(|| Error::invalid("white-noise data need an \"increments\" field"))?;
            let m = file.m.unwrap_or(increments.len());
            let sigma = file
                .sigma
                .ok_or_else(|| Error::invalid("white-noise data need a \"sigma\" field"))?;
            let path = FunctionSample::WhiteNoise { m, increments, sigma };
            let decision = transport_white_noise_test(&path, &spec, &hypothesis, alpha)?;
            (decision, "white-noise", white_noise_tolerance_factor(p, d))
        }
        ModelArg::Density => {
            let observations = file
                .observations
                .ok_or_else(|| Error::invalid("density data need an \"observations\" field"))?;
            let sample = FunctionSample::Density { observations };
            let decision =
                transport_density_test(&sample, &ReferenceDensity::Uniform, &spec, &hypothesis, alpha)?;
            (decision, "density", 0.5 * density_tolerance_factor(p, d))
        }
    };

    let report = json!({
        "model": model_name,
        "p": p,
        "eps0": eps0,
        "eps1": eps1,
        "alpha": alpha,
        "s": spec.s,
        "d": d,
        "radius_factor": factor,
        "scaled_eps0": eps0 * factor,
        "scaled_eps1": eps1 * factor,
        "decision": decision,
    });
    write_output(out, &to_pretty(&report)?)
}

fn cmd_physics_demo(args: PhysicsDemoArgs, cfg: &Config, out: Option<&Path>) -> Result<()> {
    let data_path = require(args.data.or(cfg.path("data")?), "data")?;
    let file: DataFile = read_json(&data_path)?;
    let counts = file
        .counts
        .ok_or_else(|| Error::invalid("the physics demo needs a \"counts\" field"))?;
    let reference = file
        .reference
        .ok_or_else(|| Error::invalid("the physics demo needs a \"reference\" field"))?;
    let r = require(args.r.or(cfg.f64("r")?), "r")?;
    let alpha = args.alpha.or(cfg.f64("alpha")?).unwrap_or(0.05);
    let n = args
        .n
        .or(cfg.u64("n")?)
        .or(file.n)
        .unwrap_or_else(|| counts.iter().sum());
    let report = physics_demo(&counts, &reference, n, r, alpha)?;
    write_output(out, &to_pretty(&report)?)
}
