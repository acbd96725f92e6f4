//! Command-line front end: configure experiments, run them, and emit CSV
//! plus plain-text verdict reports.
//!
//! Every numeric option can also come from a `--config FILE` in
//! line-oriented `key=value` form (one pair per line, `#` comments);
//! explicit command-line flags override file values, and `SA_CRN_SEED`
//! serves as the seed fallback of last resort.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use salab_core::gradest::{
    bias_probe, geometric_delta_grid, variance_probe, Coupling, EstimatorConfig, Scheme,
};
use salab_core::optimize::{
    best_rate_kw, kw_run, md_run, predict_sigma, Averaging, GainSchedule, MdConfig,
};
use salab_core::prng::EstimatorStreams;
use salab_core::problems::{by_name, GenMethod, QueueModel, ServiceModel};
use salab_core::rates::{
    band_for_target, curve_csv, fmt_g17, rmse_curve, table1_suite, variance_csv, AlgoConfig,
    CurveConfig, SuiteConfig,
};
use salab_core::sampling::CompositionMode;

const DEFAULT_SEED: u64 = 0x5EED_CAB5;

#[derive(Parser)]
#[command(
    name = "salab",
    about = "Stochastic-approximation laboratory: KW/MD runs, estimator probes, rate suites",
    version
)]
struct Cli {
    /// Key=value configuration file; explicit flags override its entries.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores). Output never depends on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the RMSE rate exponent sigma = min(alpha+gamma*eta, 2*beta*eta)/2.
    Predict(PredictArgs),
    /// Variance-exponent probe of a derivative estimator over a delta grid.
    Variance(ProbeArgs),
    /// Bias-exponent probe of a derivative estimator over a delta grid.
    Bias(ProbeArgs),
    /// Single optimization run with checkpoint printout.
    Optimize(OptimizeArgs),
    /// Replicated RMSE curve with a fitted decay slope.
    Rates(RatesArgs),
    /// Full convergence-rate verdict suite (all estimator cells + probes).
    Table1(Table1Args),
    /// Single-server FIFO queue utilities.
    Queue(QueueArgs),
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<f64>,
    /// Also print the best attainable rate and schedule for (beta, gamma).
    #[arg(long)]
    best: bool,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    theta: Option<f64>,
    /// Difference scheme: sym | one
    #[arg(long)]
    scheme: Option<String>,
    /// Coupling: crn | ind
    #[arg(long)]
    coupling: Option<String>,
    /// Generation method: inv | rej | comp2 | compd
    #[arg(long)]
    method: Option<String>,
    /// Replications per grid delta.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Grid is 2^-k for k in k_lo..=k_hi.
    #[arg(long)]
    k_lo: Option<i32>,
    #[arg(long)]
    k_hi: Option<i32>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long)]
    problem: Option<String>,
    /// Algorithm: kw | md
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    coupling: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Mirror-descent averaging: uniform | weighted
    #[arg(long)]
    averaging: Option<String>,
    #[arg(long)]
    checkpoints_per_decade: Option<usize>,
}

#[derive(Args)]
struct RatesArgs {
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    coupling: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    checkpoints_per_decade: Option<usize>,
    /// Estimator contract exponents used for the theoretical target.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<f64>,
}

#[derive(Args)]
struct Table1Args {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run the reduced smoke configuration instead of the full one.
    #[arg(long)]
    smoke: bool,
}

#[derive(Args)]
struct QueueArgs {
    #[arg(long)]
    theta: Option<f64>,
    /// Customers per replication.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Service law: mix | exp (exp uses theta as the mean service time).
    #[arg(long)]
    service: Option<String>,
    /// Compare CRN against independent difference variance at this delta.
    #[arg(long)]
    compare_crn: Option<f64>,
}

/// Values loaded from `--config`.
struct FileConfig(HashMap<String, String>);

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self, String> {
        let mut map = HashMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path)
                .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| format!("config line {} is not key=value: {raw}", lineno + 1))?;
                map.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(Self(map))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, String> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| format!("config value for {key} is invalid: {raw}")),
        }
    }
}

macro_rules! resolve {
    ($flag:expr, $cfg:expr, $key:literal, $default:expr) => {
        match $flag {
            Some(v) => v,
            None => $cfg.get($key)?.unwrap_or($default),
        }
    };
}

fn resolve_seed(flag: Option<u64>, cfg: &FileConfig) -> Result<u64, String> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(s) = cfg.get::<u64>("seed")? {
        return Ok(s);
    }
    match std::env::var("SA_CRN_SEED") {
        Ok(raw) => raw
            .parse::<u64>()
            .map_err(|_| format!("SA_CRN_SEED is not an integer: {raw}")),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    match s {
        "sym" => Ok(Scheme::Symmetric),
        "one" => Ok(Scheme::OneSided),
        _ => Err(format!("unknown scheme {s:?} (expected sym | one)")),
    }
}

fn parse_coupling(s: &str) -> Result<Coupling, String> {
    match s {
        "crn" => Ok(Coupling::Crn),
        "ind" => Ok(Coupling::Independent),
        _ => Err(format!("unknown coupling {s:?} (expected crn | ind)")),
    }
}

fn parse_method(s: &str) -> Result<GenMethod, String> {
    match s {
        "inv" => Ok(GenMethod::Inversion),
        "rej" => Ok(GenMethod::Rejection),
        "comp2" => Ok(GenMethod::Composition(CompositionMode::TwoUniform)),
        "compd" => Ok(GenMethod::Composition(CompositionMode::DerivedXi2)),
        _ => Err(format!(
            "unknown method {s:?} (expected inv | rej | comp2 | compd)"
        )),
    }
}

fn write_output(path: &Path, contents: &str) -> Result<(), String> {
    fs::write(path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .is_err()
        {
            eprintln!("warning: thread pool already initialized");
        }
    }
    let cfg = match FileConfig::load(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let outcome = match cli.command {
        Command::Predict(args) => cmd_predict(args, &cfg),
        Command::Variance(args) => cmd_variance(args, &cfg),
        Command::Bias(args) => cmd_bias(args, &cfg),
        Command::Optimize(args) => cmd_optimize(args, &cfg),
        Command::Rates(args) => cmd_rates(args, &cfg),
        Command::Table1(args) => cmd_table1(args, &cfg),
        Command::Queue(args) => cmd_queue(args, &cfg),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

/// Argument/validation failure (exit 2, nothing written) vs runtime failure
/// (exit 1).
enum CliError {
    Usage(String),
    Run(String),
}
use CliError::{Run, Usage};

impl From<String> for CliError {
    fn from(e: String) -> Self {
        Usage(e)
    }
}

impl From<salab_core::Error> for CliError {
    fn from(e: salab_core::Error) -> Self {
        Run(e.to_string())
    }
}

type CmdResult = Result<bool, CliError>;

fn cmd_predict(args: PredictArgs, cfg: &FileConfig) -> CmdResult {
    let alpha = resolve!(args.alpha, cfg, "alpha", 1.0);
    let eta = resolve!(args.eta, cfg, "eta", 0.5);
    let beta = resolve!(args.beta, cfg, "beta", 2.0);
    let gamma = resolve!(args.gamma, cfg, "gamma", 0.0);
    let positive = |x: f64| x.is_finite() && x > 0.0;
    if !(positive(alpha) && alpha <= 1.0) || !positive(eta) || !positive(beta) {
        return Err(Usage(format!(
            "need 0 < alpha <= 1, eta > 0, beta > 0 (got alpha={alpha}, eta={eta}, beta={beta})"
        )));
    }
    let (sigma, converges) = predict_sigma(alpha, eta, beta, gamma);
    println!("sigma = {sigma}");
    println!("converges = {converges}");
    if args.best {
        if gamma > 0.0 {
            return Err(Usage("--best needs gamma <= 0".into()));
        }
        let (s, a, e) = best_rate_kw(beta, gamma);
        println!("best: sigma* = {s} at alpha = {a}, eta = {e}");
    }
    Ok(true)
}

struct EstimatorArgs {
    problem: salab_core::problems::Problem,
    config: EstimatorConfig,
}

fn resolve_estimator(
    problem: Option<String>,
    scheme: Option<String>,
    coupling: Option<String>,
    method: Option<String>,
    cfg: &FileConfig,
    default_problem: Option<&str>,
) -> Result<EstimatorArgs, CliError> {
    let name = match problem {
        Some(p) => p,
        None => match cfg.get::<String>("problem")? {
            Some(p) => p,
            None => default_problem
                .ok_or_else(|| Usage("--problem is required".into()))?
                .to_string(),
        },
    };
    let problem =
        by_name(&name).ok_or_else(|| Usage(format!("unknown problem {name:?}; known: {:?}", salab_core::problems::CATALOG)))?;
    let scheme = parse_scheme(&resolve!(scheme, cfg, "scheme", "sym".to_string()))?;
    let coupling = parse_coupling(&resolve!(coupling, cfg, "coupling", "crn".to_string()))?;
    let method = parse_method(&resolve!(method, cfg, "method", "inv".to_string()))?;
    let config = EstimatorConfig::new(scheme, coupling, method);
    config
        .validate_for(&problem)
        .map_err(|e| Usage(e.to_string()))?;
    Ok(EstimatorArgs { problem, config })
}

fn cmd_variance(args: ProbeArgs, cfg: &FileConfig) -> CmdResult {
    let est = resolve_estimator(
        args.problem,
        args.scheme,
        args.coupling,
        args.method,
        cfg,
        Some("triangular"),
    )?;
    let theta = resolve!(args.theta, cfg, "theta", 0.5);
    let reps = resolve!(args.reps, cfg, "reps", 10_000);
    let k_lo = resolve!(args.k_lo, cfg, "k_lo", 3);
    let k_hi = resolve!(args.k_hi, cfg, "k_hi", 10);
    let seed = resolve_seed(args.seed, cfg)?;
    if k_hi < k_lo {
        return Err(Usage("k_hi must be >= k_lo".into()));
    }
    let grid = geometric_delta_grid(2.0, k_lo, k_hi);
    let probe = variance_probe(&est.problem, theta, &grid, reps, est.config, seed)?;
    println!(
        "variance probe: {} on {} at theta={theta}",
        est.config.label(),
        est.problem.name
    );
    println!("{:>12} {:>16} {:>12}", "delta", "var_h", "stderr");
    for s in &probe.stats {
        println!("{:>12.6} {:>16.8e} {:>12.3e}", s.delta, s.variance, s.variance_stderr);
    }
    println!(
        "gamma_hat = {:.4} (stderr {:.4}, R^2 {:.4})",
        probe.gamma_hat(),
        probe.fit.slope_stderr,
        probe.fit.r_squared
    );
    if let Some(out) = args.out {
        write_output(&out, &variance_csv(&probe)).map_err(Run)?;
        println!("wrote {}", out.display());
    }
    Ok(true)
}

fn cmd_bias(args: ProbeArgs, cfg: &FileConfig) -> CmdResult {
    let est = resolve_estimator(
        args.problem,
        args.scheme,
        args.coupling,
        args.method,
        cfg,
        Some("normal4"),
    )?;
    let theta = resolve!(args.theta, cfg, "theta", 1.0);
    let reps = resolve!(args.reps, cfg, "reps", 200_000);
    let k_lo = resolve!(args.k_lo, cfg, "k_lo", 0);
    let k_hi = resolve!(args.k_hi, cfg, "k_hi", 4);
    let seed = resolve_seed(args.seed, cfg)?;
    if k_hi < k_lo {
        return Err(Usage("k_hi must be >= k_lo".into()));
    }
    let grid = geometric_delta_grid(2.0, k_lo, k_hi);
    let probe = bias_probe(&est.problem, theta, &grid, reps, est.config, seed)?;
    println!(
        "bias probe: {} on {} at theta={theta}",
        est.config.label(),
        est.problem.name
    );
    println!("{:>12} {:>16} {:>12}", "delta", "|bias|", "stderr");
    let mut csv = String::from("delta,bias,stderr\n");
    for (s, b) in probe.stats.iter().zip(&probe.bias) {
        println!("{:>12.6} {:>16.8e} {:>12.3e}", s.delta, b, s.mean_stderr);
        csv.push_str(&format!(
            "{},{},{}\n",
            fmt_g17(s.delta),
            fmt_g17(*b),
            fmt_g17(s.mean_stderr)
        ));
    }
    println!(
        "beta_hat = {:.4} (stderr {:.4}, R^2 {:.4}){}",
        probe.fit.slope,
        probe.fit.slope_stderr,
        probe.fit.r_squared,
        if probe.below_noise_floor {
            " [bias below noise floor]"
        } else {
            ""
        }
    );
    if let Some(out) = args.out {
        write_output(&out, &csv).map_err(Run)?;
        println!("wrote {}", out.display());
    }
    Ok(true)
}

fn cmd_optimize(args: OptimizeArgs, cfg: &FileConfig) -> CmdResult {
    let algo = resolve!(args.algo, cfg, "algo", "kw".to_string());
    let est = resolve_estimator(args.problem, args.scheme, args.coupling, args.method, cfg, None)?;
    let a = resolve!(args.a, cfg, "a", 1.0);
    let alpha = resolve!(args.alpha, cfg, "alpha", 1.0);
    let d = resolve!(args.d, cfg, "d", 1.0);
    let eta = resolve!(args.eta, cfg, "eta", 0.25);
    let n = resolve!(args.n, cfg, "n", 100_000);
    let per_decade = resolve!(args.checkpoints_per_decade, cfg, "checkpoints-per-decade", 20);
    let seed = resolve_seed(args.seed, cfg)?;
    let schedule = GainSchedule::new(a, alpha, d, eta).map_err(|e| Usage(e.to_string()))?;
    let checkpoints = salab_core::optimize::checkpoint_grid(10.min(n), n, per_decade);
    let mut streams = EstimatorStreams::new(seed, 0);
    let trajectory = match algo.as_str() {
        "kw" => kw_run(&est.problem, est.config, schedule, n, &mut streams, &checkpoints)?,
        "md" => {
            let averaging = match resolve!(args.averaging, cfg, "averaging", "uniform".to_string())
                .as_str()
            {
                "uniform" => Averaging::Uniform,
                "weighted" => Averaging::Weighted,
                other => return Err(Usage(format!("unknown averaging {other:?}"))),
            };
            let md = MdConfig::quadratic(est.problem.theta_domain, averaging);
            md_run(
                &est.problem,
                est.config,
                &md,
                schedule,
                n,
                &mut streams,
                &checkpoints,
            )?
        }
        other => return Err(Usage(format!("unknown algo {other:?} (expected kw | md)"))),
    };
    println!(
        "{} run of {} with {} (a={a}, alpha={alpha}, d={d}, eta={eta}, seed={seed})",
        algo,
        est.problem.name,
        est.config.label()
    );
    println!("{:>10} {:>14} {:>14}", "n", "theta", "error");
    for (i, &ck) in trajectory.checkpoints.iter().enumerate() {
        let err = est
            .problem
            .theta_star
            .map(|s| format!("{:>14.6e}", (trajectory.theta[i] - s).abs()))
            .unwrap_or_else(|| format!("{:>14}", "-"));
        println!("{:>10} {:>14.8} {}", ck, trajectory.theta[i], err);
    }
    println!("clamp events: {}", trajectory.clamp_events);
    Ok(true)
}

fn cmd_rates(args: RatesArgs, cfg: &FileConfig) -> CmdResult {
    let est = resolve_estimator(args.problem, args.scheme, args.coupling, args.method, cfg, None)?;
    let a = resolve!(args.a, cfg, "a", 6.0);
    let alpha = resolve!(args.alpha, cfg, "alpha", 1.0);
    let d = resolve!(args.d, cfg, "d", 1.0);
    let eta = resolve!(args.eta, cfg, "eta", 0.5);
    let n = resolve!(args.n, cfg, "n", 100_000);
    let reps = resolve!(args.reps, cfg, "reps", 400);
    let beta = resolve!(args.beta, cfg, "beta", 2.0);
    let gamma = resolve!(args.gamma, cfg, "gamma", 0.0);
    let per_decade = resolve!(args.checkpoints_per_decade, cfg, "checkpoints-per-decade", 20);
    let seed = resolve_seed(args.seed, cfg)?;
    let schedule = GainSchedule::new(a, alpha, d, eta).map_err(|e| Usage(e.to_string()))?;
    if est.problem.theta_star.is_none() {
        return Err(Usage(format!(
            "problem {} has no known minimizer; rate curves need one",
            est.problem.name
        )));
    }
    let (sigma, _) = predict_sigma(alpha, eta, beta, gamma);
    let mut curve_cfg = CurveConfig::new(reps, n, seed, (n / 100).max(10));
    curve_cfg.checkpoints = salab_core::optimize::checkpoint_grid((n / 100).max(10), n, per_decade);
    let report = rmse_curve(
        &est.problem,
        &AlgoConfig::Kw {
            est: est.config,
            schedule,
        },
        &curve_cfg,
        Some(sigma),
        Some(band_for_target(sigma)),
    )?;
    println!(
        "rate curve: {} on {} (reps={reps}, n={n}, seed={seed})",
        est.config.label(),
        est.problem.name
    );
    println!(
        "fitted slope {:.4} (stderr {:.4}, R^2 {:.3}); target {:.4}; band [{:.2}, {:.2}]; {}",
        report.fit.slope,
        report.fit.stderr,
        report.fit.r_squared,
        sigma,
        report.band.unwrap().0,
        report.band.unwrap().1,
        if report.pass { "pass" } else { "FAIL" }
    );
    if let Some(out) = args.out {
        write_output(&out, &curve_csv(&report)).map_err(Run)?;
        println!("wrote {}", out.display());
    }
    Ok(report.pass)
}

fn cmd_table1(args: Table1Args, cfg: &FileConfig) -> CmdResult {
    let seed = resolve_seed(args.seed, cfg)?;
    let mut suite_cfg = if args.smoke {
        SuiteConfig::reduced(seed)
    } else {
        SuiteConfig::new(seed)
    };
    if let Some(reps) = args.reps.or(cfg.get("reps")?) {
        suite_cfg.reps = reps;
    }
    if let Some(n) = args.n.or(cfg.get("n")?) {
        suite_cfg.n_total = n;
        suite_cfg.fit_n_min = (n / 100).max(10);
    }
    if suite_cfg.reps < 50 {
        return Err(Usage("table1 needs at least 50 replications".into()));
    }
    let report = table1_suite(&suite_cfg)?;
    print!("{}", report.verdict_table());
    if let Some(out) = args.out {
        write_output(&out, &report.to_csv()).map_err(Run)?;
        println!("wrote {}", out.display());
    }
    Ok(report.all_pass)
}

fn cmd_queue(args: QueueArgs, cfg: &FileConfig) -> CmdResult {
    let theta = resolve!(args.theta, cfg, "theta", 0.6);
    let n = resolve!(args.n, cfg, "n", 100);
    let reps = resolve!(args.reps, cfg, "reps", 10_000);
    let lambda = resolve!(args.lambda, cfg, "lambda", 0.5);
    let service_kind = resolve!(args.service, cfg, "service", "mix".to_string());
    let seed = resolve_seed(args.seed, cfg)?;
    let service = match service_kind.as_str() {
        "mix" => ServiceModel::ExpMixture {
            fast_mean: 1.0,
            slow_mean: 2.4,
        },
        "exp" => ServiceModel::ExponentialMeanTheta,
        other => return Err(Usage(format!("unknown service {other:?} (expected mix | exp)"))),
    };
    if n == 0 || reps == 0 {
        return Err(Usage("n and reps must be positive".into()));
    }
    let model = QueueModel {
        arrival_rate: lambda,
        service,
        customers: n,
    };
    let rho = model.utilization(theta);
    if rho >= 1.0 {
        return Err(Usage(format!("utilization {rho:.3} >= 1 at theta={theta}")));
    }

    use rayon::prelude::*;
    let vals: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut s = salab_core::prng::derive_stream(salab_core::prng::StreamKey::new(
                seed, rep as u64, 0,
            ));
            salab_core::problems::lindley_avg_system_time(&model, theta, &mut s)
        })
        .collect();
    let mean = vals.iter().sum::<f64>() / reps as f64;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (reps as f64 - 1.0);
    println!(
        "avg system time over first {n} customers at theta={theta}: {mean:.6} (stderr {:.2e}, utilization {rho:.3})",
        (var / reps as f64).sqrt()
    );

    if let Some(delta) = args.compare_crn {
        if delta.is_nan() || delta <= 0.0 {
            return Err(Usage("--compare-crn delta must be positive".into()));
        }
        let h_crn_and_ind: Vec<(f64, f64)> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let mut streams = EstimatorStreams::new(seed ^ 0xABCD, rep as u64);
                let xi = model.draw_uniforms(&mut streams.crn);
                let crn = (model.avg_system_time(theta + delta, &xi)
                    - model.avg_system_time(theta - delta, &xi))
                    / (2.0 * delta);
                let xi_hi = model.draw_uniforms(&mut streams.plus);
                let xi_lo = model.draw_uniforms(&mut streams.minus);
                let ind = (model.avg_system_time(theta + delta, &xi_hi)
                    - model.avg_system_time(theta - delta, &xi_lo))
                    / (2.0 * delta);
                (crn, ind)
            })
            .collect();
        let variance = |xs: &[f64]| {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
        };
        let crn: Vec<f64> = h_crn_and_ind.iter().map(|p| p.0).collect();
        let ind: Vec<f64> = h_crn_and_ind.iter().map(|p| p.1).collect();
        let (v_crn, v_ind) = (variance(&crn), variance(&ind));
        println!(
            "difference-quotient variance at delta={delta}: crn {v_crn:.4}, independent {v_ind:.4}, reduction x{:.1}",
            v_ind / v_crn
        );
        return Ok(v_crn <= v_ind);
    }
    Ok(true)
}
