//! Replicated-experiment harness: error curves over iteration checkpoints,
//! log-log slope fits, and the convergence-rate verdict suite that compares
//! fitted exponents against their theoretical targets.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gradest::{
    geometric_delta_grid, variance_probe, Coupling, EstimatorConfig, EstimatorContract, Scheme,
    VarianceProbe,
};
use crate::optimize::{
    checkpoint_grid, kw_run, md_run, predict_sigma, rm_run, Averaging, GainSchedule, MdConfig,
};
use crate::prng::EstimatorStreams;
use crate::problems::{
    by_name, GenMethod, Problem,
};
use crate::sampling::CompositionMode;
use crate::stats::ols_line;

/// One measured point of an error curve.
#[derive(Debug, Clone, Copy)]
pub struct CurvePoint {
    pub n: usize,
    pub value: f64,
    pub stderr: f64,
}

/// Slope fit of `log(value)` on `log(n)`, reported as a positive decay
/// exponent.
#[derive(Debug, Clone, Copy)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub r_squared: f64,
    pub points_used: usize,
}

/// Ordinary least squares on the log-log curve after discarding the leading
/// `burn_in` fraction of the log-n range.
pub fn fit_loglog_slope(points: &[CurvePoint], burn_in: f64) -> Result<SlopeFit> {
    if points.is_empty() {
        return Err(Error::FitError("no points".into()));
    }
    let ln_min = (points[0].n as f64).ln();
    let ln_max = (points[points.len() - 1].n as f64).ln();
    let cutoff = ln_min + burn_in * (ln_max - ln_min);
    let kept: Vec<&CurvePoint> = points
        .iter()
        .filter(|p| (p.n as f64).ln() >= cutoff - 1e-12)
        .collect();
    if kept.len() < 8 {
        return Err(Error::FitError(format!(
            "need at least 8 points after burn-in, have {}",
            kept.len()
        )));
    }
    if kept.iter().any(|p| p.value <= 0.0) {
        return Err(Error::FitError("nonpositive curve values".into()));
    }
    let xs: Vec<f64> = kept.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> = kept.iter().map(|p| p.value.ln()).collect();
    let fit = ols_line(&xs, &ys);
    Ok(SlopeFit {
        slope: -fit.slope,
        stderr: fit.slope_stderr,
        r_squared: fit.r_squared,
        points_used: kept.len(),
    })
}

/// Algorithm driven by the replication harness.
#[derive(Debug, Clone, Copy)]
pub enum AlgoConfig {
    Kw {
        est: EstimatorConfig,
        schedule: GainSchedule,
    },
    Md {
        est: EstimatorConfig,
        schedule: GainSchedule,
        averaging: Averaging,
    },
    Rm {
        schedule: GainSchedule,
        noise_sd: f64,
    },
}

/// Replication harness parameters.
#[derive(Debug, Clone)]
pub struct CurveConfig {
    pub reps: usize,
    pub n_total: usize,
    pub master_seed: u64,
    pub checkpoints: Vec<usize>,
    pub burn_in: f64,
}

impl CurveConfig {
    pub fn new(reps: usize, n_total: usize, master_seed: u64, fit_n_min: usize) -> Self {
        Self {
            reps,
            n_total,
            master_seed,
            checkpoints: checkpoint_grid(fit_n_min, n_total, 20),
            burn_in: 0.25,
        }
    }
}

/// Result of a replicated run: the error curve and its fitted decay slope.
#[derive(Debug, Clone)]
pub struct RateReport {
    pub label: String,
    /// RMSE over replications (parameter recursions) or mean objective gap
    /// of the averaged iterate (mirror descent).
    pub points: Vec<CurvePoint>,
    /// Mirror descent only: gap curve of the raw (unaveraged) iterate.
    pub raw_iterate_points: Option<Vec<CurvePoint>>,
    pub fit: SlopeFit,
    pub raw_iterate_fit: Option<SlopeFit>,
    pub sigma_theory: Option<f64>,
    pub band: Option<(f64, f64)>,
    pub pass: bool,
    pub aborted: usize,
    pub clamp_events: usize,
}

impl RateReport {
    fn judge(&mut self) {
        self.pass = match self.band {
            Some((lo, hi)) => self.fit.slope >= lo && self.fit.slope <= hi,
            None => true,
        };
    }
}

/// Runs `reps` independent trajectories and reduces them, in replication
/// order, to an RMSE (or mean-gap) curve with a fitted slope.
pub fn rmse_curve(
    problem: &Problem,
    algo: &AlgoConfig,
    cfg: &CurveConfig,
    sigma_theory: Option<f64>,
    band: Option<(f64, f64)>,
) -> Result<RateReport> {
    if cfg.reps < 50 {
        return Err(Error::InvalidParameter(
            "rate curves need at least 50 replications".into(),
        ));
    }
    type RepSeries = (Vec<f64>, Option<Vec<f64>>, usize);
    let per_rep: Vec<Result<RepSeries>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let mut streams = EstimatorStreams::new(cfg.master_seed, rep as u64);
            match algo {
                AlgoConfig::Kw { est, schedule } => {
                    let t = kw_run(
                        problem,
                        *est,
                        *schedule,
                        cfg.n_total,
                        &mut streams,
                        &cfg.checkpoints,
                    )?;
                    let sq = t.sq_err.ok_or_else(|| {
                        Error::InvalidParameter("rate curve needs a known minimizer".into())
                    })?;
                    Ok((sq, None, t.clamp_events))
                }
                AlgoConfig::Rm { schedule, noise_sd } => {
                    let t = rm_run(
                        problem,
                        *schedule,
                        *noise_sd,
                        cfg.n_total,
                        &mut streams,
                        &cfg.checkpoints,
                    )?;
                    let sq = t.sq_err.ok_or_else(|| {
                        Error::InvalidParameter("rate curve needs a known minimizer".into())
                    })?;
                    Ok((sq, None, t.clamp_events))
                }
                AlgoConfig::Md {
                    est,
                    schedule,
                    averaging,
                } => {
                    let md = MdConfig::quadratic(problem.theta_domain, *averaging);
                    let t = md_run(
                        problem,
                        *est,
                        &md,
                        *schedule,
                        cfg.n_total,
                        &mut streams,
                        &cfg.checkpoints,
                    )?;
                    Ok((t.gap_avg.unwrap(), t.gap_last, t.clamp_events))
                }
            }
        })
        .collect();

    let mut primary: Vec<Vec<f64>> = Vec::with_capacity(cfg.reps);
    let mut secondary: Vec<Vec<f64>> = Vec::new();
    let mut aborted = 0usize;
    let mut clamp_events = 0usize;
    for r in per_rep {
        match r {
            Ok((p, s, c)) => {
                primary.push(p);
                if let Some(s) = s {
                    secondary.push(s);
                }
                clamp_events += c;
            }
            Err(Error::NonFiniteEstimate { .. }) => aborted += 1,
            Err(e) => return Err(e),
        }
    }
    if primary.is_empty() {
        return Err(Error::InvalidParameter("all replications aborted".into()));
    }

    let is_md = matches!(algo, AlgoConfig::Md { .. });
    let points = reduce_curve(&cfg.checkpoints, &primary, !is_md);
    let raw_iterate_points = if secondary.is_empty() {
        None
    } else {
        Some(reduce_curve(&cfg.checkpoints, &secondary, false))
    };
    let fit = fit_loglog_slope(&points, cfg.burn_in)?;
    let raw_iterate_fit = raw_iterate_points
        .as_ref()
        .and_then(|p| fit_loglog_slope(p, cfg.burn_in).ok());

    let mut report = RateReport {
        label: String::new(),
        points,
        raw_iterate_points,
        fit,
        raw_iterate_fit,
        sigma_theory,
        band,
        pass: false,
        aborted,
        clamp_events,
    };
    // an abort rate above 1% sinks the report regardless of the fit
    report.judge();
    if aborted * 100 > cfg.reps {
        report.pass = false;
    }
    Ok(report)
}

/// Reduces per-replication checkpoint series. `rmse = true` takes the root
/// of the mean (for squared errors) with a delta-method standard error from
/// the fourth moment; otherwise plain means with their standard errors.
fn reduce_curve(checkpoints: &[usize], series: &[Vec<f64>], rmse: bool) -> Vec<CurvePoint> {
    let reps = series.len() as f64;
    checkpoints
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let mut sum = 0.0;
            for s in series {
                sum += s[k];
            }
            let mean = sum / reps;
            let mut var = 0.0;
            for s in series {
                var += (s[k] - mean) * (s[k] - mean);
            }
            var /= (reps - 1.0).max(1.0);
            let se_mean = (var / reps).sqrt();
            if rmse {
                let root = mean.max(0.0).sqrt();
                let se = if root > 0.0 { se_mean / (2.0 * root) } else { 0.0 };
                CurvePoint {
                    n,
                    value: root,
                    stderr: se,
                }
            } else {
                CurvePoint {
                    n,
                    value: mean,
                    stderr: se_mean,
                }
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Verdict suite
// ---------------------------------------------------------------------------

/// Acceptance band around a target decay exponent. Widths follow the
/// declared tolerances of the rate experiments.
pub fn band_for_target(target: f64) -> (f64, f64) {
    if (target - 0.5).abs() < 1e-9 {
        (0.42, 0.58)
    } else if (target - 1.0 / 3.0).abs() < 1e-9 {
        (0.25, 0.41)
    } else if (target - 0.4).abs() < 1e-9 {
        (0.31, 0.49)
    } else if (target - 0.25).abs() < 1e-9 {
        (0.16, 0.34)
    } else {
        (target - 0.09, target + 0.09)
    }
}

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub master_seed: u64,
    pub reps: usize,
    pub n_total: usize,
    pub fit_n_min: usize,
    pub probe_reps: usize,
}

impl SuiteConfig {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            reps: 400,
            n_total: 100_000,
            fit_n_min: 1000,
            probe_reps: 10_000,
        }
    }

    /// Smaller configuration for smoke runs.
    pub fn reduced(master_seed: u64) -> Self {
        Self {
            master_seed,
            reps: 50,
            n_total: 10_000,
            fit_n_min: 100,
            probe_reps: 2_000,
        }
    }
}

/// Static description of one suite cell.
#[derive(Debug, Clone)]
pub struct CellSpec {
    pub cell: &'static str,
    pub problem: &'static str,
    pub scheme: Scheme,
    pub coupling: Coupling,
    pub method: GenMethod,
    pub a: f64,
    pub eta: f64,
    pub gamma: f64,
    pub target: f64,
}

impl CellSpec {
    pub fn contract(&self) -> EstimatorContract {
        EstimatorContract::for_scheme(self.scheme, self.gamma)
    }
}

/// The configured cell matrix: inversion and rejection on the triangular
/// problem, composition on the gap-mixture problem, each under both
/// couplings and both difference schemes where the target rate differs.
pub fn suite_cells() -> Vec<CellSpec> {
    use Coupling::*;
    use GenMethod::*;
    use Scheme::*;
    let comp2 = Composition(CompositionMode::TwoUniform);
    let compd = Composition(CompositionMode::DerivedXi2);
    let c = |cell, problem, scheme, coupling, method, a, eta, gamma, target| CellSpec {
        cell,
        problem,
        scheme,
        coupling,
        method,
        a,
        eta,
        gamma,
        target,
    };
    vec![
        c("inv-crn-sym", "triangular", Symmetric, Crn, Inversion, 6.0, 0.5, 0.0, 0.5),
        c("inv-crn-one", "triangular", OneSided, Crn, Inversion, 6.0, 0.5, 0.0, 0.5),
        c("inv-ind-sym", "triangular", Symmetric, Independent, Inversion, 6.0, 1.0 / 6.0, -2.0, 1.0 / 3.0),
        c("inv-ind-one", "triangular", OneSided, Independent, Inversion, 6.0, 0.25, -2.0, 0.25),
        c("rej-crn-sym", "triangular", Symmetric, Crn, Rejection, 6.0, 0.2, -1.0, 0.4),
        c("rej-crn-one", "triangular", OneSided, Crn, Rejection, 6.0, 1.0 / 3.0, -1.0, 1.0 / 3.0),
        c("rej-ind-sym", "triangular", Symmetric, Independent, Rejection, 6.0, 1.0 / 6.0, -2.0, 1.0 / 3.0),
        c("rej-ind-one", "triangular", OneSided, Independent, Rejection, 6.0, 0.25, -2.0, 0.25),
        c("comp2-crn-sym", "mixture-rate", Symmetric, Crn, comp2, 2.0 / 3.0, 0.2, -1.0, 0.4),
        c("compd-crn-sym", "mixture-rate", Symmetric, Crn, compd, 2.0 / 3.0, 0.2, -1.0, 0.4),
        c("comp2-crn-one", "mixture-rate", OneSided, Crn, comp2, 2.0 / 3.0, 1.0 / 3.0, -1.0, 1.0 / 3.0),
        c("comp2-ind-sym", "mixture-rate", Symmetric, Independent, comp2, 2.0 / 3.0, 1.0 / 6.0, -2.0, 1.0 / 3.0),
        c("comp2-ind-one", "mixture-rate", OneSided, Independent, comp2, 2.0 / 3.0, 0.25, -2.0, 0.25),
    ]
}

/// Result of one suite cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub spec: CellSpec,
    pub report: RateReport,
}

/// Variance-exponent probe row of the suite.
#[derive(Debug, Clone)]
pub struct ProbeRow {
    pub name: &'static str,
    pub scheme: Scheme,
    pub coupling: Coupling,
    pub method: GenMethod,
    pub gamma_hat: f64,
    pub gamma_theory: f64,
    pub band: (f64, f64),
    pub pass: bool,
    pub probe: VarianceProbe,
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub cells: Vec<CellResult>,
    pub probes: Vec<ProbeRow>,
    /// Fitted slopes respect the coupling ordering: CRN symmetric beats
    /// independent symmetric beats independent one-sided, within 0.05.
    pub ordering_ok: bool,
    pub all_pass: bool,
}

/// Runs a cell as configured but with overridable replication counts.
pub fn run_cell(spec: &CellSpec, cfg: &SuiteConfig, seed_salt: u64) -> Result<CellResult> {
    let problem = by_name(spec.problem)
        .ok_or_else(|| Error::InvalidParameter(format!("unknown problem {}", spec.problem)))?;
    let est = EstimatorConfig::new(spec.scheme, spec.coupling, spec.method);
    let schedule = GainSchedule::new(spec.a, 1.0, 1.0, spec.eta)?;
    let algo = AlgoConfig::Kw { est, schedule };
    let curve = CurveConfig::new(
        cfg.reps,
        cfg.n_total,
        cfg.master_seed ^ seed_salt.wrapping_mul(0x9e37_79b9_7f4a_7c15),
        cfg.fit_n_min,
    );
    let contract = spec.contract();
    let (sigma, _) = predict_sigma(1.0, spec.eta, contract.beta, contract.gamma);
    let mut report = rmse_curve(
        &problem,
        &algo,
        &curve,
        Some(sigma),
        Some(band_for_target(spec.target)),
    )?;
    report.label = format!("{} ({})", spec.cell, est.label());
    Ok(CellResult {
        spec: spec.clone(),
        report,
    })
}

/// Static description of one variance-probe row.
#[derive(Debug, Clone)]
pub struct ProbeSpec {
    pub name: &'static str,
    pub problem: &'static str,
    pub scheme: Scheme,
    pub coupling: Coupling,
    pub method: GenMethod,
    pub gamma_theory: f64,
    pub band: (f64, f64),
}

/// The variance-scaling regimes the suite verifies directly. The flat-CDF
/// row stands in for a full rate run: its objective has no interior
/// minimizer, so the slow-variance regime is checked at the exponent level.
pub fn probe_specs() -> Vec<ProbeSpec> {
    let p = |name, problem, coupling, method, gamma_theory, band| ProbeSpec {
        name,
        problem,
        scheme: Scheme::Symmetric,
        coupling,
        method,
        gamma_theory,
        band,
    };
    vec![
        p(
            "probe-ind-sym-inv",
            "triangular",
            Coupling::Independent,
            GenMethod::Inversion,
            -2.0,
            (-2.2, -1.8),
        ),
        p(
            "probe-crn-sym-inv",
            "triangular",
            Coupling::Crn,
            GenMethod::Inversion,
            0.0,
            (-0.15, 0.15),
        ),
        p(
            "probe-crn-sym-rej",
            "triangular",
            Coupling::Crn,
            GenMethod::Rejection,
            -1.0,
            (-1.25, -0.75),
        ),
        p(
            "probe-atomflat-crn-inv",
            "atomflat",
            Coupling::Crn,
            GenMethod::Inversion,
            -1.0,
            (-1.25, -0.75),
        ),
    ]
}

/// Runs one variance-exponent probe row at `theta = 0.5` over the
/// `2^-3..2^-10` grid.
pub fn run_probe_row(spec: &ProbeSpec, cfg: &SuiteConfig, seed_salt: u64) -> Result<ProbeRow> {
    let problem = by_name(spec.problem)
        .ok_or_else(|| Error::InvalidParameter(format!("unknown problem {}", spec.problem)))?;
    let est = EstimatorConfig::new(spec.scheme, spec.coupling, spec.method);
    let grid = geometric_delta_grid(2.0, 3, 10);
    let probe = variance_probe(
        &problem,
        0.5,
        &grid,
        cfg.probe_reps,
        est,
        cfg.master_seed ^ seed_salt.wrapping_mul(0xc2b2_ae35),
    )?;
    let gamma_hat = probe.gamma_hat();
    Ok(ProbeRow {
        name: spec.name,
        scheme: spec.scheme,
        coupling: spec.coupling,
        method: spec.method,
        gamma_hat,
        gamma_theory: spec.gamma_theory,
        band: spec.band,
        pass: gamma_hat >= spec.band.0 && gamma_hat <= spec.band.1,
        probe,
    })
}

/// Executes the full cell matrix plus the variance-probe rows.
pub fn table1_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let mut cells = Vec::new();
    for (i, spec) in suite_cells().iter().enumerate() {
        cells.push(run_cell(spec, cfg, i as u64 + 1)?);
    }
    let mut probes = Vec::new();
    for (i, spec) in probe_specs().iter().enumerate() {
        probes.push(run_probe_row(spec, cfg, 100 + i as u64)?);
    }

    let slope_of = |cell: &str| -> f64 {
        cells
            .iter()
            .find(|c| c.spec.cell == cell)
            .map(|c| c.report.fit.slope)
            .unwrap_or(f64::NAN)
    };
    let crn_sym = slope_of("inv-crn-sym");
    let ind_sym = slope_of("inv-ind-sym");
    let ind_one = slope_of("inv-ind-one");
    let ordering_ok = crn_sym >= ind_sym - 0.05 && ind_sym >= ind_one - 0.05;

    let sanity_ok = cells.iter().all(|c| {
        let contract = c.spec.contract();
        let (sigma, converges) = predict_sigma(1.0, c.spec.eta, contract.beta, contract.gamma);
        !converges || (sigma <= 0.0) || c.report.fit.slope > 0.0
    });

    let all_pass = cells.iter().all(|c| c.report.pass)
        && probes.iter().all(|p| p.pass)
        && ordering_ok
        && sanity_ok;
    Ok(SuiteReport {
        cells,
        probes,
        ordering_ok,
        all_pass,
    })
}

/// 17-significant-digit float formatting for replayable CSV output.
pub fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}

impl SuiteReport {
    /// CSV with one row per cell and per probe row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "cell,scheme,coupling,method,sigma_hat,sigma_theory,band_lo,band_hi,pass\n",
        );
        for c in &self.cells {
            let (lo, hi) = c.report.band.unwrap_or((f64::NAN, f64::NAN));
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                c.spec.cell,
                c.spec.scheme.label(),
                c.spec.coupling.label(),
                c.spec.method.label(),
                fmt_g17(c.report.fit.slope),
                fmt_g17(c.report.sigma_theory.unwrap_or(f64::NAN)),
                fmt_g17(lo),
                fmt_g17(hi),
                c.report.pass,
            ));
        }
        for p in &self.probes {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                p.name,
                p.scheme.label(),
                p.coupling.label(),
                p.method.label(),
                fmt_g17(p.gamma_hat),
                fmt_g17(p.gamma_theory),
                fmt_g17(p.band.0),
                fmt_g17(p.band.1),
                p.pass,
            ));
        }
        out
    }

    /// Plain-text verdict table.
    pub fn verdict_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<22} {:>9} {:>9} {:>15} {:>6}\n",
            "cell", "fitted", "target", "band", "pass"
        ));
        for c in &self.cells {
            let (lo, hi) = c.report.band.unwrap_or((f64::NAN, f64::NAN));
            out.push_str(&format!(
                "{:<22} {:>9.4} {:>9.4} [{:>5.2},{:>5.2}] {:>6}\n",
                c.spec.cell,
                c.report.fit.slope,
                c.report.sigma_theory.unwrap_or(f64::NAN),
                lo,
                hi,
                if c.report.pass { "pass" } else { "FAIL" }
            ));
        }
        for p in &self.probes {
            out.push_str(&format!(
                "{:<22} {:>9.4} {:>9.4} [{:>5.2},{:>5.2}] {:>6}\n",
                p.name,
                p.gamma_hat,
                p.gamma_theory,
                p.band.0,
                p.band.1,
                if p.pass { "pass" } else { "FAIL" }
            ));
        }
        out.push_str(&format!(
            "coupling ordering: {}\noverall: {}\n",
            if self.ordering_ok { "pass" } else { "FAIL" },
            if self.all_pass { "pass" } else { "FAIL" }
        ));
        out
    }
}

/// CSV for a rate curve: `n,rmse,stderr`.
pub fn curve_csv(report: &RateReport) -> String {
    let mut out = String::from("n,rmse,stderr\n");
    for p in &report.points {
        out.push_str(&format!(
            "{},{},{}\n",
            p.n,
            fmt_g17(p.value),
            fmt_g17(p.stderr)
        ));
    }
    out
}

/// CSV for a variance probe: `delta,var_h,stderr`.
pub fn variance_csv(probe: &VarianceProbe) -> String {
    let mut out = String::from("delta,var_h,stderr\n");
    for s in &probe.stats {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt_g17(s.delta),
            fmt_g17(s.variance),
            fmt_g17(s.variance_stderr)
        ));
    }
    out
}
