//! Finite-difference derivative estimators and the probes that measure
//! their bias and variance exponents.
//!
//! An estimator is a triple (difference scheme, coupling, generation
//! method). Symmetric differencing evaluates at `theta +/- delta` and
//! divides by `2 delta`; one-sided evaluates at `theta + delta` and `theta`
//! and divides by `delta`. CRN coupling reuses one randomness source for
//! both evaluations; independent coupling gives each its own substream.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::prng::EstimatorStreams;
use crate::problems::{GenMethod, Problem};
use crate::stats::{mean_var, ols_line, variance_stderr, LineFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Symmetric,
    OneSided,
}

impl Scheme {
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::Symmetric => "sym",
            Scheme::OneSided => "one",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Coupling {
    Crn,
    Independent,
}

impl Coupling {
    pub fn label(&self) -> &'static str {
        match self {
            Coupling::Crn => "crn",
            Coupling::Independent => "ind",
        }
    }
}

/// Full estimator configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EstimatorConfig {
    pub scheme: Scheme,
    pub coupling: Coupling,
    pub method: GenMethod,
}

impl EstimatorConfig {
    pub fn new(scheme: Scheme, coupling: Coupling, method: GenMethod) -> Self {
        Self {
            scheme,
            coupling,
            method,
        }
    }

    /// Rejects combinations the problem cannot serve.
    pub fn validate_for(&self, problem: &Problem) -> Result<()> {
        if problem.supports(self.method) {
            Ok(())
        } else {
            Err(Error::UnsupportedFamily(
                "problem does not support the requested generation method",
            ))
        }
    }

    pub fn label(&self) -> String {
        format!(
            "{}/{}/{}",
            self.scheme.label(),
            self.coupling.label(),
            self.method.label()
        )
    }
}

/// Declared bias/variance exponents of an estimator: the mean error shrinks
/// like `delta^beta` and the variance grows like `delta^gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorContract {
    pub beta: f64,
    pub gamma: f64,
    pub bias_scale: f64,
    pub variance_scale: f64,
}

impl EstimatorContract {
    /// Contract for a difference scheme in a given variance regime. The
    /// bias exponent follows the scheme (2 symmetric, 1 one-sided); the
    /// variance exponent is the coupling/generation regime's.
    pub fn for_scheme(scheme: Scheme, gamma: f64) -> Self {
        debug_assert!(
            gamma == 0.0 || gamma == -1.0 || gamma == -2.0,
            "implemented regimes have gamma in {{0, -1, -2}}"
        );
        Self {
            beta: match scheme {
                Scheme::Symmetric => 2.0,
                Scheme::OneSided => 1.0,
            },
            gamma,
            bias_scale: 0.0,
            variance_scale: 0.0,
        }
    }
}

/// One finite-difference derivative estimate at `(theta, delta)`.
pub fn estimate_h(
    problem: &Problem,
    theta: f64,
    delta: f64,
    config: EstimatorConfig,
    streams: &mut EstimatorStreams,
) -> Result<f64> {
    if delta.is_nan() || delta <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "delta must be positive, got {delta}"
        )));
    }
    config.validate_for(problem)?;
    let (lo, hi, denom) = match config.scheme {
        Scheme::Symmetric => (theta - delta, theta + delta, 2.0 * delta),
        Scheme::OneSided => (theta, theta + delta, delta),
    };
    let (m_lo, m_hi) = match config.coupling {
        Coupling::Crn => problem.measure_pair_crn(lo, hi, config.method, streams)?,
        Coupling::Independent => {
            let hi_val = problem.measure_at(hi, config.method, &mut streams.plus)?;
            let lo_val = problem.measure_at(lo, config.method, &mut streams.minus)?;
            (lo_val, hi_val)
        }
    };
    Ok((m_hi - m_lo) / denom)
}

/// Geometric grid `base^(-k)` for `k` in `k_lo..=k_hi`, e.g. `2^-3 .. 2^-10`.
pub fn geometric_delta_grid(base: f64, k_lo: i32, k_hi: i32) -> Vec<f64> {
    (k_lo..=k_hi).map(|k| base.powi(-k)).collect()
}

/// Default probe grid.
pub fn default_delta_grid() -> Vec<f64> {
    geometric_delta_grid(2.0, 3, 10)
}

/// Per-delta summary of h draws.
#[derive(Debug, Clone)]
pub struct DeltaStat {
    pub delta: f64,
    pub mean: f64,
    pub mean_stderr: f64,
    pub variance: f64,
    pub variance_stderr: f64,
}

fn sample_h_stats(
    problem: &Problem,
    theta: f64,
    delta: f64,
    config: EstimatorConfig,
    reps: usize,
    master_seed: u64,
) -> Result<DeltaStat> {
    let chunk = 4096usize;
    let chunks = reps.div_ceil(chunk);
    let draws: Vec<Vec<Result<f64>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * chunk;
            let hi = ((c + 1) * chunk).min(reps);
            let mut out = Vec::with_capacity(hi - lo);
            for rep in lo..hi {
                let mut streams = EstimatorStreams::new(master_seed, rep as u64);
                out.push(estimate_h(problem, theta, delta, config, &mut streams));
            }
            out
        })
        .collect();
    let mut flat = Vec::with_capacity(reps);
    for v in draws {
        for r in v {
            flat.push(r?);
        }
    }
    let (mean, var) = mean_var(&flat);
    Ok(DeltaStat {
        delta,
        mean,
        mean_stderr: (var / flat.len() as f64).sqrt(),
        variance: var,
        variance_stderr: variance_stderr(&flat),
    })
}

/// Result of a bias-exponent probe.
#[derive(Debug, Clone)]
pub struct BiasProbe {
    pub config: EstimatorConfig,
    pub theta: f64,
    pub stats: Vec<DeltaStat>,
    /// abs bias per grid point, `|mean h - J'(theta)|`.
    pub bias: Vec<f64>,
    pub fit: LineFit,
    /// Set when no grid point resolves the bias above 3 standard errors.
    pub below_noise_floor: bool,
}

/// Measures `E[h] - J'(theta)` across the delta grid and fits the slope of
/// `log |bias|` against `log delta`. Needs closed-form `J'`.
pub fn bias_probe(
    problem: &Problem,
    theta: f64,
    delta_grid: &[f64],
    reps_per_delta: usize,
    config: EstimatorConfig,
    master_seed: u64,
) -> Result<BiasProbe> {
    let j_prime = problem
        .objective_prime(theta)
        .ok_or_else(|| Error::InvalidParameter("bias probe needs closed-form J'".into()))?;
    let mut stats = Vec::with_capacity(delta_grid.len());
    for (i, &delta) in delta_grid.iter().enumerate() {
        stats.push(sample_h_stats(
            problem,
            theta,
            delta,
            config,
            reps_per_delta,
            master_seed.wrapping_add(i as u64).wrapping_mul(0x9e37_79b9),
        )?);
    }
    let bias: Vec<f64> = stats.iter().map(|s| (s.mean - j_prime).abs()).collect();
    let below_noise_floor = stats
        .iter()
        .zip(&bias)
        .all(|(s, b)| *b < 3.0 * s.mean_stderr);
    let xs: Vec<f64> = stats.iter().map(|s| s.delta.ln()).collect();
    let ys: Vec<f64> = bias.iter().map(|b| b.max(1e-300).ln()).collect();
    let fit = ols_line(&xs, &ys);
    Ok(BiasProbe {
        config,
        theta,
        stats,
        bias,
        fit,
        below_noise_floor,
    })
}

/// Result of a variance-exponent probe. `fit.slope` estimates gamma.
#[derive(Debug, Clone)]
pub struct VarianceProbe {
    pub config: EstimatorConfig,
    pub theta: f64,
    pub stats: Vec<DeltaStat>,
    pub fit: LineFit,
}

impl VarianceProbe {
    pub fn gamma_hat(&self) -> f64 {
        self.fit.slope
    }
}

/// Sample variance of h per grid delta and the least-squares slope of
/// `log Var` on `log delta`.
pub fn variance_probe(
    problem: &Problem,
    theta: f64,
    delta_grid: &[f64],
    reps_per_delta: usize,
    config: EstimatorConfig,
    master_seed: u64,
) -> Result<VarianceProbe> {
    if reps_per_delta < 1000 {
        return Err(Error::InvalidParameter(
            "variance probe needs at least 1000 reps per delta".into(),
        ));
    }
    let mut stats = Vec::with_capacity(delta_grid.len());
    for (i, &delta) in delta_grid.iter().enumerate() {
        stats.push(sample_h_stats(
            problem,
            theta,
            delta,
            config,
            reps_per_delta,
            master_seed.wrapping_add(i as u64).wrapping_mul(0x85eb_ca6b),
        )?);
    }
    let xs: Vec<f64> = stats.iter().map(|s| s.delta.ln()).collect();
    let ys: Vec<f64> = stats.iter().map(|s| s.variance.max(1e-300).ln()).collect();
    let fit = ols_line(&xs, &ys);
    Ok(VarianceProbe {
        config,
        theta,
        stats,
        fit,
    })
}

/// Mean and standard error of h over `reps` replications.
pub fn mean_h(
    problem: &Problem,
    theta: f64,
    delta: f64,
    config: EstimatorConfig,
    reps: usize,
    master_seed: u64,
) -> Result<(f64, f64)> {
    let s = sample_h_stats(problem, theta, delta, config, reps, master_seed)?;
    Ok((s.mean, s.mean_stderr))
}

/// Variance and its standard error over `reps` replications.
pub fn variance_h(
    problem: &Problem,
    theta: f64,
    delta: f64,
    config: EstimatorConfig,
    reps: usize,
    master_seed: u64,
) -> Result<(f64, f64)> {
    let s = sample_h_stats(problem, theta, delta, config, reps, master_seed)?;
    Ok((s.variance, s.variance_stderr))
}

/// Second moment `E[h^2]` and its standard error.
pub fn second_moment_h(
    problem: &Problem,
    theta: f64,
    delta: f64,
    config: EstimatorConfig,
    reps: usize,
    master_seed: u64,
) -> Result<(f64, f64)> {
    let s = sample_h_stats(problem, theta, delta, config, reps, master_seed)?;
    let second = s.variance + s.mean * s.mean;
    let se = s.variance_stderr + 2.0 * s.mean.abs() * s.mean_stderr;
    Ok((second, se))
}
