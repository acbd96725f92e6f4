//! The iterative algorithms: Kiefer-Wolfowitz and Robbins-Monro parameter
//! recursions, mirror descent with interval projection and iterate
//! averaging, the closed-form rate predictor, and the mirror-descent error
//! bound evaluator.

use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::gradest::{estimate_h, EstimatorConfig};
use crate::prng::EstimatorStreams;
use crate::problems::Problem;
use crate::stats::normal_quantile;

/// Power-law gains `a_n = a n^-alpha`, `delta_n = d n^-eta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainSchedule {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    pub eta: f64,
}

impl GainSchedule {
    pub fn new(a: f64, alpha: f64, d: f64, eta: f64) -> Result<Self> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(a) || !positive(d) {
            return Err(Error::InvalidParameter(
                "gain scales a and d must be positive".into(),
            ));
        }
        if !(positive(alpha) && alpha <= 1.0) {
            return Err(Error::InvalidParameter(
                "alpha must lie in (0, 1]".into(),
            ));
        }
        if !positive(eta) {
            return Err(Error::InvalidParameter("eta must be positive".into()));
        }
        Ok(Self { a, alpha, d, eta })
    }

    #[inline]
    pub fn step(&self, n: usize) -> f64 {
        self.a * (n as f64).powf(-self.alpha)
    }

    #[inline]
    pub fn width(&self, n: usize) -> f64 {
        self.d * (n as f64).powf(-self.eta)
    }
}

/// Geometric checkpoint grid with `per_decade` points per decade of n,
/// clipped to `[n_min, n_max]` and always containing `n_max`.
pub fn checkpoint_grid(n_min: usize, n_max: usize, per_decade: usize) -> Vec<usize> {
    assert!(n_min >= 1 && n_max >= n_min && per_decade >= 1);
    let mut out = Vec::new();
    let lo = (n_min as f64).log10();
    let hi = (n_max as f64).log10();
    let steps = ((hi - lo) * per_decade as f64).ceil() as usize;
    for k in 0..=steps {
        let n = 10f64.powf(lo + k as f64 / per_decade as f64).round() as usize;
        let n = n.clamp(n_min, n_max);
        if out.last() != Some(&n) {
            out.push(n);
        }
    }
    if out.last() != Some(&n_max) {
        out.push(n_max);
    }
    out
}

/// Checkpointed record of one optimization run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub checkpoints: Vec<usize>,
    /// Raw iterate at each checkpoint.
    pub theta: Vec<f64>,
    /// Squared error of the raw iterate, when the problem has a minimizer.
    pub sq_err: Option<Vec<f64>>,
    /// Objective gap of the averaged iterate (mirror-descent runs).
    pub gap_avg: Option<Vec<f64>>,
    /// Objective gap of the raw iterate (mirror-descent runs).
    pub gap_last: Option<Vec<f64>>,
    /// Averaged iterate at each checkpoint (mirror-descent runs).
    pub theta_avg: Option<Vec<f64>>,
    pub clamp_events: usize,
}

/// Evaluation window for one iteration: the parameter band the estimator
/// touches must stay inside the optimization domain. When `delta_n` exceeds
/// half the domain width it is capped, otherwise the inset interval would be
/// empty.
fn effective_width(domain: (f64, f64), delta: f64) -> f64 {
    let half_width = 0.5 * (domain.1 - domain.0);
    delta.min(half_width * (1.0 - 1e-9))
}

fn clamp_inset(theta: f64, domain: (f64, f64), delta: f64, clamps: &mut usize) -> f64 {
    let lo = domain.0 + delta;
    let hi = domain.1 - delta;
    if theta < lo {
        *clamps += 1;
        lo
    } else if theta > hi {
        *clamps += 1;
        hi
    } else {
        theta
    }
}

/// Kiefer-Wolfowitz run: `theta_{n+1} = clamp(theta_n - a_n h_n)` with the
/// finite-difference estimate taken at `(theta_n, delta_n)`.
pub fn kw_run(
    problem: &Problem,
    config: EstimatorConfig,
    schedule: GainSchedule,
    n_total: usize,
    streams: &mut EstimatorStreams,
    checkpoints: &[usize],
) -> Result<Trajectory> {
    config.validate_for(problem)?;
    let domain = problem.theta_domain;
    let mut clamps = 0usize;
    let delta1 = effective_width(domain, schedule.width(1));
    let mut theta = clamp_inset(problem.theta0(), domain, delta1, &mut clamps);
    let mut out_theta = Vec::with_capacity(checkpoints.len());
    let mut ck = checkpoints.iter().peekable();

    for n in 1..=n_total {
        let delta = effective_width(domain, schedule.width(n));
        let h = estimate_h(problem, theta, delta, config, streams)?;
        if !h.is_finite() {
            return Err(Error::NonFiniteEstimate { iteration: n });
        }
        let next_delta = effective_width(domain, schedule.width(n + 1));
        theta = clamp_inset(theta - schedule.step(n) * h, domain, next_delta, &mut clamps);
        while let Some(&&c) = ck.peek() {
            if c == n {
                out_theta.push(theta);
                ck.next();
            } else {
                break;
            }
        }
    }

    let sq_err = problem
        .theta_star
        .map(|star| out_theta.iter().map(|t| (t - star) * (t - star)).collect());
    Ok(Trajectory {
        checkpoints: checkpoints.to_vec(),
        theta: out_theta,
        sq_err,
        gap_avg: None,
        gap_last: None,
        theta_avg: None,
        clamp_events: clamps,
    })
}

/// Robbins-Monro baseline: unbiased derivative evaluations `J'(theta) +
/// noise`. Needs closed-form `J'`; noise is centered Gaussian.
pub fn rm_run(
    problem: &Problem,
    schedule: GainSchedule,
    noise_sd: f64,
    n_total: usize,
    streams: &mut EstimatorStreams,
    checkpoints: &[usize],
) -> Result<Trajectory> {
    let j_prime = problem
        .j_prime
        .clone()
        .ok_or_else(|| Error::InvalidParameter("rm_run needs closed-form J'".into()))?;
    let domain = problem.theta_domain;
    let mut clamps = 0usize;
    let mut theta = problem.theta0();
    let mut out_theta = Vec::with_capacity(checkpoints.len());
    let mut ck = checkpoints.iter().peekable();

    for n in 1..=n_total {
        let noise = if noise_sd > 0.0 {
            noise_sd * normal_quantile(streams.crn.next_uniform().max(1e-308))
        } else {
            0.0
        };
        let g = j_prime(theta) + noise;
        if !g.is_finite() {
            return Err(Error::NonFiniteEstimate { iteration: n });
        }
        theta = clamp_inset(theta - schedule.step(n) * g, domain, 0.0, &mut clamps);
        while let Some(&&c) = ck.peek() {
            if c == n {
                out_theta.push(theta);
                ck.next();
            } else {
                break;
            }
        }
    }

    let sq_err = problem
        .theta_star
        .map(|star| out_theta.iter().map(|t| (t - star) * (t - star)).collect());
    Ok(Trajectory {
        checkpoints: checkpoints.to_vec(),
        theta: out_theta,
        sq_err,
        gap_avg: None,
        gap_last: None,
        theta_avg: None,
        clamp_events: clamps,
    })
}

// ---------------------------------------------------------------------------
// Mirror descent
// ---------------------------------------------------------------------------

/// Iterate averaging mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Averaging {
    /// `(1/n) sum theta_i`
    Uniform,
    /// weights `a_i / sum_j a_j`, normalized to sum to one
    Weighted,
}

/// Mirror-descent configuration with the quadratic distance generator
/// `psi(theta) = theta^2 / 2`, whose Bregman distance is
/// `D(x, y) = (x - y)^2 / 2` and whose proximal step is interval projection.
#[derive(Debug, Clone, Copy)]
pub struct MdConfig {
    pub domain: (f64, f64),
    /// Strong-convexity constant of the generator (1/2 for the quadratic).
    pub kappa: f64,
    /// Radius with `D(theta*, theta) <= r^2 / 2` over the domain.
    pub radius_r: f64,
    pub averaging: Averaging,
}

impl MdConfig {
    /// Quadratic-generator config over `domain`; the radius is the domain
    /// diameter, which dominates `sqrt(2 D)` for every pair.
    pub fn quadratic(domain: (f64, f64), averaging: Averaging) -> Self {
        Self {
            domain,
            kappa: 0.5,
            radius_r: domain.1 - domain.0,
            averaging,
        }
    }

    pub fn bregman(&self, x: f64, y: f64) -> f64 {
        0.5 * (x - y) * (x - y)
    }
}

/// Running state of a mirror-descent run.
#[derive(Debug, Clone)]
pub struct MdState {
    pub theta: f64,
    pub iteration: usize,
    sum_theta: f64,
    sum_weighted_theta: f64,
    sum_weights: f64,
}

impl MdState {
    pub fn new(theta0: f64) -> Self {
        Self {
            theta: theta0,
            iteration: 0,
            sum_theta: 0.0,
            sum_weighted_theta: 0.0,
            sum_weights: 0.0,
        }
    }

    /// Records the current iterate into both running averages.
    fn absorb(&mut self, step: f64) {
        self.iteration += 1;
        self.sum_theta += self.theta;
        self.sum_weighted_theta += step * self.theta;
        self.sum_weights += step;
    }

    pub fn average(&self, mode: Averaging) -> f64 {
        match mode {
            Averaging::Uniform => self.sum_theta / self.iteration as f64,
            Averaging::Weighted => self.sum_weighted_theta / self.sum_weights,
        }
    }
}

/// One mirror-descent step: with the quadratic generator the argmin of
/// `<h, theta> + D(theta, theta_n)/a_n` over the interval is the projection
/// of `theta_n - a_n h`.
pub fn md_step(state: &mut MdState, h: f64, step: f64, config: &MdConfig) {
    debug_assert!(step > 0.0);
    state.absorb(step);
    let raw = state.theta - step * h;
    state.theta = raw.clamp(config.domain.0, config.domain.1);
}

/// Mirror-descent run, recording objective gaps of the averaged and raw
/// iterates at the checkpoints. Needs ground-truth `J` and minimizer.
pub fn md_run(
    problem: &Problem,
    config: EstimatorConfig,
    md: &MdConfig,
    schedule: GainSchedule,
    n_total: usize,
    streams: &mut EstimatorStreams,
    checkpoints: &[usize],
) -> Result<Trajectory> {
    config.validate_for(problem)?;
    let j = problem
        .j
        .clone()
        .ok_or_else(|| Error::InvalidParameter("md_run needs ground-truth J".into()))?;
    let star = problem
        .theta_star
        .ok_or_else(|| Error::InvalidParameter("md_run needs the minimizer".into()))?;
    let j_star = j(star);
    let domain = md.domain;
    let mut clamps = 0usize;
    let delta1 = effective_width(domain, schedule.width(1));
    let theta0 = clamp_inset(problem.theta0(), domain, delta1, &mut clamps);
    let mut state = MdState::new(theta0);

    let mut out_theta = Vec::with_capacity(checkpoints.len());
    let mut out_avg = Vec::with_capacity(checkpoints.len());
    let mut gap_avg = Vec::with_capacity(checkpoints.len());
    let mut gap_last = Vec::with_capacity(checkpoints.len());
    let mut ck = checkpoints.iter().peekable();

    for n in 1..=n_total {
        let delta = effective_width(domain, schedule.width(n));
        // keep the evaluation band inside the domain
        let eval_theta = clamp_inset(state.theta, domain, delta, &mut clamps);
        state.theta = eval_theta;
        let h = estimate_h(problem, eval_theta, delta, config, streams)?;
        if !h.is_finite() {
            return Err(Error::NonFiniteEstimate { iteration: n });
        }
        md_step(&mut state, h, schedule.step(n), md);
        while let Some(&&c) = ck.peek() {
            if c == n {
                let avg = state.average(md.averaging);
                out_theta.push(state.theta);
                out_avg.push(avg);
                gap_avg.push(j(avg) - j_star);
                gap_last.push(j(state.theta) - j_star);
                ck.next();
            } else {
                break;
            }
        }
    }

    let sq_err = Some(out_theta.iter().map(|t| (t - star) * (t - star)).collect());
    Ok(Trajectory {
        checkpoints: checkpoints.to_vec(),
        theta: out_theta,
        sq_err,
        gap_avg: Some(gap_avg),
        gap_last: Some(gap_last),
        theta_avg: Some(out_avg),
        clamp_events: clamps,
    })
}

// ---------------------------------------------------------------------------
// Rate predictor
// ---------------------------------------------------------------------------

/// RMSE decay exponent `sigma = min(alpha + gamma eta, 2 beta eta) / 2` of
/// the parameter recursion, plus the convergence flag `sigma > 0`.
pub fn predict_sigma(alpha: f64, eta: f64, beta: f64, gamma: f64) -> (f64, bool) {
    let sigma = 0.5 * (alpha + gamma * eta).min(2.0 * beta * eta);
    (sigma, sigma > 0.0)
}

/// Exact-rational form of [`predict_sigma`] for grid values.
pub fn predict_sigma_rational(
    alpha: Ratio<i64>,
    eta: Ratio<i64>,
    beta: Ratio<i64>,
    gamma: Ratio<i64>,
) -> Ratio<i64> {
    let bias_term = beta * eta * 2;
    let var_term = alpha + gamma * eta;
    let min = if var_term < bias_term { var_term } else { bias_term };
    min / 2
}

/// Best attainable parameter-recursion rate for bias exponent `beta` and
/// variance exponent `gamma <= 0`: `sigma* = beta/(2 beta - gamma)` at
/// `alpha = 1`, `eta = 1/(2 beta - gamma)`.
pub fn best_rate_kw(beta: f64, gamma: f64) -> (f64, f64, f64) {
    assert!(beta > 0.0 && gamma <= 0.0);
    let denom = 2.0 * beta - gamma;
    (beta / denom, 1.0, 1.0 / denom)
}

pub fn best_rate_kw_rational(beta: Ratio<i64>, gamma: Ratio<i64>) -> (Ratio<i64>, Ratio<i64>, Ratio<i64>) {
    let denom = beta * 2 - gamma;
    (beta / denom, Ratio::from_integer(1), denom.recip())
}

/// Best attainable averaged mirror-descent bound rate: balancing the bound
/// terms gives `sigma* = beta/(2 beta - gamma)` at `alpha = (beta - gamma)/
/// (2 beta - gamma)`, `eta = 1/(2 beta - gamma)`.
pub fn best_rate_md(beta: f64, gamma: f64) -> (f64, f64, f64) {
    assert!(beta > 0.0 && gamma <= 0.0);
    let denom = 2.0 * beta - gamma;
    (beta / denom, (beta - gamma) / denom, 1.0 / denom)
}

// ---------------------------------------------------------------------------
// Mirror-descent error bound
// ---------------------------------------------------------------------------

/// Constants of the averaged mirror-descent bound.
#[derive(Debug, Clone, Copy)]
pub struct MdBoundConstants {
    pub radius_r: f64,
    pub kappa: f64,
    /// Growth bound `|J'(theta)| <= k2 |theta - theta*|`... only its value at
    /// the domain edge matters through `C3`.
    pub k2: f64,
    /// Bias scale `|E[h] - J'| <= b delta^beta`.
    pub bias_scale: f64,
    /// Variance (or second-moment) scale against `delta^gamma`.
    pub noise_scale: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// Which terms the bound carries: the full five-term form, or the
/// second-moment form that absorbs the gradient and bias cross terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MdBoundForm {
    FiveTerm,
    SecondMoment,
}

/// Evaluates the averaged mirror-descent gap bound at iteration `n` by
/// direct summation:
/// `C1/(n a_n) + (C2/n) sum a_i d_i^gamma + (C3/n) sum a_i
///  + (C4/n) sum a_i d_i^{2 beta} + (C5/n) sum d_i^beta`,
/// with `C3 = C4 = 0` in the second-moment form.
pub fn eval_md_bound(
    constants: &MdBoundConstants,
    schedule: GainSchedule,
    n: usize,
    form: MdBoundForm,
) -> f64 {
    sweep_md_bound(constants, schedule, &[n], form)[0]
}

/// Bound values at several n in one pass over the prefix sums.
pub fn sweep_md_bound(
    constants: &MdBoundConstants,
    schedule: GainSchedule,
    ns: &[usize],
    form: MdBoundForm,
) -> Vec<f64> {
    let c = constants;
    let c1 = c.radius_r * c.radius_r / 2.0;
    let c2 = c.noise_scale / (2.0 * c.kappa);
    let (c3, c4) = match form {
        MdBoundForm::FiveTerm => (
            c.k2 * c.k2 * c.radius_r * c.radius_r / (2.0 * c.kappa * c.kappa),
            c.bias_scale * c.bias_scale / c.kappa,
        ),
        MdBoundForm::SecondMoment => (0.0, 0.0),
    };
    let c5 = c.bias_scale * c.radius_r / (2.0 * c.kappa).sqrt();

    let n_max = ns.iter().copied().max().unwrap_or(0);
    let mut sum_a_dgamma = 0.0;
    let mut sum_a = 0.0;
    let mut sum_a_d2beta = 0.0;
    let mut sum_dbeta = 0.0;
    let mut out = vec![0.0; ns.len()];
    for i in 1..=n_max {
        let a_i = schedule.step(i);
        let d_i = schedule.width(i);
        sum_a_dgamma += a_i * d_i.powf(c.gamma);
        sum_a += a_i;
        sum_a_d2beta += a_i * d_i.powf(2.0 * c.beta);
        sum_dbeta += d_i.powf(c.beta);
        for (k, &target) in ns.iter().enumerate() {
            if target == i {
                let nf = i as f64;
                out[k] = c1 / (nf * a_i)
                    + c2 / nf * sum_a_dgamma
                    + c3 / nf * sum_a
                    + c4 / nf * sum_a_d2beta
                    + c5 / nf * sum_dbeta;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradest::{Coupling, Scheme};
    use crate::problems::{deterministic_triangular_problem, triangular_problem, GenMethod};

    fn sym_crn_inv() -> EstimatorConfig {
        EstimatorConfig::new(Scheme::Symmetric, Coupling::Crn, GenMethod::Inversion)
    }

    #[test]
    fn checkpoint_grid_is_strictly_increasing() {
        let g = checkpoint_grid(10, 100_000, 20);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*g.last().unwrap(), 100_000);
        assert_eq!(g[0], 10);
    }

    #[test]
    fn schedule_validation() {
        assert!(GainSchedule::new(0.0, 1.0, 1.0, 0.5).is_err());
        assert!(GainSchedule::new(1.0, 1.5, 1.0, 0.5).is_err());
        assert!(GainSchedule::new(1.0, 1.0, 1.0, -0.5).is_err());
        let s = GainSchedule::new(6.0, 1.0, 1.0, 0.5).unwrap();
        assert!((s.step(4) - 1.5).abs() < 1e-15);
        assert!((s.width(4) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kw_deterministic_converges() {
        // noise-free measurements reduce to deterministic gradient descent
        let p = deterministic_triangular_problem();
        let schedule = GainSchedule::new(6.0, 1.0, 1.0, 0.5).unwrap();
        let cks = vec![10_000];
        let mut streams = EstimatorStreams::new(0, 0);
        let t = kw_run(&p, sym_crn_inv(), schedule, 10_000, &mut streams, &cks).unwrap();
        assert!((t.theta[0] - 0.6).abs() < 1e-3, "theta = {}", t.theta[0]);
    }

    #[test]
    fn kw_tiny_gain_stays_near_start() {
        let p = triangular_problem();
        let schedule = GainSchedule::new(1e-12, 1.0, 0.05, 0.5).unwrap();
        let cks = vec![1000];
        let mut streams = EstimatorStreams::new(1, 0);
        let t = kw_run(&p, sym_crn_inv(), schedule, 1000, &mut streams, &cks).unwrap();
        assert!((t.theta[0] - p.theta0()).abs() < 1e-6);
    }

    #[test]
    fn rm_zero_noise_is_monotone_descent() {
        let p = triangular_problem();
        let schedule = GainSchedule::new(1.0, 1.0, 1.0, 0.5).unwrap();
        let cks = checkpoint_grid(1, 200, 20);
        let mut streams = EstimatorStreams::new(2, 0);
        let t = rm_run(&p, schedule, 0.0, 200, &mut streams, &cks).unwrap();
        let errs: Vec<f64> = t.theta.iter().map(|x| (x - 0.6).abs()).collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn rm_fixed_point_stays_put() {
        let mut p = triangular_problem();
        p.theta_domain = (0.25, 0.95); // midpoint is exactly theta*
        assert!((p.theta0() - 0.6).abs() < 1e-15);
        let schedule = GainSchedule::new(6.0, 1.0, 1.0, 0.5).unwrap();
        let cks = vec![500];
        let mut streams = EstimatorStreams::new(3, 0);
        let t = rm_run(&p, schedule, 0.0, 500, &mut streams, &cks).unwrap();
        assert_eq!(t.theta[0], 0.6);
    }

    #[test]
    fn md_step_is_projected_gradient() {
        let md = MdConfig::quadratic((0.0, 1.0), Averaging::Uniform);
        // projection inactive: plain gradient step
        let mut s = MdState::new(0.5);
        md_step(&mut s, 2.0, 0.1, &md);
        assert!((s.theta - 0.3).abs() < 1e-15);
        // projection clamps at the upper edge
        let mut s = MdState::new(1.0);
        md_step(&mut s, -3.0, 0.5, &md);
        assert_eq!(s.theta, 1.0);
        // wide domain: identical to an unprojected step
        let wide = MdConfig::quadratic((-1e12, 1e12), Averaging::Uniform);
        let mut s = MdState::new(0.5);
        md_step(&mut s, 2.0, 0.1, &wide);
        assert!((s.theta - 0.3).abs() < 1e-15);
    }

    #[test]
    fn md_radius_covers_corner_pairs() {
        let md = MdConfig::quadratic((0.2, 0.95), Averaging::Uniform);
        for x in [0.2, 0.95] {
            for y in [0.2, 0.95] {
                assert!(md.bregman(x, y) <= 0.5 * md.radius_r * md.radius_r + 1e-15);
            }
        }
    }

    #[test]
    fn md_and_kw_agree_when_projection_inactive() {
        let mut p = triangular_problem();
        // domain wide enough that neither projection nor clamping triggers
        p.theta_domain = (0.3, 0.9);
        let schedule = GainSchedule::new(0.2, 1.0, 0.05, 1.0).unwrap();
        let cks = checkpoint_grid(1, 2000, 10);
        let md = MdConfig::quadratic(p.theta_domain, Averaging::Uniform);
        let mut s1 = EstimatorStreams::new(9, 0);
        let mut s2 = EstimatorStreams::new(9, 0);
        let kw = kw_run(&p, sym_crn_inv(), schedule, 2000, &mut s1, &cks).unwrap();
        let mdt = md_run(&p, sym_crn_inv(), &md, schedule, 2000, &mut s2, &cks).unwrap();
        for (a, b) in kw.theta.iter().zip(&mdt.theta) {
            assert_eq!(a.to_bits(), b.to_bits(), "trajectories diverge");
        }
    }

    #[test]
    fn md_iterates_and_averages_stay_feasible() {
        let p = triangular_problem();
        let md = MdConfig::quadratic(p.theta_domain, Averaging::Weighted);
        let schedule = GainSchedule::new(1.0, 0.5, 1.0, 1.0).unwrap();
        let cks = checkpoint_grid(1, 5000, 10);
        let mut streams = EstimatorStreams::new(11, 0);
        let t = md_run(&p, sym_crn_inv(), &md, schedule, 5000, &mut streams, &cks).unwrap();
        for (&th, &avg) in t.theta.iter().zip(t.theta_avg.as_ref().unwrap()) {
            assert!(th >= p.theta_domain.0 && th <= p.theta_domain.1);
            assert!(avg >= p.theta_domain.0 && avg <= p.theta_domain.1);
        }
    }

    #[test]
    fn md_both_averaging_modes_drive_the_gap_down() {
        let p = triangular_problem();
        let schedule = GainSchedule::new(1.0, 0.5, 1.0, 1.0).unwrap();
        let cks = vec![100, 50_000];
        for (seed, averaging) in [(21u64, Averaging::Uniform), (22, Averaging::Weighted)] {
            let md = MdConfig::quadratic(p.theta_domain, averaging);
            let mut streams = EstimatorStreams::new(seed, 0);
            let t = md_run(&p, sym_crn_inv(), &md, schedule, 50_000, &mut streams, &cks).unwrap();
            let gaps = t.gap_avg.unwrap();
            assert!(gaps[1] < 1e-2, "{averaging:?}: final gap {}", gaps[1]);
            assert!(gaps[1] < gaps[0], "{averaging:?}: gap did not shrink");
        }
    }

    #[test]
    fn weighted_average_is_a_convex_combination() {
        // weights a_i / sum a_j sum to one, so the average of a constant
        // sequence is that constant
        let mut state = MdState::new(0.7);
        let md = MdConfig::quadratic((0.0, 1.0), Averaging::Weighted);
        for n in 1..=50 {
            md_step(&mut state, 0.0, (n as f64).powf(-0.5), &md);
        }
        assert!((state.average(Averaging::Weighted) - 0.7).abs() < 1e-12);
        assert!((state.average(Averaging::Uniform) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn deterministic_replay_is_bitwise() {
        let p = triangular_problem();
        let schedule = GainSchedule::new(6.0, 1.0, 1.0, 0.5).unwrap();
        let cks = checkpoint_grid(10, 3000, 10);
        let run = |seed: u64| {
            let mut streams = EstimatorStreams::new(seed, 4);
            kw_run(&p, sym_crn_inv(), schedule, 3000, &mut streams, &cks).unwrap()
        };
        let a = run(123);
        let b = run(123);
        for (x, y) in a.theta.iter().zip(&b.theta) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn predictor_reference_values() {
        let cases = [
            ((1.0, 1.0 / 6.0, 2.0, -2.0), 1.0 / 3.0),
            ((1.0, 0.2, 2.0, -1.0), 0.4),
            ((1.0, 0.5, 2.0, 0.0), 0.5),
        ];
        for ((alpha, eta, beta, gamma), want) in cases {
            let (sigma, converges) = predict_sigma(alpha, eta, beta, gamma);
            assert!((sigma - want).abs() < 1e-12);
            assert!(converges);
        }
        // divergent regime flagged
        let (_, ok) = predict_sigma(0.5, 0.5, 2.0, -2.0);
        assert!(!ok);
    }

    #[test]
    fn best_rates_match_predictor() {
        for (beta, gamma) in [(2.0, -2.0), (1.0, -1.0), (2.0, 0.0), (1.0, -2.0), (2.0, -1.0)] {
            let (sigma, alpha, eta) = best_rate_kw(beta, gamma);
            let (check, _) = predict_sigma(alpha, eta, beta, gamma);
            assert!((check - sigma).abs() < 1e-12);
        }
        assert_eq!(best_rate_kw(2.0, -2.0), (1.0 / 3.0, 1.0, 1.0 / 6.0));
        assert_eq!(best_rate_kw(1.0, -1.0), (1.0 / 3.0, 1.0, 1.0 / 3.0));
        assert_eq!(best_rate_kw(2.0, 0.0), (0.5, 1.0, 0.25));
        // averaged mirror-descent optima
        let (s, a, e) = best_rate_md(2.0, -2.0);
        assert!((s - 1.0 / 3.0).abs() < 1e-15);
        assert!((a - 2.0 / 3.0).abs() < 1e-15);
        assert!((e - 1.0 / 6.0).abs() < 1e-15);
        let (s, a, e) = best_rate_md(1.0, -2.0);
        assert!((s - 0.25).abs() < 1e-15 && (a - 0.75).abs() < 1e-15 && (e - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rational_predictor_is_exact() {
        let r = |n: i64, d: i64| Ratio::new(n, d);
        let sigma = predict_sigma_rational(r(1, 1), r(1, 6), r(2, 1), r(-2, 1));
        assert_eq!(sigma, r(1, 3));
        let (s, a, e) = best_rate_kw_rational(r(2, 1), r(-2, 1));
        assert_eq!((s, a, e), (r(1, 3), r(1, 1), r(1, 6)));
        assert_eq!(
            predict_sigma_rational(a, e, r(2, 1), r(-2, 1)),
            s,
            "predictor at the optimum reproduces sigma*"
        );
    }

    #[test]
    fn md_bound_single_term_case() {
        let constants = MdBoundConstants {
            radius_r: 2.0,
            kappa: 0.5,
            k2: 0.0,
            bias_scale: 0.0,
            noise_scale: 0.0,
            beta: 2.0,
            gamma: 0.0,
        };
        let schedule = GainSchedule::new(0.5, 0.5, 1.0, 1.0).unwrap();
        let n = 100;
        let got = eval_md_bound(&constants, schedule, n, MdBoundForm::FiveTerm);
        let want = 2.0 / (n as f64 * schedule.step(n));
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn md_bound_below_closed_form() {
        // direct sums stay below the closed-form envelope for the
        // gamma = 0, beta = 2, a_n = a/sqrt(n), d_n = d/n schedule
        let constants = MdBoundConstants {
            radius_r: 0.75,
            kappa: 0.5,
            k2: 1.0 / 3.0,
            bias_scale: 0.2,
            noise_scale: 1.5,
            beta: 2.0,
            gamma: 0.0,
        };
        let (a, d) = (0.8, 1.3);
        let schedule = GainSchedule::new(a, 0.5, d, 1.0).unwrap();
        let c1 = constants.radius_r * constants.radius_r / 2.0;
        let c2 = constants.noise_scale / (2.0 * constants.kappa);
        let c3 = constants.k2 * constants.k2 * constants.radius_r * constants.radius_r
            / (2.0 * constants.kappa * constants.kappa);
        let c4 = constants.bias_scale * constants.bias_scale / constants.kappa;
        let c5 = constants.bias_scale * constants.radius_r / (2.0 * constants.kappa).sqrt();
        for n in [10usize, 100, 1000, 10_000] {
            let nf = n as f64;
            let closed = (c1 + 2.0 * c2 + 2.0 * c3) * a.max(1.0 / a) / nf.sqrt()
                + (9.0 * c4 * d.powi(4) / 7.0) * a / nf
                + 2.0 * c5 * d * d / nf;
            let direct = eval_md_bound(&constants, schedule, n, MdBoundForm::FiveTerm);
            assert!(direct <= closed + 1e-12, "n={n}: {direct} > {closed}");
        }
    }

    #[test]
    fn md_bound_nonincreasing_over_sweep() {
        let constants = MdBoundConstants {
            radius_r: 0.75,
            kappa: 0.5,
            k2: 1.0 / 3.0,
            bias_scale: 0.1,
            noise_scale: 2.0,
            beta: 2.0,
            gamma: 0.0,
        };
        let schedule = GainSchedule::new(1.0, 0.5, 1.0, 1.0).unwrap();
        let ns = checkpoint_grid(10, 1_000_000, 10);
        let vals = sweep_md_bound(&constants, schedule, &ns, MdBoundForm::FiveTerm);
        for w in vals.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "bound increased: {w:?}");
        }
    }
}
