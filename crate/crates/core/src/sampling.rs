//! Random-variate generation by inversion, rejection, and composition, in
//! both plain and common-random-number coupled forms.
//!
//! A coupled sampler returns one [`CoupledPair`]: two values whose marginals
//! are exactly `F(theta - delta, .)` and `F(theta + delta, .)` but which
//! share underlying randomness so their difference has small variance.

use crate::dist::{generalized_inverse, MixtureFamily, ParamFamily};
use crate::error::{Error, Result};
use crate::prng::UniformStream;

/// Proposal-round cutoff for rejection loops. Acceptance probability is at
/// least `1/(c(b-a))`, so hitting this means a misconfigured envelope.
pub const REJECTION_ROUND_CUTOFF: u64 = 1_000_000;

/// A CRN-coupled sample pair. `x_minus` has marginal `F(theta - delta, .)`,
/// `x_plus` has marginal `F(theta + delta, .)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledPair {
    pub x_minus: f64,
    pub x_plus: f64,
    pub equal: bool,
}

/// Which uniforms drive the position draw in composition sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompositionMode {
    /// Fresh second uniform for the position within the component.
    TwoUniform,
    /// Position recycled from the selector: `xi2 = (xi1 - rho_{i-1}) / p_i`.
    DerivedXi2,
}

fn check_theta<F: ParamFamily + ?Sized>(family: &F, theta: f64) -> Result<()> {
    if family.contains_theta(theta) {
        Ok(())
    } else {
        let (lo, hi) = family.theta_domain();
        Err(Error::ThetaOutOfDomain { theta, lo, hi })
    }
}

// ---------------------------------------------------------------------------
// Inversion
// ---------------------------------------------------------------------------

/// One draw by inversion; consumes exactly one uniform.
pub fn sample_inversion<F: ParamFamily + ?Sized>(
    family: &F,
    theta: f64,
    stream: &mut UniformStream,
) -> Result<f64> {
    check_theta(family, theta)?;
    let u = stream.next_uniform();
    Ok(generalized_inverse(family, theta, u))
}

/// Coupled inversion pair: one shared uniform inverted at both parameters.
pub fn sample_inversion_coupled<F: ParamFamily + ?Sized>(
    family: &F,
    theta: f64,
    delta: f64,
    stream: &mut UniformStream,
) -> Result<CoupledPair> {
    check_theta(family, theta - delta)?;
    check_theta(family, theta + delta)?;
    let u = stream.next_uniform();
    let x_minus = generalized_inverse(family, theta - delta, u);
    let x_plus = generalized_inverse(family, theta + delta, u);
    Ok(CoupledPair {
        x_minus,
        x_plus,
        equal: x_minus == x_plus,
    })
}

// ---------------------------------------------------------------------------
// Rejection
// ---------------------------------------------------------------------------

/// Plain rejection with the uniform envelope over a bounded support.
/// Returns the accepted value and the number of proposal rounds.
pub fn sample_rejection_counted<F: ParamFamily + ?Sized>(
    family: &F,
    theta: f64,
    stream: &mut UniformStream,
) -> Result<(f64, u64)> {
    check_theta(family, theta)?;
    let (a, b) = family.support();
    let c = rejection_bound(family)?;
    let mut rounds = 0u64;
    loop {
        rounds += 1;
        if rounds > REJECTION_ROUND_CUTOFF {
            return Err(Error::RejectionDivergence { rounds });
        }
        let xi1 = a + (b - a) * stream.next_uniform();
        let xi2 = c * stream.next_uniform();
        if xi2 <= family.density(theta, xi1) {
            return Ok((xi1, rounds));
        }
    }
}

pub fn sample_rejection<F: ParamFamily + ?Sized>(
    family: &F,
    theta: f64,
    stream: &mut UniformStream,
) -> Result<f64> {
    sample_rejection_counted(family, theta, stream).map(|(x, _)| x)
}

fn rejection_bound<F: ParamFamily + ?Sized>(family: &F) -> Result<f64> {
    let (a, b) = family.support();
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::UnsupportedFamily(
            "rejection needs a bounded support interval",
        ));
    }
    family
        .density_bound()
        .ok_or(Error::UnsupportedFamily("family reports no density bound"))
}

/// An envelope for generalized rejection: a sampleable density `g` with
/// `f(theta, x) <= scale * g(x)` on the support.
pub struct Envelope<G, H>
where
    G: Fn(f64) -> f64,
    H: Fn(f64) -> f64,
{
    pub density: G,
    pub inv_cdf: H,
    pub scale: f64,
}

/// Generalized rejection under a dominating envelope. Detects domination
/// violations instead of silently producing the wrong law.
pub fn sample_rejection_generalized<F, G, H>(
    family: &F,
    envelope: &Envelope<G, H>,
    theta: f64,
    stream: &mut UniformStream,
) -> Result<f64>
where
    F: ParamFamily + ?Sized,
    G: Fn(f64) -> f64,
    H: Fn(f64) -> f64,
{
    check_theta(family, theta)?;
    let mut rounds = 0u64;
    loop {
        rounds += 1;
        if rounds > REJECTION_ROUND_CUTOFF {
            return Err(Error::RejectionDivergence { rounds });
        }
        let xi1 = (envelope.inv_cdf)(stream.next_uniform());
        let bound = envelope.scale * (envelope.density)(xi1);
        let f = family.density(theta, xi1);
        if f > bound * (1.0 + 1e-12) {
            return Err(Error::EnvelopeViolation {
                x: xi1,
                density: f,
                bound,
            });
        }
        let xi2 = bound * stream.next_uniform();
        if xi2 <= f {
            return Ok(xi1);
        }
    }
}

/// Coupled rejection pair.
///
/// Joint proposals `(xi1, xi2)` are tested against both densities:
/// both accept -> equal pair; exactly one accepts -> that side keeps `xi1`
/// and the other is regenerated by plain rejection at its own parameter from
/// the dedicated `retry` stream; neither -> new joint proposal. The retry
/// stream keeps the pair's law independent of how many retries the other
/// coordinate consumed.
pub fn sample_rejection_coupled<F: ParamFamily + ?Sized>(
    family: &F,
    theta: f64,
    delta: f64,
    stream: &mut UniformStream,
    retry: &mut UniformStream,
) -> Result<CoupledPair> {
    check_theta(family, theta - delta)?;
    check_theta(family, theta + delta)?;
    let (a, b) = family.support();
    let c = rejection_bound(family)?;
    let mut rounds = 0u64;
    loop {
        rounds += 1;
        if rounds > REJECTION_ROUND_CUTOFF {
            return Err(Error::RejectionDivergence { rounds });
        }
        let xi1 = a + (b - a) * stream.next_uniform();
        let xi2 = c * stream.next_uniform();
        let accept_minus = xi2 <= family.density(theta - delta, xi1);
        let accept_plus = xi2 <= family.density(theta + delta, xi1);
        match (accept_minus, accept_plus) {
            (true, true) => {
                return Ok(CoupledPair {
                    x_minus: xi1,
                    x_plus: xi1,
                    equal: true,
                })
            }
            (true, false) => {
                let x_plus = sample_rejection(family, theta + delta, retry)?;
                return Ok(CoupledPair {
                    x_minus: xi1,
                    x_plus,
                    equal: false,
                });
            }
            (false, true) => {
                let x_minus = sample_rejection(family, theta - delta, retry)?;
                return Ok(CoupledPair {
                    x_minus,
                    x_plus: xi1,
                    equal: false,
                });
            }
            (false, false) => continue,
        }
    }
}

// ---------------------------------------------------------------------------
// Composition
// ---------------------------------------------------------------------------

/// One draw by composition: a selector uniform picks the component against
/// the cumulative weights, then the component is inverted.
pub fn sample_composition(
    mix: &MixtureFamily,
    theta: f64,
    stream: &mut UniformStream,
    mode: CompositionMode,
) -> Result<f64> {
    check_theta(mix, theta)?;
    let xi1 = stream.next_uniform();
    let xi2 = match mode {
        CompositionMode::TwoUniform => Some(stream.next_uniform()),
        CompositionMode::DerivedXi2 => None,
    };
    Ok(compose_at(mix, theta, xi1, xi2))
}

/// Coupled composition pair: the same `(xi1, xi2)` (or just `xi1` in derived
/// mode) drives the draw at both parameters.
pub fn sample_composition_coupled(
    mix: &MixtureFamily,
    theta: f64,
    delta: f64,
    stream: &mut UniformStream,
    mode: CompositionMode,
) -> Result<CoupledPair> {
    check_theta(mix, theta - delta)?;
    check_theta(mix, theta + delta)?;
    let xi1 = stream.next_uniform();
    let xi2 = match mode {
        CompositionMode::TwoUniform => Some(stream.next_uniform()),
        CompositionMode::DerivedXi2 => None,
    };
    let x_minus = compose_at(mix, theta - delta, xi1, xi2);
    let x_plus = compose_at(mix, theta + delta, xi1, xi2);
    Ok(CoupledPair {
        x_minus,
        x_plus,
        equal: x_minus == x_plus,
    })
}

/// Component index selected by `xi1` at this theta.
#[inline]
pub fn select_component(mix: &MixtureFamily, theta: f64, xi1: f64) -> usize {
    for i in 0..mix.m() {
        if xi1 < mix.rho_at(theta, i + 1) {
            return i;
        }
    }
    mix.m() - 1
}

fn compose_at(mix: &MixtureFamily, theta: f64, xi1: f64, xi2: Option<f64>) -> f64 {
    let i = select_component(mix, theta, xi1);
    let position = match xi2 {
        Some(u) => u,
        None => {
            let p = mix.weight(theta, i);
            ((xi1 - mix.rho_at(theta, i)) / p).clamp(0.0, 1.0 - 1e-16)
        }
    };
    mix.components[i].inv_cdf(position)
}
