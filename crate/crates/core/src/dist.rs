//! Theta-parameterized distribution families with an explicit piecewise CDF
//! layout (smooth pieces, flat stretches, jumps), the generalized inverse
//! built on that layout, and the analytic variance functionals `m1`..`m4`
//! that govern how coupled finite differences scale.

use crate::error::{Error, Result};
use crate::quad;
use crate::stats::{normal_cdf, normal_pdf, normal_quantile};

/// One piece of a CDF layout, in increasing-x order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segment {
    /// Discontinuity at `x`: CDF steps from `level_before` by `mass`.
    Jump { x: f64, level_before: f64, mass: f64 },
    /// CDF constant at `level` on `[left, right]`.
    Flat { left: f64, right: f64, level: f64 },
    /// CDF strictly increasing from `level_left` to `level_right` on
    /// `(left, right)`; `piece` indexes the family's smooth inverse.
    Smooth {
        left: f64,
        right: f64,
        piece: usize,
        level_left: f64,
        level_right: f64,
    },
}

const MAX_SEGMENTS: usize = 8;

/// Fixed-capacity segment list; layouts here are tiny and hot paths must not
/// allocate.
#[derive(Debug, Clone, Copy)]
pub struct SegmentList {
    items: [Segment; MAX_SEGMENTS],
    len: usize,
}

impl SegmentList {
    pub fn new() -> Self {
        Self {
            items: [Segment::Flat {
                left: 0.0,
                right: 0.0,
                level: 0.0,
            }; MAX_SEGMENTS],
            len: 0,
        }
    }

    pub fn push(&mut self, seg: Segment) {
        assert!(self.len < MAX_SEGMENTS, "segment list overflow");
        self.items[self.len] = seg;
        self.len += 1;
    }

    pub fn iter(&self) -> impl Iterator<Item = &Segment> {
        self.items[..self.len].iter()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

impl Default for SegmentList {
    fn default() -> Self {
        Self::new()
    }
}

/// A theta-indexed distribution family.
///
/// `cdf_raw` and friends assume `theta` is inside [`theta_domain`]; the
/// validated entry points are the free functions [`cdf`] and [`inv_cdf`].
pub trait ParamFamily {
    fn theta_domain(&self) -> (f64, f64);
    fn support(&self) -> (f64, f64);
    fn cdf_raw(&self, theta: f64, x: f64) -> f64;
    fn density(&self, theta: f64, x: f64) -> f64;
    fn d_cdf_dtheta(&self, theta: f64, x: f64) -> f64;
    /// Layout of the support at this theta, in increasing x order.
    fn segments(&self, theta: f64) -> SegmentList;
    /// Inverse of the CDF restricted to smooth piece `piece`.
    fn smooth_inverse(&self, theta: f64, piece: usize, u: f64) -> f64;

    /// Upper bound on the density over the whole theta domain, when the
    /// support is bounded. `None` marks the family as not rejection-capable.
    fn density_bound(&self) -> Option<f64> {
        None
    }

    /// d/dtheta of the density, central difference unless overridden.
    fn d_density_dtheta(&self, theta: f64, x: f64) -> f64 {
        let h = 1e-6;
        (self.density(theta + h, x) - self.density(theta - h, x)) / (2.0 * h)
    }

    /// Total derivative d/dtheta of the CDF level of flat block `flat_index`
    /// (counting flats in layout order). Analytic where the family has it.
    fn d_flat_level_dtheta(&self, _theta: f64, _flat_index: usize) -> Option<f64> {
        None
    }

    fn contains_theta(&self, theta: f64) -> bool {
        let (lo, hi) = self.theta_domain();
        theta >= lo && theta <= hi
    }
}

fn check_theta<F: ParamFamily + ?Sized>(family: &F, theta: f64) -> Result<()> {
    if family.contains_theta(theta) {
        Ok(())
    } else {
        let (lo, hi) = family.theta_domain();
        Err(Error::ThetaOutOfDomain { theta, lo, hi })
    }
}

/// CDF value, clamped to `[0, 1]`.
pub fn cdf<F: ParamFamily + ?Sized>(family: &F, theta: f64, x: f64) -> Result<f64> {
    check_theta(family, theta)?;
    Ok(family.cdf_raw(theta, x).clamp(0.0, 1.0))
}

/// Generalized inverse CDF, `inf { x : F(theta, x) > u }`.
///
/// Walks the segment layout: a jump absorbs the whole band of levels it
/// spans, a flat maps its exact level to its right endpoint, and anything
/// else lands in a smooth piece.
pub fn inv_cdf<F: ParamFamily + ?Sized>(family: &F, theta: f64, u: f64) -> Result<f64> {
    check_theta(family, theta)?;
    if !(0.0..1.0).contains(&u) {
        return Err(Error::UniformOutOfRange { u });
    }
    Ok(generalized_inverse(family, theta, u))
}

pub(crate) fn generalized_inverse<F: ParamFamily + ?Sized>(family: &F, theta: f64, u: f64) -> f64 {
    let segs = family.segments(theta);
    for seg in segs.iter() {
        match *seg {
            Segment::Jump { x, level_before, mass } => {
                if u < level_before + mass {
                    return x;
                }
            }
            Segment::Flat { right, level, .. } => {
                if u <= level {
                    return right;
                }
            }
            Segment::Smooth {
                piece, level_right, ..
            } => {
                if u < level_right {
                    return family.smooth_inverse(theta, piece, u);
                }
            }
        }
    }
    family.support().1
}

// ---------------------------------------------------------------------------
// Loss functions
// ---------------------------------------------------------------------------

/// Loss applied to a sampled value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Loss {
    Identity,
    Constant(f64),
    /// `(x - center)^2`
    Power2 { center: f64 },
    /// `(x - center)^4`
    Power4 { center: f64 },
}

impl Loss {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Loss::Identity => x,
            Loss::Constant(v) => v,
            Loss::Power2 { center } => {
                let d = x - center;
                d * d
            }
            Loss::Power4 { center } => {
                let d = x - center;
                let d2 = d * d;
                d2 * d2
            }
        }
    }

    /// Bound on |L'| over the interval, used as estimator metadata.
    pub fn derivative_bound(&self, support: (f64, f64)) -> f64 {
        let (a, b) = support;
        let reach = |c: f64| (a - c).abs().max((b - c).abs());
        match *self {
            Loss::Identity => 1.0,
            Loss::Constant(_) => 0.0,
            Loss::Power2 { center } => 2.0 * reach(center),
            Loss::Power4 { center } => 4.0 * reach(center).powi(3),
        }
    }
}

// ---------------------------------------------------------------------------
// Concrete families
// ---------------------------------------------------------------------------

/// Triangular distribution on `[0, 1]` with mode `theta`.
///
/// `F(theta, x) = x^2/theta` below the mode, `1 - (1-x)^2/(1-theta)` above.
/// Strictly increasing, no flats, density bounded by 2.
#[derive(Debug, Clone, Copy)]
pub struct TriangularMode;

impl ParamFamily for TriangularMode {
    fn theta_domain(&self) -> (f64, f64) {
        (1e-3, 1.0 - 1e-3)
    }

    fn support(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn cdf_raw(&self, theta: f64, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x <= theta {
            x * x / theta
        } else if x < 1.0 {
            1.0 - (1.0 - x) * (1.0 - x) / (1.0 - theta)
        } else {
            1.0
        }
    }

    fn density(&self, theta: f64, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            0.0
        } else if x <= theta {
            2.0 * x / theta
        } else {
            2.0 * (1.0 - x) / (1.0 - theta)
        }
    }

    fn d_cdf_dtheta(&self, theta: f64, x: f64) -> f64 {
        if x <= 0.0 || x >= 1.0 {
            0.0
        } else if x <= theta {
            -x * x / (theta * theta)
        } else {
            -(1.0 - x) * (1.0 - x) / ((1.0 - theta) * (1.0 - theta))
        }
    }

    fn d_density_dtheta(&self, theta: f64, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            0.0
        } else if x <= theta {
            -2.0 * x / (theta * theta)
        } else {
            2.0 * (1.0 - x) / ((1.0 - theta) * (1.0 - theta))
        }
    }

    fn segments(&self, theta: f64) -> SegmentList {
        let mut s = SegmentList::new();
        s.push(Segment::Smooth {
            left: 0.0,
            right: theta,
            piece: 0,
            level_left: 0.0,
            level_right: theta,
        });
        s.push(Segment::Smooth {
            left: theta,
            right: 1.0,
            piece: 1,
            level_left: theta,
            level_right: 1.0,
        });
        s
    }

    fn smooth_inverse(&self, theta: f64, piece: usize, u: f64) -> f64 {
        if piece == 0 {
            (u * theta).sqrt()
        } else {
            1.0 - ((1.0 - u) * (1.0 - theta)).sqrt()
        }
    }

    fn density_bound(&self) -> Option<f64> {
        Some(2.0)
    }
}

/// Location family `X = theta + Z`, `Z` standard normal.
#[derive(Debug, Clone, Copy)]
pub struct NormalLocation;

impl ParamFamily for NormalLocation {
    fn theta_domain(&self) -> (f64, f64) {
        (-1.0e12, 1.0e12)
    }

    fn support(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn cdf_raw(&self, theta: f64, x: f64) -> f64 {
        normal_cdf(x - theta)
    }

    fn density(&self, theta: f64, x: f64) -> f64 {
        normal_pdf(x - theta)
    }

    fn d_cdf_dtheta(&self, theta: f64, x: f64) -> f64 {
        -normal_pdf(x - theta)
    }

    fn d_density_dtheta(&self, theta: f64, x: f64) -> f64 {
        let z = x - theta;
        z * normal_pdf(z)
    }

    fn segments(&self, _theta: f64) -> SegmentList {
        let mut s = SegmentList::new();
        s.push(Segment::Smooth {
            left: f64::NEG_INFINITY,
            right: f64::INFINITY,
            piece: 0,
            level_left: 0.0,
            level_right: 1.0,
        });
        s
    }

    fn smooth_inverse(&self, theta: f64, _piece: usize, u: f64) -> f64 {
        theta + normal_quantile(u.max(1e-308))
    }
}

/// Family on `[0, 2]` with a flat CDF stretch whose level moves with theta:
/// density 1/2 on `[0, theta]`, no mass on `(theta, 1)`, the rest on `[1, 2]`.
///
/// The flat makes the coupled-inversion difference jump across `[theta, 1]`
/// with probability proportional to delta, so its variance functional
/// `m1(theta) = (1 - theta)^2` is strictly positive.
#[derive(Debug, Clone, Copy)]
pub struct AtomFlat;

impl AtomFlat {
    /// Closed-form m1 for the identity loss.
    pub fn m1_identity(theta: f64) -> f64 {
        (1.0 - theta) * (1.0 - theta)
    }
}

impl ParamFamily for AtomFlat {
    fn theta_domain(&self) -> (f64, f64) {
        (0.05, 0.95)
    }

    fn support(&self) -> (f64, f64) {
        (0.0, 2.0)
    }

    fn cdf_raw(&self, theta: f64, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x < theta {
            x / 2.0
        } else if x <= 1.0 {
            theta / 2.0
        } else if x < 2.0 {
            theta / 2.0 + (1.0 - theta / 2.0) * (x - 1.0)
        } else {
            1.0
        }
    }

    fn density(&self, theta: f64, x: f64) -> f64 {
        if (0.0..theta).contains(&x) {
            0.5
        } else if (1.0..=2.0).contains(&x) {
            1.0 - theta / 2.0
        } else {
            0.0
        }
    }

    fn d_cdf_dtheta(&self, theta: f64, x: f64) -> f64 {
        if x <= 0.0 || x >= 2.0 || x < theta {
            0.0
        } else if x <= 1.0 {
            0.5
        } else {
            (2.0 - x) / 2.0
        }
    }

    fn d_density_dtheta(&self, _theta: f64, x: f64) -> f64 {
        if (1.0..=2.0).contains(&x) {
            -0.5
        } else {
            0.0
        }
    }

    fn segments(&self, theta: f64) -> SegmentList {
        let mut s = SegmentList::new();
        s.push(Segment::Smooth {
            left: 0.0,
            right: theta,
            piece: 0,
            level_left: 0.0,
            level_right: theta / 2.0,
        });
        s.push(Segment::Flat {
            left: theta,
            right: 1.0,
            level: theta / 2.0,
        });
        s.push(Segment::Smooth {
            left: 1.0,
            right: 2.0,
            piece: 1,
            level_left: theta / 2.0,
            level_right: 1.0,
        });
        s
    }

    fn smooth_inverse(&self, theta: f64, piece: usize, u: f64) -> f64 {
        if piece == 0 {
            2.0 * u
        } else {
            1.0 + (u - theta / 2.0) / (1.0 - theta / 2.0)
        }
    }

    fn density_bound(&self) -> Option<f64> {
        Some(1.0)
    }

    fn d_flat_level_dtheta(&self, _theta: f64, flat_index: usize) -> Option<f64> {
        if flat_index == 0 {
            Some(0.5)
        } else {
            None
        }
    }
}

// ---------------------------------------------------------------------------
// Mixtures
// ---------------------------------------------------------------------------

/// A theta-independent mixture component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Component {
    Uniform { lo: f64, hi: f64 },
    ExponentialMean { mean: f64 },
}

impl Component {
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Component::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            Component::ExponentialMean { mean } => {
                if x <= 0.0 {
                    0.0
                } else {
                    1.0 - (-x / mean).exp()
                }
            }
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        match *self {
            Component::Uniform { lo, hi } => {
                if x >= lo && x <= hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Component::ExponentialMean { mean } => {
                if x < 0.0 {
                    0.0
                } else {
                    (-x / mean).exp() / mean
                }
            }
        }
    }

    pub fn inv_cdf(&self, u: f64) -> f64 {
        match *self {
            Component::Uniform { lo, hi } => lo + u * (hi - lo),
            Component::ExponentialMean { mean } => -mean * (1.0 - u).ln(),
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            Component::Uniform { lo, hi } => (lo, hi),
            Component::ExponentialMean { .. } => (0.0, f64::INFINITY),
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.support().1.is_finite()
    }
}

/// How the mixture weights depend on theta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightRule {
    /// Single component, weight 1.
    Single,
    /// Two components with weights `(theta, 1 - theta)`.
    FirstLinear,
    /// Two components with theta-independent weights `(p, 1 - p)`.
    Fixed(f64),
}

/// Finite mixture `F(theta, x) = sum_i p_i(theta) F_i(x)` with ordered,
/// non-overlapping component supports.
#[derive(Debug, Clone)]
pub struct MixtureFamily {
    pub components: Vec<Component>,
    pub weight_rule: WeightRule,
    pub theta_lo: f64,
    pub theta_hi: f64,
}

impl MixtureFamily {
    pub fn new(components: Vec<Component>, weight_rule: WeightRule, theta_lo: f64, theta_hi: f64) -> Self {
        match weight_rule {
            WeightRule::Single => assert_eq!(components.len(), 1),
            WeightRule::FirstLinear | WeightRule::Fixed(_) => assert_eq!(components.len(), 2),
        }
        Self {
            components,
            weight_rule,
            theta_lo,
            theta_hi,
        }
    }

    pub fn m(&self) -> usize {
        self.components.len()
    }

    /// Weight of component `i` at this theta.
    #[inline]
    pub fn weight(&self, theta: f64, i: usize) -> f64 {
        match self.weight_rule {
            WeightRule::Single => 1.0,
            WeightRule::FirstLinear => {
                if i == 0 {
                    theta
                } else {
                    1.0 - theta
                }
            }
            WeightRule::Fixed(p) => {
                if i == 0 {
                    p
                } else {
                    1.0 - p
                }
            }
        }
    }

    #[inline]
    pub fn d_weight(&self, i: usize) -> f64 {
        match self.weight_rule {
            WeightRule::Single | WeightRule::Fixed(_) => 0.0,
            WeightRule::FirstLinear => {
                if i == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    /// Cumulative weight `rho_i` (total mass of components below `i`).
    #[inline]
    pub fn rho_at(&self, theta: f64, i: usize) -> f64 {
        if i == 0 {
            return 0.0;
        }
        if i >= self.m() {
            return 1.0;
        }
        let mut acc = 0.0;
        for j in 0..i {
            acc += self.weight(theta, j);
        }
        acc
    }

    #[inline]
    pub fn d_rho_at(&self, i: usize) -> f64 {
        if i == 0 || i >= self.m() {
            return 0.0;
        }
        let mut acc = 0.0;
        for j in 0..i {
            acc += self.d_weight(j);
        }
        acc
    }

    pub fn weights(&self, theta: f64) -> Vec<f64> {
        (0..self.m()).map(|i| self.weight(theta, i)).collect()
    }

    /// Cumulative weights `rho_0 = 0, ..., rho_m = 1`.
    pub fn rho(&self, theta: f64) -> Vec<f64> {
        (0..=self.m()).map(|i| self.rho_at(theta, i)).collect()
    }

    pub fn d_rho(&self, _theta: f64) -> Vec<f64> {
        (0..=self.m()).map(|i| self.d_rho_at(i)).collect()
    }
}

impl ParamFamily for MixtureFamily {
    fn theta_domain(&self) -> (f64, f64) {
        (self.theta_lo, self.theta_hi)
    }

    fn support(&self) -> (f64, f64) {
        let lo = self.components.first().unwrap().support().0;
        let hi = self.components.last().unwrap().support().1;
        (lo, hi)
    }

    fn cdf_raw(&self, theta: f64, x: f64) -> f64 {
        self.components
            .iter()
            .enumerate()
            .map(|(i, c)| self.weight(theta, i) * c.cdf(x))
            .sum()
    }

    fn density(&self, theta: f64, x: f64) -> f64 {
        self.components
            .iter()
            .enumerate()
            .map(|(i, c)| self.weight(theta, i) * c.density(x))
            .sum()
    }

    fn d_cdf_dtheta(&self, _theta: f64, x: f64) -> f64 {
        self.components
            .iter()
            .enumerate()
            .map(|(i, c)| self.d_weight(i) * c.cdf(x))
            .sum()
    }

    fn d_density_dtheta(&self, _theta: f64, x: f64) -> f64 {
        self.components
            .iter()
            .enumerate()
            .map(|(i, c)| self.d_weight(i) * c.density(x))
            .sum()
    }

    fn segments(&self, theta: f64) -> SegmentList {
        let mut s = SegmentList::new();
        for (i, comp) in self.components.iter().enumerate() {
            let (lo, hi) = comp.support();
            s.push(Segment::Smooth {
                left: lo,
                right: hi,
                piece: i,
                level_left: self.rho_at(theta, i),
                level_right: self.rho_at(theta, i + 1),
            });
            if let Some(next) = self.components.get(i + 1) {
                let next_lo = next.support().0;
                if next_lo > hi {
                    s.push(Segment::Flat {
                        left: hi,
                        right: next_lo,
                        level: self.rho_at(theta, i + 1),
                    });
                }
            }
        }
        s
    }

    fn smooth_inverse(&self, theta: f64, piece: usize, u: f64) -> f64 {
        let p = self.weight(theta, piece);
        let xi = ((u - self.rho_at(theta, piece)) / p).clamp(0.0, 1.0 - 1e-16);
        self.components[piece].inv_cdf(xi)
    }

    fn density_bound(&self) -> Option<f64> {
        if !self.components.iter().all(|c| c.is_bounded()) {
            return None;
        }
        // sup over the theta domain of each component's contribution
        let sup_weight = |i: usize| -> f64 {
            match self.weight_rule {
                WeightRule::Single => 1.0,
                WeightRule::FirstLinear => {
                    if i == 0 {
                        self.theta_hi
                    } else {
                        1.0 - self.theta_lo
                    }
                }
                WeightRule::Fixed(p) => {
                    if i == 0 {
                        p
                    } else {
                        1.0 - p
                    }
                }
            }
        };
        let mut bound: f64 = 0.0;
        for (i, c) in self.components.iter().enumerate() {
            let (lo, hi) = c.support();
            bound = bound.max(sup_weight(i) / (hi - lo));
        }
        Some(bound)
    }

    fn d_flat_level_dtheta(&self, _theta: f64, flat_index: usize) -> Option<f64> {
        // Flat k sits after component k (only between gapped components).
        let mut seen = 0;
        for (i, comp) in self.components.iter().enumerate() {
            if let Some(next) = self.components.get(i + 1) {
                if next.support().0 > comp.support().1 {
                    if seen == flat_index {
                        return Some(self.d_rho_at(i + 1));
                    }
                    seen += 1;
                }
            }
        }
        None
    }
}

// ---------------------------------------------------------------------------
// Variance functionals m1..m4
// ---------------------------------------------------------------------------

/// Flat-block functional: `2 * sum_i (L(c_i) - L(b_i))^2 |dF(theta, c_i)/dtheta|`
/// over the flat stretches of the layout. Zero when the CDF is strictly
/// increasing.
pub fn m1<F: ParamFamily + ?Sized>(family: &F, loss: &Loss, theta: f64) -> Result<f64> {
    check_theta(family, theta)?;
    let segs = family.segments(theta);
    let mut total = 0.0;
    let mut flat_index = 0;
    for seg in segs.iter() {
        if let Segment::Flat { left, right, .. } = *seg {
            if right > left {
                let dlevel = family
                    .d_flat_level_dtheta(theta, flat_index)
                    .unwrap_or_else(|| central_flat_level_derivative(family, theta, flat_index));
                let dl = loss.eval(right) - loss.eval(left);
                total += 2.0 * dl * dl * dlevel.abs();
            }
            flat_index += 1;
        }
    }
    Ok(total)
}

fn central_flat_level_derivative<F: ParamFamily + ?Sized>(
    family: &F,
    theta: f64,
    flat_index: usize,
) -> f64 {
    let h = 1e-6;
    let level_at = |t: f64| -> f64 {
        let mut seen = 0;
        for seg in family.segments(t).iter() {
            if let Segment::Flat { level, .. } = *seg {
                if seen == flat_index {
                    return level;
                }
                seen += 1;
            }
        }
        f64::NAN
    };
    (level_at(theta + h) - level_at(theta - h)) / (2.0 * h)
}

/// Rejection-coupling functional
/// `Var[L(X)] / (2 c (b - a)) * integral |d f / d theta| dx`
/// for a family with bounded support and density bound `c`.
pub fn m2<F: ParamFamily + ?Sized>(
    family: &F,
    loss: &Loss,
    theta: f64,
    density_bound_c: f64,
) -> Result<f64> {
    check_theta(family, theta)?;
    let (a, b) = family.support();
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::UnsupportedFamily(
            "m2 requires a bounded support interval",
        ));
    }
    let var = loss_variance(family, loss, theta);
    let cuts = segment_cuts(family, theta);
    let total_abs_ddensity = quad::integrate_segmented(
        |x| family.d_density_dtheta(theta, x).abs(),
        a,
        b,
        &cuts,
        1e-8,
    );
    Ok(var * total_abs_ddensity / (2.0 * density_bound_c * (b - a)))
}

/// Expectation of `g(X)` under the family at `theta`, by segmented quadrature
/// plus any point masses.
pub fn expect<F: ParamFamily + ?Sized, G: Fn(f64) -> f64>(family: &F, theta: f64, g: G) -> f64 {
    let segs = family.segments(theta);
    let mut total = 0.0;
    for seg in segs.iter() {
        match *seg {
            Segment::Jump { x, mass, .. } => total += g(x) * mass,
            Segment::Flat { .. } => {}
            Segment::Smooth { left, right, .. } => {
                let (lo, hi) = clip_infinite(left, right);
                total += quad::integrate(|x| g(x) * family.density(theta, x), lo, hi, 1e-9);
            }
        }
    }
    total
}

fn clip_infinite(left: f64, right: f64) -> (f64, f64) {
    // Normal-location tails beyond 10 sigma carry ~1e-23 mass.
    let lo = if left.is_finite() { left } else { right.min(0.0) - 12.0 };
    let hi = if right.is_finite() { right } else { left.max(0.0) + 12.0 };
    (lo, hi)
}

/// Variance of `L(X(theta))` by quadrature.
pub fn loss_variance<F: ParamFamily + ?Sized>(family: &F, loss: &Loss, theta: f64) -> f64 {
    let mean = expect(family, theta, |x| loss.eval(x));
    let second = expect(family, theta, |x| {
        let l = loss.eval(x);
        l * l
    });
    (second - mean * mean).max(0.0)
}

fn segment_cuts<F: ParamFamily + ?Sized>(family: &F, theta: f64) -> Vec<f64> {
    let mut cuts = Vec::new();
    for seg in family.segments(theta).iter() {
        match *seg {
            Segment::Jump { x, .. } => cuts.push(x),
            Segment::Flat { left, right, .. } => {
                cuts.push(left);
                cuts.push(right);
            }
            Segment::Smooth { left, right, .. } => {
                if left.is_finite() {
                    cuts.push(left);
                }
                if right.is_finite() {
                    cuts.push(right);
                }
            }
        }
    }
    cuts
}

/// Composition functional for independent selector/position uniforms:
/// `sum_i E[(L(F_{i+1}^{-1}(xi)) - L(F_i^{-1}(xi)))^2] |rho_i'(theta)|`.
pub fn m3(mix: &MixtureFamily, loss: &Loss, theta: f64) -> Result<f64> {
    check_theta(mix, theta)?;
    let d_rho = mix.d_rho(theta);
    let m = mix.m();
    let mut total = 0.0;
    for i in 0..m.saturating_sub(1) {
        let w = d_rho[i + 1].abs();
        if w == 0.0 {
            continue;
        }
        let a = &mix.components[i];
        let b = &mix.components[i + 1];
        let e = quad::integrate(
            |xi| {
                let d = loss.eval(b.inv_cdf(xi)) - loss.eval(a.inv_cdf(xi));
                d * d
            },
            0.0,
            1.0 - 1e-12,
            1e-8,
        );
        total += e * w;
    }
    Ok(total)
}

/// Composition functional for the derived position uniform:
/// `sum_i [L(F_{i+1}^{-1}(1^-)) - L(F_i^{-1}(0^+))]^2 |rho_i'(theta)|`.
pub fn m4(mix: &MixtureFamily, loss: &Loss, theta: f64) -> Result<f64> {
    check_theta(mix, theta)?;
    if !mix.components.iter().all(|c| c.is_bounded()) {
        return Err(Error::UnsupportedFamily(
            "m4 requires bounded component supports",
        ));
    }
    let d_rho = mix.d_rho(theta);
    let m = mix.m();
    let mut total = 0.0;
    for i in 0..m.saturating_sub(1) {
        let w = d_rho[i + 1].abs();
        if w == 0.0 {
            continue;
        }
        let top = mix.components[i + 1].support().1;
        let bottom = mix.components[i].support().0;
        let d = loss.eval(top) - loss.eval(bottom);
        total += d * d * w;
    }
    Ok(total)
}

/// Checks the strictly-increasing regime: no flats, no jumps, and the
/// smoothness integral `int (dF/dtheta)^2 dx` finite.
pub fn smooth_inversion_regime<F: ParamFamily + ?Sized>(family: &F, theta: f64) -> Result<bool> {
    check_theta(family, theta)?;
    for seg in family.segments(theta).iter() {
        match *seg {
            Segment::Jump { mass, .. } if mass > 0.0 => return Ok(false),
            Segment::Flat { left, right, .. } if right > left => return Ok(false),
            _ => {}
        }
    }
    let (a, b) = family.support();
    let (lo, hi) = clip_infinite(a, b);
    let cuts = segment_cuts(family, theta);
    let integral = quad::integrate_segmented(
        |x| {
            let d = family.d_cdf_dtheta(theta, x);
            d * d
        },
        lo,
        hi,
        &cuts,
        1e-6,
    );
    Ok(integral.is_finite())
}
