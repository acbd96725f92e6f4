use std::fmt;

/// Errors surfaced by samplers, estimators, and runs.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Parameter outside the family's theta domain.
    ThetaOutOfDomain { theta: f64, lo: f64, hi: f64 },
    /// Inverse-CDF argument outside `[0, 1)`.
    UniformOutOfRange { u: f64 },
    /// The family cannot serve the requested operation (e.g. rejection
    /// sampling on unbounded support).
    UnsupportedFamily(&'static str),
    /// Generalized rejection caught the target density above its envelope.
    EnvelopeViolation { x: f64, density: f64, bound: f64 },
    /// Rejection sampling exceeded the proposal-round cutoff.
    RejectionDivergence { rounds: u64 },
    /// An iterate produced a non-finite derivative estimate.
    NonFiniteEstimate { iteration: usize },
    /// Invalid numeric configuration (step sizes, exponents, counts).
    InvalidParameter(String),
    /// Log-log fit could not proceed (too few points, nonpositive values).
    FitError(String),
    /// Queue utilization reaches or exceeds one somewhere on the domain.
    UnstableQueue { theta: f64, utilization: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ThetaOutOfDomain { theta, lo, hi } => {
                write!(f, "theta {theta} outside domain [{lo}, {hi}]")
            }
            Error::UniformOutOfRange { u } => write!(f, "uniform argument {u} outside [0,1)"),
            Error::UnsupportedFamily(what) => write!(f, "unsupported family: {what}"),
            Error::EnvelopeViolation { x, density, bound } => write!(
                f,
                "envelope violated at x={x}: density {density} > bound {bound}"
            ),
            Error::RejectionDivergence { rounds } => {
                write!(f, "rejection sampling gave up after {rounds} rounds")
            }
            Error::NonFiniteEstimate { iteration } => {
                write!(f, "non-finite derivative estimate at iteration {iteration}")
            }
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::FitError(msg) => write!(f, "fit error: {msg}"),
            Error::UnstableQueue { theta, utilization } => {
                write!(f, "queue unstable at theta={theta}: utilization {utilization} >= 1")
            }
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
