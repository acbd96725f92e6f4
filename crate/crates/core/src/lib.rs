//! Core library of the stochastic-approximation laboratory.
//!
//! The pieces, bottom to top:
//!
//! - [`prng`]: splittable, reproducible uniform streams (xoshiro256++).
//! - [`dist`]: theta-indexed distribution families with piecewise CDF
//!   layouts, generalized inverses, and the variance functionals `m1`..`m4`.
//! - [`sampling`]: inversion, rejection, and composition samplers plus their
//!   common-random-number coupled variants.
//! - [`gradest`]: finite-difference derivative estimators and bias/variance
//!   exponent probes.
//! - [`optimize`]: Kiefer-Wolfowitz, Robbins-Monro, and mirror-descent runs,
//!   rate predictors, and the mirror-descent error bound.
//! - [`problems`]: concrete test problems with known ground truth, including
//!   a single-server FIFO queue driven by the Lindley recursion.
//! - [`rates`]: replicated-experiment harness, log-log slope fits, and the
//!   convergence-rate verdict suite.

pub mod dist;
pub mod error;
pub mod gradest;
pub mod optimize;
pub mod prng;
pub mod problems;
pub mod quad;
pub mod rates;
pub mod sampling;
pub mod stats;

pub use error::{Error, Result};
