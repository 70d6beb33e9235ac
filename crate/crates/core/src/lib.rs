//! Linear stochastic bandits in the POFUL family (OFUL, LinTS, TS-Freq, Greedy)
//! together with a computable, geometry-aware bound on the uncertainty ratio
//! and the course-corrected TS-MR / Greedy-MR policies built on it.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: covariance state `V_t`, its inverse and spectrum, and the RLS estimate.
//! - [`confidence`]: confidence radii and ellipsoid membership.
//! - [`geometry`]: `α̂_t`, `μ̂_t`, the data-driven regret bound and the alignment proxy `ζ_t`.
//! - [`policies`]: pivot sampling, action selection and the MR switching rule.
//! - [`environments`]: synthetic and dataset-driven problem instances.
//! - [`harness`]: configuration, replicated runs, aggregation, emission and verification.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(test)]
#[macro_use]
mod test_util;

pub mod confidence;
pub mod dataset;
pub mod environments;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod policies;
pub mod rng;

pub use error::{Error, Result};
