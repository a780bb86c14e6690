// Validation code spells positivity checks as `!(x > 0.0)` on purpose: the
// negated form also rejects NaN. The linalg kernels index with plain loops
// because they transcribe textbook algorithms row by row.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

//! Uncertainty-aware prediction of creep rupture life.
//!
//! The crate trains a conditional neural process episodically over
//! per-cast-code tasks and compares it against Larson-Miller polynomial
//! fits, exact Gaussian-process regression, and a pooled pretrained
//! network, under a shared evaluation protocol (absolute error, mean
//! log-likelihood, 95% interval coverage, R^2).

pub mod baselines;
pub mod cnp;
pub mod data;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod nn;
pub mod rng;

pub use error::{Error, ErrorClass, Result};
