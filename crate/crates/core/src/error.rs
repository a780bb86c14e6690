//! Crate-wide error type.
//!
//! Errors carry a coarse [`ErrorClass`] so callers (notably the CLI) can map
//! failures to stable exit codes without matching on every variant.

use thiserror::Error;

/// Coarse failure class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Invalid configuration or mismatched model/config dimensions.
    Config,
    /// Missing, malformed or invariant-violating input data.
    Data,
    /// Numerical failure (divergence, non-positive-definite system, ...).
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes do not agree. `context` names the operation and, when relevant,
    /// the offending layer.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing column `{0}` in CSV header")]
    MissingColumn(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// Non-finite values where finite ones are required (diverged training,
    /// failing oracle probes, ...).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Linear system could not be factorized (not positive definite /
    /// rank-deficient).
    #[error("factorization failure: {0}")]
    Factorization(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    fn shape(context: impl Into<String>, expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            expected: expected.into(),
            actual: actual.into(),
        }
    }

    /// Convenience constructor used throughout the numeric code.
    pub fn shape_mismatch(
        context: impl Into<String>,
        expected: impl Into<String>,
        actual: impl Into<String>,
    ) -> Self {
        Self::shape(context, expected, actual)
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::ShapeMismatch { .. } | Error::Config(_) => ErrorClass::Config,
            Error::MissingColumn(_) | Error::Data(_) | Error::Domain(_) | Error::Io(_) | Error::Serde(_) => {
                ErrorClass::Data
            }
            Error::Numeric(_) | Error::Factorization(_) => ErrorClass::Numeric,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
