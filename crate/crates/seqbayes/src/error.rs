//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by construction and inference operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("space mismatch in {context}: {left} vs {right}")]
    SpaceMismatch {
        context: &'static str,
        left: String,
        right: String,
    },

    #[error("unknown label `{label}` in space {{{space}}}")]
    UnknownLabel { label: String, space: String },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("matrix not positive definite within jitter: {0}")]
    NotPositiveDefinite(String),

    #[error(
        "inconsistent deterministic observation: predicted {predicted}, observed {observed}"
    )]
    InconsistentObservation { predicted: f64, observed: f64 },

    #[error("unsupported base measure: {0}")]
    UnsupportedBase(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
