use thiserror::Error;

/// Errors produced by the library.
///
/// The CLI maps these onto exit codes: [`Error::NonFinite`] is a numerical
/// failure (exit 3); everything else is a data/model error (exit 2). Flag-level
/// usage errors never reach this type.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violates a documented precondition (bad dimension, empty
    /// input, out-of-range index, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two shapes that must agree do not (layer chaining, matrix products,
    /// dataset vs. model dimensions).
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A computation produced NaN or infinity where a finite value is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A conditional sampling stratum contains no rows.
    #[error("empty stratum: {0}")]
    EmptyStratum(String),

    /// A file could not be parsed; `line` is 1-based where known.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub(crate) fn non_finite(msg: impl Into<String>) -> Self {
        Error::NonFinite(msg.into())
    }
}
