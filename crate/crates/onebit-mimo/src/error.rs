//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// A matrix required to be positive semidefinite has an eigenvalue below
    /// the clamping threshold.
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e}, threshold {threshold:.3e})")]
    NotPsd {
        min_eigenvalue: f64,
        threshold: f64,
    },

    /// A Hermitian solve failed because the matrix is not positive definite.
    #[error("matrix is singular or not positive definite")]
    SingularMatrix,

    /// Operand shapes are inconsistent.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An input fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Spatial correlation magnitude outside [0, 1).
    #[error("invalid correlation magnitude {0}; expected 0 <= r < 1")]
    InvalidCorrelation(f64),

    /// More users than pilot symbols.
    #[error("{users} users exceed pilot length {pilot_len}")]
    TooManyUsers { users: usize, pilot_len: usize },

    /// Channel-estimate matrix is (numerically) rank deficient.
    #[error("matrix is rank deficient")]
    RankDeficient,

    /// Invalid experiment configuration.
    #[error("config error in field `{field}`: {message}")]
    Config { field: String, message: String },

    /// Result table was empty or otherwise unwritable.
    #[error("empty results table; nothing to write")]
    EmptyTable,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn dim(message: impl Into<String>) -> Self {
        Error::DimensionMismatch(message.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
