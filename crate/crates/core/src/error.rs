use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the sampling library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed input at row {row}, column {column}: {message}")]
    MalformedInput {
        row: usize,
        column: usize,
        message: String,
    },

    /// A map or density produced a non-finite value. Carries the position
    /// where the failure was observed.
    #[error("numerical failure: {message} (at x = {position:?})")]
    NumericalFailure { message: String, position: Vec<f64> },

    #[error("degenerate kernel: {0}")]
    DegenerateKernel(String),

    #[error("window too small: {0}")]
    WindowTooSmall(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn numerical(msg: impl Into<String>, position: &[f64]) -> Self {
        Error::NumericalFailure {
            message: msg.into(),
            position: position.to_vec(),
        }
    }

    pub fn is_numerical_failure(&self) -> bool {
        matches!(self, Error::NumericalFailure { .. })
    }
}
