use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the estimation, simulation and evaluation routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a documented precondition (shape, finiteness, symmetry).
    #[error("validation error: {0}")]
    Validation(String),

    /// A requested size is out of range for the data it applies to.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// An iterative or factorization routine failed.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Input is well formed but carries no usable information (zero spectrum,
    /// constant slice, all-zero peak).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed text input; `line` is 1-based.
    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }
}
