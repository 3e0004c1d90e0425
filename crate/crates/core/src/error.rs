use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, ReidError>;

#[derive(Debug, Error)]
pub enum ReidError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl ReidError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ReidError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        ReidError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by the caller's input rather than the environment.
    pub fn is_usage(&self) -> bool {
        !matches!(self, ReidError::Io { .. } | ReidError::Numeric(_))
    }
}
