use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid size must be even and at least 2 (got {0})")]
    InvalidGridSize(usize),

    #[error("grid size mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("noise kind mismatch: operation needs {expected} noise, spec has {found}")]
    NoiseKindMismatch {
        expected: &'static str,
        found: &'static str,
    },

    /// Configuration text could not be parsed or resolved.
    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: malformed file: {reason}", path.display())]
    Format { path: PathBuf, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// True for errors caused by user configuration rather than the run itself.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidGridSize(_)
                | Error::InvalidParameter { .. }
                | Error::NoiseKindMismatch { .. }
                | Error::Config(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
