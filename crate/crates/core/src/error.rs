use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the anchoring library.
///
/// `Validation` covers any input that breaks a documented contract (bad
/// shapes, out-of-range values, conflicting declarations). `Format` covers
/// files that cannot be decoded at all.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("format error in {context}: {message}")]
    Format { context: String, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn format(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input rather than the environment.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Validation(_) | Error::Format { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
