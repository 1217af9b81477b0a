use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the numerical substrate, the models and the loaders.
#[derive(Debug, Error)]
pub enum EdlaError {
    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown class label {0}")]
    UnknownLabel(usize),

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

pub type Result<T> = std::result::Result<T, EdlaError>;

impl EdlaError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        EdlaError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        EdlaError::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
