use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the estimation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("empty cloud: no valid masked pixels")]
    EmptyCloud,
    #[error("empty render: object not visible from camera")]
    EmptyRender,
    #[error("insufficient correspondences: {0} pairs (need at least 3)")]
    InsufficientCorrespondences(usize),
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("divergence detected: {0}")]
    Divergence(String),
    #[error("no valid hypothesis")]
    NoValidHypothesis,
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
