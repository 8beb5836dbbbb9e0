use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the library.
#[derive(Debug, Error)]
pub enum ArticError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate pose: real part has zero or non-finite norm")]
    DegeneratePose,

    #[error("parse error at {context}: {message}")]
    Parse { context: String, message: String },

    #[error("joint `{joint}` value {value} outside limits [{lo}, {hi}]")]
    OutOfRange {
        joint: String,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("empty observation: {0}")]
    EmptyObservation(String),

    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("config error: {0}")]
    Config(String),

    #[error("oracle requires 1-DOF chain: {0}")]
    NotAChain(String),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ArticError {
    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        ArticError::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            ArticError::FileNotFound(path)
        } else {
            ArticError::Io { path, source }
        }
    }
}

pub type Result<T, E = ArticError> = std::result::Result<T, E>;
