use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the exploration library.
#[derive(Debug, Error)]
pub enum DseError {
    #[error("{path}: file not found")]
    NotFound { path: PathBuf },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("invalid {field}: {message}")]
    Invalid { field: String, message: String },

    #[error("unknown workload `{0}`")]
    UnknownWorkload(String),

    #[error("configuration infeasible: {}", .0.join(", "))]
    Infeasible(Vec<String>),

    #[error("missing baseline latency for workload `{0}`")]
    MissingBaseline(String),

    #[error("kernel matrix is not positive definite after jitter {jitter:e}")]
    SingularKernel { jitter: f64 },

    #[error("no transferable trials: {0}")]
    NoTransferableTrials(String),

    #[error("spec hash mismatch: log was written for {expected}, got {actual}")]
    SpecHashMismatch { expected: String, actual: String },

    #[error("exhaustive search: {0}")]
    Exhaustive(String),
}

impl DseError {
    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        DseError::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        DseError::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            DseError::NotFound { path }
        } else {
            DseError::Io { path, source }
        }
    }
}

pub type Result<T> = std::result::Result<T, DseError>;
