use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("data integrity: {0}")]
    DataIntegrity(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("window ordering: expected window_index {expected}, got {got}")]
    Ordering { expected: u64, got: u64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("backend: {0}")]
    Backend(String),

    #[error("plan rejected: {0}")]
    PlanRejected(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used by the CLI error object.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DataIntegrity(_) => "data_integrity",
            Error::Config(_) => "config",
            Error::Ordering { .. } => "ordering",
            Error::Parse { .. } => "parse",
            Error::Backend(_) => "backend",
            Error::PlanRejected(_) => "plan_rejected",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
