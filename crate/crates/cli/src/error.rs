use std::path::PathBuf;

use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] provlens_core::Error),
    #[error(transparent)]
    Detector(#[from] provlens_detector::Error),
    #[error("io error on {path}: {source}")]
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
    #[error("record {id}: {message}")]
    Record { id: String, message: String },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn kind(&self) -> String {
        match self {
            CliError::Core(e) => format!("core.{}", e.kind()),
            CliError::Detector(e) => format!("detector.{}", e.kind()),
            CliError::Io { .. } => "io".into(),
            CliError::Parse { .. } => "parse".into(),
            CliError::Record { .. } => "record".into(),
            CliError::Usage(_) => "usage".into(),
        }
    }

    /// The single-line JSON document written to stderr on failure.
    pub fn to_json(&self) -> String {
        json!({ "error": { "kind": self.kind(), "message": self.to_string() } }).to_string()
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn record(id: &str, e: impl std::fmt::Display) -> Self {
        CliError::Record {
            id: id.to_string(),
            message: e.to_string(),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
