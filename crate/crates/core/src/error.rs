use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record in {file}: field `{field}`: {reason}")]
    MalformedRecord {
        file: PathBuf,
        field: String,
        reason: String,
    },

    #[error("record `{id}` has invalid shape: {reason}")]
    Shape { id: String, reason: String },

    #[error("grid geometry differs from the dataset configuration for records: {}", ids.join(", "))]
    GridMismatch { ids: Vec<String> },

    #[error("duplicate {what}: {value}")]
    Duplicate { what: &'static str, value: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no matching records for {0}")]
    NoMatch(String),

    #[error("layer {index} ({kind}): {reason}")]
    Layer {
        index: usize,
        kind: &'static str,
        reason: String,
    },

    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Diverged {
        epoch: usize,
        history: crate::neural::TrainingHistory,
    },

    #[error("linear algebra failure: {0}")]
    Numerical(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
