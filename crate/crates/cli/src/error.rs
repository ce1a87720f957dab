use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Missing(String),

    #[error(transparent)]
    Core(#[from] dmsclass::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 for bad input or configuration, 2 for anything that could not be
    /// read or written.
    pub fn exit_code(&self) -> u8 {
        use dmsclass::Error as E;
        match self {
            CliError::Io { .. } | CliError::Missing(_) => 2,
            CliError::Core(E::Io { .. } | E::MalformedRecord { .. } | E::Shape { .. } | E::GridMismatch { .. }) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
