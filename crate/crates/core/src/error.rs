use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("no migration schedule for country {0}")]
    MissingSchedule(String),

    #[error("horizon error: {0}")]
    Horizon(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("singular normal equations: {0}")]
    Singular(String),

    #[error("non-finite log-density at chain {chain}, iteration {iter}: {state}")]
    NonFinite { chain: usize, iter: usize, state: String },

    #[error("corrupt posterior cache: {0}")]
    Cache(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable short label used in machine-readable CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::Dimension(_) => "dimension",
            Error::MissingSchedule(_) => "missing_schedule",
            Error::Horizon(_) => "horizon",
            Error::Config(_) => "config",
            Error::Singular(_) => "singular",
            Error::NonFinite { .. } => "non_finite",
            Error::Cache(_) => "cache",
        }
    }
}
