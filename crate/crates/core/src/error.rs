use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = FedError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FedError {
    /// A configuration value violates its constraint.
    #[error("config error: `{key}` {constraint}")]
    Config { key: String, constraint: String },

    #[error("shape error: {0}")]
    Shape(String),

    /// The round protocol was violated (e.g. no updates to aggregate).
    #[error("protocol error: {0}")]
    Protocol(String),

    /// `origin` names the producer, e.g. "client 3" or "server".
    #[error("numeric error in round {round}, {origin}: {detail}")]
    Numeric {
        round: usize,
        origin: String,
        detail: String,
    },

    #[error("ingestion error in {}: {detail}", path.display())]
    Ingestion { path: PathBuf, detail: String },

    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl FedError {
    pub fn config(key: impl Into<String>, constraint: impl Into<String>) -> Self {
        FedError::Config {
            key: key.into(),
            constraint: constraint.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FedError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that stem from bad user input rather than a failed run.
    pub fn is_config(&self) -> bool {
        matches!(self, FedError::Config { .. })
    }
}
