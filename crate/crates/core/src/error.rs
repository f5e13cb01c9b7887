use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the simulator, training stack or harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("map error: {0}")]
    Map(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("replay buffer not ready: holds {size} transitions, {requested} requested")]
    NotReady { size: usize, requested: usize },

    #[error("training diverged: {0}")]
    Training(String),

    #[error("bench error: {0}")]
    Bench(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
