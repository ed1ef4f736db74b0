use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
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

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty dataset after filtering")]
    EmptyAfterFiltering,

    #[error("user {user} has {count} rating(s); at least 2 are needed to split")]
    TooFewRatings { user: usize, count: usize },

    #[error("{0}")]
    Metric(String),

    #[error("non-finite objective at iteration {iteration}{}", if *.overflow { " (exponential surrogate overflow)" } else { "" })]
    NonFiniteObjective { iteration: usize, overflow: bool },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}
