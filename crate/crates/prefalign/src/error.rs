use std::path::PathBuf;

use prefalign_core::CoreError;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("empty prompt")]
    EmptyPrompt,
    #[error("empty text")]
    EmptyText,
    #[error("n_completions must be at least 1")]
    NoCompletions,
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("missing API key: set {0}")]
    MissingKey(&'static str),
    #[error(transparent)]
    Core(#[from] CoreError),
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("schema version {found} not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("could not reach {target} {what} after {rounds} rounds (have {have})")]
    CannotReachTarget {
        what: &'static str,
        target: usize,
        have: usize,
        rounds: usize,
    },
    #[error("plot: {0}")]
    Plot(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
