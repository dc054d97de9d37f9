use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        /// 1-based line number for text formats, byte offset for binary ones.
        line: u64,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("zero vectors cannot be indexed: {0:?}")]
    ZeroVectors(Vec<u64>),

    #[error("unknown sub-category '{0}'")]
    UnknownSubCategory(String),

    #[error("no sub-category mean for '{0}'")]
    MissingMean(String),

    #[error("unknown user '{0}'")]
    UnknownUser(String),

    #[error("unknown item {0}")]
    UnknownItem(u64),

    #[error("unknown ootd {0}")]
    UnknownOotd(u64),

    #[error("cold start: user '{0}' has no view/like history")]
    ColdStart(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Diverged {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("dependency cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),

    #[error("invalid config key '{key}': {message}")]
    Config { key: String, message: String },

    #[error("future-dated events relative to {now}: {detail}")]
    FutureEvents { now: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
