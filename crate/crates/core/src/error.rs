use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("trajectory `{0}` is not sorted by time")]
    UnsortedTrajectory(String),

    #[error("index is empty")]
    EmptyIndex,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },

    #[error("{rejected} of {total} rows contain non-finite fields (limit 0.1%)")]
    TooManyRejected { rejected: usize, total: usize },

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("result mismatch against the exhaustive scan: {0}")]
    Verification(String),

    #[error("no query had a non-empty context")]
    NoContext,

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
