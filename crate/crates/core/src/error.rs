use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },

    #[error("block index {index} out of range for {n_blocks} blocks")]
    BlockIndex { index: usize, n_blocks: usize },

    #[error("unknown {kind} `{name}` (registered: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("construction failed: estimated tangential cone constant {gamma:.4} is not below 1/2")]
    NonlinearityTooStrong { gamma: f64 },

    #[error("iteration diverged at step {iteration}: {reason}")]
    Diverged { iteration: u64, reason: String },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("study cell (seed {seed}, delta {delta:e}) failed: {source}")]
    StudyCell {
        seed: u64,
        delta: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed array file: {0}")]
    ArrayFormat(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
