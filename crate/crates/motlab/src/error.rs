//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by any motlab module.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate box (zero-area): w={w}, h={h}")]
    DegenerateBox { w: f64, h: f64 },

    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),

    #[error("confidence {0} outside [0, 1]")]
    ConfidenceOutOfRange(f64),

    #[error("cost matrix entry at ({row}, {col}) is not finite")]
    NonFiniteCost { row: usize, col: usize },

    #[error("insufficient queries: {labels} labels but only {queries} queries")]
    InsufficientQueries { queries: usize, labels: usize },

    #[error("brute-force assignment limited to min dimension 8, got {0}")]
    BruteForceTooLarge(usize),

    #[error("matching index out of range: query {query} / label {label}")]
    MatchingIndexOutOfRange { query: usize, label: usize },

    #[error("duplicate identity {0} within one frame")]
    DuplicateIdentity(u64),

    #[error("identity {0} already bound to a live track")]
    IdentityAlreadyBound(u64),

    #[error("frame index {t} out of range (scenario has {frames} frames)")]
    FrameOutOfRange { t: usize, frames: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: malformed line: {reason}")]
    MalformedLine {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("truncated or empty training log")]
    TruncatedLog,

    #[error("prediction frames do not align with ground truth frames: {0}")]
    MisalignedFrames(String),

    #[error("non-finite gradient encountered (training diverged)")]
    NonFiniteGradient,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("log record parse error at line {line}: {source}")]
    LogParse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
