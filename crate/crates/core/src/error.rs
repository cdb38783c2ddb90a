use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("sequence too long: {len} tokens exceeds max_len {max_len}")]
    SequenceTooLong { len: usize, max_len: usize },

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("non-finite gradient")]
    NonFiniteGradient,

    #[error("parameter layout mismatch: expected {expected} values, got {actual}")]
    LayoutMismatch { expected: usize, actual: usize },

    #[error("enumeration guard exceeded: {count} sequences (limit {limit})")]
    EnumerationTooLarge { count: u128, limit: u128 },

    #[error("degenerate posterior: all question weights underflow to zero")]
    DegeneratePosterior,

    #[error("missing question for prompt kind {0}")]
    MissingQuestion(&'static str),

    #[error("unexpected question for prompt kind {0}")]
    UnexpectedQuestion(&'static str),

    #[error("missing gold question for instance with head {head:?}")]
    MissingGoldQuestion { head: String },

    #[error("empty candidate relation list")]
    NoCandidates,

    #[error("length mismatch: {left} predictions vs {right} golds")]
    LengthMismatch { left: usize, right: usize },

    #[error("cannot synthesize negatives: need at least 2 distinct relation types")]
    CannotSynthesizeNegatives,

    #[error("relation types overlap between splits: {0}")]
    RelationOverlap(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
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
