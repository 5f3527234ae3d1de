use thiserror::Error;

pub type Result<T> = std::result::Result<T, PalError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PalError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("index {index} out of range for size {bound}")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("row {row} has no label")]
    UnlabeledRow { row: usize },

    #[error("{what} {index} has zero norm")]
    ZeroNorm { what: &'static str, index: usize },

    #[error("component {component} contains more than one template")]
    DuplicateTemplate { component: usize },

    #[error("component {component} has no template")]
    MissingTemplate { component: usize },

    #[error("matrix is not positive definite ({0}); raise the ridge or jitter")]
    Singular(&'static str),

    #[error("non-finite values in {0}")]
    NonFinite(&'static str),

    #[error("training diverged at step {step}: loss {loss:e}")]
    Diverged { step: usize, loss: f64 },

    #[error("oracle exhausted: every reachable node is determined")]
    Exhausted,

    #[error("oracle needs an embedding snapshot")]
    MissingSnapshot,

    #[error("stale batch id {got}, open batch is {expected:?}")]
    StaleBatch { expected: Option<u64>, got: u64 },

    #[error("expected {expected} answers, got {found}")]
    AnswerCount { expected: usize, found: usize },

    #[error("timed out waiting for answers to batch {batch_id}")]
    Timeout { batch_id: u64 },

    #[error("k-means produced an empty cluster after re-seeding")]
    DegenerateClustering,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported format version {0:?}")]
    UnsupportedVersion(String),
}

impl PalError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        PalError::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        PalError::Parse {
            line,
            message: message.into(),
        }
    }
}
