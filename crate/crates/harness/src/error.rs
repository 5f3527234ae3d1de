use std::path::PathBuf;

use pal_core::PalError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),

    #[error("every trial failed ({trials}); first error: {first}")]
    AllTrialsFailed { trials: usize, first: String },

    #[error("timed out waiting for answers to batch {batch_id}")]
    Timeout { batch_id: u64 },

    #[error(transparent)]
    Core(#[from] PalError),
}

impl HarnessError {
    pub fn config(msg: impl Into<String>) -> Self {
        HarnessError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 config, 3 solver, 4 oracle timeout, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Json { .. } => 2,
            HarnessError::Core(PalError::InvalidArgument(_)) => 2,
            HarnessError::AllTrialsFailed { .. } => 3,
            HarnessError::Core(e) if is_solver_error(e) => 3,
            HarnessError::Timeout { .. } | HarnessError::Core(PalError::Timeout { .. }) => 4,
            _ => 1,
        }
    }
}

/// Errors that fail a single trial rather than the whole run.
pub fn is_solver_error(e: &PalError) -> bool {
    matches!(
        e,
        PalError::Singular(_) | PalError::NonFinite(_) | PalError::Diverged { .. } | PalError::DegenerateClustering
    )
}
