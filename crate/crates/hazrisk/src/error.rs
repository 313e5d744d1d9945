use std::path::PathBuf;

/// Failures of the IO and simulation layer. Estimation failures from the
/// core crate pass through unchanged.
#[derive(Debug, thiserror::Error)]
pub enum HazriskError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("input schema: {0}")]
    Schema(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Estimation(#[from] hazrisk_core::Error),
    /// Too many simulation replications had to be dropped.
    #[error("{failed} of {reps} replications failed (limit {limit}); {detail}")]
    TooManyFailures { failed: usize, reps: usize, limit: usize, detail: String },
    #[error("{context}: {source}")]
    EstimationAt { context: String, source: hazrisk_core::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("internal: {0}")]
    Internal(String),
}

impl HazriskError {
    /// 2 for input/schema problems, 3 for estimation failures, 4 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HazriskError::Io { .. } | HazriskError::Csv { .. } | HazriskError::Schema(_) | HazriskError::Argument(_) => 2,
            HazriskError::Estimation(_) | HazriskError::EstimationAt { .. } | HazriskError::TooManyFailures { .. } => 3,
            HazriskError::Json(_) | HazriskError::Internal(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, HazriskError>;
