use thiserror::Error;

pub type Result<T> = std::result::Result<T, MtpError>;

/// Errors raised by the estimation pipeline.
///
/// Variants are grouped so the CLI can map them onto exit categories:
/// configuration problems, data problems, and estimation failures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MtpError {
    #[error("invalid shift policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid analysis frame: {0}")]
    InvalidFrame(String),
    #[error("degenerate outcome: all values equal {0} and no bounds were declared")]
    DegenerateOutcome(f64),
    #[error("dimension mismatch: expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid learner specification `{name}`: {reason}")]
    InvalidLearner { name: String, reason: String },
    #[error("learner `{name}` does not support task {task}")]
    TaskMismatch { name: String, task: String },
    #[error("invalid fold request: {0}")]
    InvalidFolds(String),
    #[error("severe positivity violation: {clipped} of {n} units hit the probability clip bound")]
    PositivityViolation { clipped: usize, n: usize },
    #[error("targeting step did not converge after {iterations} iterations (score {score:e})")]
    TargetingDiverged { iterations: usize, score: f64 },
    #[error("invalid simulation setup: {0}")]
    InvalidDgp(String),
    #[error("too many failed replications: {failed} of {total}")]
    ReplicationFailures { failed: usize, total: usize },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("io error: {0}")]
    Io(String),
}

impl MtpError {
    /// True for errors caused by the input data rather than configuration
    /// or numerical estimation.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            MtpError::InvalidFrame(_)
                | MtpError::DegenerateOutcome(_)
                | MtpError::Schema(_)
                | MtpError::Data(_)
                | MtpError::Io(_)
        )
    }

    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            MtpError::InvalidPolicy(_)
                | MtpError::InvalidLearner { .. }
                | MtpError::TaskMismatch { .. }
                | MtpError::InvalidFolds(_)
                | MtpError::InvalidDgp(_)
        )
    }
}

impl From<std::io::Error> for MtpError {
    fn from(e: std::io::Error) -> Self {
        MtpError::Io(e.to_string())
    }
}

impl From<csv::Error> for MtpError {
    fn from(e: csv::Error) -> Self {
        MtpError::Data(e.to_string())
    }
}
