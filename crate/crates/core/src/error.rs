use thiserror::Error;

/// Errors produced by the shape-sensing pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("query {value} outside valid range [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },

    #[error("insufficient excitation: {0}")]
    InsufficientExcitation(String),

    #[error("calibration degenerate: {0}")]
    CalibrationDegenerate(String),

    #[error("batch of {0} samples is too small for train-mode batch normalization")]
    BatchTooSmall(usize),

    #[error("invalid state: {0}")]
    State(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    TrainingDiverged { epoch: usize, reason: String },

    #[error("search failed: {0}")]
    SearchFailed(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
