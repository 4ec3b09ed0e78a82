//! Command-line experiments: dataset generation, training, search,
//! evaluation, saliency, ablation, calibration and dictionary building.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 I/O or file
//! format error, 4 numeric failure (divergence, degenerate fit, failed search).

pub mod commands;
pub mod config;
pub mod files;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Io(_) => 3,
            Self::Numeric(_) => 4,
        }
    }
}

impl From<edgefbg::Error> for CliError {
    fn from(e: edgefbg::Error) -> Self {
        use edgefbg::Error as E;
        match e {
            E::Io(_) | E::Format(_) => Self::Io(e.to_string()),
            E::TrainingDiverged { .. } | E::SearchFailed(_) | E::CalibrationDegenerate(_) | E::InsufficientExcitation(_) => {
                Self::Numeric(e.to_string())
            }
            _ => Self::Config(e.to_string()),
        }
    }
}

/// Thread count from `EDGEFBG_THREADS`, if set.
pub fn thread_count() -> Result<Option<usize>, CliError> {
    match std::env::var("EDGEFBG_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("EDGEFBG_THREADS must be a positive integer, got {v:?}"))),
        },
    }
}
