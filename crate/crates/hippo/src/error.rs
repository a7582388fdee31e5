use hippo_core::Error as CoreError;

use crate::config::ConfigError;
use crate::data::ParseError;

/// Failure categories of the command line, each with its own exit code.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("divergence: {0}")]
    Divergence(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) | AppError::Io(_) => 1,
            AppError::Data(_) => 2,
            AppError::Verification(_) => 3,
            AppError::Divergence(_) => 4,
        }
    }

    /// Maps a library error raised while building or running a problem.
    pub fn from_core(e: CoreError) -> Self {
        match e {
            CoreError::Diverged { .. } => AppError::Divergence(e.to_string()),
            CoreError::NotStronglyConvex { .. } | CoreError::OracleBudget { .. } => AppError::Data(e.to_string()),
            _ => AppError::Config(e.to_string()),
        }
    }
}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        AppError::Config(e.to_string())
    }
}

impl From<ParseError> for AppError {
    fn from(e: ParseError) -> Self {
        AppError::Data(e.to_string())
    }
}
