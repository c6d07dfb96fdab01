use std::io;
use std::path::PathBuf;
use thiserror::Error;
use vctl_core::SolverError;

/// Failure classes surfaced by the command line.
#[derive(Debug, Error)]
pub enum AppError {
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),
    #[error("{0}")]
    Solver(SolverError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

impl From<SolverError> for AppError {
    fn from(e: SolverError) -> Self {
        AppError::Solver(e)
    }
}

impl AppError {
    pub fn config(msg: impl Into<String>) -> Self {
        AppError::Config(vec![msg.into()])
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        AppError::Io { path: path.into(), source }
    }

    /// Process exit status: 2 for configuration, 3 for numerical aborts,
    /// 4 for file-system and format problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Solver(e) if e.is_numerical() => 3,
            AppError::Solver(SolverError::MissingSnapshots(_)) => 3,
            AppError::Solver(_) => 2,
            AppError::Io { .. } | AppError::Format { .. } | AppError::Csv(_) => 4,
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;
