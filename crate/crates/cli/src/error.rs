use std::io;
use std::path::PathBuf;

use parseq_core::{AnalysisError, LinalgError, SolveError, TrajectoryError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("cannot read config {path}: {source}")]
    ConfigRead { path: PathBuf, source: io::Error },
    #[error("property violation: {0}")]
    PropertyViolation(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("cannot build worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    /// Output closed early by the reader, as with `| head`.
    pub fn is_broken_pipe(&self) -> bool {
        let kind = match self {
            CliError::Io(e) => Some(e.kind()),
            CliError::Json(e) => e.io_error_kind(),
            CliError::Csv(e) => match e.kind() {
                csv::ErrorKind::Io(e) => Some(e.kind()),
                _ => None,
            },
            _ => None,
        };
        kind == Some(io::ErrorKind::BrokenPipe)
    }

    /// 0 success, 2 property violation, 3 config error, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::ConfigRead { .. } => 3,
            CliError::Solve(SolveError::InvalidConfig(_)) => 3,
            CliError::PropertyViolation(_) => 2,
            _ => 1,
        }
    }
}
