//! Scenario files, task orchestration and artifact output for `psnat`.

pub mod runner;
pub mod scenario;

pub use runner::{spread_ideal, RunOptions, RunReport, Session};
pub use scenario::{Move, Params, PointSet, Scenario, TaskSpec};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("task {index} ({name}) failed: {message}")]
    Task { index: usize, name: String, message: String },
}

impl CliError {
    /// 1 for bad input, 2 for a failed task.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Validation(_) => 1,
            CliError::Task { .. } => 2,
        }
    }
}
