use std::path::Path;

use flipdyn::FlipDynError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{origin}: {message}")]
    Config { origin: String, message: String },

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Solver(#[from] FlipDynError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    /// 0 ok, 1 config or I/O, 2 infeasible or indeterminate, 3 no bracket.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(FlipDynError::FeasibilityViolated { .. })
            | CliError::Solver(FlipDynError::RegimeIndeterminate { .. })
            | CliError::Solver(FlipDynError::SecondOrderConditionViolated(_)) => 2,
            CliError::Solver(FlipDynError::NoBracket(_)) => 3,
            _ => 1,
        }
    }
}
