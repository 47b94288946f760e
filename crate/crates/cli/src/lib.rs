//! Command-line driver for the ladder walk experiments.

pub mod commands;
pub mod config;
pub mod output;

use ladderlab::LadderError;
use thiserror::Error;

pub use config::{Flags, RunConfig};
pub use output::{OutputDir, RunManifest};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    /// Enabled assertions that failed, one entry per failure.
    #[error("assertion failed: {}", .0.join("; "))]
    Assertion(Vec<String>),

    #[error(transparent)]
    Model(#[from] LadderError),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 1 for failed assertions, 2 for usage and domain errors, 3 for
    /// resource and budget errors.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Assertion(_) => 1,
            CliError::Usage(_) | CliError::Json(_) => 2,
            CliError::Io(_) => 3,
            CliError::Model(e) => match e {
                LadderError::IterationLimit { .. } | LadderError::InsufficientSample { .. } | LadderError::Io(_) => 3,
                LadderError::Internal(_) => 3,
                _ => 2,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
