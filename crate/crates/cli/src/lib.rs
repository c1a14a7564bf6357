//! Config-driven runner: TOML configuration, stage pipeline, synthetic data
//! generation and the output manifest.

// `!(x > 0.0)` is the idiom used throughout to reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod pipeline;
pub mod simulate;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Configuration problems, reported together.
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: irdm_core::Error,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 1 for configuration errors, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Stage { .. } | CliError::Io(_) => 2,
        }
    }
}
