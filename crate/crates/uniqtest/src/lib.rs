//! Command-line front end for the bootstrap uniqueness test.
//!
//! The numerical work lives in `uniqtest-core`; this crate reads datasets,
//! caches detector calibrations, writes reports and drives the
//! `uniqtest` binary.

pub mod cache;
pub mod cli;
pub mod data;
pub mod output;

use std::path::Path;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    /// Bad input: unreadable or malformed data, invalid flags or arguments.
    pub const DATA: u8 = 2;
    /// Numerical failure, including a verification check that did not pass.
    pub const NUMERIC: u8 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{source_name}: {message}")]
    Data { source_name: String, message: String },

    #[error("{0}")]
    Usage(String),

    #[error("{path}: {error}")]
    Io { path: String, error: std::io::Error },

    #[error(transparent)]
    Core(#[from] uniqtest_core::Error),

    #[error("verification failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn data(source: &str, message: impl Into<String>) -> Self {
        CliError::Data {
            source_name: source.to_string(),
            message: message.into(),
        }
    }

    pub fn io(path: &Path, error: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            error,
        }
    }

    pub fn exit_code(&self) -> u8 {
        use uniqtest_core::Error as E;
        match self {
            CliError::Data { .. } | CliError::Usage(_) | CliError::Io { .. } => exit::DATA,
            CliError::Core(
                E::InvalidArgument(_)
                | E::DimensionMismatch { .. }
                | E::EmptyInput
                | E::NoTangentStructure(_)
                | E::NotPositiveDefinite,
            ) => exit::DATA,
            CliError::Core(_) | CliError::CheckFailed(_) => exit::NUMERIC,
        }
    }
}
