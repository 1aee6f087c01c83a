//! Sweep driver for the moment-matrix entanglement search.
//!
//! The core crate knows how to build criterion matrices and error budgets
//! for a single state; this crate turns a TOML sweep description into the
//! full pipeline (enumerate, filter, evaluate, rank) and writes the results
//! as CSV plus a JSON manifest.

use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub mod config;
pub mod pipeline;
pub mod report;

/// Top-level failure modes, each mapped to a process exit code so scripts
/// can distinguish bad input from numeric trouble.
#[derive(Debug, Error)]
pub enum CliError {
    /// The configuration file is malformed or self-contradictory.
    #[error("configuration error: {0}")]
    Config(String),

    /// A core computation failed.
    #[error(transparent)]
    Core(#[from] npt_core::Error),

    /// A core computation failed while working on a named piece of the
    /// sweep; the context says which one.
    #[error("{context}: {source}")]
    Context {
        context: String,
        source: npt_core::Error,
    },

    /// Reading or writing a file failed.
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    /// 2 for user input problems, 3 for numeric failures, 4 for i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) | CliError::Context { source: e, .. } => match e {
                npt_core::Error::Parse(_) => 2,
                npt_core::Error::Io(_) | npt_core::Error::Format(_) => 4,
                _ => 3,
            },
            CliError::Io { .. } => 4,
        }
    }
}

/// Attaches a human-readable context label to a core error.
pub(crate) fn with_context<T>(
    context: impl FnOnce() -> String,
    result: npt_core::Result<T>,
) -> Result<T, CliError> {
    result.map_err(|source| CliError::Context {
        context: context(),
        source,
    })
}
