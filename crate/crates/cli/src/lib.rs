//! Library backing the `fpphe` binary. Commands are plain functions so the
//! acceptance suite can drive them in-process and byte-compare their outputs.

pub mod config;
pub mod digest;
pub mod manifest;
pub mod render;

mod commands;

pub use commands::{
    cmd_classify, cmd_estimate, cmd_render, cmd_replay, cmd_simulate, cmd_sweep, ClassifyArgs,
    EstimateArgs, Estimator,
};

use std::path::PathBuf;
use thiserror::Error;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable overriding the output directory of every command.
pub const OUT_DIR_ENV: &str = "FPPHE_OUT_DIR";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
    #[error("reproducibility check failed: {0}")]
    Reproducibility(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) | CliError::Io { .. } => 2,
            CliError::Reproducibility(_) => 3,
        }
    }

    pub fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

/// Resolve the effective output directory: env override, then flag, then the
/// current directory.
pub fn resolve_out_dir(flag: Option<PathBuf>) -> PathBuf {
    if let Ok(env_dir) = std::env::var(OUT_DIR_ENV) {
        if !env_dir.is_empty() {
            return PathBuf::from(env_dir);
        }
    }
    flag.unwrap_or_else(|| PathBuf::from("."))
}
