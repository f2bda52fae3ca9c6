//! Experiment commands behind the `pce-shaper` binary.
//!
//! Each command reads an [`ExperimentConfig`], writes CSV/JSON artifacts into
//! the configured output directory, and finishes with a manifest describing
//! the effective configuration and the files it produced.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

pub use config::{ExperimentConfig, Overrides};

use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] pce_shaper::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Core(pce_shaper::Error::Domain(_)) => "domain",
            Self::Core(pce_shaper::Error::Config(_)) | Self::Config(_) => "config",
            Self::Core(pce_shaper::Error::Integration { .. }) => "integration",
            Self::Io { .. } => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "config" => 2,
            "domain" => 3,
            "integration" => 4,
            _ => 5,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::json!({
            "error": { "kind": self.kind(), "message": self.to_string() }
        });
        if let Self::Core(pce_shaper::Error::Integration { time, .. }) = self {
            v["error"]["time"] = serde_json::json!(time);
        }
        v
    }
}
