//! Stage-wise pipeline behind the `fedwind` binary.
//!
//! Every stage reads its inputs from the output directory and writes its own
//! artifacts there, so `run` is exactly the chain of the individual stages.

pub mod artifacts;
pub mod config;
pub mod stages;

use std::path::PathBuf;

use thiserror::Error;

pub use artifacts::Workspace;
pub use config::{Method, Overrides, RunConfig};
pub use stages::{cluster, compare, evaluate, features, forecast, generate, run_pipeline, train, Stage};

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("stage `{stage}` needs {}; run `{producer}` first", path.display())]
    MissingArtifact {
        stage: &'static str,
        path: PathBuf,
        producer: &'static str,
    },
    #[error("stage `{stage}`: malformed {}: {reason}", path.display())]
    MalformedArtifact {
        stage: &'static str,
        path: PathBuf,
        reason: String,
    },
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: BoxError,
    },
}

impl CliError {
    /// Name of the stage that failed, when known.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            CliError::Config(_) => None,
            CliError::MissingArtifact { stage, .. }
            | CliError::MalformedArtifact { stage, .. }
            | CliError::Stage { stage, .. } => Some(stage),
        }
    }
}

pub(crate) trait StageResult<T> {
    fn at(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T, E: Into<BoxError>> StageResult<T> for Result<T, E> {
    fn at(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError::Stage {
            stage,
            source: e.into(),
        })
    }
}
