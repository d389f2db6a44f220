//! Staged, file-backed pipeline and in-memory experiment runs.
//!
//! Each stage reads its upstream artifacts from the output directory,
//! checks them against the manifest that produced them, and writes its own
//! outputs plus a manifest. A stage whose inputs, config and seed are
//! unchanged is skipped.

pub mod config;
pub mod experiment;
pub mod manifest;
pub mod stages;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{AnnotatorSpec, PipelineConfig};
pub use experiment::{mean_goal, run_condition, run_grid, Condition, ConditionRun, GridComparison, GridResult, GridRow};
pub use manifest::{verified_artifact, Manifest};
pub use stages::{Runner, Stage, StageOutcome};

use crate::annotation::AnnotationError;
use crate::attribution::AttributionError;
use crate::episode::EpisodeError;
use crate::eval::{EvalError, StatsError};
use crate::persist::PersistError;
use crate::reward_model::RewardModelError;
use crate::sim::SimError;
use crate::trainer::TrainerError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("annotation: {0}")]
    Annotation(#[from] AnnotationError),
    #[error("attribution: {0}")]
    Attribution(#[from] AttributionError),
    #[error("training: {0}")]
    Training(String),
    #[error("artifact: {0}")]
    Artifact(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("evaluation: {0}")]
    Eval(String),
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit status for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Sim(_) => 3,
            PipelineError::Annotation(_) | PipelineError::Attribution(_) => 4,
            PipelineError::Training(_) => 5,
            PipelineError::Artifact(_) | PipelineError::Io { .. } => 6,
            PipelineError::Eval(_) => 1,
        }
    }
}

impl From<TrainerError> for PipelineError {
    fn from(e: TrainerError) -> Self {
        match e {
            TrainerError::Sim(s) => PipelineError::Sim(s),
            TrainerError::Persist(p) => PipelineError::Artifact(p.to_string()),
            other => PipelineError::Training(other.to_string()),
        }
    }
}

impl From<RewardModelError> for PipelineError {
    fn from(e: RewardModelError) -> Self {
        match e {
            RewardModelError::Persist(p) => PipelineError::Artifact(p.to_string()),
            other => PipelineError::Training(other.to_string()),
        }
    }
}

impl From<PersistError> for PipelineError {
    fn from(e: PersistError) -> Self {
        PipelineError::Artifact(e.to_string())
    }
}

impl From<EpisodeError> for PipelineError {
    fn from(e: EpisodeError) -> Self {
        PipelineError::Artifact(e.to_string())
    }
}

impl From<EvalError> for PipelineError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Sim(s) => PipelineError::Sim(s),
            other => PipelineError::Eval(other.to_string()),
        }
    }
}

impl From<StatsError> for PipelineError {
    fn from(e: StatsError) -> Self {
        PipelineError::Eval(e.to_string())
    }
}
