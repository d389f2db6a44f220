//! Policy optimization: behavior cloning, then single-turn GRPO against the
//! reward model.

mod bc;
mod grpo;
mod policy;
mod self_play;

use thiserror::Error;

pub use bc::{bc_train, demonstrations, nll, nll_gradient, BcConfig, Demonstration};
pub use grpo::{
    grpo_advantages, grpo_step, surrogate_gradient, surrogate_objective, GroupSample, GrpoStepConfig,
    StepDiagnostics,
};
pub use policy::{Checkpoint, DialoguePolicy, PolicyParameters, CHECKPOINT_KIND};
pub use self_play::{
    evaluation_seeds, goal_scores, trace_csv, train_loop, train_loop_observed, GrpoConfig, TraceRow,
    TrainOutcome,
};

use crate::episode::EpisodeError;
use crate::persist::PersistError;
use crate::reward_model::RewardModelError;
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("no demonstrations")]
    EmptyDemos,
    #[error("group of {0} is too small; need at least 2")]
    GroupTooSmall(usize),
    #[error("invalid trainer configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged: {0}")]
    DivergenceDetected(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    RewardModel(#[from] RewardModelError),
    #[error(transparent)]
    Persist(#[from] PersistError),
}
