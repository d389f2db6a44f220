//! Toy two-agent negotiation environment.
//!
//! A learner (seat 0) and a scripted partner (seat 1) split a pool of
//! resource units. The partner's demand depends on a latent disposition that
//! the learner can only move through its utterances, so goal completion
//! hinges on utterances well before the final offer.

mod counterfactual;
mod evaluator;
mod partner;
mod policy;
mod rollout;
pub mod rules;
mod scenario;

use thiserror::Error;

pub use counterfactual::{
    counterfactual_attribution, counterfactual_weights, online_counterfactual_weights,
    CounterfactualAttribution,
};
pub use evaluator::{dimension_score, evaluate_episode, goal_score, kno_score, rel_score};
pub use partner::PartnerPolicy;
pub use policy::{
    sample_index, FixedPolicy, ScriptPolicy, ScriptedNegotiator, UniformPolicy, UtterancePolicy,
};
pub use rollout::{agent_rng, rollout, simulate};
pub use scenario::{
    default_vocabulary, Difficulty, LearnerSpec, PartnerSpec, Scenario, ScenarioSuite, VocabEntry,
    LEARNER_ID, PARTNER_ID,
};

use crate::episode::{Dimension, EpisodeError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid policy output: {0}")]
    InvalidPolicy(String),
    #[error("episode `{0}` has not terminated")]
    UnterminatedEpisode(String),
    #[error("dimension {0} has no rule-based score")]
    UnknownDimension(Dimension),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
}
