//! Utterance-level reward design and policy optimization for social dialogue
//! agents, at desk scale.
//!
//! The pipeline has three stages:
//!
//! 1. **Data preparation**: self-play rollouts in a toy negotiation
//!    environment ([`sim`]) are scored per episode, then credit is assigned
//!    to individual utterances by an annotator ([`annotation`]) and turned
//!    into per-dimension utterance rewards that are min-max normalized and
//!    averaged ([`attribution`]).
//! 2. **Supervised training**: a reward model regresses the combined
//!    utterance rewards ([`reward_model`]) and the policy is warmed up by
//!    behavior cloning ([`trainer`]).
//! 3. **Reinforcement learning**: single-turn group-relative policy
//!    optimization against the reward model on states harvested from fresh
//!    self-play ([`trainer`]).
//!
//! [`eval`] holds the evaluation harness and statistics; [`pipeline`] holds
//! the artifact-producing stages used by the command-line tool.

pub mod episode;
pub mod seed;
pub mod sim;
pub mod attribution;
pub mod persist;
pub mod reward_model;
pub mod trainer;
pub mod annotation;
pub mod eval;
pub mod pipeline;
