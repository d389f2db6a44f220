//! Rule-based episode evaluator for GOAL, REL and KNO.

use std::collections::BTreeMap;

use super::rules::NegotiationState;
use super::SimError;
use crate::episode::{AgentId, Dimension, Episode, EvaluationVector};

/// GOAL for one seat: ten times the achieved fraction of its target, 0 without a deal.
pub fn goal_score(state: &NegotiationState, seat: usize, target_units: u32) -> f64 {
    match state.units_for(seat) {
        None => 0.0,
        Some(_) if target_units == 0 => 10.0,
        Some(units) => 10.0 * (units as f64 / target_units as f64).min(1.0),
    }
}

/// REL over both sides: rapport minus hostility, clamped to [-5, 5].
pub fn rel_score(state: &NegotiationState) -> f64 {
    let rapport = (state.rapport[0] + state.rapport[1]) as f64;
    let hostile = (state.hostile[0] + state.hostile[1]) as f64;
    (rapport - hostile).clamp(-5.0, 5.0)
}

/// Points per completed ask/share exchange.
pub const KNO_PER_EXCHANGE: f64 = 5.0;

/// KNO: [`KNO_PER_EXCHANGE`] per completed ask/share exchange, capped at 10.
pub fn kno_score(state: &NegotiationState) -> f64 {
    (KNO_PER_EXCHANGE * state.exchanges as f64).min(10.0)
}

pub fn dimension_score(state: &NegotiationState, seat: usize, target_units: u32, dim: Dimension) -> Option<f64> {
    match dim {
        Dimension::Goal => Some(goal_score(state, seat, target_units)),
        Dimension::Rel => Some(rel_score(state)),
        Dimension::Kno => Some(kno_score(state)),
        _ => None,
    }
}

pub fn is_terminated(episode: &Episode, state: &NegotiationState) -> bool {
    episode.termination.is_some() || state.is_terminal() || episode.utterances.len() >= episode.max_turns
}

/// Scores both agents of a finished episode.
pub fn evaluate_episode(episode: &Episode) -> Result<BTreeMap<AgentId, EvaluationVector>, SimError> {
    let k = episode.agents[0].goal.target.resource_units;
    let state = NegotiationState::from_history(k, &episode.utterances);
    if !is_terminated(episode, &state) {
        return Err(SimError::UnterminatedEpisode(episode.episode_id.clone()));
    }
    let rel = rel_score(&state);
    let kno = kno_score(&state);
    Ok(episode
        .agents
        .iter()
        .enumerate()
        .map(|(seat, agent)| {
            let goal = goal_score(&state, seat, agent.goal.target.target_units);
            (agent.agent_id.clone(), EvaluationVector::new(goal, rel, kno))
        })
        .collect())
}
