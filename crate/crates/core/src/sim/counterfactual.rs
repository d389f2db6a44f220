//! Counterfactual utterance attribution.
//!
//! Offline: each utterance of the evaluated agent is swapped for `pass` and
//! the rest of the episode is replayed: seat 0 repeats its recorded later
//! utterances (leaving once they run out) while the scripted partner is
//! re-run from the swap under fresh seeds. The weight is the mean score drop
//! relative to the recorded outcome, divided by the dimension's range width
//! and clamped to `[0, 1]`.
//!
//! Online: only the prefix up to and including the utterance is known. Both
//! the recorded continuation and the `pass` variant are completed by a
//! reference continuation policy under shared seeds, and the weight is the
//! clamped mean difference between the two branches.

use std::collections::{BTreeMap, VecDeque};

use super::evaluator::dimension_score;
use super::partner::PartnerPolicy;
use super::policy::{ScriptedNegotiator, UtterancePolicy};
use super::rules::{seat_of_turn, NegotiationState};
use super::scenario::Scenario;
use super::SimError;
use crate::episode::{ActionToken, DialogueState, Dimension, Episode, Utterance};
use crate::seed::{self, streams};

#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualAttribution {
    /// One weight per utterance of the evaluated agent, in turn order.
    pub weights: Vec<f64>,
    pub samples_used: usize,
}

fn check_dimension(dim: Dimension) -> Result<(), SimError> {
    if Dimension::SCORED.contains(&dim) {
        Ok(())
    } else {
        Err(SimError::UnknownDimension(dim))
    }
}

struct Replay<'a> {
    episode: &'a Episode,
    partner: PartnerPolicy,
    resource_units: u32,
}

impl<'a> Replay<'a> {
    fn new(episode: &'a Episode) -> Result<Self, SimError> {
        Ok(Self {
            episode,
            partner: PartnerPolicy::from_profile(&episode.agents[1], 0)?,
            resource_units: episode.agents[0].goal.target.resource_units,
        })
    }

    /// Final state after swapping turn `turn` for `pass`.
    fn swap_and_replay(&self, turn: usize, sample_seed: u64) -> NegotiationState {
        let utterances = &self.episode.utterances;
        let mut state = NegotiationState::new(self.resource_units);
        for u in &utterances[..turn] {
            state.apply(u.action_token);
        }
        state.apply(ActionToken::Pass);
        let mut scripted: VecDeque<ActionToken> = utterances[turn + 1..]
            .iter()
            .filter(|u| seat_of_turn(u.turn_index) == 0)
            .map(|u| u.action_token)
            .collect();
        let mut t = turn + 1;
        while !state.is_terminal() && t < self.episode.max_turns {
            let token = if seat_of_turn(t) == 0 {
                scripted.pop_front().unwrap_or(ActionToken::Leave)
            } else {
                let mut rng = seed::rng(seed::derive(sample_seed, t as u64));
                self.partner.respond(&state, &mut rng)
            };
            state.apply(token);
            t += 1;
        }
        state
    }
}

fn sample_seed(episode: &Episode, turn: usize, sample: usize) -> u64 {
    seed::derive2(
        seed::derive(episode.rng_seed, streams::COUNTERFACTUAL),
        turn as u64,
        sample as u64,
    )
}

/// Offline weights for several dimensions from one shared set of replays.
pub fn counterfactual_weights(
    episode: &Episode,
    agent: &str,
    dimensions: &[Dimension],
    samples: usize,
) -> Result<BTreeMap<Dimension, CounterfactualAttribution>, SimError> {
    for d in dimensions {
        check_dimension(*d)?;
    }
    let seat = episode.seat(agent)?;
    let target = episode.agents[seat].goal.target.target_units;
    let samples = samples.max(1);
    let replay = Replay::new(episode)?;
    let actual = NegotiationState::from_history(replay.resource_units, &episode.utterances);

    let mut out: BTreeMap<Dimension, Vec<f64>> =
        dimensions.iter().map(|d| (*d, Vec::new())).collect();
    for u in episode.utterances.iter().filter(|u| u.speaker == agent) {
        let mut drops = vec![0.0; dimensions.len()];
        for j in 0..samples {
            let cf = replay.swap_and_replay(u.turn_index, sample_seed(episode, u.turn_index, j));
            for (i, d) in dimensions.iter().enumerate() {
                let before = dimension_score(&actual, seat, target, *d).unwrap_or(0.0);
                let after = dimension_score(&cf, seat, target, *d).unwrap_or(0.0);
                drops[i] += before - after;
            }
        }
        for (i, d) in dimensions.iter().enumerate() {
            let w = (drops[i] / samples as f64 / d.scale()).clamp(0.0, 1.0);
            out.get_mut(d).expect("initialized").push(w);
        }
    }
    Ok(out
        .into_iter()
        .map(|(d, weights)| (d, CounterfactualAttribution { weights, samples_used: samples }))
        .collect())
}

/// Offline counterfactual attribution for one dimension.
pub fn counterfactual_attribution(
    episode: &Episode,
    agent: &str,
    dimension: Dimension,
    samples: usize,
) -> Result<CounterfactualAttribution, SimError> {
    let mut all = counterfactual_weights(episode, agent, &[dimension], samples)?;
    Ok(all.remove(&dimension).expect("requested dimension"))
}

/// Prefix-only attribution, for the online-labelling ablation.
pub fn online_counterfactual_weights(
    episode: &Episode,
    agent: &str,
    dimensions: &[Dimension],
    samples: usize,
) -> Result<BTreeMap<Dimension, CounterfactualAttribution>, SimError> {
    for d in dimensions {
        check_dimension(*d)?;
    }
    let seat = episode.seat(agent)?;
    let target = episode.agents[seat].goal.target.target_units;
    let samples = samples.max(1);
    let scenario = Scenario::from_episode(episode)?;
    let partner = scenario.partner.policy.clone();
    let continuation = ScriptedNegotiator::default();
    let learner = &episode.agents[0];

    let complete = |prefix: &[Utterance], last: ActionToken, sample_seed: u64| -> NegotiationState {
        let mut history: Vec<Utterance> = prefix.to_vec();
        history.push(Utterance {
            turn_index: prefix.len(),
            speaker: episode.utterances[prefix.len()].speaker.clone(),
            action_token: last,
            rendered_text: scenario.render(last),
        });
        let mut state = NegotiationState::from_history(scenario.resource_units, &history);
        let mut t = history.len();
        while !state.is_terminal() && t < scenario.max_turns {
            let mut rng = seed::rng(seed::derive(sample_seed, t as u64));
            let token = if seat_of_turn(t) == 0 {
                let obs = DialogueState {
                    history: history.clone(),
                    acting_agent: learner.agent_id.clone(),
                    goal: learner.goal.clone(),
                };
                let idx = continuation.choose(&scenario, &obs, &mut rng);
                scenario.vocabulary[idx].token
            } else {
                partner.respond(&state, &mut rng)
            };
            history.push(Utterance {
                turn_index: t,
                speaker: episode.agents[seat_of_turn(t)].agent_id.clone(),
                action_token: token,
                rendered_text: String::new(),
            });
            state.apply(token);
            t += 1;
        }
        state
    };

    let mut out: BTreeMap<Dimension, Vec<f64>> =
        dimensions.iter().map(|d| (*d, Vec::new())).collect();
    for u in episode.utterances.iter().filter(|u| u.speaker == agent) {
        let prefix = &episode.utterances[..u.turn_index];
        let mut gains = vec![0.0; dimensions.len()];
        for j in 0..samples {
            let s = seed::derive2(
                seed::derive(episode.rng_seed, streams::ONLINE),
                u.turn_index as u64,
                j as u64,
            );
            let with = complete(prefix, u.action_token, s);
            let without = complete(prefix, ActionToken::Pass, s);
            for (i, d) in dimensions.iter().enumerate() {
                gains[i] += dimension_score(&with, seat, target, *d).unwrap_or(0.0)
                    - dimension_score(&without, seat, target, *d).unwrap_or(0.0);
            }
        }
        for (i, d) in dimensions.iter().enumerate() {
            let w = (gains[i] / samples as f64 / d.scale()).clamp(0.0, 1.0);
            out.get_mut(d).expect("initialized").push(w);
        }
    }
    Ok(out
        .into_iter()
        .map(|(d, weights)| (d, CounterfactualAttribution { weights, samples_used: samples }))
        .collect())
}
