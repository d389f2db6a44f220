use rand::RngCore;

use super::partner::PartnerPolicy;
use super::policy::UtterancePolicy;
use super::rules::{seat_of_turn, NegotiationState};
use super::scenario::Scenario;
use super::{evaluate_episode, SimError};
use crate::episode::{DialogueState, Episode, Termination, Utterance};
use crate::seed::{self, streams};

/// Per-turn random stream of seat 0. Best-of-N draws its candidates from it,
/// so smaller candidate sets are prefixes of larger ones.
pub fn agent_rng(episode_seed: u64, turn: usize) -> impl RngCore {
    seed::rng(seed::derive2(episode_seed, streams::AGENT, turn as u64))
}

pub fn partner_rng(episode_seed: u64, partner: &PartnerPolicy, turn: usize) -> impl RngCore {
    seed::rng(seed::derive2(
        seed::derive(episode_seed, partner.rng_seed),
        streams::PARTNER,
        turn as u64,
    ))
}

/// Runs one episode of `policy` (seat 0) against the scripted `partner`.
///
/// The episode ends on a deal, on either side leaving, or at `max_turns`;
/// in the last case it is closed as a forced leave and flagged
/// [`Termination::MaxTurns`]. Equal inputs yield identical episodes.
pub fn rollout(
    scenario: &Scenario,
    policy: &dyn UtterancePolicy,
    partner: &PartnerPolicy,
    seed: u64,
) -> Result<Episode, SimError> {
    let learner = scenario.learner_profile();
    let partner_profile = scenario.partner_profile(partner);
    let vocab = scenario.tokens();
    let mut state = NegotiationState::new(scenario.resource_units);
    let mut utterances: Vec<Utterance> = Vec::new();

    for turn in 0..scenario.max_turns {
        let token = if seat_of_turn(turn) == 0 {
            let obs = DialogueState {
                history: utterances.clone(),
                acting_agent: learner.agent_id.clone(),
                goal: learner.goal.clone(),
            };
            let mut rng = agent_rng(seed, turn);
            let idx = policy.choose(scenario, &obs, &mut rng);
            *vocab.get(idx).ok_or_else(|| {
                SimError::InvalidPolicy(format!(
                    "policy chose index {idx} from a vocabulary of {}",
                    vocab.len()
                ))
            })?
        } else {
            partner.respond(&state, &mut partner_rng(seed, partner, turn))
        };
        let speaker = if seat_of_turn(turn) == 0 {
            &learner.agent_id
        } else {
            &partner_profile.agent_id
        };
        utterances.push(Utterance {
            turn_index: turn,
            speaker: speaker.clone(),
            action_token: token,
            rendered_text: scenario.render(token),
        });
        state.apply(token);
        if state.is_terminal() {
            break;
        }
    }

    let termination = if state.agreement.is_some() {
        Termination::Agreement
    } else if state.left_by.is_some() {
        Termination::Leave
    } else {
        Termination::MaxTurns
    };

    Ok(Episode {
        episode_id: format!("{}-{seed:016x}", scenario.scenario_id),
        scenario_id: scenario.scenario_id.clone(),
        agents: [learner, partner_profile],
        utterances,
        evaluation: None,
        rng_seed: seed,
        max_turns: scenario.max_turns,
        termination: Some(termination),
    })
}

/// [`rollout`] followed by [`evaluate_episode`].
pub fn simulate(
    scenario: &Scenario,
    policy: &dyn UtterancePolicy,
    partner: &PartnerPolicy,
    seed: u64,
) -> Result<Episode, SimError> {
    let mut episode = rollout(scenario, policy, partner, seed)?;
    episode.evaluation = Some(evaluate_episode(&episode)?);
    Ok(episode)
}
