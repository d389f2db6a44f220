//! Agent-side policies for seat 0.

use rand::Rng;

use super::rules::NegotiationState;
use super::scenario::Scenario;
use crate::episode::{ActionToken, DialogueState};

/// A policy over the scenario vocabulary.
pub trait UtterancePolicy: Send + Sync {
    /// Probability of each vocabulary entry, in vocabulary order.
    fn distribution(&self, scenario: &Scenario, state: &DialogueState) -> Vec<f64>;

    /// Picks a vocabulary index. Wrappers such as best-of-N override this.
    fn choose(&self, scenario: &Scenario, state: &DialogueState, rng: &mut dyn rand::RngCore) -> usize {
        sample_index(&self.distribution(scenario, state), rng)
    }
}

/// Inverse-CDF draw from a normalized distribution.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left a sliver above the last cumulative sum.
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

fn normalize(mut weights: Vec<f64>) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    weights
}

/// Always emits one token.
#[derive(Debug, Clone)]
pub struct FixedPolicy(pub ActionToken);

impl UtterancePolicy for FixedPolicy {
    fn distribution(&self, scenario: &Scenario, _state: &DialogueState) -> Vec<f64> {
        let idx = scenario.token_index(self.0).expect("fixed token is in the vocabulary");
        let mut probs = vec![0.0; scenario.vocabulary.len()];
        probs[idx] = 1.0;
        probs
    }
}

/// Replays a fixed script, then leaves.
#[derive(Debug, Clone)]
pub struct ScriptPolicy(pub Vec<ActionToken>);

impl UtterancePolicy for ScriptPolicy {
    fn distribution(&self, scenario: &Scenario, state: &DialogueState) -> Vec<f64> {
        let own_turn = state.history.len() / 2;
        let token = self.0.get(own_turn).copied().unwrap_or(ActionToken::Leave);
        FixedPolicy(token).distribution(scenario, state)
    }
}

#[derive(Debug, Clone, Default)]
pub struct UniformPolicy;

impl UtterancePolicy for UniformPolicy {
    fn distribution(&self, scenario: &Scenario, _state: &DialogueState) -> Vec<f64> {
        let n = scenario.vocabulary.len();
        vec![1.0 / n as f64; n]
    }
}

/// Hand-written demonstrator standing in for the self-play corpus.
///
/// It bargains plausibly but greedily: it opens with inflated proposals,
/// builds rapport only sometimes, and now and then turns hostile. An
/// `epsilon` share of uniform noise keeps every token in its support.
#[derive(Debug, Clone)]
pub struct ScriptedNegotiator {
    pub epsilon: f64,
}

impl Default for ScriptedNegotiator {
    fn default() -> Self {
        Self { epsilon: 0.1 }
    }
}

impl UtterancePolicy for ScriptedNegotiator {
    fn distribution(&self, scenario: &Scenario, state: &DialogueState) -> Vec<f64> {
        let k_total = scenario.resource_units;
        let target = state.goal.target.target_units;
        let negotiation = NegotiationState::from_history(k_total, &state.history);
        let me = negotiation.to_move();
        let partner_asked = matches!(negotiation.last, Some((s, ActionToken::AskInfo)) if s != me);
        let offer = negotiation.offer_to(me);

        let weights: Vec<f64> = scenario
            .vocabulary
            .iter()
            .map(|entry| match entry.token {
                ActionToken::Propose(k) if k >= target => {
                    // Greedier proposals are favored.
                    0.3 * (1.0 + 0.5 * (k - target) as f64)
                }
                ActionToken::Propose(_) => 0.05,
                ActionToken::Accept => match offer {
                    Some(units) if units >= target => 5.0,
                    Some(units) if units + 1 >= target => 1.0,
                    Some(_) => 0.3,
                    None => 0.05,
                },
                ActionToken::Reject => {
                    if offer.is_some() {
                        1.0
                    } else {
                        0.05
                    }
                }
                ActionToken::Rapport => 1.5,
                ActionToken::Hostile => 0.3,
                ActionToken::AskInfo => 1.2,
                ActionToken::ShareInfo => {
                    if partner_asked {
                        2.0
                    } else {
                        0.3
                    }
                }
                ActionToken::Leave => 0.1,
                ActionToken::Pass => 0.4,
            })
            .collect();
        let greedy = normalize(weights);
        let n = greedy.len() as f64;
        greedy
            .into_iter()
            .map(|p| (1.0 - self.epsilon) * p + self.epsilon / n)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn sampling_follows_cumulative_mass() {
        let mut rng = seed::rng(5);
        let probs = [0.2, 0.0, 0.8];
        let mut counts = [0usize; 3];
        for _ in 0..10_000 {
            counts[sample_index(&probs, &mut rng)] += 1;
        }
        assert_eq!(counts[1], 0);
        assert!((counts[0] as f64 / 10_000.0 - 0.2).abs() < 0.02);
    }

    #[test]
    fn demonstrator_distribution_is_normalized_with_full_support() {
        let scenario = Scenario::easy();
        let state = DialogueState {
            history: Vec::new(),
            acting_agent: "learner".into(),
            goal: scenario.learner_profile().goal,
        };
        let probs = ScriptedNegotiator::default().distribution(&scenario, &state);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(probs.iter().all(|p| *p > 0.0));
    }
}
