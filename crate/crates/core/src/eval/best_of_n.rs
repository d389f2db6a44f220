//! Best-of-N reranking with a reward model.

use rand::RngCore;

use crate::episode::DialogueState;
use crate::reward_model::RewardModel;
use crate::sim::{sample_index, Scenario, UtterancePolicy};

/// Draws `n` candidates from `probs` in order and returns
/// `(chosen position, candidates)`: the candidate with the highest `score`,
/// earliest on ties. The first `m` draws of a stream are shared by every
/// `n ≥ m`, so candidate sets for growing `n` are nested.
pub fn best_of_n_with<R: RngCore + ?Sized>(
    probs: &[f64],
    n: usize,
    rng: &mut R,
    score: impl Fn(usize) -> f64,
) -> (usize, Vec<usize>) {
    let n = n.max(1);
    let candidates: Vec<usize> = (0..n).map(|_| sample_index(probs, rng)).collect();
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, c) in candidates.iter().enumerate() {
        let s = score(*c);
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    (best, candidates)
}

/// Vocabulary index chosen by reranking `n` samples of `policy` with `rm`.
pub fn best_of_n(
    policy: &dyn UtterancePolicy,
    rm: &RewardModel,
    scenario: &Scenario,
    state: &DialogueState,
    n: usize,
    rng: &mut dyn RngCore,
) -> usize {
    let probs = policy.distribution(scenario, state);
    let context = rm.featurizer.context(state);
    let target = state.goal.target.target_units;
    let (pos, candidates) = best_of_n_with(&probs, n, rng, |a| rm.predict_from_context(&context, a, target));
    candidates[pos]
}

/// A policy wrapper that reranks `n` samples per turn.
pub struct BestOfN<'a> {
    pub policy: &'a dyn UtterancePolicy,
    pub rm: &'a RewardModel,
    pub n: usize,
}

impl UtterancePolicy for BestOfN<'_> {
    /// The base policy's distribution; the reranked choice is not a closed form.
    fn distribution(&self, scenario: &Scenario, state: &DialogueState) -> Vec<f64> {
        self.policy.distribution(scenario, state)
    }

    fn choose(&self, scenario: &Scenario, state: &DialogueState, rng: &mut dyn RngCore) -> usize {
        best_of_n(self.policy, self.rm, scenario, state, self.n, rng)
    }
}
