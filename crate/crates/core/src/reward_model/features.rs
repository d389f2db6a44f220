//! Feature map over (dialogue state, candidate utterance).
//!
//! The state is summarized by a context vector seen from the acting agent's
//! seat; a candidate utterance by an action descriptor (one-hot plus a few
//! proposal scalars). Reward-model features are the descriptor, the context,
//! and their outer product, so a linear model can still score the same
//! utterance differently in different states. The policy uses the context
//! alone, with one weight column per vocabulary entry.

use crate::episode::{ActionToken, DialogueState, TokenClass};
use crate::sim::rules::{NegotiationState, MOOD_CAP, WARM_MOOD};
use crate::sim::Scenario;

use super::RewardModelError;

/// Per-class utterance counts are thermometer coded up to this many.
const COUNT_LEVELS: u32 = 3;
const EXTRA_ACTION_FEATURES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Featurizer {
    tokens: Vec<ActionToken>,
    resource_units: u32,
    max_turns: usize,
}

impl Featurizer {
    pub fn new(scenario: &Scenario) -> Self {
        Self {
            tokens: scenario.tokens(),
            resource_units: scenario.resource_units,
            max_turns: scenario.max_turns,
        }
    }

    pub fn tokens(&self) -> &[ActionToken] {
        &self.tokens
    }

    pub fn n_actions(&self) -> usize {
        self.tokens.len()
    }

    pub fn context_dim(&self) -> usize {
        // bias, length, own/other class-count codes, 4 disposition features, last-other one-hot, 4 goal scalars
        2 + 2 * TokenClass::ALL.len() * COUNT_LEVELS as usize + 4 + (TokenClass::ALL.len() + 1) + 4
    }

    pub fn action_dim(&self) -> usize {
        self.tokens.len() + EXTRA_ACTION_FEATURES
    }

    pub fn feature_dim(&self) -> usize {
        let (c, d) = (self.context_dim(), self.action_dim());
        d + c + d * c
    }

    pub fn action_index(&self, token: ActionToken) -> Result<usize, RewardModelError> {
        self.tokens
            .iter()
            .position(|t| *t == token)
            .ok_or(RewardModelError::UnknownToken(token))
    }

    /// State summary from the acting agent's seat.
    pub fn context(&self, state: &DialogueState) -> Vec<f64> {
        let k_total = self.resource_units as f64;
        let negotiation = NegotiationState::from_history(self.resource_units, &state.history);
        let me = negotiation.to_move();
        let other = 1 - me;
        let mut c = Vec::with_capacity(self.context_dim());
        c.push(1.0);
        c.push(state.history.len() as f64 / self.max_turns as f64);
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        for seat in [me, other] {
            for n in negotiation.counts[seat] {
                c.extend((1..=COUNT_LEVELS).map(|level| flag(n >= level)));
            }
        }
        c.push(flag(negotiation.exchanges >= 1));
        c.push(flag(negotiation.exchanges >= 2));
        // The partner's disposition is a function of the visible history.
        c.push(negotiation.mood as f64 / MOOD_CAP as f64);
        c.push(flag(negotiation.mood >= WARM_MOOD));
        let mut last_other = vec![0.0; TokenClass::ALL.len() + 1];
        match negotiation.last {
            Some((seat, token)) if seat == other => last_other[token.class().index()] = 1.0,
            _ => last_other[TokenClass::ALL.len()] = 1.0,
        }
        c.extend(last_other);
        let target = state.goal.target.target_units as f64;
        c.push(target / k_total);
        match negotiation.offer_to(me) {
            Some(units) => {
                let units = units as f64;
                c.push(units / k_total);
                c.push(flag(units >= target));
                c.push(((target - units) / k_total).max(0.0));
            }
            None => c.extend([0.0, 0.0, 0.0]),
        }
        debug_assert_eq!(c.len(), self.context_dim());
        c
    }

    /// Descriptor of candidate `action` for an agent whose target is `target_units`.
    pub fn action_descriptor(&self, action: usize, target_units: u32) -> Vec<f64> {
        let mut d = vec![0.0; self.action_dim()];
        d[action] = 1.0;
        if let ActionToken::Propose(k) = self.tokens[action] {
            let n = self.tokens.len();
            let k_total = self.resource_units as f64;
            d[n] = 1.0;
            d[n + 1] = k as f64 / k_total;
            d[n + 2] = if k >= target_units { 1.0 } else { 0.0 };
            d[n + 3] = (k as f64 - target_units as f64) / k_total;
        }
        d
    }

    /// Reward-model features from a precomputed context.
    pub fn features_from_context(&self, context: &[f64], action: usize, target_units: u32) -> FeatureVector {
        let d = self.action_descriptor(action, target_units);
        let mut x = Vec::with_capacity(self.feature_dim());
        x.extend_from_slice(&d);
        x.extend_from_slice(context);
        for di in &d {
            for ci in context {
                x.push(di * ci);
            }
        }
        FeatureVector(x)
    }

    pub fn features(&self, state: &DialogueState, action: ActionToken) -> Result<FeatureVector, RewardModelError> {
        let a = self.action_index(action)?;
        let ctx = self.context(state);
        Ok(self.features_from_context(&ctx, a, state.goal.target.target_units))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::fixtures::episode;
    use ActionToken::*;

    #[test]
    fn dimensions_are_consistent_and_finite() {
        let scenario = Scenario::easy();
        let f = Featurizer::new(&scenario);
        let e = episode(&[Rapport, Propose(7), AskInfo, ShareInfo, Propose(6)]);
        for t in 0..=e.utterances.len() {
            let agent = if t % 2 == 0 { "A" } else { "B" };
            let state = e.observation_at(t, agent).unwrap();
            let ctx = f.context(&state);
            assert_eq!(ctx.len(), f.context_dim());
            let x = f.features(&state, Propose(6)).unwrap();
            assert_eq!(x.len(), f.feature_dim());
            assert!(x.as_slice().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn standing_offer_is_encoded() {
        let scenario = Scenario::easy();
        let f = Featurizer::new(&scenario);
        let e = episode(&[Pass, Propose(4)]);
        let ctx = f.context(&e.observation_at(2, "A").unwrap());
        let n = ctx.len();
        // Partner keeps 4 of 10, so 6 are on offer against a target of 6.
        assert!((ctx[n - 3] - 0.6).abs() < 1e-12);
        assert_eq!(ctx[n - 2], 1.0);
        assert_eq!(ctx[n - 1], 0.0);
    }

    #[test]
    fn unknown_token_is_rejected() {
        let scenario = Scenario::easy();
        let f = Featurizer::new(&scenario);
        let e = episode(&[]);
        assert!(matches!(
            f.features(&e.observation_at(0, "A").unwrap(), Propose(11)),
            Err(RewardModelError::UnknownToken(_))
        ));
    }
}
