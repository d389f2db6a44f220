use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rules::{NegotiationState, WALKOUT_MOOD};
use super::SimError;
use crate::episode::{ActionToken, AgentProfile, TokenClass};

pub const AGREEABLENESS: &str = "agreeableness";
pub const INFO_WILLINGNESS: &str = "info_willingness";
/// Pieces of information the partner holds; once shared, further asks get `pass`.
pub const PARTNER_FACTS: u32 = 2;

/// Scripted, seeded partner occupying seat 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartnerPolicy {
    pub policy_id: String,
    pub agreeableness: f64,
    pub info_willingness: f64,
    /// Fewest units the partner will ever keep.
    pub reservation: u32,
    #[serde(default)]
    pub rng_seed: u64,
}

impl PartnerPolicy {
    pub fn validate(&self, resource_units: u32) -> Result<(), SimError> {
        for (name, v) in [
            (AGREEABLENESS, self.agreeableness),
            (INFO_WILLINGNESS, self.info_willingness),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SimError::InvalidScenario(format!(
                    "partner {name} {v} outside [0, 1]"
                )));
            }
        }
        if self.reservation > resource_units {
            return Err(SimError::InvalidScenario(format!(
                "partner reservation {} exceeds {resource_units} units",
                self.reservation
            )));
        }
        Ok(())
    }

    pub fn traits(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([
            (AGREEABLENESS.to_string(), self.agreeableness),
            (INFO_WILLINGNESS.to_string(), self.info_willingness),
        ])
    }

    /// Rebuilds the partner from its episode profile.
    pub fn from_profile(profile: &AgentProfile, rng_seed: u64) -> Result<Self, SimError> {
        let get = |name: &str| {
            profile.hidden_traits.get(name).copied().ok_or_else(|| {
                SimError::InvalidScenario(format!(
                    "profile `{}` lacks trait `{name}`",
                    profile.agent_id
                ))
            })
        };
        Ok(Self {
            policy_id: profile.agent_id.clone(),
            agreeableness: get(AGREEABLENESS)?,
            info_willingness: get(INFO_WILLINGNESS)?,
            reservation: profile.goal.target.target_units,
            rng_seed,
        })
    }

    /// The partner's reply to seat 0's latest utterance.
    pub fn respond<R: Rng>(&self, state: &NegotiationState, rng: &mut R) -> ActionToken {
        let a = self.agreeableness;
        let w = self.info_willingness;
        let k_total = state.resource_units;
        let demand = state.partner_demand(self.reservation);
        let ask = ActionToken::Propose(state.partner_ask(self.reservation));
        if state.mood <= WALKOUT_MOOD {
            return ActionToken::Leave;
        }
        let u: f64 = rng.random();
        let Some((_, last)) = state.last else {
            return ActionToken::Pass;
        };
        match last {
            ActionToken::Propose(k) => {
                if k_total.saturating_sub(k) >= demand {
                    if u < 0.6 + 0.4 * a {
                        ActionToken::Accept
                    } else {
                        ask
                    }
                } else if u < 0.5 * (1.0 - a) {
                    ActionToken::Reject
                } else {
                    ask
                }
            }
            ActionToken::Reject => ask,
            // An accept with no standing offer is a no-op; an accepted offer ends the episode.
            ActionToken::Accept => ActionToken::Pass,
            ActionToken::Rapport => {
                if u < a {
                    ActionToken::Rapport
                } else {
                    ActionToken::Pass
                }
            }
            ActionToken::Hostile => {
                if u < 1.0 - a {
                    ActionToken::Hostile
                } else {
                    ActionToken::Pass
                }
            }
            ActionToken::AskInfo => {
                let shared = state.counts[1][TokenClass::ShareInfo.index()];
                if shared < PARTNER_FACTS && u < w {
                    ActionToken::ShareInfo
                } else {
                    ActionToken::Pass
                }
            }
            ActionToken::ShareInfo => {
                if u < 0.5 * w {
                    ActionToken::AskInfo
                } else if u < 0.5 * w + 0.3 * a {
                    ActionToken::Rapport
                } else {
                    ActionToken::Pass
                }
            }
            ActionToken::Pass => {
                if u < 0.3 * w {
                    ActionToken::AskInfo
                } else if u < 0.3 * w + 0.4 {
                    ask
                } else {
                    ActionToken::Pass
                }
            }
            ActionToken::Leave => ActionToken::Leave,
        }
    }
}
