use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::partner::PartnerPolicy;
use super::SimError;
use crate::episode::{ActionToken, AgentProfile, Episode, SocialGoal, SplitTarget, DEFAULT_MAX_TURNS};

pub const LEARNER_ID: &str = "learner";
pub const PARTNER_ID: &str = "partner";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Hard,
}

/// One vocabulary entry. Templates may use `{k}` (units the speaker takes),
/// `{rest}` (units left to the listener) and `{total}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub token: ActionToken,
    pub template: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub name: String,
    #[serde(default)]
    pub background: String,
    pub target_units: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartnerSpec {
    pub name: String,
    #[serde(default)]
    pub background: String,
    #[serde(flatten)]
    pub policy: PartnerPolicy,
}

/// A resource-split negotiation between a learner and a scripted partner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub scenario_id: String,
    pub difficulty: Difficulty,
    pub resource_units: u32,
    #[serde(default = "default_max_turns")]
    pub max_turns: usize,
    pub agent: LearnerSpec,
    pub partner: PartnerSpec,
    #[serde(default)]
    pub vocabulary: Vec<VocabEntry>,
}

fn default_max_turns() -> usize {
    DEFAULT_MAX_TURNS
}

/// Scenario suite file: `[[scenarios]]` tables in TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSuite {
    pub scenarios: Vec<Scenario>,
}

impl ScenarioSuite {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let mut suite: ScenarioSuite =
            toml::from_str(text).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        if suite.scenarios.is_empty() {
            return Err(SimError::InvalidScenario("suite has no scenarios".into()));
        }
        for scenario in &mut suite.scenarios {
            scenario.fill_default_vocabulary();
            scenario.validate()?;
        }
        Ok(suite)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::InvalidScenario(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn get(&self, scenario_id: &str) -> Option<&Scenario> {
        self.scenarios.iter().find(|s| s.scenario_id == scenario_id)
    }
}

pub fn default_template(token: ActionToken) -> &'static str {
    match token {
        ActionToken::Propose(_) => {
            "How about I take {k} of the {total} units and you take the remaining {rest}?"
        }
        ActionToken::Accept => "That works for me, we have a deal.",
        ActionToken::Reject => "No, I can't agree to that.",
        ActionToken::Rapport => "I really appreciate you taking the time to work this out with me.",
        ActionToken::Hostile => "Honestly, you are being unreasonable and I am losing patience.",
        ActionToken::AskInfo => "Can you tell me what matters most to you here?",
        ActionToken::ShareInfo => "Let me be open about what I need and why it matters to me.",
        ActionToken::Leave => "I think we should end the conversation here.",
        ActionToken::Pass => "Hmm, let me think about that for a moment.",
    }
}

/// Full vocabulary for `resource_units` units: every proposal plus the fixed tokens.
pub fn default_vocabulary(resource_units: u32) -> Vec<VocabEntry> {
    let fixed = [
        ActionToken::Accept,
        ActionToken::Reject,
        ActionToken::Rapport,
        ActionToken::Hostile,
        ActionToken::AskInfo,
        ActionToken::ShareInfo,
        ActionToken::Leave,
        ActionToken::Pass,
    ];
    (0..=resource_units)
        .map(ActionToken::Propose)
        .chain(fixed)
        .map(|token| VocabEntry {
            token,
            template: default_template(token).to_string(),
        })
        .collect()
}

impl Scenario {
    /// The bundled easy scenario: compatible targets (6 + 4 = 10) and a warm partner.
    pub fn easy() -> Self {
        let mut scenario = Scenario {
            scenario_id: "easy-split".into(),
            difficulty: Difficulty::Easy,
            resource_units: 10,
            max_turns: DEFAULT_MAX_TURNS,
            agent: LearnerSpec {
                name: "Tom".into(),
                background: "Tom is a community garden volunteer who needs supplies for a new plot."
                    .into(),
                target_units: 6,
            },
            partner: PartnerSpec {
                name: "Finnegan O'Malley".into(),
                background: "Finnegan runs the tool shed and guards its stock carefully.".into(),
                policy: PartnerPolicy {
                    policy_id: "warm".into(),
                    agreeableness: 0.9,
                    info_willingness: 0.8,
                    reservation: 4,
                    rng_seed: 0,
                },
            },
            vocabulary: Vec::new(),
        };
        scenario.fill_default_vocabulary();
        scenario
    }

    /// The bundled hard scenario: the two targets cannot both be met (7 + 5 > 10).
    pub fn hard() -> Self {
        let mut scenario = Self::easy();
        scenario.scenario_id = "hard-split".into();
        scenario.difficulty = Difficulty::Hard;
        scenario.agent.target_units = 7;
        scenario.partner.policy = PartnerPolicy {
            policy_id: "guarded".into(),
            agreeableness: 0.6,
            info_willingness: 0.5,
            reservation: 5,
            rng_seed: 0,
        };
        scenario
    }

    /// Reconstructs the scenario an episode was generated from (default vocabulary).
    pub fn from_episode(episode: &Episode) -> Result<Self, SimError> {
        let learner = &episode.agents[0];
        let partner_profile = &episode.agents[1];
        let policy = PartnerPolicy::from_profile(partner_profile, episode.rng_seed)?;
        let k = learner.goal.target.resource_units;
        let difficulty = if learner.goal.target.target_units + policy.reservation > k {
            Difficulty::Hard
        } else {
            Difficulty::Easy
        };
        Ok(Scenario {
            scenario_id: episode.scenario_id.clone(),
            difficulty,
            resource_units: k,
            max_turns: episode.max_turns,
            agent: LearnerSpec {
                name: learner.display_name.clone(),
                background: learner.background.clone(),
                target_units: learner.goal.target.target_units,
            },
            partner: PartnerSpec {
                name: partner_profile.display_name.clone(),
                background: partner_profile.background.clone(),
                policy,
            },
            vocabulary: default_vocabulary(k),
        })
    }

    pub fn fill_default_vocabulary(&mut self) {
        if self.vocabulary.is_empty() {
            self.vocabulary = default_vocabulary(self.resource_units);
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidScenario(format!("{}: {msg}", self.scenario_id)));
        if self.resource_units < 2 {
            return bad("resource_units must be at least 2".into());
        }
        if self.max_turns == 0 {
            return bad("max_turns must be positive".into());
        }
        if self.agent.target_units > self.resource_units {
            return bad("agent target exceeds resource_units".into());
        }
        self.partner.policy.validate(self.resource_units)?;
        let mut seen = HashSet::new();
        for entry in &self.vocabulary {
            if !seen.insert(entry.token) {
                return bad(format!("duplicate token {}", entry.token));
            }
            if let ActionToken::Propose(k) = entry.token {
                if k > self.resource_units {
                    return bad(format!("{} exceeds resource_units", entry.token));
                }
            }
            if entry.template.trim().is_empty() {
                return bad(format!("empty template for {}", entry.token));
            }
        }
        for required in [ActionToken::Accept, ActionToken::Reject, ActionToken::Leave] {
            if !seen.contains(&required) {
                return bad(format!("vocabulary lacks {required}"));
            }
        }
        if !seen.iter().any(|t| matches!(t, ActionToken::Propose(_))) {
            return bad("vocabulary has no proposal".into());
        }
        Ok(())
    }

    pub fn tokens(&self) -> Vec<ActionToken> {
        self.vocabulary.iter().map(|e| e.token).collect()
    }

    pub fn token_index(&self, token: ActionToken) -> Option<usize> {
        self.vocabulary.iter().position(|e| e.token == token)
    }

    pub fn render(&self, token: ActionToken) -> String {
        let template = self
            .vocabulary
            .iter()
            .find(|e| e.token == token)
            .map(|e| e.template.as_str())
            .unwrap_or_else(|| default_template(token));
        let k = match token {
            ActionToken::Propose(k) => k,
            _ => 0,
        };
        template
            .replace("{k}", &k.to_string())
            .replace("{rest}", &self.resource_units.saturating_sub(k).to_string())
            .replace("{total}", &self.resource_units.to_string())
    }

    pub fn learner_profile(&self) -> AgentProfile {
        AgentProfile {
            agent_id: LEARNER_ID.into(),
            display_name: self.agent.name.clone(),
            background: self.agent.background.clone(),
            goal: SocialGoal {
                goal_id: format!("{}-learner", self.scenario_id),
                description: format!(
                    "Reach an agreement that gives you at least {} of the {} units.",
                    self.agent.target_units, self.resource_units
                ),
                target: SplitTarget {
                    resource_units: self.resource_units,
                    target_units: self.agent.target_units,
                },
            },
            hidden_traits: BTreeMap::new(),
        }
    }

    pub fn partner_profile(&self, partner: &PartnerPolicy) -> AgentProfile {
        AgentProfile {
            agent_id: PARTNER_ID.into(),
            display_name: self.partner.name.clone(),
            background: self.partner.background.clone(),
            goal: SocialGoal {
                goal_id: format!("{}-partner", self.scenario_id),
                description: format!(
                    "Keep at least {} of the {} units.",
                    partner.reservation, self.resource_units
                ),
                target: SplitTarget {
                    resource_units: self.resource_units,
                    target_units: partner.reservation,
                },
            },
            hidden_traits: partner.traits(),
        }
    }
}
