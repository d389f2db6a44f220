//! Dialogue data model.
//!
//! An [`Episode`] is a complete two-agent dialogue: the two agent profiles
//! (each with a private [`SocialGoal`]), the ordered utterances, and an
//! optional per-agent [`EvaluationVector`]. The decision problem each agent
//! faces is treated as an MDP whose state is the shared dialogue prefix plus
//! the agent's own goal ([`DialogueState`]); the partner's goal and hidden
//! traits are never part of that state.
//!
//! Episodes are stored one JSON object per line (`.episodes.jsonl`).

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub type AgentId = String;

pub const DEFAULT_MAX_TURNS: usize = 20;

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("turn {t} is out of range for an episode with {len} utterances")]
    IndexOutOfRange { t: usize, len: usize },
    #[error("agent `{0}` does not participate in this episode")]
    UnknownAgent(String),
    #[error("malformed record at byte {offset}: {message}")]
    MalformedRecord { offset: usize, message: String },
    #[error("invalid episode: {0}")]
    Invalid(String),
    #[error("episode store i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// A discrete utterance from the negotiation vocabulary.
///
/// `Propose(k)` always means "the speaker takes `k` units".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionToken {
    Propose(u32),
    Accept,
    Reject,
    Rapport,
    Hostile,
    AskInfo,
    ShareInfo,
    Leave,
    /// Neutral filler; also the no-op used by counterfactual replays.
    Pass,
}

/// Coarse token classes used for history counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TokenClass {
    Propose,
    Accept,
    Reject,
    Rapport,
    Hostile,
    AskInfo,
    ShareInfo,
    Leave,
    Pass,
}

impl TokenClass {
    pub const ALL: [TokenClass; 9] = [
        TokenClass::Propose,
        TokenClass::Accept,
        TokenClass::Reject,
        TokenClass::Rapport,
        TokenClass::Hostile,
        TokenClass::AskInfo,
        TokenClass::ShareInfo,
        TokenClass::Leave,
        TokenClass::Pass,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl ActionToken {
    pub fn class(self) -> TokenClass {
        match self {
            ActionToken::Propose(_) => TokenClass::Propose,
            ActionToken::Accept => TokenClass::Accept,
            ActionToken::Reject => TokenClass::Reject,
            ActionToken::Rapport => TokenClass::Rapport,
            ActionToken::Hostile => TokenClass::Hostile,
            ActionToken::AskInfo => TokenClass::AskInfo,
            ActionToken::ShareInfo => TokenClass::ShareInfo,
            ActionToken::Leave => TokenClass::Leave,
            ActionToken::Pass => TokenClass::Pass,
        }
    }
}

impl fmt::Display for ActionToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionToken::Propose(k) => write!(f, "propose({k})"),
            ActionToken::Accept => f.write_str("accept"),
            ActionToken::Reject => f.write_str("reject"),
            ActionToken::Rapport => f.write_str("rapport"),
            ActionToken::Hostile => f.write_str("hostile"),
            ActionToken::AskInfo => f.write_str("ask_info"),
            ActionToken::ShareInfo => f.write_str("share_info"),
            ActionToken::Leave => f.write_str("leave"),
            ActionToken::Pass => f.write_str("pass"),
        }
    }
}

impl FromStr for ActionToken {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let token = match s {
            "accept" => ActionToken::Accept,
            "reject" => ActionToken::Reject,
            "rapport" => ActionToken::Rapport,
            "hostile" => ActionToken::Hostile,
            "ask_info" => ActionToken::AskInfo,
            "share_info" => ActionToken::ShareInfo,
            "leave" => ActionToken::Leave,
            "pass" => ActionToken::Pass,
            other => {
                let k = other
                    .strip_prefix("propose(")
                    .and_then(|rest| rest.strip_suffix(')'))
                    .and_then(|n| n.parse::<u32>().ok())
                    .ok_or_else(|| format!("unknown action token `{other}`"))?;
                ActionToken::Propose(k)
            }
        };
        Ok(token)
    }
}

impl Serialize for ActionToken {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ActionToken {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// Evaluation dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Dimension {
    Goal,
    Rel,
    Kno,
    Bel,
    Sec,
    Soc,
    Fin,
}

impl Dimension {
    pub const SCORED: [Dimension; 3] = [Dimension::Goal, Dimension::Rel, Dimension::Kno];

    pub fn name(self) -> &'static str {
        match self {
            Dimension::Goal => "GOAL",
            Dimension::Rel => "REL",
            Dimension::Kno => "KNO",
            Dimension::Bel => "BEL",
            Dimension::Sec => "SEC",
            Dimension::Soc => "SOC",
            Dimension::Fin => "FIN",
        }
    }

    /// Closed score range, where one is fixed.
    pub fn range(self) -> Option<(f64, f64)> {
        match self {
            Dimension::Goal | Dimension::Kno => Some((0.0, 10.0)),
            Dimension::Rel => Some((-5.0, 5.0)),
            _ => None,
        }
    }

    /// Width of the score range, used to normalize score differences.
    pub fn scale(self) -> f64 {
        self.range().map(|(lo, hi)| hi - lo).unwrap_or(10.0)
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "GOAL" => Ok(Dimension::Goal),
            "REL" => Ok(Dimension::Rel),
            "KNO" => Ok(Dimension::Kno),
            "BEL" => Ok(Dimension::Bel),
            "SEC" => Ok(Dimension::Sec),
            "SOC" => Ok(Dimension::Soc),
            "FIN" => Ok(Dimension::Fin),
            other => Err(format!("unknown dimension `{other}`")),
        }
    }
}

/// Desired split in the resource negotiation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitTarget {
    pub resource_units: u32,
    pub target_units: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocialGoal {
    pub goal_id: String,
    pub description: String,
    pub target: SplitTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub agent_id: AgentId,
    pub display_name: String,
    #[serde(default)]
    pub background: String,
    pub goal: SocialGoal,
    /// Traits in `[0, 1]`, read only by scripted partner policies.
    #[serde(default)]
    pub hidden_traits: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub turn_index: usize,
    pub speaker: AgentId,
    pub action_token: ActionToken,
    pub rendered_text: String,
}

/// Per-agent episode-level scores.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvaluationVector {
    pub scores: BTreeMap<Dimension, f64>,
}

impl EvaluationVector {
    pub fn new(goal: f64, rel: f64, kno: f64) -> Self {
        let scores = BTreeMap::from([
            (Dimension::Goal, goal),
            (Dimension::Rel, rel),
            (Dimension::Kno, kno),
        ]);
        Self { scores }
    }

    pub fn get(&self, dimension: Dimension) -> Option<f64> {
        self.scores.get(&dimension).copied()
    }

    pub fn validate(&self) -> Result<(), EpisodeError> {
        for dim in Dimension::SCORED {
            if !self.scores.contains_key(&dim) {
                return Err(EpisodeError::Invalid(format!("evaluation is missing {dim}")));
            }
        }
        for (dim, value) in &self.scores {
            if !value.is_finite() {
                return Err(EpisodeError::Invalid(format!("{dim} score is not finite")));
            }
            if let Some((lo, hi)) = dim.range() {
                if *value < lo || *value > hi {
                    return Err(EpisodeError::Invalid(format!(
                        "{dim} score {value} outside [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// How an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Agreement,
    Leave,
    /// `max_turns` reached without a terminal token; treated as a forced leave.
    MaxTurns,
}

/// The MDP state of one agent: the shared prefix plus that agent's goal.
#[derive(Debug, Clone, PartialEq)]
pub struct DialogueState {
    pub history: Vec<Utterance>,
    pub acting_agent: AgentId,
    pub goal: SocialGoal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub episode_id: String,
    pub scenario_id: String,
    pub agents: [AgentProfile; 2],
    pub utterances: Vec<Utterance>,
    #[serde(default)]
    pub evaluation: Option<BTreeMap<AgentId, EvaluationVector>>,
    pub rng_seed: u64,
    #[serde(default = "default_max_turns")]
    pub max_turns: usize,
    #[serde(default)]
    pub termination: Option<Termination>,
}

fn default_max_turns() -> usize {
    DEFAULT_MAX_TURNS
}

impl Episode {
    pub fn agent(&self, agent: &str) -> Result<&AgentProfile, EpisodeError> {
        self.agents
            .iter()
            .find(|a| a.agent_id == agent)
            .ok_or_else(|| EpisodeError::UnknownAgent(agent.to_string()))
    }

    /// Seat (0 or 1) of an agent.
    pub fn seat(&self, agent: &str) -> Result<usize, EpisodeError> {
        self.agents
            .iter()
            .position(|a| a.agent_id == agent)
            .ok_or_else(|| EpisodeError::UnknownAgent(agent.to_string()))
    }

    pub fn partner_of(&self, agent: &str) -> Result<&AgentProfile, EpisodeError> {
        let seat = self.seat(agent)?;
        Ok(&self.agents[1 - seat])
    }

    /// The state seen by `agent` after the first `t` utterances.
    pub fn observation_at(&self, t: usize, agent: &str) -> Result<DialogueState, EpisodeError> {
        let profile = self.agent(agent)?;
        if t > self.utterances.len() {
            return Err(EpisodeError::IndexOutOfRange {
                t,
                len: self.utterances.len(),
            });
        }
        Ok(DialogueState {
            history: self.utterances[..t].to_vec(),
            acting_agent: profile.agent_id.clone(),
            goal: profile.goal.clone(),
        })
    }

    /// One `(state, action)` pair per utterance spoken by `agent`, in turn order.
    pub fn decompose(&self, agent: &str) -> Result<Vec<(DialogueState, Utterance)>, EpisodeError> {
        self.agent(agent)?;
        self.utterances
            .iter()
            .enumerate()
            .filter(|(_, u)| u.speaker == agent)
            .map(|(t, u)| Ok((self.observation_at(t, agent)?, u.clone())))
            .collect()
    }

    /// Utterances spoken by `agent`.
    pub fn utterances_by<'a>(&'a self, agent: &'a str) -> impl Iterator<Item = &'a Utterance> + 'a {
        self.utterances.iter().filter(move |u| u.speaker == agent)
    }

    pub fn evaluation_for(&self, agent: &str) -> Option<&EvaluationVector> {
        self.evaluation.as_ref().and_then(|e| e.get(agent))
    }

    pub fn validate(&self) -> Result<(), EpisodeError> {
        let [a, b] = &self.agents;
        if a.agent_id == b.agent_id {
            return Err(EpisodeError::Invalid("agent ids must be distinct".into()));
        }
        for agent in &self.agents {
            if agent.goal.description.trim().is_empty() {
                return Err(EpisodeError::Invalid(format!(
                    "agent `{}` has an empty goal description",
                    agent.agent_id
                )));
            }
            if let Some((name, v)) = agent
                .hidden_traits
                .iter()
                .find(|(_, v)| !(0.0..=1.0).contains(*v))
            {
                return Err(EpisodeError::Invalid(format!(
                    "trait `{name}` of `{}` is {v}, outside [0, 1]",
                    agent.agent_id
                )));
            }
        }
        if self.utterances.len() > self.max_turns {
            return Err(EpisodeError::Invalid(format!(
                "{} utterances exceed max_turns {}",
                self.utterances.len(),
                self.max_turns
            )));
        }
        let known: HashSet<&str> = self.agents.iter().map(|a| a.agent_id.as_str()).collect();
        for (t, u) in self.utterances.iter().enumerate() {
            if u.turn_index != t {
                return Err(EpisodeError::Invalid(format!(
                    "utterance {t} carries turn_index {}",
                    u.turn_index
                )));
            }
            if !known.contains(u.speaker.as_str()) {
                return Err(EpisodeError::UnknownAgent(u.speaker.clone()));
            }
            if t > 0 && self.utterances[t - 1].speaker == u.speaker {
                return Err(EpisodeError::Invalid(format!(
                    "speakers do not alternate at turn {t}"
                )));
            }
            if u.rendered_text.trim().is_empty() {
                return Err(EpisodeError::Invalid(format!("utterance {t} has empty text")));
            }
        }
        if let Some(evaluation) = &self.evaluation {
            for agent in &self.agents {
                evaluation
                    .get(&agent.agent_id)
                    .ok_or_else(|| {
                        EpisodeError::Invalid(format!("no evaluation for `{}`", agent.agent_id))
                    })?
                    .validate()?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("episodes always serialize")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EpisodeError> {
        let episode: Episode = serde_json::from_slice(bytes).map_err(|e| malformed(bytes, &e))?;
        episode.validate()?;
        Ok(episode)
    }
}

/// Byte offset of a serde_json error (line/column are 1-based).
fn malformed(bytes: &[u8], err: &serde_json::Error) -> EpisodeError {
    let mut offset = 0;
    for (i, line) in bytes.split(|b| *b == b'\n').enumerate() {
        if i + 1 == err.line() {
            offset += err.column().saturating_sub(1).min(line.len());
            break;
        }
        offset += line.len() + 1;
    }
    EpisodeError::MalformedRecord {
        offset: offset.min(bytes.len()),
        message: err.to_string(),
    }
}

pub fn write_episodes(path: &Path, episodes: &[Episode]) -> Result<(), EpisodeError> {
    let mut out = BufWriter::new(File::create(path)?);
    for episode in episodes {
        out.write_all(&episode.to_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads an episode store; offsets in errors are relative to the whole file.
pub fn read_episodes(path: &Path) -> Result<Vec<Episode>, EpisodeError> {
    let reader = BufReader::new(File::open(path)?);
    let mut episodes = Vec::new();
    let mut base = 0;
    for line in reader.split(b'\n') {
        let line = line?;
        let len = line.len() + 1;
        if !line.iter().all(u8::is_ascii_whitespace) {
            match Episode::from_bytes(&line) {
                Ok(e) => episodes.push(e),
                Err(EpisodeError::MalformedRecord { offset, message }) => {
                    return Err(EpisodeError::MalformedRecord {
                        offset: base + offset,
                        message,
                    })
                }
                Err(other) => return Err(other),
            }
        }
        base += len;
    }
    Ok(episodes)
}


#[cfg(test)]
mod tests {
    use super::fixtures::episode;
    use super::*;
    use ActionToken::*;

    fn eight() -> Episode {
        episode(&[Rapport, Pass, AskInfo, ShareInfo, Propose(6), Propose(5), Accept, Pass])
    }

    #[test]
    fn observation_prefixes() {
        let e = episode(&[Rapport, Pass, Propose(6), Accept]);
        let s = e.observation_at(0, "A").unwrap();
        assert!(s.history.is_empty());
        assert_eq!(s.goal.target.target_units, 6);
        let s = e.observation_at(4, "B").unwrap();
        assert_eq!(s.history, e.utterances);
        assert_eq!(s.goal.target.target_units, 4);
        assert!(matches!(
            e.observation_at(5, "A"),
            Err(EpisodeError::IndexOutOfRange { t: 5, len: 4 })
        ));
        assert!(matches!(e.observation_at(0, "Z"), Err(EpisodeError::UnknownAgent(_))));
    }

    #[test]
    fn decompose_agent_a_turns() {
        let pairs = eight().decompose("A").unwrap();
        let turns: Vec<usize> = pairs.iter().map(|(_, u)| u.turn_index).collect();
        assert_eq!(turns, vec![0, 2, 4, 6]);
        for (state, u) in &pairs {
            assert_eq!(state.history.len(), u.turn_index);
        }
        assert!(episode(&[]).decompose("A").unwrap().is_empty());
        assert!(matches!(eight().decompose("Q"), Err(EpisodeError::UnknownAgent(_))));
    }

    #[test]
    fn decompose_matches_prefix_enumeration() {
        let e = eight();
        // Oracle: walk every prefix and keep those followed by a B utterance.
        let mut expected = Vec::new();
        for t in 0..e.utterances.len() {
            if e.utterances[t].speaker == "B" {
                expected.push((e.utterances[..t].to_vec(), e.utterances[t].clone()));
            }
        }
        let got = e.decompose("B").unwrap();
        assert_eq!(got.len(), expected.len());
        for ((state, u), (prefix, action)) in got.iter().zip(&expected) {
            assert_eq!(&state.history, prefix);
            assert_eq!(u, action);
            assert_eq!(state.acting_agent, "B");
        }
    }

    #[test]
    fn truncated_record_is_malformed() {
        let bytes = eight().to_bytes();
        let cut = &bytes[..bytes.len() / 2];
        match Episode::from_bytes(cut) {
            Err(EpisodeError::MalformedRecord { offset, .. }) => assert!(offset <= cut.len()),
            other => panic!("expected MalformedRecord, got {other:?}"),
        }
    }

    #[test]
    fn field_order_does_not_matter() {
        let e = eight();
        let value: serde_json::Value = serde_json::from_slice(&e.to_bytes()).unwrap();
        let obj = value.as_object().unwrap();
        // Rebuild the object with keys in reverse order.
        let mut text = String::from("{");
        for (i, (k, v)) in obj.iter().rev().enumerate() {
            if i > 0 {
                text.push(',');
            }
            text.push_str(&format!("{}:{}", serde_json::to_string(k).unwrap(), v));
        }
        text.push('}');
        assert_eq!(Episode::from_bytes(text.as_bytes()).unwrap(), e);
    }

    #[test]
    fn validation_rejects_broken_alternation_and_ranges() {
        let mut e = eight();
        e.utterances[1].speaker = "A".into();
        assert!(e.validate().is_err());

        let mut e = eight();
        e.agents[1].hidden_traits.insert("agreeableness".into(), 1.5);
        assert!(e.validate().is_err());

        let mut e = eight();
        let mut eval = BTreeMap::new();
        eval.insert("A".to_string(), EvaluationVector::new(11.0, 0.0, 0.0));
        eval.insert("B".to_string(), EvaluationVector::new(1.0, 0.0, 0.0));
        e.evaluation = Some(eval);
        assert!(e.validate().is_err());
    }

    #[test]
    fn token_text_round_trip() {
        for tok in [Propose(0), Propose(10), Accept, Reject, Rapport, Hostile, AskInfo, ShareInfo, Leave, Pass] {
            assert_eq!(tok.to_string().parse::<ActionToken>().unwrap(), tok);
        }
        assert!("propose(x)".parse::<ActionToken>().is_err());
    }
}
