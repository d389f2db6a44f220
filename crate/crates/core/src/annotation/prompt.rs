//! Annotation requests and prompt rendering.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::templates::{self, ATTRIBUTION_TEMPLATE, DIRECT_ATTRIBUTION, SINGULAR_ATTRIBUTION};
use super::AnnotationError;
use crate::episode::{Dimension, Episode, Utterance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Instruction {
    /// Per-utterance importance scores.
    Direct,
    /// The single most critical utterance.
    Singular,
}

/// What the annotator gets to see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    /// The complete episode.
    #[default]
    Offline,
    /// Only the prefix ending at each scored utterance.
    Online,
}

/// Inclusive integer range a reply's scores must fall in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScoreBounds {
    pub lo: i64,
    pub hi: i64,
}

impl ScoreBounds {
    pub fn new(lo: i64, hi: i64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: i64) -> bool {
        (self.lo..=self.hi).contains(&v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRequest {
    pub episode: Episode,
    pub agent: String,
    pub dimension: Dimension,
    pub dimension_description: String,
    pub instruction: Instruction,
    pub rubric_max: u32,
    pub bounds: ScoreBounds,
    #[serde(default)]
    pub context: ContextMode,
}

impl AnnotationRequest {
    /// Request with the bundled rubric text and `[0, 3]` scores.
    pub fn new(episode: Episode, agent: &str, dimension: Dimension, instruction: Instruction) -> Self {
        Self {
            episode,
            agent: agent.to_string(),
            dimension,
            dimension_description: templates::dimension_description(dimension).unwrap_or_default().to_string(),
            instruction,
            rubric_max: 3,
            bounds: ScoreBounds::new(0, 3),
            context: ContextMode::Offline,
        }
    }

    pub fn with_context(mut self, context: ContextMode) -> Self {
        self.context = context;
        self
    }

    pub fn with_bounds(mut self, rubric_max: u32, bounds: ScoreBounds) -> Self {
        self.rubric_max = rubric_max;
        self.bounds = bounds;
        self
    }

    pub fn validate(&self) -> Result<(), AnnotationError> {
        let bad = |m: &str| Err(AnnotationError::PromptValidation(m.to_string()));
        if self.episode.utterances.is_empty() {
            return bad("the conversation is empty");
        }
        if self.dimension_description.trim().is_empty() {
            return bad("dimension description is empty");
        }
        if self.rubric_max < 1 {
            return bad("rubric_max must be at least 1");
        }
        if self.bounds.lo > self.bounds.hi || self.bounds.lo < 0 {
            return bad("score bounds must satisfy 0 <= lo <= hi");
        }
        self.episode
            .agent(&self.agent)
            .map_err(|e| AnnotationError::PromptValidation(e.to_string()))?;
        if self.agent_turns().is_empty() {
            return Err(AnnotationError::EmptyAgentHistory(self.agent.clone()));
        }
        Ok(())
    }

    pub fn display_name(&self) -> &str {
        self.episode.agent(&self.agent).map(|a| a.display_name.as_str()).unwrap_or(&self.agent)
    }

    /// Turn indices of the agent's utterances.
    pub fn agent_turns(&self) -> Vec<usize> {
        self.episode.utterances_by(&self.agent).map(|u| u.turn_index).collect()
    }

    /// Reply keys, one per agent utterance, in turn order.
    pub fn expected_keys(&self) -> Vec<String> {
        let name = self.display_name();
        self.agent_turns().into_iter().map(|t| utterance_label(t, name)).collect()
    }

    /// The same request over the prefix ending at turn `turn` (inclusive).
    pub fn truncated(&self, turn: usize) -> Self {
        let mut out = self.clone();
        out.episode.utterances.truncate(turn + 1);
        out.episode.evaluation = None;
        out.episode.termination = None;
        out
    }

    /// SHA-256 over the canonical encoding of the request plus `annotator_id`.
    pub fn fingerprint(&self, annotator_id: &str) -> String {
        let mut h = Sha256::new();
        h.update(annotator_id.as_bytes());
        h.update([0u8]);
        h.update(serde_json::to_vec(self).expect("requests always serialize"));
        hex::encode(h.finalize())
    }
}

/// `Utterance {turn} by {name}`.
pub fn utterance_label(turn: usize, name: &str) -> String {
    format!("Utterance {turn} by {name}")
}

fn transcript(episode: &Episode, utterances: &[Utterance]) -> String {
    utterances
        .iter()
        .map(|u| {
            let name = episode.agent(&u.speaker).map(|a| a.display_name.as_str()).unwrap_or(&u.speaker);
            format!("{}: {}", utterance_label(u.turn_index, name), u.rendered_text)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Fills the attribution template. Pure: equal requests give equal bytes.
pub fn render_prompt(request: &AnnotationRequest) -> Result<String, AnnotationError> {
    request.validate()?;
    let profile = request.episode.agent(&request.agent).expect("validated");
    let instruction = match request.instruction {
        Instruction::Direct => DIRECT_ATTRIBUTION.replace("{score_max}", &request.bounds.hi.to_string()),
        Instruction::Singular => SINGULAR_ATTRIBUTION.to_string(),
    };
    let background = if profile.background.is_empty() { "(none given)" } else { &profile.background };
    // Single pass so that substituted text is never rescanned for placeholders.
    let mut out = String::with_capacity(ATTRIBUTION_TEMPLATE.len() + 2048);
    let mut rest = ATTRIBUTION_TEMPLATE;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let tail = &rest[start..];
        let end = tail.find('}').map(|e| e + 1).unwrap_or(tail.len());
        let value = match &tail[..end] {
            "{attribution_instruction}" => Some(instruction.as_str()),
            "{agent}" => Some(profile.display_name.as_str()),
            "{goal}" => Some(profile.goal.description.as_str()),
            "{agent_background}" => Some(background),
            "{dimension}" => Some(templates::dimension_label(request.dimension)),
            "{dimension_description}" => Some(request.dimension_description.as_str()),
            _ => None,
        };
        match (&tail[..end], value) {
            ("{conversation}", _) => out.push_str(&transcript(&request.episode, &request.episode.utterances)),
            (_, Some(v)) => out.push_str(v),
            (_, None) => {
                // A literal brace, e.g. the JSON example.
                out.push('{');
                rest = &tail[1..];
                continue;
            }
        }
        rest = &tail[end..];
    }
    out.push_str(rest);
    Ok(out)
}

/// A well-formed direct reply for `scores`, keyed like the prompt asks.
pub fn render_reply(keys: &[String], scores: &[i64]) -> String {
    let body = keys
        .iter()
        .zip(scores)
        .map(|(k, s)| format!("    {}: {s}", serde_json::to_string(k).expect("string")))
        .collect::<Vec<_>>()
        .join(",\n");
    format!("{{\n{body}\n}}")
}
