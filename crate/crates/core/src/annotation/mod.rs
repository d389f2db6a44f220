//! Per-utterance attribution scores from annotators.
//!
//! Two annotators share one request/record format: [`OracleAnnotator`]
//! derives scores from simulator counterfactuals, and [`RemoteAnnotator`]
//! renders the prompt templates for a chat-completion endpoint and parses the
//! JSON it sends back. [`CachedAnnotator`] memoizes either by request
//! fingerprint.

mod cache;
mod oracle;
mod parse;
mod prompt;
mod remote;
pub mod templates;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::Dimension;
use crate::sim::SimError;

pub use cache::CachedAnnotator;
pub use oracle::{OracleAnnotator, DEFAULT_ORACLE_SAMPLES};
pub use parse::{first_json_object, parse_critical, parse_reply};
pub use prompt::{render_prompt, render_reply, utterance_label, AnnotationRequest, ContextMode, Instruction, ScoreBounds};
pub use remote::{RemoteAnnotator, RemoteConfig, API_KEY_ENV};

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("invalid annotation request: {0}")]
    PromptValidation(String),
    #[error("agent `{0}` has no utterances to annotate")]
    EmptyAgentHistory(String),
    #[error("reply has no score for `{key}`")]
    MissingAnnotation { key: String, raw_reply: String },
    #[error("score {score} for `{key}` is outside [{lo}, {hi}]")]
    OutOfRangeScore {
        key: String,
        score: i64,
        lo: i64,
        hi: i64,
        raw_reply: String,
    },
    #[error("unparseable reply: {reason}")]
    UnparseableReply { reason: String, raw_reply: String },
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("environment variable {0} is not set")]
    MissingCredential(&'static str),
    #[error("unsupported request: {0}")]
    Unsupported(String),
    #[error("annotation records {path}: {message}")]
    Records { path: PathBuf, message: String },
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl AnnotationError {
    /// The annotator's reply, kept for audit when parsing failed.
    pub fn raw_reply(&self) -> Option<&str> {
        match self {
            AnnotationError::MissingAnnotation { raw_reply, .. }
            | AnnotationError::OutOfRangeScore { raw_reply, .. }
            | AnnotationError::UnparseableReply { raw_reply, .. } => Some(raw_reply),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub fingerprint: String,
    pub episode_id: String,
    pub agent: String,
    pub dimension: Dimension,
    pub instruction: Instruction,
    pub context: ContextMode,
    pub rubric_max: u32,
    /// Turn index of each scored utterance.
    pub turns: Vec<usize>,
    /// One integer score per agent utterance. Singular records put
    /// `rubric_max` on the critical utterance and zero elsewhere.
    pub scores: Vec<i64>,
    #[serde(default)]
    pub critical: Option<usize>,
    pub raw_reply: String,
    pub annotator_id: String,
    /// Unix seconds; the oracle always writes 0.
    pub timestamp: u64,
}

impl AnnotationRecord {
    /// Scores mapped to `[0, 1]` by `score / rubric_max`.
    pub fn attribution(&self) -> Vec<f64> {
        self.scores
            .iter()
            .map(|s| (*s as f64 / self.rubric_max as f64).clamp(0.0, 1.0))
            .collect()
    }

    /// Position of the critical utterance among the agent's utterances.
    pub fn critical_position(&self) -> Option<usize> {
        self.critical.and_then(|c| self.turns.iter().position(|t| *t == c))
    }

    fn skeleton(request: &AnnotationRequest, annotator_id: &str) -> Self {
        Self {
            fingerprint: request.fingerprint(annotator_id),
            episode_id: request.episode.episode_id.clone(),
            agent: request.agent.clone(),
            dimension: request.dimension,
            instruction: request.instruction,
            context: request.context,
            rubric_max: request.rubric_max,
            turns: request.agent_turns(),
            scores: Vec::new(),
            critical: None,
            raw_reply: String::new(),
            annotator_id: annotator_id.to_string(),
            timestamp: 0,
        }
    }

    fn one_hot(&mut self, critical: usize) {
        self.critical = Some(critical);
        self.scores = self
            .turns
            .iter()
            .map(|t| if *t == critical { self.rubric_max as i64 } else { 0 })
            .collect();
    }
}

/// Something that can score a request.
pub trait Annotator: Send + Sync {
    /// Stable identifier; part of every request fingerprint.
    fn annotator_id(&self) -> String;

    /// Upper bound on concurrent requests, if the annotator needs one.
    fn max_in_flight(&self) -> Option<usize> {
        None
    }

    fn annotate(&self, request: &AnnotationRequest) -> Result<AnnotationRecord, AnnotationError>;
}

/// Scores a request with `annotator`.
pub fn annotate(request: &AnnotationRequest, annotator: &dyn Annotator) -> Result<AnnotationRecord, AnnotationError> {
    annotator.annotate(request)
}

/// Turn index of the agent's most critical utterance.
pub fn select_critical_utterance(request: &AnnotationRequest, annotator: &dyn Annotator) -> Result<usize, AnnotationError> {
    let mut singular = request.clone();
    singular.instruction = Instruction::Singular;
    let record = annotator.annotate(&singular)?;
    record
        .critical
        .ok_or_else(|| AnnotationError::Unsupported("annotator returned no critical utterance".into()))
}

/// Runs `f` over `items` in order-preserving parallel, with at most
/// `annotator.max_in_flight()` tasks at once.
pub fn bounded_map<T, R, F>(annotator: &dyn Annotator, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    match annotator.max_in_flight() {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
            Err(_) => items.iter().map(&f).collect(),
        },
        None => items.par_iter().map(&f).collect(),
    }
}

/// Annotates every request; results keep request order.
pub fn annotate_batch(
    requests: &[AnnotationRequest],
    annotator: &dyn Annotator,
) -> Vec<Result<AnnotationRecord, AnnotationError>> {
    bounded_map(annotator, requests, |r| annotator.annotate(r))
}

pub fn write_records(path: &Path, records: &[AnnotationRecord]) -> Result<(), AnnotationError> {
    let err = |e: std::io::Error| AnnotationError::Records {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut out = BufWriter::new(File::create(path).map_err(err)?);
    for r in records {
        serde_json::to_writer(&mut out, r).expect("records always serialize");
        out.write_all(b"\n").map_err(err)?;
    }
    out.flush().map_err(err)
}

pub fn read_records(path: &Path) -> Result<Vec<AnnotationRecord>, AnnotationError> {
    let err = |message: String| AnnotationError::Records {
        path: path.to_path_buf(),
        message,
    };
    let file = File::open(path).map_err(|e| err(e.to_string()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}
