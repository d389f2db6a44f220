use super::prompt::{render_reply, AnnotationRequest, ContextMode, Instruction};
use super::{AnnotationError, AnnotationRecord, Annotator};
use crate::sim::{counterfactual_weights, online_counterfactual_weights};

pub const DEFAULT_ORACLE_SAMPLES: usize = 8;

/// Scores from simulator counterfactuals: weight `w` becomes
/// `round(w · rubric_max)`, and the critical utterance is the argmax weight
/// (earliest on ties). Deterministic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleAnnotator {
    pub samples: usize,
}

impl Default for OracleAnnotator {
    fn default() -> Self {
        Self {
            samples: DEFAULT_ORACLE_SAMPLES,
        }
    }
}

impl OracleAnnotator {
    pub fn new(samples: usize) -> Self {
        Self { samples: samples.max(1) }
    }

    /// Counterfactual weights for the request's agent and dimension.
    pub fn weights(&self, request: &AnnotationRequest) -> Result<Vec<f64>, AnnotationError> {
        let dims = [request.dimension];
        let mut all = match request.context {
            ContextMode::Offline => counterfactual_weights(&request.episode, &request.agent, &dims, self.samples)?,
            ContextMode::Online => online_counterfactual_weights(&request.episode, &request.agent, &dims, self.samples)?,
        };
        Ok(all.remove(&request.dimension).map(|c| c.weights).unwrap_or_default())
    }
}

/// Index of the largest weight, earliest on ties.
pub(crate) fn argmax_earliest(weights: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, w) in weights.iter().enumerate() {
        if best.is_none_or(|b| *w > weights[b]) {
            best = Some(i);
        }
    }
    best
}

impl Annotator for OracleAnnotator {
    fn annotator_id(&self) -> String {
        format!("oracle/{}", self.samples)
    }

    fn annotate(&self, request: &AnnotationRequest) -> Result<AnnotationRecord, AnnotationError> {
        request.validate()?;
        let weights = self.weights(request)?;
        let mut record = AnnotationRecord::skeleton(request, &self.annotator_id());
        match request.instruction {
            Instruction::Direct => {
                let max = request.rubric_max as f64;
                record.scores = weights
                    .iter()
                    .map(|w| ((w * max).round() as i64).clamp(request.bounds.lo, request.bounds.hi))
                    .collect();
            }
            Instruction::Singular => {
                let pos = argmax_earliest(&weights).ok_or_else(|| AnnotationError::EmptyAgentHistory(request.agent.clone()))?;
                record.one_hot(record.turns[pos]);
            }
        }
        record.raw_reply = render_reply(&request.expected_keys(), &record.scores);
        Ok(record)
    }
}
