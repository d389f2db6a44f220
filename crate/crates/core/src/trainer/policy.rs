//! Linear-softmax utterance policy.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainerError;
use crate::episode::DialogueState;
use crate::persist::ParameterFile;
use crate::reward_model::Featurizer;
use crate::sim::{Scenario, UtterancePolicy};

pub const CHECKPOINT_KIND: &str = "policy_checkpoint";

/// Logit weights, row-major `context_dim × n_actions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParameters {
    pub context_dim: usize,
    pub n_actions: usize,
    pub weights: Vec<f64>,
}

impl PolicyParameters {
    /// The uniform policy.
    pub fn zeros(context_dim: usize, n_actions: usize) -> Self {
        Self {
            context_dim,
            n_actions,
            weights: vec![0.0; context_dim * n_actions],
        }
    }

    pub fn logits(&self, context: &[f64]) -> Vec<f64> {
        debug_assert_eq!(context.len(), self.context_dim);
        let n = self.n_actions;
        let mut out = vec![0.0; n];
        for (i, c) in context.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(&self.weights[i * n..(i + 1) * n]) {
                *o += c * w;
            }
        }
        out
    }

    pub fn log_probabilities(&self, context: &[f64]) -> Vec<f64> {
        let logits = self.logits(context);
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        logits.into_iter().map(|l| l - log_z).collect()
    }

    pub fn probabilities(&self, context: &[f64]) -> Vec<f64> {
        let logits = self.logits(context);
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exp.iter().sum();
        exp.into_iter().map(|e| e / z).collect()
    }

    pub fn entropy(&self, context: &[f64]) -> f64 {
        let logp = self.log_probabilities(context);
        -logp.iter().map(|l| if l.is_finite() { l.exp() * l } else { 0.0 }).sum::<f64>()
    }

    /// `KL(self ‖ reference)` at one state.
    pub fn kl(&self, reference: &Self, context: &[f64]) -> f64 {
        let lp = self.log_probabilities(context);
        let lq = reference.log_probabilities(context);
        let kl: f64 = lp.iter().zip(&lq).map(|(p, q)| p.exp() * (p - q)).sum();
        kl.max(0.0)
    }

    /// `weights += scale · context ⊗ logit_grad`.
    pub(crate) fn add_outer(target: &mut [f64], n_actions: usize, context: &[f64], logit_grad: &[f64], scale: f64) {
        for (i, c) in context.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            let row = &mut target[i * n_actions..(i + 1) * n_actions];
            for (w, g) in row.iter_mut().zip(logit_grad) {
                *w += scale * c * g;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }

    pub fn check_context(&self, context: &[f64]) -> Result<(), TrainerError> {
        if context.len() != self.context_dim {
            return Err(TrainerError::DimensionMismatch {
                expected: self.context_dim,
                found: context.len(),
            });
        }
        Ok(())
    }
}

/// A policy bound to a scenario's featurizer, usable in rollouts.
#[derive(Debug, Clone)]
pub struct DialoguePolicy {
    pub featurizer: Featurizer,
    pub params: PolicyParameters,
}

impl DialoguePolicy {
    pub fn new(scenario: &Scenario, params: PolicyParameters) -> Result<Self, TrainerError> {
        let featurizer = Featurizer::new(scenario);
        if params.context_dim != featurizer.context_dim() || params.n_actions != featurizer.n_actions() {
            return Err(TrainerError::DimensionMismatch {
                expected: featurizer.context_dim() * featurizer.n_actions(),
                found: params.context_dim * params.n_actions,
            });
        }
        Ok(Self { featurizer, params })
    }

    pub fn uniform(scenario: &Scenario) -> Self {
        let featurizer = Featurizer::new(scenario);
        let params = PolicyParameters::zeros(featurizer.context_dim(), featurizer.n_actions());
        Self { featurizer, params }
    }
}

impl UtterancePolicy for DialoguePolicy {
    fn distribution(&self, _scenario: &Scenario, state: &DialogueState) -> Vec<f64> {
        self.params.probabilities(&self.featurizer.context(state))
    }
}

/// Policy weights, the frozen reference, and the number of updates taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub policy: PolicyParameters,
    pub reference: PolicyParameters,
    pub step: usize,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), TrainerError> {
        ParameterFile::new(CHECKPOINT_KIND, self.policy.context_dim, 0, self.clone()).save(path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TrainerError> {
        let file = ParameterFile::<Self>::load(path, CHECKPOINT_KIND)?;
        let c = file.payload;
        for p in [&c.policy, &c.reference] {
            if p.weights.len() != p.context_dim * p.n_actions || p.context_dim != file.feature_dim {
                return Err(TrainerError::DimensionMismatch {
                    expected: p.context_dim * p.n_actions,
                    found: p.weights.len(),
                });
            }
        }
        Ok(c)
    }
}
