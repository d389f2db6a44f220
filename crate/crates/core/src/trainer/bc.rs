//! Behavior-cloning warm-up.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::policy::PolicyParameters;
use super::TrainerError;
use crate::episode::Episode;
use crate::reward_model::{Featurizer, LossTrace};
use crate::seed;

/// A state context and the vocabulary index chosen there.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub context: Vec<f64>,
    pub action: usize,
}

/// Every `(state, utterance)` pair of `agent` in `episodes`.
pub fn demonstrations(featurizer: &Featurizer, episodes: &[Episode], agent: &str) -> Result<Vec<Demonstration>, TrainerError> {
    let mut out = Vec::new();
    for episode in episodes {
        for (state, utterance) in episode.decompose(agent)? {
            out.push(Demonstration {
                context: featurizer.context(&state),
                action: featurizer.action_index(utterance.action_token)?,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Examples per update; 0 means full batch.
    #[serde(default)]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1.0,
            epochs: 300,
            batch_size: 0,
            seed: 0,
        }
    }
}

/// Mean negative log-likelihood of the demonstrated actions.
pub fn nll(params: &PolicyParameters, demos: &[Demonstration]) -> f64 {
    let total: f64 = demos
        .iter()
        .map(|d| -params.log_probabilities(&d.context)[d.action])
        .sum();
    total / demos.len() as f64
}

/// Gradient of [`nll`] with respect to the weights.
pub fn nll_gradient(params: &PolicyParameters, demos: &[&Demonstration]) -> Vec<f64> {
    let n = demos.len() as f64;
    let mut grad = vec![0.0; params.weights.len()];
    for d in demos {
        let mut g = params.probabilities(&d.context);
        g[d.action] -= 1.0;
        PolicyParameters::add_outer(&mut grad, params.n_actions, &d.context, &g, 1.0 / n);
    }
    grad
}

/// Gradient descent on the demonstration NLL, starting from `init`.
pub fn bc_train(
    init: &PolicyParameters,
    demos: &[Demonstration],
    config: &BcConfig,
) -> Result<(PolicyParameters, LossTrace), TrainerError> {
    if demos.is_empty() {
        return Err(TrainerError::EmptyDemos);
    }
    if config.learning_rate.is_nan() || config.learning_rate < 0.0 {
        return Err(TrainerError::InvalidConfig(format!(
            "learning rate must be non-negative, got {}",
            config.learning_rate
        )));
    }
    for d in demos {
        init.check_context(&d.context)?;
        if d.action >= init.n_actions {
            return Err(TrainerError::InvalidConfig(format!(
                "demonstrated action {} outside a vocabulary of {}",
                d.action, init.n_actions
            )));
        }
    }
    let mut params = init.clone();
    let mut trace = vec![nll(&params, demos)];
    let batch = if config.batch_size == 0 { demos.len() } else { config.batch_size.min(demos.len()) };
    let mut order: Vec<usize> = (0..demos.len()).collect();
    let mut rng = seed::rng(config.seed);
    for _ in 0..config.epochs {
        if batch < demos.len() {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let refs: Vec<&Demonstration> = chunk.iter().map(|&i| &demos[i]).collect();
            let grad = nll_gradient(&params, &refs);
            for (w, g) in params.weights.iter_mut().zip(&grad) {
                *w -= config.learning_rate * g;
            }
        }
        if !params.is_finite() {
            return Err(TrainerError::DivergenceDetected("behavior cloning produced non-finite weights".into()));
        }
        trace.push(nll(&params, demos));
    }
    Ok((params, LossTrace(trace)))
}
