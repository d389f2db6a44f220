//! Single-turn group-relative policy optimization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::policy::PolicyParameters;
use super::TrainerError;
use crate::seed;
use crate::sim::sample_index;

/// Standardizes a group of rewards: `(r − mean) / std` with the population
/// standard deviation. A group with `std <= epsilon`, all-equal groups
/// included, maps to zeros, so every other group has exactly unit spread.
pub fn grpo_advantages(rewards: &[f64], epsilon: f64) -> Result<Vec<f64>, TrainerError> {
    if rewards.len() < 2 {
        return Err(TrainerError::GroupTooSmall(rewards.len()));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let std = (rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    if rewards.iter().all(|r| *r == rewards[0]) || std <= epsilon {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// One state's sampled group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSample {
    /// Index into the batch of states.
    pub state_index: usize,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoStepConfig {
    pub group_size: usize,
    pub learning_rate: f64,
    pub kl_beta: f64,
    /// Groups whose reward std is at most this get zero advantages.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    1e-8
}

impl Default for GrpoStepConfig {
    fn default() -> Self {
        Self {
            group_size: 16,
            learning_rate: 0.5,
            kl_beta: 0.05,
            epsilon: 1e-8,
        }
    }
}

/// Statistics of the pre-update policy on the batch, plus the update size.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub mean_reward: f64,
    pub mean_kl: f64,
    pub entropy: f64,
    pub update_norm: f64,
    pub groups: Vec<GroupSample>,
}

/// Surrogate `mean_i [ (1/K) Σ_k A_ik log π(a_ik|s_i) − β KL(π(·|s_i) ‖ π_ref(·|s_i)) ]`
/// with the groups held fixed.
pub fn surrogate_objective(
    policy: &PolicyParameters,
    reference: &PolicyParameters,
    contexts: &[Vec<f64>],
    groups: &[GroupSample],
    kl_beta: f64,
) -> f64 {
    let total: f64 = groups
        .iter()
        .map(|g| {
            let ctx = &contexts[g.state_index];
            let logp = policy.log_probabilities(ctx);
            let k = g.actions.len() as f64;
            let pg: f64 = g.actions.iter().zip(&g.advantages).map(|(a, adv)| adv * logp[*a]).sum::<f64>() / k;
            pg - kl_beta * policy.kl(reference, ctx)
        })
        .sum();
    total / groups.len() as f64
}

/// Analytic gradient of [`surrogate_objective`] with respect to the weights.
pub fn surrogate_gradient(
    policy: &PolicyParameters,
    reference: &PolicyParameters,
    contexts: &[Vec<f64>],
    groups: &[GroupSample],
    kl_beta: f64,
) -> Vec<f64> {
    let n = policy.n_actions;
    let scale = 1.0 / groups.len() as f64;
    let per_group: Vec<Vec<f64>> = groups
        .par_iter()
        .map(|g| logit_gradient(policy, reference, &contexts[g.state_index], g, kl_beta))
        .collect();
    let mut grad = vec![0.0; policy.weights.len()];
    for (g, lg) in groups.iter().zip(&per_group) {
        PolicyParameters::add_outer(&mut grad, n, &contexts[g.state_index], lg, scale);
    }
    grad
}

fn logit_gradient(
    policy: &PolicyParameters,
    reference: &PolicyParameters,
    context: &[f64],
    group: &GroupSample,
    kl_beta: f64,
) -> Vec<f64> {
    let logp = policy.log_probabilities(context);
    let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
    let k = group.actions.len() as f64;
    let adv_sum: f64 = group.advantages.iter().sum();
    // Σ_k A_k (e_{a_k} − π) / K
    let mut g: Vec<f64> = p.iter().map(|pj| -adv_sum * pj / k).collect();
    for (a, adv) in group.actions.iter().zip(&group.advantages) {
        g[*a] += adv / k;
    }
    if kl_beta != 0.0 {
        let logq = reference.log_probabilities(context);
        let kl: f64 = p.iter().zip(logp.iter().zip(&logq)).map(|(pj, (lp, lq))| pj * (lp - lq)).sum();
        for j in 0..g.len() {
            g[j] -= kl_beta * p[j] * (logp[j] - logq[j] - kl);
        }
    }
    g
}

/// One GRPO update on a batch of state contexts.
///
/// For each state, `group_size` actions are drawn from the current policy
/// under a per-state stream of `seed`, scored by `reward(state_index,
/// action)`, and standardized within the group. Sampling runs in parallel;
/// the update is an ordered reduction, so results do not depend on thread
/// count.
pub fn grpo_step<F>(
    policy: &mut PolicyParameters,
    reference: &PolicyParameters,
    contexts: &[Vec<f64>],
    reward: F,
    config: &GrpoStepConfig,
    seed: u64,
) -> Result<StepDiagnostics, TrainerError>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    if config.group_size < 2 {
        return Err(TrainerError::GroupTooSmall(config.group_size));
    }
    if config.kl_beta.is_nan() || config.kl_beta < 0.0 {
        return Err(TrainerError::InvalidConfig(format!("kl_beta must be non-negative, got {}", config.kl_beta)));
    }
    if contexts.is_empty() {
        return Err(TrainerError::InvalidConfig("empty state batch".into()));
    }
    for c in contexts {
        policy.check_context(c)?;
    }
    let current: &PolicyParameters = policy;
    let groups: Vec<GroupSample> = contexts
        .par_iter()
        .enumerate()
        .map(|(i, ctx)| {
            let probs = current.probabilities(ctx);
            let mut rng = seed::rng(seed::derive(seed, i as u64));
            let actions: Vec<usize> = (0..config.group_size).map(|_| sample_index(&probs, &mut rng)).collect();
            let rewards: Vec<f64> = actions.iter().map(|a| reward(i, *a)).collect();
            let advantages = grpo_advantages(&rewards, config.epsilon)?;
            Ok(GroupSample {
                state_index: i,
                actions,
                rewards,
                advantages,
            })
        })
        .collect::<Result<_, TrainerError>>()?;

    let n = contexts.len() as f64;
    let mean_reward = groups.iter().map(|g| g.rewards.iter().sum::<f64>() / g.rewards.len() as f64).sum::<f64>() / n;
    let mean_kl = contexts.iter().map(|c| policy.kl(reference, c)).sum::<f64>() / n;
    let entropy = contexts.iter().map(|c| policy.entropy(c)).sum::<f64>() / n;

    let grad = surrogate_gradient(policy, reference, contexts, &groups, config.kl_beta);
    let mut sq = 0.0;
    for (w, g) in policy.weights.iter_mut().zip(&grad) {
        let delta = config.learning_rate * g;
        *w += delta;
        sq += delta * delta;
    }
    if !policy.is_finite() {
        return Err(TrainerError::DivergenceDetected("GRPO update produced non-finite weights".into()));
    }
    Ok(StepDiagnostics {
        mean_reward,
        mean_kl,
        entropy,
        update_norm: sq.sqrt(),
        groups,
    })
}
