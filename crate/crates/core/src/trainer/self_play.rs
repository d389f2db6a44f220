//! On-policy GRPO loop: harvest learner states from fresh self-play, score
//! sampled utterances with the reward model, update, repeat.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grpo::{grpo_step, GrpoStepConfig, StepDiagnostics};
use super::policy::{Checkpoint, DialoguePolicy, PolicyParameters};
use super::TrainerError;
use crate::episode::Dimension;
use crate::reward_model::RewardModel;
use crate::seed::{self, streams};
use crate::sim::{rollout, simulate, PartnerPolicy, Scenario, UtterancePolicy, LEARNER_ID};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoConfig {
    #[serde(flatten)]
    pub step: GrpoStepConfig,
    /// Number of updates.
    pub steps: usize,
    /// Fresh self-play episodes harvested per update.
    pub episodes_per_step: usize,
    /// Evaluate every this many updates; 0 disables periodic evaluation.
    #[serde(default)]
    pub eval_interval: usize,
    #[serde(default)]
    pub eval_episodes: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            step: GrpoStepConfig::default(),
            steps: 150,
            episodes_per_step: 16,
            eval_interval: 0,
            eval_episodes: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub mean_reward: f64,
    pub kl: f64,
    pub entropy: f64,
    pub eval_goal: Option<f64>,
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("step,mean_reward,kl,entropy,eval_goal\n");
    for r in rows {
        let eval = r.eval_goal.map(|g| format!("{g}")).unwrap_or_default();
        out.push_str(&format!("{},{},{},{},{}\n", r.step, r.mean_reward, r.kl, r.entropy, eval));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub trace: Vec<TraceRow>,
}

/// Episode seeds `0..n` under `base`.
pub fn evaluation_seeds(base: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| seed::derive2(base, streams::EPISODE, i)).collect()
}

/// Learner GOAL score of one evaluated episode per seed, in seed order.
pub fn goal_scores(
    scenario: &Scenario,
    policy: &dyn UtterancePolicy,
    partner: &PartnerPolicy,
    seeds: &[u64],
) -> Result<Vec<f64>, TrainerError> {
    seeds
        .par_iter()
        .map(|s| {
            let e = simulate(scenario, policy, partner, *s)?;
            Ok(e.evaluation_for(LEARNER_ID).and_then(|v| v.get(Dimension::Goal)).unwrap_or(0.0))
        })
        .collect()
}

/// Runs [`train_loop_observed`] without an observer.
pub fn train_loop(
    scenario: &Scenario,
    partner: &PartnerPolicy,
    rm: &RewardModel,
    init: &PolicyParameters,
    config: &GrpoConfig,
) -> Result<TrainOutcome, TrainerError> {
    train_loop_observed(scenario, partner, rm, init, config, &mut |_, _| {})
}

/// GRPO from `init`, which is also frozen as the KL reference. `observer`
/// sees every step's diagnostics, including the sampled groups.
pub fn train_loop_observed(
    scenario: &Scenario,
    partner: &PartnerPolicy,
    rm: &RewardModel,
    init: &PolicyParameters,
    config: &GrpoConfig,
    observer: &mut dyn FnMut(usize, &StepDiagnostics),
) -> Result<TrainOutcome, TrainerError> {
    let mut policy = DialoguePolicy::new(scenario, init.clone())?;
    let reference = init.clone();
    let target = scenario.agent.target_units;
    let harvest_seed = seed::derive(config.seed, 1);
    let step_seed = seed::derive(config.seed, 2);
    let eval = evaluation_seeds(seed::derive(config.seed, 3), config.eval_episodes);
    let mut trace = Vec::with_capacity(config.steps);

    for step in 0..config.steps {
        let episode_seeds = evaluation_seeds(seed::derive(harvest_seed, step as u64), config.episodes_per_step);
        let episodes = episode_seeds
            .par_iter()
            .map(|s| rollout(scenario, &policy, partner, *s))
            .collect::<Result<Vec<_>, _>>()?;
        let mut contexts = Vec::new();
        for e in &episodes {
            for (state, _) in e.decompose(LEARNER_ID)? {
                contexts.push(policy.featurizer.context(&state));
            }
        }
        if contexts.is_empty() {
            continue;
        }
        let scores: Vec<Vec<f64>> = contexts
            .par_iter()
            .map(|c| (0..policy.params.n_actions).map(|a| rm.predict_from_context(c, a, target)).collect())
            .collect();
        let diag = grpo_step(
            &mut policy.params,
            &reference,
            &contexts,
            |i, a| scores[i][a],
            &config.step,
            seed::derive(step_seed, step as u64),
        )?;
        observer(step, &diag);
        let eval_goal = if config.eval_interval > 0 && (step + 1) % config.eval_interval == 0 && !eval.is_empty() {
            let g = goal_scores(scenario, &policy, partner, &eval)?;
            Some(g.iter().sum::<f64>() / g.len() as f64)
        } else {
            None
        };
        trace.push(TraceRow {
            step: step + 1,
            mean_reward: diag.mean_reward,
            kl: diag.mean_kl,
            entropy: diag.entropy,
            eval_goal,
        });
    }
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            policy: policy.params,
            reference,
            step: config.steps,
        },
        trace,
    })
}
