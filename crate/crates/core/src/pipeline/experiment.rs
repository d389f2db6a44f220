//! In-memory runs of the whole pipeline for one condition, and the
//! condition grid built on them.

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::PipelineError;
use crate::annotation::{Annotator, ContextMode};
use crate::attribution::{build_reward_dataset, DatasetConfig, RewardDataset, RewardTriple, Scheme};
use crate::episode::{Dimension, Episode};
use crate::eval::{paired_ttest, PairedTTest};
use crate::reward_model::{self, Featurizer, LossTrace, RegressionExample, RewardModel, RewardModelParameters};
use crate::seed;
use crate::sim::{simulate, Scenario, ScriptedNegotiator, LEARNER_ID};
use crate::trainer::{
    bc_train, demonstrations, evaluation_seeds, goal_scores, train_loop, DialoguePolicy, PolicyParameters, TrainOutcome,
};

/// Seed labels for the independent streams of one run.
mod keys {
    pub const CORPUS: u64 = 1;
    pub const RM: u64 = 2;
    pub const BC: u64 = 3;
    pub const GRPO: u64 = 4;
}

/// Demonstrator episodes, evaluated.
pub fn demonstrator_corpus(scenario: &Scenario, n: usize, seed: u64) -> Result<Vec<Episode>, PipelineError> {
    use rayon::prelude::*;
    let demo = ScriptedNegotiator::default();
    evaluation_seeds(seed, n)
        .par_iter()
        .map(|s| simulate(scenario, &demo, &scenario.partner.policy, *s).map_err(PipelineError::from))
        .collect()
}

/// Regression examples for the learner's utterances.
pub fn regression_examples(featurizer: &Featurizer, triples: &[RewardTriple]) -> Result<Vec<RegressionExample>, PipelineError> {
    triples
        .iter()
        .map(|t| {
            Ok(RegressionExample {
                features: featurizer
                    .features(&t.state, t.utterance.action_token)
                    .map_err(|e| PipelineError::Training(e.to_string()))?,
                target: t.reward,
            })
        })
        .collect()
}

/// Reward model trained on a dataset's triples.
pub fn fit_reward_model(
    scenario: &Scenario,
    config: &PipelineConfig,
    triples: &[RewardTriple],
    seed: u64,
) -> Result<(RewardModel, LossTrace), PipelineError> {
    let featurizer = Featurizer::new(scenario);
    let data = regression_examples(&featurizer, triples)?;
    let init = match config.reward_model.hidden_dim {
        0 => RewardModelParameters::linear(featurizer.feature_dim()),
        h => RewardModelParameters::hidden(featurizer.feature_dim(), h, seed),
    };
    let mut train = config.reward_model.train.clone();
    train.seed = seed;
    let (params, trace) = reward_model::train(&init, &data, &train).map_err(|e| PipelineError::Training(e.to_string()))?;
    Ok((RewardModel { featurizer, params }, trace))
}

/// Behavior cloning on the learner's utterances in `episodes`.
pub fn fit_bc(
    scenario: &Scenario,
    config: &PipelineConfig,
    episodes: &[Episode],
    seed: u64,
) -> Result<(PolicyParameters, LossTrace), PipelineError> {
    let featurizer = Featurizer::new(scenario);
    let demos = demonstrations(&featurizer, episodes, LEARNER_ID)?;
    let init = PolicyParameters::zeros(featurizer.context_dim(), featurizer.n_actions());
    let mut bc = config.bc.clone();
    bc.seed = seed;
    Ok(bc_train(&init, &demos, &bc)?)
}

/// One cell of the comparison matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub scheme: Scheme,
    pub context: ContextMode,
    pub dimensions: Vec<Dimension>,
    pub scenario: String,
}

impl Condition {
    pub fn label(&self) -> String {
        let dims: Vec<&str> = self.dimensions.iter().map(|d| d.name()).collect();
        let ctx = match self.context {
            ContextMode::Offline => "",
            ContextMode::Online => "+online",
        };
        format!("{}{ctx}[{}]@{}", self.scheme, dims.join("+"), self.scenario)
    }
}

/// Everything one run produced.
pub struct ConditionRun {
    pub dataset: RewardDataset,
    pub rm: RewardModel,
    pub rm_trace: LossTrace,
    pub bc: PolicyParameters,
    pub grpo: TrainOutcome,
}

/// Corpus, annotation, attribution, reward model, behavior cloning and GRPO
/// for one condition. Runs with equal `seed` share the corpus, the BC
/// policy and every sampling stream, so conditions differ only in rewards.
pub fn run_condition(
    scenario: &Scenario,
    config: &PipelineConfig,
    condition: &Condition,
    annotator: &dyn Annotator,
    seed: u64,
) -> Result<ConditionRun, PipelineError> {
    let corpus = demonstrator_corpus(scenario, config.rollout.episodes, seed::derive(seed, keys::CORPUS))?;
    let mut dataset_config: DatasetConfig = config.dataset_config();
    dataset_config.scheme = condition.scheme;
    dataset_config.context = condition.context;
    dataset_config.combination = {
        let mut section = config.attribution.clone();
        section.dimensions = condition.dimensions.clone();
        if section.weights.as_ref().is_some_and(|w| w.len() != section.dimensions.len()) {
            section.weights = None;
        }
        section.combination()
    };
    let dataset = build_reward_dataset(&corpus, annotator, &dataset_config)?;
    if dataset.triples.is_empty() {
        return Err(PipelineError::Training("reward dataset is empty".into()));
    }
    let (rm, rm_trace) = fit_reward_model(scenario, config, &dataset.triples, seed::derive(seed, keys::RM))?;
    let (bc, _) = fit_bc(scenario, config, &corpus, seed::derive(seed, keys::BC))?;
    let mut grpo_config = config.grpo.clone();
    grpo_config.seed = seed::derive(seed, keys::GRPO);
    let grpo = train_loop(scenario, &scenario.partner.policy, &rm, &bc, &grpo_config)?;
    Ok(ConditionRun {
        dataset,
        rm,
        rm_trace,
        bc,
        grpo,
    })
}

/// Mean learner GOAL of `params` over `n` evaluation episodes under `seed`.
pub fn mean_goal(scenario: &Scenario, params: &PolicyParameters, n: usize, seed: u64) -> Result<f64, PipelineError> {
    let policy = DialoguePolicy::new(scenario, params.clone())?;
    let scores = goal_scores(scenario, &policy, &scenario.partner.policy, &evaluation_seeds(seed, n))?;
    Ok(scores.iter().sum::<f64>() / scores.len().max(1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub label: String,
    pub condition: Condition,
    /// Final mean GOAL per training seed.
    pub final_goal: Vec<f64>,
    pub bc_goal: Vec<f64>,
}

impl GridRow {
    pub fn mean(&self) -> f64 {
        self.final_goal.iter().sum::<f64>() / self.final_goal.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridComparison {
    pub a: String,
    pub b: String,
    /// Paired over training seeds.
    pub test: PairedTTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub rows: Vec<GridRow>,
    pub comparisons: Vec<GridComparison>,
}

impl GridResult {
    pub fn row(&self, label: &str) -> Option<&GridRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("condition,training_seed,bc_goal,final_goal\n");
        for r in &self.rows {
            for (i, (b, g)) in r.bc_goal.iter().zip(&r.final_goal).enumerate() {
                out.push_str(&format!("{},{i},{b},{g}\n", r.label));
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&format!("{:<40} mean final GOAL {:.3} over {} seeds\n", r.label, r.mean(), r.final_goal.len()));
        }
        for c in &self.comparisons {
            out.push_str(&format!(
                "{} vs {}: diff {:+.3}, t {:.3}, p {:.4}\n",
                c.a, c.b, c.test.mean_diff, c.test.t, c.test.p
            ));
        }
        out
    }
}

/// The conditions declared by the grid section.
pub fn grid_conditions(config: &PipelineConfig) -> Vec<Condition> {
    let dimension_sets = if config.grid.dimension_sets.is_empty() {
        vec![config.attribution.dimensions.clone()]
    } else {
        config.grid.dimension_sets.clone()
    };
    let scenarios = if config.grid.scenarios.is_empty() {
        vec![config.scenario.clone()]
    } else {
        config.grid.scenarios.clone()
    };
    let mut out = Vec::new();
    for scenario in &scenarios {
        for dims in &dimension_sets {
            for context in &config.grid.contexts {
                for scheme in &config.grid.schemes {
                    out.push(Condition {
                        scheme: *scheme,
                        context: *context,
                        dimensions: dims.clone(),
                        scenario: scenario.clone(),
                    });
                }
            }
        }
    }
    out
}

/// Runs every condition for every training seed and compares each pair of
/// conditions on the same scenario with a paired t-test over seeds.
/// `progress` sees `(label, training seed, final GOAL)`.
pub fn run_grid(
    config: &PipelineConfig,
    scenarios: &[Scenario],
    conditions: &[Condition],
    annotator: &dyn Annotator,
    progress: &mut dyn FnMut(&str, usize, f64),
) -> Result<GridResult, PipelineError> {
    let grid_seed = seed::stage_seed(config.seed, "grid");
    let eval_seed = seed::stage_seed(config.seed, "grid-eval");
    let mut rows = Vec::new();
    for condition in conditions {
        let scenario = scenarios
            .iter()
            .find(|s| s.scenario_id == condition.scenario)
            .ok_or_else(|| PipelineError::Config(format!("unknown scenario `{}`", condition.scenario)))?;
        let label = condition.label();
        let mut row = GridRow {
            label: label.clone(),
            condition: condition.clone(),
            final_goal: Vec::new(),
            bc_goal: Vec::new(),
        };
        for i in 0..config.grid.training_seeds {
            let run = run_condition(scenario, config, condition, annotator, seed::derive(grid_seed, i as u64))?;
            let n = config.evaluation.episodes;
            let g = mean_goal(scenario, &run.grpo.checkpoint.policy, n, eval_seed)?;
            row.bc_goal.push(mean_goal(scenario, &run.bc, n, eval_seed)?);
            row.final_goal.push(g);
            progress(&label, i, g);
        }
        rows.push(row);
    }
    let mut comparisons = Vec::new();
    for (i, a) in rows.iter().enumerate() {
        for b in &rows[i + 1..] {
            if a.condition.scenario == b.condition.scenario && a.final_goal.len() >= 2 {
                comparisons.push(GridComparison {
                    a: a.label.clone(),
                    b: b.label.clone(),
                    test: paired_ttest(&a.final_goal, &b.final_goal)?,
                });
            }
        }
    }
    Ok(GridResult { rows, comparisons })
}
