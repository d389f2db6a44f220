//! Declarative pipeline configuration (TOML).
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::annotation::{ContextMode, RemoteConfig, ScoreBounds, DEFAULT_ORACLE_SAMPLES};
use crate::attribution::{CombinationConfig, DatasetConfig, Scheme};
use crate::episode::Dimension;
use crate::reward_model::RmTrainConfig;
use crate::sim::{Scenario, ScenarioSuite, LEARNER_ID};
use crate::trainer::{BcConfig, GrpoConfig, GrpoStepConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub scenario_suite: PathBuf,
    /// Scenario id within the suite used for training.
    pub scenario: String,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub rollout: RolloutSection,
    #[serde(default)]
    pub annotator: AnnotatorSpec,
    #[serde(default)]
    pub annotation: AnnotationSection,
    #[serde(default)]
    pub attribution: AttributionSection,
    #[serde(default)]
    pub reward_model: RewardModelSection,
    #[serde(default)]
    pub bc: BcConfig,
    #[serde(default = "default_grpo")]
    pub grpo: GrpoConfig,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub grid: GridSection,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

fn default_grpo() -> GrpoConfig {
    GrpoConfig::default()
}

/// Which policy generates the rollout corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutSection {
    pub episodes: usize,
    /// `scripted`, `uniform`, or a path to a policy checkpoint.
    #[serde(default = "default_rollout_policy")]
    pub policy: String,
}

fn default_rollout_policy() -> String {
    "scripted".into()
}

impl Default for RolloutSection {
    fn default() -> Self {
        Self {
            episodes: 100,
            policy: default_rollout_policy(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnnotatorSpec {
    Oracle {
        #[serde(default = "default_samples")]
        samples: usize,
    },
    /// The secret comes from `ANNOTATOR_API_KEY` only.
    Remote(RemoteConfig),
}

fn default_samples() -> usize {
    DEFAULT_ORACLE_SAMPLES
}

impl Default for AnnotatorSpec {
    fn default() -> Self {
        AnnotatorSpec::Oracle { samples: DEFAULT_ORACLE_SAMPLES }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationSection {
    pub rubric_max: u32,
    /// Inclusive `[lo, hi]` accepted in replies.
    pub bounds: [i64; 2],
    pub context: ContextMode,
}

impl Default for AnnotationSection {
    fn default() -> Self {
        Self {
            rubric_max: 3,
            bounds: [0, 3],
            context: ContextMode::Offline,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributionSection {
    pub scheme: Scheme,
    pub dimensions: Vec<Dimension>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default = "default_degenerate")]
    pub degenerate_value: f64,
}

fn default_degenerate() -> f64 {
    0.5
}

impl Default for AttributionSection {
    fn default() -> Self {
        Self {
            scheme: Scheme::Direct,
            dimensions: Dimension::SCORED.to_vec(),
            weights: None,
            degenerate_value: 0.5,
        }
    }
}

impl AttributionSection {
    pub fn combination(&self) -> CombinationConfig {
        let mut c = CombinationConfig::equal(self.dimensions.clone());
        if let Some(w) = &self.weights {
            c.weights = w.clone();
        }
        c.degenerate_value = self.degenerate_value;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardModelSection {
    #[serde(flatten)]
    pub train: RmTrainConfig,
    /// 0 selects the linear model.
    #[serde(default)]
    pub hidden_dim: usize,
}

impl Default for RewardModelSection {
    fn default() -> Self {
        Self {
            train: RmTrainConfig {
                learning_rate: 0.05,
                epochs: 400,
                batch_size: 0,
                seed: 0,
            },
            hidden_dim: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    /// Seed-matched evaluation episodes per scenario.
    pub episodes: usize,
    /// Scenario ids to evaluate on; empty means the training scenario.
    #[serde(default)]
    pub scenarios: Vec<String>,
    pub best_of_n: Vec<usize>,
    pub best_of_n_episodes: usize,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            episodes: 200,
            scenarios: Vec::new(),
            best_of_n: vec![1, 4, 16],
            best_of_n_episodes: 300,
        }
    }
}

/// The comparison matrix run by the `grid` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_contexts")]
    pub contexts: Vec<ContextMode>,
    #[serde(default)]
    pub dimension_sets: Vec<Vec<Dimension>>,
    /// Scenario ids; empty means the training scenario.
    #[serde(default)]
    pub scenarios: Vec<String>,
    pub training_seeds: usize,
}

fn default_contexts() -> Vec<ContextMode> {
    vec![ContextMode::Offline]
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            schemes: vec![Scheme::Direct, Scheme::Scaled, Scheme::Singular, Scheme::UniformFull],
            contexts: default_contexts(),
            dimension_sets: Vec::new(),
            scenarios: Vec::new(),
            training_seeds: 10,
        }
    }
}

impl PipelineConfig {
    /// The bundled easy-scenario settings with an in-code scenario, for tests
    /// and experiments that do not read files.
    pub fn experiment_defaults() -> Self {
        Self {
            seed: 0,
            scenario_suite: PathBuf::new(),
            scenario: Scenario::easy().scenario_id,
            output_dir: default_out(),
            rollout: RolloutSection::default(),
            annotator: AnnotatorSpec::default(),
            annotation: AnnotationSection::default(),
            attribution: AttributionSection::default(),
            reward_model: RewardModelSection::default(),
            bc: BcConfig::default(),
            grpo: GrpoConfig {
                step: GrpoStepConfig {
                    group_size: 16,
                    learning_rate: 0.2,
                    kl_beta: 0.5,
                    epsilon: 1e-8,
                },
                steps: 150,
                episodes_per_step: 16,
                eval_interval: 0,
                eval_episodes: 0,
                seed: 0,
            },
            evaluation: EvaluationSection::default(),
            grid: GridSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let config: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads and resolves relative paths against the file's directory.
    /// Referenced files must exist.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text).map_err(|e| match e {
            PipelineError::Config(m) => PipelineError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.scenario_suite = base.join(&config.scenario_suite);
        config.output_dir = base.join(&config.output_dir);
        if !matches!(config.rollout.policy.as_str(), "scripted" | "uniform") {
            config.rollout.policy = base.join(&config.rollout.policy).to_string_lossy().into_owned();
            if !Path::new(&config.rollout.policy).exists() {
                return Err(PipelineError::Config(format!(
                    "rollout policy checkpoint {} does not exist",
                    config.rollout.policy
                )));
            }
        }
        if !config.scenario_suite.exists() {
            return Err(PipelineError::Config(format!(
                "scenario suite {} does not exist",
                config.scenario_suite.display()
            )));
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.rollout.episodes == 0 {
            return bad("rollout.episodes must be positive".into());
        }
        let [lo, hi] = self.annotation.bounds;
        if self.annotation.rubric_max == 0 || lo < 0 || lo > hi {
            return bad("annotation needs rubric_max >= 1 and 0 <= lo <= hi".into());
        }
        self.attribution
            .combination()
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.grpo.step.group_size < 2 {
            return bad("grpo.group_size must be at least 2".into());
        }
        if self.evaluation.best_of_n.contains(&0) {
            return bad("evaluation.best_of_n entries must be positive".into());
        }
        Ok(())
    }

    pub fn suite(&self) -> Result<ScenarioSuite, PipelineError> {
        ScenarioSuite::load(&self.scenario_suite).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn scenario_from(&self, suite: &ScenarioSuite, id: &str) -> Result<Scenario, PipelineError> {
        suite
            .get(id)
            .cloned()
            .ok_or_else(|| PipelineError::Config(format!("scenario `{id}` is not in {}", self.scenario_suite.display())))
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            agent: LEARNER_ID.to_string(),
            scheme: self.attribution.scheme,
            combination: self.attribution.combination(),
            rubric_max: self.annotation.rubric_max,
            bounds: ScoreBounds::new(self.annotation.bounds[0], self.annotation.bounds[1]),
            context: self.annotation.context,
        }
    }
}
