//! File-backed pipeline stages.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{AnnotatorSpec, PipelineConfig};
use super::experiment::{fit_bc, fit_reward_model, grid_conditions, run_grid};
use super::manifest::{config_hash, external_input, manifest_path, verified_artifact, FileDigest, Manifest};
use super::PipelineError;
use crate::annotation::{
    annotate_batch, read_records, write_records, AnnotationError, AnnotationRecord, AnnotationRequest, Annotator,
    OracleAnnotator, RemoteAnnotator,
};
use crate::attribution::{
    annotation_requests, build_reward_dataset, read_jsonl, write_jsonl, FailureEntry, RewardRow, RewardTriple,
};
use crate::episode::{Dimension, Episode};
use crate::eval::{
    correlation, diversity_metrics, evaluate_policy, reward_distribution_stats, BestOfN, CorrelationMethod,
    EvaluationReport, HISTOGRAM_BINS,
};
use crate::reward_model::{Featurizer, RewardModel, RewardModelParameters};
use crate::seed;
use crate::sim::{simulate, Scenario, ScenarioSuite, ScriptedNegotiator, UniformPolicy, UtterancePolicy, LEARNER_ID};
use crate::trainer::{evaluation_seeds, goal_scores, trace_csv, train_loop, Checkpoint, DialoguePolicy};

pub const EPISODES: &str = "episodes.jsonl";
pub const ANNOTATIONS: &str = "annotations.jsonl";
pub const ANNOTATION_FAILURES: &str = "annotation_failures.jsonl";
pub const REWARD_TABLES: &str = "reward_tables.jsonl";
pub const REWARD_DATASET: &str = "reward_dataset.jsonl";
pub const ATTRIBUTION_FAILURES: &str = "attribution_failures.jsonl";
pub const REWARD_STATS: &str = "reward_stats.csv";
pub const REWARD_MODEL: &str = "reward_model.json";
pub const RM_LOSS: &str = "rm_loss.csv";
pub const BC_POLICY: &str = "bc_policy.json";
pub const BC_LOSS: &str = "bc_loss.csv";
pub const GRPO_POLICY: &str = "grpo_policy.json";
pub const GRPO_TRACE: &str = "grpo_trace.csv";
pub const EVALUATION: &str = "evaluation.csv";
pub const COMPARISONS: &str = "comparisons.csv";
pub const EVALUATION_TEXT: &str = "evaluation.txt";
pub const BEST_OF_N: &str = "best_of_n.csv";
pub const CORRELATION: &str = "correlation.csv";
pub const GRID_CSV: &str = "grid.csv";
pub const GRID_TEXT: &str = "grid.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Rollout,
    Annotate,
    Attribute,
    TrainRm,
    TrainBc,
    TrainGrpo,
    Evaluate,
    BestOfN,
    Correlate,
    Grid,
}

impl Stage {
    /// Stages run by `run`, in dependency order.
    pub const PIPELINE: [Stage; 8] = [
        Stage::Rollout,
        Stage::Annotate,
        Stage::Attribute,
        Stage::TrainRm,
        Stage::TrainBc,
        Stage::TrainGrpo,
        Stage::Evaluate,
        Stage::BestOfN,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Rollout => "rollout",
            Stage::Annotate => "annotate",
            Stage::Attribute => "attribute",
            Stage::TrainRm => "train-rm",
            Stage::TrainBc => "train-bc",
            Stage::TrainGrpo => "train-grpo",
            Stage::Evaluate => "evaluate",
            Stage::BestOfN => "best-of-n",
            Stage::Correlate => "correlate",
            Stage::Grid => "grid",
        }
    }

    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            Stage::Rollout => &[EPISODES],
            Stage::Annotate => &[ANNOTATIONS, ANNOTATION_FAILURES],
            Stage::Attribute => &[REWARD_TABLES, REWARD_DATASET, ATTRIBUTION_FAILURES, REWARD_STATS],
            Stage::TrainRm => &[REWARD_MODEL, RM_LOSS],
            Stage::TrainBc => &[BC_POLICY, BC_LOSS],
            Stage::TrainGrpo => &[GRPO_POLICY, GRPO_TRACE],
            Stage::Evaluate => &[EVALUATION, COMPARISONS, EVALUATION_TEXT],
            Stage::BestOfN => &[BEST_OF_N],
            Stage::Correlate => &[CORRELATION],
            Stage::Grid => &[GRID_CSV, GRID_TEXT],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StageOutcome {
    /// Outputs written; the summary is one or more human-readable lines.
    Ran(String),
    UpToDate,
}

/// Builds the configured annotator. Remote credentials come from the
/// environment only.
pub fn build_annotator(spec: &AnnotatorSpec) -> Result<Box<dyn Annotator>, PipelineError> {
    Ok(match spec {
        AnnotatorSpec::Oracle { samples } => Box::new(OracleAnnotator::new(*samples)),
        AnnotatorSpec::Remote(config) => Box::new(RemoteAnnotator::from_env(config.clone())?),
    })
}

pub fn annotator_id(spec: &AnnotatorSpec) -> String {
    match spec {
        AnnotatorSpec::Oracle { samples } => OracleAnnotator::new(*samples).annotator_id(),
        AnnotatorSpec::Remote(config) => config.annotator_id(),
    }
}

/// Serves stored records by fingerprint and fails on anything else.
struct RecordedAnnotator {
    id: String,
    records: HashMap<String, AnnotationRecord>,
}

impl Annotator for RecordedAnnotator {
    fn annotator_id(&self) -> String {
        self.id.clone()
    }

    fn annotate(&self, request: &AnnotationRequest) -> Result<AnnotationRecord, AnnotationError> {
        self.records
            .get(&request.fingerprint(&self.id))
            .cloned()
            .ok_or_else(|| AnnotationError::Unsupported("no stored annotation for this request".into()))
    }
}

fn read_artifact<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<Vec<T>, PipelineError> {
    read_jsonl(path).map_err(|e| PipelineError::Artifact(format!("{}: {e}", path.display())))
}

fn write_artifact<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PipelineError> {
    write_jsonl(path, items).map_err(|e| PipelineError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    std::fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

/// Runs stages of one configured pipeline against its output directory.
pub struct Runner {
    pub config: PipelineConfig,
    pub out_dir: PathBuf,
    suite: ScenarioSuite,
    scenario: Scenario,
    suite_digest: FileDigest,
}

impl Runner {
    /// `config` must come from [`PipelineConfig::load`] so that paths resolve.
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        let suite = config.suite()?;
        let scenario = config.scenario_from(&suite, &config.scenario)?;
        for id in config.evaluation.scenarios.iter().chain(&config.grid.scenarios) {
            config.scenario_from(&suite, id)?;
        }
        let suite_digest = external_input(&config.scenario_suite)?;
        let out_dir = config.output_dir.clone();
        std::fs::create_dir_all(&out_dir).map_err(|e| PipelineError::io(&out_dir, e))?;
        Ok(Self {
            config,
            out_dir,
            suite,
            scenario,
            suite_digest,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn stage_seed(&self, stage: Stage) -> u64 {
        seed::stage_seed(self.config.seed, stage.name())
    }

    fn upstream(&self, name: &str, producer: Stage) -> Result<FileDigest, PipelineError> {
        verified_artifact(&self.out_dir, name, producer.name())
    }

    /// Skips `body` when the previous manifest matches; otherwise runs it and
    /// records the outputs.
    fn execute<H: Serialize>(
        &self,
        stage: Stage,
        hashed: &H,
        mut inputs: Vec<FileDigest>,
        body: impl FnOnce() -> Result<String, PipelineError>,
    ) -> Result<StageOutcome, PipelineError> {
        inputs.insert(0, self.suite_digest.clone());
        let mut manifest = Manifest::new(
            stage.name(),
            self.stage_seed(stage),
            config_hash(&(&self.config.scenario, hashed)),
            inputs,
        );
        let mpath = manifest_path(&self.out_dir, stage.name());
        if let Ok(previous) = Manifest::load(&mpath) {
            if manifest.is_up_to_date(&previous, &self.out_dir) {
                return Ok(StageOutcome::UpToDate);
            }
        }
        // A stale manifest must not vouch for half-written outputs.
        let _ = std::fs::remove_file(&mpath);
        let summary = body()?;
        manifest.record_outputs(&self.out_dir, stage.outputs())?;
        manifest.save(&self.out_dir)?;
        Ok(StageOutcome::Ran(summary))
    }

    pub fn run(&self, stage: Stage) -> Result<StageOutcome, PipelineError> {
        match stage {
            Stage::Rollout => self.rollout(),
            Stage::Annotate => self.annotate(None),
            Stage::Attribute => self.attribute(),
            Stage::TrainRm => self.train_rm(),
            Stage::TrainBc => self.train_bc(),
            Stage::TrainGrpo => self.train_grpo(),
            Stage::Evaluate => self.evaluate(&[]),
            Stage::BestOfN => self.best_of_n(),
            Stage::Correlate => self.correlate(&[]),
            Stage::Grid => self.grid(None, &mut |_, _, _| {}),
        }
    }

    fn episodes(&self) -> Result<Vec<Episode>, PipelineError> {
        read_artifact(&self.path(EPISODES))
    }

    pub fn rollout(&self) -> Result<StageOutcome, PipelineError> {
        let section = &self.config.rollout;
        let mut inputs = Vec::new();
        let checkpoint = match section.policy.as_str() {
            "scripted" | "uniform" => None,
            path => {
                inputs.push(external_input(Path::new(path))?);
                Some(Checkpoint::load(Path::new(path))?)
            }
        };
        self.execute(Stage::Rollout, section, inputs, || {
            let scenario = &self.scenario;
            let policy: Box<dyn UtterancePolicy> = match (&checkpoint, section.policy.as_str()) {
                (Some(c), _) => Box::new(DialoguePolicy::new(scenario, c.policy.clone())?),
                (None, "uniform") => Box::new(UniformPolicy),
                (None, _) => Box::new(ScriptedNegotiator::default()),
            };
            let seeds = evaluation_seeds(self.stage_seed(Stage::Rollout), section.episodes);
            let episodes = seeds
                .par_iter()
                .map(|s| simulate(scenario, policy.as_ref(), &scenario.partner.policy, *s))
                .collect::<Result<Vec<_>, _>>()?;
            write_artifact(&self.path(EPISODES), &episodes)?;
            let goal: f64 = episodes
                .iter()
                .map(|e| e.evaluation_for(LEARNER_ID).and_then(|v| v.get(Dimension::Goal)).unwrap_or(0.0))
                .sum::<f64>()
                / episodes.len() as f64;
            Ok(format!("{} episodes, mean learner GOAL {goal:.3}", episodes.len()))
        })
    }

    /// `annotator` overrides the configured one (tests use this to point at
    /// a mock endpoint or a scripted annotator).
    pub fn annotate(&self, annotator: Option<&dyn Annotator>) -> Result<StageOutcome, PipelineError> {
        let hashed = (
            annotator.map_or_else(|| annotator_id(&self.config.annotator), |a| a.annotator_id()),
            &self.config.annotation,
            self.config.attribution.scheme,
            &self.config.attribution.dimensions,
        );
        let inputs = vec![self.upstream(EPISODES, Stage::Rollout)?];
        self.execute(Stage::Annotate, &hashed, inputs, || {
            let owned;
            let annotator = match annotator {
                Some(a) => a,
                None => {
                    owned = build_annotator(&self.config.annotator)?;
                    owned.as_ref()
                }
            };
            let episodes = self.episodes()?;
            let dataset_config = self.config.dataset_config();
            let requests: Vec<AnnotationRequest> =
                episodes.iter().flat_map(|e| annotation_requests(e, &dataset_config)).collect();
            let mut records = Vec::new();
            let mut failures = Vec::new();
            for (request, result) in requests.iter().zip(annotate_batch(&requests, annotator)) {
                match result {
                    Ok(r) => records.push(r),
                    Err(e) => failures.push(FailureEntry::from_annotation(
                        &request.episode.episode_id,
                        Some(request.dimension),
                        &e,
                    )),
                }
            }
            write_records(&self.path(ANNOTATIONS), &records)?;
            write_artifact(&self.path(ANNOTATION_FAILURES), &failures)?;
            Ok(format!("{} annotations, {} failures", records.len(), failures.len()))
        })
    }

    pub fn attribute(&self) -> Result<StageOutcome, PipelineError> {
        let hashed = (
            annotator_id(&self.config.annotator),
            &self.config.annotation,
            &self.config.attribution,
        );
        let inputs = vec![
            self.upstream(EPISODES, Stage::Rollout)?,
            self.upstream(ANNOTATIONS, Stage::Annotate)?,
        ];
        self.execute(Stage::Attribute, &hashed, inputs, || {
            let episodes = self.episodes()?;
            let records = read_records(&self.path(ANNOTATIONS))?;
            // Records carry the id of whatever annotator produced them.
            let id = records
                .first()
                .map_or_else(|| annotator_id(&self.config.annotator), |r| r.annotator_id.clone());
            let replay = RecordedAnnotator {
                id,
                records: records.into_iter().map(|r| (r.fingerprint.clone(), r)).collect(),
            };
            let dataset = build_reward_dataset(&episodes, &replay, &self.config.dataset_config())?;
            write_artifact(&self.path(REWARD_TABLES), &dataset.tables)?;
            let rows: Vec<RewardRow> = dataset.triples.iter().map(RewardRow::from).collect();
            write_artifact(&self.path(REWARD_DATASET), &rows)?;
            write_artifact(&self.path(ATTRIBUTION_FAILURES), &dataset.failures)?;
            let label = self.config.attribution.scheme.to_string();
            let rewards: Vec<f64> = rows.iter().map(|r| r.reward).collect();
            let mut stats = String::from("condition,n,mean,variance,bin_lo,bin_hi,count\n");
            if !rewards.is_empty() {
                for d in reward_distribution_stats(&[(label, rewards)])? {
                    let edges = d.histogram.edges();
                    for (i, c) in d.histogram.counts.iter().enumerate() {
                        stats.push_str(&format!(
                            "{},{},{},{},{},{},{c}\n",
                            d.label,
                            d.n,
                            d.mean,
                            d.variance,
                            edges[i],
                            edges[i + 1]
                        ));
                    }
                }
            }
            write_text(&self.path(REWARD_STATS), &stats)?;
            Ok(format!(
                "{} reward rows from {} episodes, {} failures ({HISTOGRAM_BINS}-bin histogram in {REWARD_STATS})",
                rows.len(),
                dataset.tables.len(),
                dataset.failures.len()
            ))
        })
    }

    /// Rebuilds triples from stored rows and the episode store.
    fn triples(&self, episodes: &[Episode], rows: &[RewardRow]) -> Result<Vec<RewardTriple>, PipelineError> {
        let by_id: BTreeMap<&str, &Episode> = episodes.iter().map(|e| (e.episode_id.as_str(), e)).collect();
        rows.iter()
            .map(|r| {
                let e = by_id
                    .get(r.episode_id.as_str())
                    .ok_or_else(|| PipelineError::Artifact(format!("reward row for unknown episode `{}`", r.episode_id)))?;
                let utterance = e.utterances.get(r.turn_index).cloned().ok_or_else(|| {
                    PipelineError::Artifact(format!("episode `{}` has no turn {}", r.episode_id, r.turn_index))
                })?;
                if utterance.action_token != r.action_token || utterance.speaker != r.agent {
                    return Err(PipelineError::Artifact(format!(
                        "reward row for `{}` turn {} does not match the episode",
                        r.episode_id, r.turn_index
                    )));
                }
                Ok(RewardTriple {
                    episode_id: r.episode_id.clone(),
                    state: e.observation_at(r.turn_index, &r.agent)?,
                    utterance,
                    reward: r.reward,
                })
            })
            .collect()
    }

    pub fn train_rm(&self) -> Result<StageOutcome, PipelineError> {
        let inputs = vec![
            self.upstream(EPISODES, Stage::Rollout)?,
            self.upstream(REWARD_DATASET, Stage::Attribute)?,
        ];
        self.execute(Stage::TrainRm, &self.config.reward_model, inputs, || {
            let episodes = self.episodes()?;
            let rows: Vec<RewardRow> = read_artifact(&self.path(REWARD_DATASET))?;
            let triples = self.triples(&episodes, &rows)?;
            if triples.is_empty() {
                return Err(PipelineError::Training("reward dataset is empty".into()));
            }
            let (rm, trace) = fit_reward_model(&self.scenario, &self.config, &triples, self.stage_seed(Stage::TrainRm))?;
            rm.params.save(&self.path(REWARD_MODEL))?;
            write_text(&self.path(RM_LOSS), &trace.to_csv())?;
            Ok(format!(
                "{} examples, loss {:.6} -> {:.6}",
                triples.len(),
                trace.initial(),
                trace.last()
            ))
        })
    }

    pub fn train_bc(&self) -> Result<StageOutcome, PipelineError> {
        let inputs = vec![self.upstream(EPISODES, Stage::Rollout)?];
        self.execute(Stage::TrainBc, &self.config.bc, inputs, || {
            let episodes = self.episodes()?;
            let (params, trace) = fit_bc(&self.scenario, &self.config, &episodes, self.stage_seed(Stage::TrainBc))?;
            Checkpoint {
                policy: params.clone(),
                reference: params,
                step: 0,
            }
            .save(&self.path(BC_POLICY))?;
            write_text(&self.path(BC_LOSS), &trace.to_csv())?;
            Ok(format!("nll {:.4} -> {:.4}", trace.initial(), trace.last()))
        })
    }

    fn reward_model(&self) -> Result<RewardModel, PipelineError> {
        Ok(RewardModel {
            featurizer: Featurizer::new(&self.scenario),
            params: RewardModelParameters::load(&self.path(REWARD_MODEL))?,
        })
    }

    pub fn train_grpo(&self) -> Result<StageOutcome, PipelineError> {
        let inputs = vec![
            self.upstream(REWARD_MODEL, Stage::TrainRm)?,
            self.upstream(BC_POLICY, Stage::TrainBc)?,
        ];
        self.execute(Stage::TrainGrpo, &self.config.grpo, inputs, || {
            let rm = self.reward_model()?;
            let bc = Checkpoint::load(&self.path(BC_POLICY))?;
            let mut grpo = self.config.grpo.clone();
            grpo.seed = self.stage_seed(Stage::TrainGrpo);
            let outcome = train_loop(&self.scenario, &self.scenario.partner.policy, &rm, &bc.policy, &grpo)?;
            outcome.checkpoint.save(&self.path(GRPO_POLICY))?;
            write_text(&self.path(GRPO_TRACE), &trace_csv(&outcome.trace))?;
            let last = outcome.trace.last();
            Ok(format!(
                "{} steps, final mean reward {:.4}, KL {:.4}",
                outcome.checkpoint.step,
                last.map_or(0.0, |r| r.mean_reward),
                last.map_or(0.0, |r| r.kl)
            ))
        })
    }

    fn evaluation_suite(&self) -> Vec<Scenario> {
        if self.config.evaluation.scenarios.is_empty() {
            vec![self.scenario.clone()]
        } else {
            self.config
                .evaluation
                .scenarios
                .iter()
                .filter_map(|id| self.suite.get(id).cloned())
                .collect()
        }
    }

    /// Scores the BC and GRPO policies plus any `extra` labelled checkpoints
    /// on the same seeds, with a paired test for every pair and dimension.
    pub fn evaluate(&self, extra: &[(String, PathBuf)]) -> Result<StageOutcome, PipelineError> {
        let mut inputs = vec![
            self.upstream(BC_POLICY, Stage::TrainBc)?,
            self.upstream(GRPO_POLICY, Stage::TrainGrpo)?,
        ];
        for (_, path) in extra {
            inputs.push(external_input(path)?);
        }
        let labels: Vec<&str> = extra.iter().map(|(l, _)| l.as_str()).collect();
        let hashed = (&self.config.evaluation.episodes, &self.config.evaluation.scenarios, &labels);
        self.execute(Stage::Evaluate, &hashed, inputs, || {
            let suite = self.evaluation_suite();
            let seed = self.stage_seed(Stage::Evaluate);
            let n = self.config.evaluation.episodes;
            let mut policies = vec![
                ("bc".to_string(), self.path(BC_POLICY)),
                ("grpo".to_string(), self.path(GRPO_POLICY)),
            ];
            policies.extend(extra.iter().cloned());
            let mut evaluations = Vec::new();
            for (label, path) in &policies {
                let policy = DialoguePolicy::new(&self.scenario, Checkpoint::load(path)?.policy)?;
                evaluations.push(evaluate_policy(label, &policy, &suite, None, n, seed)?);
            }
            let mut report = EvaluationReport::default();
            for e in &evaluations {
                report.add(e);
            }
            for (i, b) in evaluations.iter().enumerate() {
                for a in &evaluations[i + 1..] {
                    for d in Dimension::SCORED {
                        report.comparisons.push(a.compare(b, d)?);
                    }
                }
            }
            let mut text = report.to_text();
            for e in &evaluations {
                let m = diversity_metrics(&e.episodes)?;
                text.push_str(&format!(
                    "{}: {:.2} turns per episode, {:.2} words per utterance\n",
                    e.label, m.avg_turns, m.avg_words_per_utterance
                ));
            }
            write_text(&self.path(EVALUATION), &report.means_csv())?;
            write_text(&self.path(COMPARISONS), &report.comparisons_csv())?;
            write_text(&self.path(EVALUATION_TEXT), &text)?;
            Ok(text.trim_end().to_string())
        })
    }

    pub fn best_of_n(&self) -> Result<StageOutcome, PipelineError> {
        let inputs = vec![
            self.upstream(REWARD_MODEL, Stage::TrainRm)?,
            self.upstream(BC_POLICY, Stage::TrainBc)?,
        ];
        let hashed = (&self.config.evaluation.best_of_n, &self.config.evaluation.best_of_n_episodes);
        self.execute(Stage::BestOfN, &hashed, inputs, || {
            let rm = self.reward_model()?;
            let base = DialoguePolicy::new(&self.scenario, Checkpoint::load(&self.path(BC_POLICY))?.policy)?;
            let seeds = evaluation_seeds(self.stage_seed(Stage::BestOfN), self.config.evaluation.best_of_n_episodes);
            let mut csv = String::from("n,episodes,mean_goal,std_error\n");
            let mut summary = Vec::new();
            for &n in &self.config.evaluation.best_of_n {
                let policy = BestOfN { policy: &base, rm: &rm, n };
                let scores = goal_scores(&self.scenario, &policy, &self.scenario.partner.policy, &seeds)?;
                let k = scores.len() as f64;
                let mean = scores.iter().sum::<f64>() / k;
                let se = if scores.len() > 1 {
                    (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt()
                } else {
                    0.0
                };
                csv.push_str(&format!("{n},{},{mean},{se}\n", scores.len()));
                summary.push(format!("N={n}: mean GOAL {mean:.3} (se {se:.3})"));
            }
            write_text(&self.path(BEST_OF_N), &csv)?;
            Ok(summary.join("\n"))
        })
    }

    /// Agreement between annotation files, or between this run's
    /// annotations and the counterfactual oracle when `inputs` is empty.
    pub fn correlate(&self, inputs: &[PathBuf]) -> Result<StageOutcome, PipelineError> {
        let mut digests = Vec::new();
        let mut sources: Vec<(String, Vec<AnnotationRecord>)> = Vec::new();
        if inputs.is_empty() {
            digests.push(self.upstream(EPISODES, Stage::Rollout)?);
            digests.push(self.upstream(ANNOTATIONS, Stage::Annotate)?);
        } else {
            for p in inputs {
                digests.push(external_input(p)?);
            }
        }
        let samples = match self.config.annotator {
            AnnotatorSpec::Oracle { samples } => samples,
            AnnotatorSpec::Remote(_) => crate::annotation::DEFAULT_ORACLE_SAMPLES,
        };
        self.execute(Stage::Correlate, &samples, digests, || {
            if inputs.is_empty() {
                let records = read_records(&self.path(ANNOTATIONS))?;
                let oracle = oracle_records(&self.episodes()?, &records, samples)?;
                sources.push(("annotations".into(), records));
                sources.push((oracle_label(samples), oracle));
            } else {
                for p in inputs {
                    let name = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
                    sources.push((name, read_records(p)?));
                }
                if sources.len() < 2 {
                    return Err(PipelineError::Config("correlate needs at least two annotation files".into()));
                }
            }
            let rows = agreement(&sources)?;
            let mut csv = String::from("a,b,dimension,n,pearson,spearman\n");
            let fmt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
            for r in &rows {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.a,
                    r.b,
                    r.dimension.name(),
                    r.n,
                    fmt(r.pearson),
                    fmt(r.spearman)
                ));
            }
            write_text(&self.path(CORRELATION), &csv)?;
            Ok(rows
                .iter()
                .map(|r| {
                    format!(
                        "{} vs {} [{}]: n {}, pearson {}, spearman {}",
                        r.a,
                        r.b,
                        r.dimension.name(),
                        r.n,
                        r.pearson.map_or("n/a".into(), |x| format!("{x:.3}")),
                        r.spearman.map_or("n/a".into(), |x| format!("{x:.3}"))
                    )
                })
                .collect::<Vec<_>>()
                .join("\n"))
        })
    }

    /// The configured comparison matrix, in memory, with results written to
    /// the output directory. `annotator` overrides the configured one.
    pub fn grid(
        &self,
        annotator: Option<&dyn Annotator>,
        progress: &mut dyn FnMut(&str, usize, f64),
    ) -> Result<StageOutcome, PipelineError> {
        let hashed = (
            annotator.map_or_else(|| annotator_id(&self.config.annotator), |a| a.annotator_id()),
            &self.config,
        );
        self.execute(Stage::Grid, &hashed, Vec::new(), || {
            let owned;
            let annotator = match annotator {
                Some(a) => a,
                None => {
                    owned = build_annotator(&self.config.annotator)?;
                    owned.as_ref()
                }
            };
            let scenarios: Vec<Scenario> = self.suite.scenarios.clone();
            let result = run_grid(&self.config, &scenarios, &grid_conditions(&self.config), annotator, progress)?;
            write_text(&self.path(GRID_CSV), &result.to_csv())?;
            write_text(&self.path(GRID_TEXT), &result.to_text())?;
            Ok(result.to_text().trim_end().to_string())
        })
    }
}

fn oracle_label(samples: usize) -> String {
    format!("oracle/{samples}")
}

/// Re-annotates the requests behind `records` with the oracle.
fn oracle_records(
    episodes: &[Episode],
    records: &[AnnotationRecord],
    samples: usize,
) -> Result<Vec<AnnotationRecord>, PipelineError> {
    let by_id: BTreeMap<&str, &Episode> = episodes.iter().map(|e| (e.episode_id.as_str(), e)).collect();
    let oracle = OracleAnnotator::new(samples);
    records
        .par_iter()
        .map(|r| {
            let e = by_id
                .get(r.episode_id.as_str())
                .ok_or_else(|| PipelineError::Artifact(format!("annotation for unknown episode `{}`", r.episode_id)))?;
            let hi = r.rubric_max as i64;
            let request = AnnotationRequest::new((*e).clone(), &r.agent, r.dimension, r.instruction)
                .with_context(r.context)
                .with_bounds(r.rubric_max, crate::annotation::ScoreBounds::new(0, hi));
            Ok(oracle.annotate(&request)?)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgreementRow {
    pub a: String,
    pub b: String,
    pub dimension: Dimension,
    /// Utterances present in both sources.
    pub n: usize,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
}

type RecordKey = (String, String, Dimension, String, String);

fn record_key(r: &AnnotationRecord) -> RecordKey {
    (
        r.episode_id.clone(),
        r.agent.clone(),
        r.dimension,
        format!("{:?}", r.instruction),
        format!("{:?}", r.context),
    )
}

/// Per-utterance attribution agreement for every pair of sources and
/// every dimension they share.
pub fn agreement(sources: &[(String, Vec<AnnotationRecord>)]) -> Result<Vec<AgreementRow>, PipelineError> {
    let maps: Vec<BTreeMap<RecordKey, &AnnotationRecord>> = sources
        .iter()
        .map(|(_, recs)| recs.iter().map(|r| (record_key(r), r)).collect())
        .collect();
    let mut out = Vec::new();
    for i in 0..sources.len() {
        for j in i + 1..sources.len() {
            let mut columns: BTreeMap<Dimension, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
            for (key, ra) in &maps[i] {
                let Some(rb) = maps[j].get(key) else { continue };
                if ra.turns != rb.turns {
                    continue;
                }
                let col = columns.entry(key.2).or_default();
                col.0.extend(ra.attribution());
                col.1.extend(rb.attribution());
            }
            for (dimension, (a, b)) in columns {
                let enough = a.len() >= 3;
                out.push(AgreementRow {
                    a: sources[i].0.clone(),
                    b: sources[j].0.clone(),
                    dimension,
                    n: a.len(),
                    pearson: if enough { correlation(&a, &b, CorrelationMethod::Pearson)? } else { None },
                    spearman: if enough { correlation(&a, &b, CorrelationMethod::Spearman)? } else { None },
                });
            }
        }
    }
    Ok(out)
}
