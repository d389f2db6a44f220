mod common;

use std::path::{Path, PathBuf};

use social_rl::annotation::read_records;
use social_rl::attribution::{read_jsonl, RewardRow};
use social_rl::episode::read_episodes;
use social_rl::pipeline::{Manifest, PipelineConfig, PipelineError, Runner, Stage, StageOutcome};

fn small_config(dir: &Path, scheme: &str) -> PathBuf {
    let suite = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/scenarios.toml");
    std::fs::copy(suite, dir.join("scenarios.toml")).unwrap();
    let text = format!(
        r#"
seed = 3
scenario_suite = "scenarios.toml"
scenario = "easy-split"
output_dir = "out"

[rollout]
episodes = 12

[annotator]
kind = "oracle"
samples = 2

[attribution]
scheme = "{scheme}"
dimensions = ["GOAL", "REL", "KNO"]

[reward_model]
learning_rate = 0.05
epochs = 30

[bc]
learning_rate = 1.0
epochs = 20

[grpo]
group_size = 4
learning_rate = 0.2
kl_beta = 0.5
steps = 3
episodes_per_step = 2

[evaluation]
episodes = 10
best_of_n = [1, 2]
best_of_n_episodes = 10
"#
    );
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn ran(outcome: StageOutcome) -> String {
    match outcome {
        StageOutcome::Ran(s) => s,
        StageOutcome::UpToDate => panic!("expected the stage to run"),
    }
}

#[test]
fn full_pipeline_runs_then_skips() {
    let dir = tempfile::tempdir().unwrap();
    let config = PipelineConfig::load(&small_config(dir.path(), "direct")).unwrap();
    assert_eq!(config.output_dir, dir.path().join("out"));
    let runner = Runner::new(config).unwrap();
    for stage in Stage::PIPELINE {
        ran(runner.run(stage).unwrap());
        for name in stage.outputs() {
            assert!(runner.out_dir.join(name).exists(), "{stage} did not write {name}");
        }
        let m = Manifest::load(&runner.out_dir.join(format!("{stage}.manifest.json"))).unwrap();
        assert_eq!(m.stage, stage.name());
        assert_eq!(m.seed, social_rl::seed::stage_seed(3, stage.name()));
        assert!(!m.inputs.is_empty());
    }
    let episodes = read_episodes(&runner.out_dir.join("episodes.jsonl")).unwrap();
    assert_eq!(episodes.len(), 12);
    let records = read_records(&runner.out_dir.join("annotations.jsonl")).unwrap();
    assert_eq!(records.len(), 12 * 3);
    let rows: Vec<RewardRow> = read_jsonl(&runner.out_dir.join("reward_dataset.jsonl")).unwrap();
    let learner_turns: usize = episodes.iter().map(|e| e.utterances_by("learner").count()).sum();
    assert_eq!(rows.len(), learner_turns);
    let bon = std::fs::read_to_string(runner.out_dir.join("best_of_n.csv")).unwrap();
    assert_eq!(bon.lines().count(), 3);

    for stage in Stage::PIPELINE {
        assert_eq!(runner.run(stage).unwrap(), StageOutcome::UpToDate, "{stage}");
    }
}

#[test]
fn reruns_are_byte_identical_and_config_changes_invalidate() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = Runner::new(PipelineConfig::load(&small_config(a.path(), "scaled")).unwrap()).unwrap();
    let rb = Runner::new(PipelineConfig::load(&small_config(b.path(), "scaled")).unwrap()).unwrap();
    for stage in [Stage::Rollout, Stage::Annotate, Stage::Attribute, Stage::TrainRm] {
        ran(ra.run(stage).unwrap());
        ran(rb.run(stage).unwrap());
        for name in stage.outputs() {
            assert_eq!(
                std::fs::read(ra.out_dir.join(name)).unwrap(),
                std::fs::read(rb.out_dir.join(name)).unwrap(),
                "{name}"
            );
        }
    }
    let mut changed = ra.config.clone();
    changed.reward_model.train.epochs += 1;
    let rc = Runner::new(changed).unwrap();
    assert_eq!(rc.run(Stage::Rollout).unwrap(), StageOutcome::UpToDate);
    ran(rc.run(Stage::TrainRm).unwrap());
}

#[test]
fn tampered_upstream_artifact_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let runner = Runner::new(PipelineConfig::load(&small_config(dir.path(), "direct")).unwrap()).unwrap();
    ran(runner.run(Stage::Rollout).unwrap());
    let path = runner.out_dir.join("episodes.jsonl");
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push('\n');
    std::fs::write(&path, text).unwrap();
    let err = runner.run(Stage::Annotate).unwrap_err();
    assert!(matches!(err, PipelineError::Artifact(_)), "{err}");
    assert_eq!(err.exit_code(), 6);

    let err = runner.run(Stage::TrainRm).unwrap_err();
    assert_eq!(err.exit_code(), 6, "{err}");
}

#[test]
fn uniform_scheme_needs_no_annotations() {
    let dir = tempfile::tempdir().unwrap();
    let runner = Runner::new(PipelineConfig::load(&small_config(dir.path(), "uniform_full")).unwrap()).unwrap();
    for stage in [Stage::Rollout, Stage::Annotate, Stage::Attribute] {
        ran(runner.run(stage).unwrap());
    }
    let rows: Vec<RewardRow> = read_jsonl(&runner.out_dir.join("reward_dataset.jsonl")).unwrap();
    assert!(!rows.is_empty());
}

#[test]
fn config_errors_map_to_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_config(dir.path(), "direct");

    let err = PipelineConfig::load(&dir.path().join("absent.toml")).unwrap_err();
    assert_eq!(err.exit_code(), 2);

    std::fs::remove_file(dir.path().join("scenarios.toml")).unwrap();
    let err = PipelineConfig::load(&path).unwrap_err();
    assert!(err.to_string().contains("scenarios.toml"), "{err}");
    assert_eq!(err.exit_code(), 2);

    let text = std::fs::read_to_string(&path).unwrap();
    for (from, to) in [
        ("scheme = \"direct\"", "scheme = \"sideways\""),
        ("group_size = 4", "group_size = 1"),
        ("episodes = 12", "episodes = 0"),
        ("samples = 2", "samples = 2\nbogus = 1"),
    ] {
        let err = PipelineConfig::from_toml(&text.replace(from, to)).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{to}: {err}");
    }

    let mut config = PipelineConfig::from_toml(&text).unwrap();
    config.scenario = "nowhere".into();
    config.scenario_suite = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/scenarios.toml");
    config.output_dir = dir.path().join("out");
    assert_eq!(Runner::new(config).err().map(|e| e.exit_code()), Some(2));
}

#[test]
fn correlate_defaults_to_oracle_agreement() {
    let dir = tempfile::tempdir().unwrap();
    let runner = Runner::new(PipelineConfig::load(&small_config(dir.path(), "direct")).unwrap()).unwrap();
    ran(runner.run(Stage::Rollout).unwrap());
    ran(runner.run(Stage::Annotate).unwrap());
    let summary = ran(runner.correlate(&[]).unwrap());
    assert!(!summary.is_empty());
    let csv = std::fs::read_to_string(runner.out_dir.join("correlation.csv")).unwrap();
    // The run's own annotator is the oracle, so agreement is perfect.
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let pearson: f64 = fields[fields.len() - 2].parse().unwrap_or(1.0);
        assert!((pearson - 1.0).abs() < 1e-9, "{line}");
    }
}
