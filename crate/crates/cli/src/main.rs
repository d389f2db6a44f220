//! `social-rl`: staged pipeline from self-play rollouts to GRPO training and
//! evaluation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use social_rl::pipeline::{PipelineConfig, PipelineError, Runner, Stage, StageOutcome};

#[derive(Parser)]
#[command(name = "social-rl", version, about = "Utterance-level reward attribution and GRPO training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate evaluated episodes.
    Rollout(Common),
    /// Score episodes with the configured annotator.
    Annotate(Common),
    /// Turn annotations into per-utterance rewards.
    Attribute(Common),
    /// Fit the reward model.
    TrainRm(Common),
    /// Behavior cloning on the rollout corpus.
    TrainBc(Common),
    /// GRPO from the BC policy against the reward model.
    TrainGrpo(Common),
    /// Compare BC and GRPO, plus any extra checkpoints.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Extra policy as `label=path/to/checkpoint.json`; repeatable.
        #[arg(long = "policy", value_parser = parse_labelled)]
        policies: Vec<(String, PathBuf)>,
    },
    /// Rerank BC samples with the reward model.
    BestOfN(Common),
    /// Agreement between annotation sources.
    Correlate {
        #[command(flatten)]
        common: Common,
        /// Annotation files to compare pairwise; defaults to this run's
        /// annotations against the oracle.
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
    },
    /// The full comparison matrix over schemes and training seeds.
    Grid(Common),
    /// Every stage from rollout through best-of-n.
    Run(Common),
}

fn parse_labelled(s: &str) -> Result<(String, PathBuf), String> {
    let (label, path) = s.split_once('=').ok_or("expected label=path")?;
    if label.is_empty() || path.is_empty() {
        return Err("expected label=path".into());
    }
    Ok((label.to_string(), PathBuf::from(path)))
}

fn runner(common: &Common) -> Result<Runner, PipelineError> {
    let mut config = PipelineConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    Runner::new(config)
}

fn report(stage: Stage, outcome: StageOutcome) {
    match outcome {
        StageOutcome::Ran(summary) => {
            println!("[{stage}] done");
            for line in summary.lines() {
                println!("  {line}");
            }
        }
        StageOutcome::UpToDate => println!("[{stage}] up-to-date, skipped"),
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let (stage, common) = match &cli.command {
        Command::Rollout(c) => (Stage::Rollout, c),
        Command::Annotate(c) => (Stage::Annotate, c),
        Command::Attribute(c) => (Stage::Attribute, c),
        Command::TrainRm(c) => (Stage::TrainRm, c),
        Command::TrainBc(c) => (Stage::TrainBc, c),
        Command::TrainGrpo(c) => (Stage::TrainGrpo, c),
        Command::Evaluate { common, .. } => (Stage::Evaluate, common),
        Command::BestOfN(c) => (Stage::BestOfN, c),
        Command::Correlate { common, .. } => (Stage::Correlate, common),
        Command::Grid(c) => (Stage::Grid, c),
        Command::Run(c) => {
            let r = runner(c)?;
            for stage in Stage::PIPELINE {
                report(stage, r.run(stage)?);
            }
            return Ok(());
        }
    };
    let r = runner(common)?;
    let outcome = match &cli.command {
        Command::Evaluate { policies, .. } => r.evaluate(policies)?,
        Command::Correlate { inputs, .. } => r.correlate(inputs)?,
        Command::Grid(_) => r.grid(None, &mut |label, seed, goal| {
            eprintln!("  {label} seed {seed}: final GOAL {goal:.3}");
        })?,
        _ => r.run(stage)?,
    };
    report(stage, outcome);
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
