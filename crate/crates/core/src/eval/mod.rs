//! Evaluation harness: policy reports, paired tests, best-of-N reranking,
//! correlation and distribution statistics, diversity metrics.

mod best_of_n;
mod diversity;
mod report;
pub mod stats;
mod synth;

use thiserror::Error;

pub use best_of_n::{best_of_n, best_of_n_with, BestOfN};
pub use diversity::{diversity_metrics, word_count, DiversityMetrics};
pub use report::{evaluate_policy, suite_seeds, EvaluationReport, MeanWithCount, PairedComparison, PolicyEvaluation};
pub use stats::{
    average_ranks, correlation, histogram, incomplete_beta, ln_gamma, mean, paired_ttest, pearson,
    reward_distribution_stats, sample_variance, spearman, student_t_two_sided, variance, CorrelationMethod,
    DistributionStats, Histogram, PairedTTest, HISTOGRAM_BINS,
};
pub use synth::correlated_columns;

use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("empty input")]
    EmptyList,
    #[error("inputs have different lengths ({a} and {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("scenario suite is empty")]
    EmptySuite,
    #[error("cannot pair evaluations: {0}")]
    Unpaired(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Sim(#[from] SimError),
}
