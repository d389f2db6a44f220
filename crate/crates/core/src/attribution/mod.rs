//! Episode-level scores to per-utterance rewards.

mod dataset;
mod schemes;

use thiserror::Error;

pub use dataset::{
    annotation_requests, build_reward_dataset, combine_tables, read_jsonl, table_from_records, triples, write_jsonl,
    AttributedRewardTable, DatasetConfig, FailureEntry, RewardDataset, RewardRow, RewardTriple,
};
pub use schemes::{
    attribute_direct, attribute_scaled, attribute_scaled_or_uniform, attribute_singular, attribute_uniform,
    combine_columns, CombinationConfig, Scheme, UniformVariant,
};

#[derive(Debug, Error)]
pub enum AttributionError {
    #[error("attribution weight {weight} at position {index} is outside [0, 1]")]
    WeightOutOfRange { index: usize, weight: f64 },
    #[error("episode has no utterances by the agent")]
    EmptyEpisode,
    #[error("critical utterance {critical} is out of range for {len} utterances")]
    CriticalOutOfRange { critical: usize, len: usize },
    #[error("every attribution score is zero")]
    AllZeroAttributions,
    #[error("dimension {0} is missing from the reward table")]
    MissingDimension(crate::episode::Dimension),
    #[error("invalid combination config: {0}")]
    InvalidConfig(String),
}
