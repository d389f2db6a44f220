//! Episodes plus annotations to reward-model training rows.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schemes::{
    attribute_direct, attribute_scaled_or_uniform, attribute_singular, attribute_uniform, combine_columns,
    CombinationConfig, Scheme, UniformVariant,
};
use super::AttributionError;
use crate::annotation::{
    bounded_map, AnnotationError, AnnotationRecord, AnnotationRequest, Annotator, ContextMode, Instruction, ScoreBounds,
};
use crate::episode::{DialogueState, Dimension, Episode, Utterance};

/// Per-utterance rewards of one agent in one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributedRewardTable {
    pub episode_id: String,
    pub agent: String,
    pub scheme: Scheme,
    /// Turn index of each row entry.
    pub turns: Vec<usize>,
    pub rows: BTreeMap<Dimension, Vec<f64>>,
    #[serde(default)]
    pub combined: Option<Vec<f64>>,
    /// Dimensions where scaled attribution saw only zeros and fell back to `G / T`.
    #[serde(default)]
    pub fallback: Vec<Dimension>,
}

impl AttributedRewardTable {
    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }
}

/// Everything needed to turn annotated episodes into rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub agent: String,
    pub scheme: Scheme,
    pub combination: CombinationConfig,
    pub rubric_max: u32,
    pub bounds: ScoreBounds,
    pub context: ContextMode,
}

impl DatasetConfig {
    pub fn new(agent: &str, scheme: Scheme) -> Self {
        Self {
            agent: agent.to_string(),
            scheme,
            combination: CombinationConfig::default(),
            rubric_max: 3,
            bounds: ScoreBounds::new(0, 3),
            context: ContextMode::Offline,
        }
    }

    /// The instruction the scheme needs, if it needs an annotator at all.
    pub fn instruction(&self) -> Option<Instruction> {
        match self.scheme {
            Scheme::Direct | Scheme::Scaled => Some(Instruction::Direct),
            Scheme::Singular => Some(Instruction::Singular),
            Scheme::UniformFull | Scheme::UniformSplit => None,
        }
    }
}

/// One annotation request per configured dimension; empty for uniform schemes.
pub fn annotation_requests(episode: &Episode, config: &DatasetConfig) -> Vec<AnnotationRequest> {
    let Some(instruction) = config.instruction() else {
        return Vec::new();
    };
    config
        .combination
        .dimensions
        .iter()
        .map(|d| {
            AnnotationRequest::new(episode.clone(), &config.agent, *d, instruction)
                .with_bounds(config.rubric_max, config.bounds)
                .with_context(config.context)
        })
        .collect()
}

/// An episode left out of the dataset, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEntry {
    pub episode_id: String,
    #[serde(default)]
    pub dimension: Option<Dimension>,
    pub error: String,
    #[serde(default)]
    pub raw_reply: Option<String>,
}

impl FailureEntry {
    pub fn from_annotation(episode_id: &str, dimension: Option<Dimension>, err: &AnnotationError) -> Self {
        Self {
            episode_id: episode_id.to_string(),
            dimension,
            error: err.to_string(),
            raw_reply: err.raw_reply().map(str::to_string),
        }
    }

    fn plain(episode_id: &str, dimension: Option<Dimension>, err: impl ToString) -> Self {
        Self {
            episode_id: episode_id.to_string(),
            dimension,
            error: err.to_string(),
            raw_reply: None,
        }
    }
}

/// Builds the per-dimension rows of one episode. `records` must hold one
/// record per configured dimension unless the scheme is uniform.
pub fn table_from_records(
    episode: &Episode,
    records: &BTreeMap<Dimension, AnnotationRecord>,
    config: &DatasetConfig,
) -> Result<AttributedRewardTable, FailureEntry> {
    let id = &episode.episode_id;
    let evaluation = episode
        .evaluation_for(&config.agent)
        .ok_or_else(|| FailureEntry::plain(id, None, "episode has no evaluation for the agent"))?;
    let turns: Vec<usize> = episode.utterances_by(&config.agent).map(|u| u.turn_index).collect();
    let t = turns.len();
    let mut table = AttributedRewardTable {
        episode_id: id.clone(),
        agent: config.agent.clone(),
        scheme: config.scheme,
        turns: turns.clone(),
        rows: BTreeMap::new(),
        combined: None,
        fallback: Vec::new(),
    };
    for dim in &config.combination.dimensions {
        let fail = |e: &dyn std::fmt::Display| FailureEntry::plain(id, Some(*dim), e);
        let g = evaluation
            .get(*dim)
            .ok_or_else(|| fail(&AttributionError::MissingDimension(*dim)))?;
        let record = || {
            let r = records
                .get(dim)
                .ok_or_else(|| fail(&format!("no annotation record for {dim}")))?;
            if r.turns != turns {
                return Err(fail(&"annotation record does not match the episode's utterances"));
            }
            Ok(r)
        };
        let row = match config.scheme {
            Scheme::UniformFull => attribute_uniform(g, t, UniformVariant::Full),
            Scheme::UniformSplit => attribute_uniform(g, t, UniformVariant::Split),
            Scheme::Direct => attribute_direct(g, &record()?.attribution()),
            Scheme::Scaled => attribute_scaled_or_uniform(g, &record()?.attribution()).map(|(r, fell_back)| {
                if fell_back {
                    table.fallback.push(*dim);
                }
                r
            }),
            Scheme::Singular => {
                let pos = record()?
                    .critical_position()
                    .ok_or_else(|| fail(&"singular record names no utterance of the agent"))?;
                attribute_singular(g, t, pos)
            }
        }
        .map_err(|e| fail(&e))?;
        table.rows.insert(*dim, row);
    }
    Ok(table)
}

/// Fills `combined` on every table using corpus-wide min/max per dimension.
pub fn combine_tables(tables: &mut [AttributedRewardTable], config: &CombinationConfig) -> Result<(), AttributionError> {
    config.validate()?;
    let mut columns = Vec::with_capacity(config.dimensions.len());
    for dim in &config.dimensions {
        let mut col = Vec::new();
        for table in tables.iter() {
            let row = table.rows.get(dim).ok_or(AttributionError::MissingDimension(*dim))?;
            if row.len() != table.len() {
                return Err(AttributionError::InvalidConfig(format!(
                    "{dim} row of `{}` has {} entries for {} utterances",
                    table.episode_id,
                    row.len(),
                    table.len()
                )));
            }
            col.extend_from_slice(row);
        }
        columns.push(col);
    }
    let combined = combine_columns(&columns, &config.weights, config.degenerate_value);
    let mut offset = 0;
    for table in tables.iter_mut() {
        let n = table.len();
        table.combined = Some(combined[offset..offset + n].to_vec());
        offset += n;
    }
    Ok(())
}

/// A reward-model training example.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTriple {
    pub episode_id: String,
    pub state: DialogueState,
    pub utterance: Utterance,
    pub reward: f64,
}

/// On-disk form of a [`RewardTriple`]; the state is recovered from the episode store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRow {
    pub episode_id: String,
    pub agent: String,
    pub turn_index: usize,
    pub action_token: crate::episode::ActionToken,
    pub reward: f64,
}

impl From<&RewardTriple> for RewardRow {
    fn from(t: &RewardTriple) -> Self {
        Self {
            episode_id: t.episode_id.clone(),
            agent: t.state.acting_agent.clone(),
            turn_index: t.utterance.turn_index,
            action_token: t.utterance.action_token,
            reward: t.reward,
        }
    }
}

/// Triples for combined tables, aligned with [`Episode::decompose`].
pub fn triples(episodes: &[Episode], tables: &[AttributedRewardTable]) -> Result<Vec<RewardTriple>, AttributionError> {
    let by_id: BTreeMap<&str, &Episode> = episodes.iter().map(|e| (e.episode_id.as_str(), e)).collect();
    let mut out = Vec::new();
    for table in tables {
        let combined = table
            .combined
            .as_ref()
            .ok_or_else(|| AttributionError::InvalidConfig(format!("table `{}` is not combined", table.episode_id)))?;
        let episode = by_id
            .get(table.episode_id.as_str())
            .ok_or_else(|| AttributionError::InvalidConfig(format!("unknown episode `{}`", table.episode_id)))?;
        let pairs = episode
            .decompose(&table.agent)
            .map_err(|e| AttributionError::InvalidConfig(e.to_string()))?;
        for ((state, utterance), reward) in pairs.into_iter().zip(combined) {
            out.push(RewardTriple {
                episode_id: table.episode_id.clone(),
                state,
                utterance,
                reward: *reward,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardDataset {
    pub tables: Vec<AttributedRewardTable>,
    pub triples: Vec<RewardTriple>,
    pub records: Vec<AnnotationRecord>,
    pub failures: Vec<FailureEntry>,
}

/// Annotates every episode, attributes, and combines over the whole corpus.
/// Episodes whose annotation or attribution fails are left out and listed in
/// `failures`.
pub fn build_reward_dataset(
    episodes: &[Episode],
    annotator: &dyn Annotator,
    config: &DatasetConfig,
) -> Result<RewardDataset, AttributionError> {
    config.combination.validate()?;
    type Annotated = Result<BTreeMap<Dimension, AnnotationRecord>, FailureEntry>;
    let annotated: Vec<Annotated> = bounded_map(annotator, episodes, |e| {
        let mut out = BTreeMap::new();
        for request in annotation_requests(e, config) {
            let record = annotator
                .annotate(&request)
                .map_err(|err| FailureEntry::from_annotation(&e.episode_id, Some(request.dimension), &err))?;
            out.insert(request.dimension, record);
        }
        Ok(out)
    });
    let mut tables = Vec::new();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (episode, result) in episodes.iter().zip(annotated) {
        match result.and_then(|recs| table_from_records(episode, &recs, config).map(|t| (t, recs))) {
            Ok((table, recs)) => {
                tables.push(table);
                records.extend(recs.into_values());
            }
            Err(f) => failures.push(f),
        }
    }
    combine_tables(&mut tables, &config.combination)?;
    let triples = triples(episodes, &tables)?;
    Ok(RewardDataset {
        tables,
        triples,
        records,
        failures,
    })
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> std::io::Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
        })?);
    }
    Ok(out)
}
