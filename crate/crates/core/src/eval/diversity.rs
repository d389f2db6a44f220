use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::episode::Episode;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityMetrics {
    /// Utterances per episode.
    pub avg_turns: f64,
    /// Whitespace-separated words per utterance, pooled over all utterances.
    pub avg_words_per_utterance: f64,
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn diversity_metrics(episodes: &[Episode]) -> Result<DiversityMetrics, StatsError> {
    if episodes.is_empty() {
        return Err(StatsError::EmptyList);
    }
    let turns: usize = episodes.iter().map(|e| e.utterances.len()).sum();
    let words: usize = episodes
        .iter()
        .flat_map(|e| &e.utterances)
        .map(|u| word_count(&u.rendered_text))
        .sum();
    Ok(DiversityMetrics {
        avg_turns: turns as f64 / episodes.len() as f64,
        avg_words_per_utterance: if turns == 0 { 0.0 } else { words as f64 / turns as f64 },
    })
}
