//! Per-utterance reward schemes and the cross-dimension combination.

use serde::{Deserialize, Serialize};

use super::AttributionError;
use crate::episode::Dimension;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    UniformFull,
    UniformSplit,
    Singular,
    Scaled,
    Direct,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::UniformFull,
        Scheme::UniformSplit,
        Scheme::Singular,
        Scheme::Scaled,
        Scheme::Direct,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::UniformFull => "uniform_full",
            Scheme::UniformSplit => "uniform_split",
            Scheme::Singular => "singular",
            Scheme::Scaled => "scaled",
            Scheme::Direct => "direct",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown attribution scheme `{s}`"))
    }
}

/// `r_t = G · A_t`.
pub fn attribute_direct(g: f64, weights: &[f64]) -> Result<Vec<f64>, AttributionError> {
    if let Some((t, w)) = weights.iter().enumerate().find(|(_, w)| !(0.0..=1.0).contains(*w)) {
        return Err(AttributionError::WeightOutOfRange { index: t, weight: *w });
    }
    Ok(weights.iter().map(|w| g * w).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UniformVariant {
    /// Every utterance receives `G`.
    Full,
    /// Every utterance receives `G / T`.
    Split,
}

pub fn attribute_uniform(g: f64, t: usize, variant: UniformVariant) -> Result<Vec<f64>, AttributionError> {
    if t == 0 {
        return Err(AttributionError::EmptyEpisode);
    }
    let r = match variant {
        UniformVariant::Full => g,
        UniformVariant::Split => g / t as f64,
    };
    Ok(vec![r; t])
}

/// `G` on the critical utterance, zero elsewhere.
pub fn attribute_singular(g: f64, t: usize, critical: usize) -> Result<Vec<f64>, AttributionError> {
    if critical >= t {
        return Err(AttributionError::CriticalOutOfRange { critical, len: t });
    }
    let mut r = vec![0.0; t];
    r[critical] = g;
    Ok(r)
}

/// `r_t = raw_t / Σ raw · G`. Errors with [`AttributionError::AllZeroAttributions`]
/// when every raw score is zero; see [`attribute_scaled_or_uniform`].
pub fn attribute_scaled(g: f64, raw: &[f64]) -> Result<Vec<f64>, AttributionError> {
    if raw.is_empty() {
        return Err(AttributionError::EmptyEpisode);
    }
    if let Some((t, w)) = raw.iter().enumerate().find(|(_, w)| !w.is_finite() || **w < 0.0) {
        return Err(AttributionError::WeightOutOfRange { index: t, weight: *w });
    }
    let total: f64 = raw.iter().sum();
    if total == 0.0 {
        return Err(AttributionError::AllZeroAttributions);
    }
    Ok(raw.iter().map(|w| w / total * g).collect())
}

/// [`attribute_scaled`], falling back to the `G / T` split on all-zero input.
/// The flag is true when the fallback was taken.
pub fn attribute_scaled_or_uniform(g: f64, raw: &[f64]) -> Result<(Vec<f64>, bool), AttributionError> {
    match attribute_scaled(g, raw) {
        Ok(r) => Ok((r, false)),
        Err(AttributionError::AllZeroAttributions) => Ok((attribute_uniform(g, raw.len(), UniformVariant::Split)?, true)),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationConfig {
    pub dimensions: Vec<Dimension>,
    /// One weight per dimension.
    pub weights: Vec<f64>,
    pub degenerate_value: f64,
}

impl Default for CombinationConfig {
    fn default() -> Self {
        Self::equal(Dimension::SCORED.to_vec())
    }
}

impl CombinationConfig {
    pub fn equal(dimensions: Vec<Dimension>) -> Self {
        let weights = vec![1.0; dimensions.len()];
        Self {
            dimensions,
            weights,
            degenerate_value: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), AttributionError> {
        if self.dimensions.is_empty() || self.dimensions.len() != self.weights.len() {
            return Err(AttributionError::InvalidConfig(format!(
                "{} dimensions but {} weights",
                self.dimensions.len(),
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|w| w.is_nan() || *w < 0.0) {
            return Err(AttributionError::InvalidConfig("weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// Min-max normalizes each column over all rows, then takes the weighted mean
/// across columns. `columns[d][t]` is dimension `d`'s reward for utterance `t`.
pub fn combine_columns(columns: &[Vec<f64>], weights: &[f64], degenerate_value: f64) -> Vec<f64> {
    let n_dims = columns.len() as f64;
    let len = columns.first().map_or(0, Vec::len);
    let mut out = vec![0.0; len];
    for (col, gamma) in columns.iter().zip(weights) {
        let (lo, hi) = col
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        for (o, v) in out.iter_mut().zip(col) {
            let norm = if hi > lo { (v - lo) / (hi - lo) } else { degenerate_value };
            *o += gamma * norm / n_dims;
        }
    }
    out
}
