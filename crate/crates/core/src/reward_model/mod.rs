//! Utterance-level reward model.
//!
//! A regressor over [`Featurizer`] features, trained by plain gradient
//! descent on the mean squared error against offline utterance rewards.
//! Linear mode is the default; a single tanh hidden layer is available for
//! capacity experiments.

mod features;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use features::{FeatureVector, Featurizer};

use crate::episode::{ActionToken, DialogueState};
use crate::persist::{ParameterFile, PersistError};
use crate::seed;

pub const PARAMETER_KIND: &str = "reward_model";

#[derive(Debug, Error)]
pub enum RewardModelError {
    #[error("token {0} is not in the vocabulary")]
    UnknownToken(ActionToken),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("feature length {found} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training diverged at epoch {epoch}: loss {loss} (initial {initial})")]
    DivergenceDetected { epoch: usize, loss: f64, initial: f64 },
    #[error("learning rate must be positive, got {0}")]
    InvalidLearningRate(f64),
    #[error(transparent)]
    Persist(#[from] PersistError),
}

/// One regression example.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionExample {
    pub features: FeatureVector,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RewardModelParameters {
    Linear {
        weights: Vec<f64>,
    },
    /// `readout · tanh(weights · x + bias)`; `weights` is row-major `hidden × feature`.
    Hidden {
        feature_dim: usize,
        hidden_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        readout: Vec<f64>,
    },
}

impl RewardModelParameters {
    pub fn linear(feature_dim: usize) -> Self {
        Self::Linear {
            weights: vec![0.0; feature_dim],
        }
    }

    /// Hidden-layer model with small seeded random weights.
    pub fn hidden(feature_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let scale = 1.0 / (feature_dim.max(1) as f64).sqrt();
        let mut draw = |s: f64| (rng.random::<f64>() * 2.0 - 1.0) * s;
        let weights = (0..hidden_dim * feature_dim).map(|_| draw(scale)).collect();
        let bias = vec![0.0; hidden_dim];
        let readout = (0..hidden_dim).map(|_| draw(0.1)).collect();
        Self::Hidden {
            feature_dim,
            hidden_dim,
            weights,
            bias,
            readout,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            Self::Linear { weights } => weights.len(),
            Self::Hidden { feature_dim, .. } => *feature_dim,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        match self {
            Self::Linear { .. } => 0,
            Self::Hidden { hidden_dim, .. } => *hidden_dim,
        }
    }

    /// Parameters as one flat vector (weights, then bias, then readout).
    pub fn to_flat(&self) -> Vec<f64> {
        match self {
            Self::Linear { weights } => weights.clone(),
            Self::Hidden { weights, bias, readout, .. } => {
                weights.iter().chain(bias).chain(readout).copied().collect()
            }
        }
    }

    /// Same-shaped parameters from a flat vector.
    pub fn with_flat(&self, flat: &[f64]) -> Self {
        match self {
            Self::Linear { .. } => Self::Linear {
                weights: flat.to_vec(),
            },
            Self::Hidden { feature_dim, hidden_dim, .. } => {
                let nw = feature_dim * hidden_dim;
                Self::Hidden {
                    feature_dim: *feature_dim,
                    hidden_dim: *hidden_dim,
                    weights: flat[..nw].to_vec(),
                    bias: flat[nw..nw + hidden_dim].to_vec(),
                    readout: flat[nw + hidden_dim..].to_vec(),
                }
            }
        }
    }

    fn zeros_like(&self) -> Self {
        self.with_flat(&vec![0.0; self.to_flat().len()])
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    fn check(&self, x: &[f64]) -> Result<(), RewardModelError> {
        if x.len() != self.feature_dim() {
            return Err(RewardModelError::DimensionMismatch {
                expected: self.feature_dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Forward pass on a feature vector.
    pub fn predict_features(&self, x: &[f64]) -> f64 {
        match self {
            Self::Linear { weights } => dot(weights, x),
            Self::Hidden { feature_dim, weights, bias, readout, .. } => readout
                .iter()
                .enumerate()
                .map(|(j, r)| {
                    let row = &weights[j * feature_dim..(j + 1) * feature_dim];
                    r * (dot(row, x) + bias[j]).tanh()
                })
                .sum(),
        }
    }

    /// Mean squared error over `data`.
    pub fn mse_loss(&self, data: &[RegressionExample]) -> Result<f64, RewardModelError> {
        if data.is_empty() {
            return Err(RewardModelError::EmptyDataset);
        }
        let mut total = 0.0;
        for ex in data {
            self.check(ex.features.as_slice())?;
            let r = self.predict_features(ex.features.as_slice()) - ex.target;
            total += r * r;
        }
        Ok(total / data.len() as f64)
    }

    /// Analytic gradient of [`Self::mse_loss`], in parameter shape.
    pub fn gradient(&self, data: &[RegressionExample]) -> Result<Self, RewardModelError> {
        if data.is_empty() {
            return Err(RewardModelError::EmptyDataset);
        }
        for ex in data {
            self.check(ex.features.as_slice())?;
        }
        let refs: Vec<&RegressionExample> = data.iter().collect();
        Ok(self.gradient_of(&refs))
    }

    fn gradient_of(&self, batch: &[&RegressionExample]) -> Self {
        let n = batch.len() as f64;
        let mut grad = self.zeros_like();
        match (self, &mut grad) {
            (Self::Linear { weights }, Self::Linear { weights: g }) => {
                for ex in batch {
                    let x = ex.features.as_slice();
                    let scale = 2.0 * (dot(weights, x) - ex.target) / n;
                    for (gi, xi) in g.iter_mut().zip(x) {
                        *gi += scale * xi;
                    }
                }
            }
            (
                Self::Hidden { feature_dim, hidden_dim, weights, bias, readout },
                Self::Hidden { weights: gw, bias: gb, readout: gr, .. },
            ) => {
                let mut h = vec![0.0; *hidden_dim];
                for ex in batch {
                    let x = ex.features.as_slice();
                    for j in 0..*hidden_dim {
                        h[j] = (dot(&weights[j * feature_dim..(j + 1) * feature_dim], x) + bias[j]).tanh();
                    }
                    let y = dot(readout, &h);
                    let dy = 2.0 * (y - ex.target) / n;
                    for j in 0..*hidden_dim {
                        gr[j] += dy * h[j];
                        let dz = dy * readout[j] * (1.0 - h[j] * h[j]);
                        gb[j] += dz;
                        let row = &mut gw[j * feature_dim..(j + 1) * feature_dim];
                        for (g, xi) in row.iter_mut().zip(x) {
                            *g += dz * xi;
                        }
                    }
                }
            }
            _ => unreachable!("gradient has the parameters' shape"),
        }
        grad
    }

    fn step(&mut self, grad: &Self, learning_rate: f64) {
        let updated: Vec<f64> = self
            .to_flat()
            .iter()
            .zip(grad.to_flat())
            .map(|(p, g)| p - learning_rate * g)
            .collect();
        *self = self.with_flat(&updated);
    }

    pub fn save(&self, path: &Path) -> Result<(), RewardModelError> {
        ParameterFile::new(PARAMETER_KIND, self.feature_dim(), self.hidden_dim(), self.clone())
            .save(path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RewardModelError> {
        let file = ParameterFile::<Self>::load(path, PARAMETER_KIND)?;
        let params = file.payload;
        if params.feature_dim() != file.feature_dim || params.hidden_dim() != file.hidden_dim {
            return Err(RewardModelError::DimensionMismatch {
                expected: file.feature_dim,
                found: params.feature_dim(),
            });
        }
        Ok(params)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmTrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Examples per update; 0 means full batch.
    #[serde(default)]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for RmTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 600,
            batch_size: 0,
            seed: 0,
        }
    }
}

/// Loss before training followed by the loss after each epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTrace(pub Vec<f64>);

impl LossTrace {
    pub fn initial(&self) -> f64 {
        self.0[0]
    }

    pub fn last(&self) -> f64 {
        *self.0.last().expect("trace holds the initial loss")
    }

    /// `epoch,loss` rows, epoch 0 being the initial loss.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (epoch, loss) in self.0.iter().enumerate() {
            out.push_str(&format!("{epoch},{loss:e}\n"));
        }
        out
    }
}

/// Sparse copy of a feature row, used by the linear fast path.
struct SparseRow {
    index: Vec<usize>,
    value: Vec<f64>,
    target: f64,
}

impl SparseRow {
    fn new(ex: &RegressionExample) -> Self {
        let (index, value) = ex
            .features
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .unzip();
        Self { index, value, target: ex.target }
    }

    fn predict(&self, w: &[f64]) -> f64 {
        self.index.iter().zip(&self.value).map(|(i, v)| w[*i] * v).sum()
    }
}

/// Gradient descent on the MSE. Deterministic given `config.seed`.
pub fn train(
    params: &RewardModelParameters,
    data: &[RegressionExample],
    config: &RmTrainConfig,
) -> Result<(RewardModelParameters, LossTrace), RewardModelError> {
    if config.learning_rate.is_nan() || config.learning_rate <= 0.0 {
        return Err(RewardModelError::InvalidLearningRate(config.learning_rate));
    }
    let initial = params.mse_loss(data)?;
    let mut params = params.clone();
    let mut trace = vec![initial];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batch = if config.batch_size == 0 { data.len() } else { config.batch_size.min(data.len()) };
    let mut rng = seed::rng(config.seed);
    let sparse: Option<Vec<SparseRow>> =
        matches!(params, RewardModelParameters::Linear { .. }).then(|| data.iter().map(SparseRow::new).collect());

    for epoch in 1..=config.epochs {
        if batch < data.len() {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            match (&mut params, &sparse) {
                (RewardModelParameters::Linear { weights }, Some(rows)) => {
                    let n = chunk.len() as f64;
                    let mut grad = vec![0.0; weights.len()];
                    for &i in chunk {
                        let row = &rows[i];
                        let scale = 2.0 * (row.predict(weights) - row.target) / n;
                        for (j, v) in row.index.iter().zip(&row.value) {
                            grad[*j] += scale * v;
                        }
                    }
                    for (w, g) in weights.iter_mut().zip(&grad) {
                        *w -= config.learning_rate * g;
                    }
                }
                _ => {
                    let refs: Vec<&RegressionExample> = chunk.iter().map(|&i| &data[i]).collect();
                    let grad = params.gradient_of(&refs);
                    params.step(&grad, config.learning_rate);
                }
            }
        }
        let loss = params.mse_loss(data)?;
        if !loss.is_finite() || loss > 1e6 * initial.max(1e-12) {
            return Err(RewardModelError::DivergenceDetected { epoch, loss, initial });
        }
        trace.push(loss);
    }
    Ok((params, LossTrace(trace)))
}

/// Reward model bound to a scenario's feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel {
    pub featurizer: Featurizer,
    pub params: RewardModelParameters,
}

impl RewardModel {
    pub fn predict(&self, state: &DialogueState, action: ActionToken) -> Result<f64, RewardModelError> {
        let x = self.featurizer.features(state, action)?;
        self.params.check(x.as_slice())?;
        Ok(self.params.predict_features(x.as_slice()))
    }

    /// Scores vocabulary entry `action` given a precomputed state context.
    pub fn predict_from_context(&self, context: &[f64], action: usize, target_units: u32) -> f64 {
        let x = self.featurizer.features_from_context(context, action, target_units);
        self.params.predict_features(x.as_slice())
    }
}
