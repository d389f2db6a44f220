//! Policy evaluation and paired comparisons.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{paired_ttest, PairedTTest};
use super::EvalError;
use crate::episode::{Dimension, Episode};
use crate::seed;
use crate::sim::{simulate, PartnerPolicy, Scenario, UtterancePolicy, LEARNER_ID};
use crate::trainer::evaluation_seeds;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanWithCount {
    pub mean: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub a: String,
    pub b: String,
    pub dimension: Dimension,
    #[serde(flatten)]
    pub test: PairedTTest,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// One entry per evaluated condition.
    pub means: BTreeMap<String, BTreeMap<Dimension, MeanWithCount>>,
    pub comparisons: Vec<PairedComparison>,
}

impl EvaluationReport {
    pub fn add(&mut self, evaluation: &PolicyEvaluation) {
        self.means.insert(evaluation.label.clone(), evaluation.means());
    }

    /// `condition,dimension,mean,count`.
    pub fn means_csv(&self) -> String {
        let mut out = String::from("condition,dimension,mean,count\n");
        for (label, dims) in &self.means {
            for (d, m) in dims {
                let _ = writeln!(out, "{label},{d},{},{}", m.mean, m.count);
            }
        }
        out
    }

    /// `a,b,dimension,n,mean_diff,t,p,degenerate`.
    pub fn comparisons_csv(&self) -> String {
        let mut out = String::from("a,b,dimension,n,mean_diff,t,p,degenerate\n");
        for c in &self.comparisons {
            let t = &c.test;
            let _ = writeln!(out, "{},{},{},{},{},{},{},{}", c.a, c.b, c.dimension, t.n, t.mean_diff, t.t, t.p, t.degenerate);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (label, dims) in &self.means {
            let _ = write!(out, "{label:<24}");
            for (d, m) in dims {
                let _ = write!(out, "  {d} {:>7.3}", m.mean);
            }
            let n = dims.values().next().map_or(0, |m| m.count);
            let _ = writeln!(out, "  (n = {n})");
        }
        for c in &self.comparisons {
            let t = &c.test;
            let _ = writeln!(
                out,
                "{} vs {} on {}: diff {:+.3}, t {:.3}, p {:.4}{}",
                c.a,
                c.b,
                c.dimension,
                t.mean_diff,
                t.t,
                t.p,
                if t.degenerate { " (degenerate)" } else { "" }
            );
        }
        out
    }
}

/// Per-episode scores of one policy, in a fixed seed order so that two
/// evaluations with the same seed can be paired.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEvaluation {
    pub label: String,
    pub seeds: Vec<u64>,
    pub scores: BTreeMap<Dimension, Vec<f64>>,
    pub episodes: Vec<Episode>,
}

impl PolicyEvaluation {
    pub fn means(&self) -> BTreeMap<Dimension, MeanWithCount> {
        self.scores
            .iter()
            .map(|(d, v)| {
                let mean = if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
                (*d, MeanWithCount { mean, count: v.len() })
            })
            .collect()
    }

    pub fn compare(&self, other: &PolicyEvaluation, dimension: Dimension) -> Result<PairedComparison, EvalError> {
        if self.seeds != other.seeds {
            return Err(EvalError::Unpaired(format!("`{}` and `{}` use different seeds", self.label, other.label)));
        }
        let empty = Vec::new();
        let a = self.scores.get(&dimension).unwrap_or(&empty);
        let b = other.scores.get(&dimension).unwrap_or(&empty);
        Ok(PairedComparison {
            a: self.label.clone(),
            b: other.label.clone(),
            dimension,
            test: paired_ttest(a, b)?,
        })
    }
}

/// Episode seeds used by [`evaluate_policy`], scenario by scenario.
pub fn suite_seeds(n_scenarios: usize, episodes_per_scenario: usize, seed: u64) -> Vec<u64> {
    (0..n_scenarios)
        .flat_map(|i| evaluation_seeds(seed::derive(seed, i as u64), episodes_per_scenario))
        .collect()
}

/// Rolls out `policy` on every scenario of `suite` and scores the learner.
/// `partner` overrides each scenario's own partner when given.
pub fn evaluate_policy(
    label: &str,
    policy: &dyn UtterancePolicy,
    suite: &[Scenario],
    partner: Option<&PartnerPolicy>,
    episodes_per_scenario: usize,
    seed: u64,
) -> Result<PolicyEvaluation, EvalError> {
    if suite.is_empty() {
        return Err(EvalError::EmptySuite);
    }
    let seeds = suite_seeds(suite.len(), episodes_per_scenario, seed);
    let jobs: Vec<(usize, u64)> = seeds
        .iter()
        .enumerate()
        .map(|(i, s)| (i / episodes_per_scenario.max(1), *s))
        .collect();
    let episodes = jobs
        .par_iter()
        .map(|(si, s)| {
            let scenario = &suite[*si];
            simulate(scenario, policy, partner.unwrap_or(&scenario.partner.policy), *s)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut scores: BTreeMap<Dimension, Vec<f64>> = BTreeMap::new();
    for e in &episodes {
        let v = e.evaluation_for(LEARNER_ID).cloned().unwrap_or_default();
        for d in Dimension::SCORED {
            scores.entry(d).or_default().push(v.get(d).unwrap_or(0.0));
        }
    }
    Ok(PolicyEvaluation {
        label: label.to_string(),
        seeds,
        scores,
        episodes,
    })
}
