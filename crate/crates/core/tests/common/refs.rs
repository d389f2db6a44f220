//! Reference statistics built on `statrs`, for cross-checking the crate's
//! own implementations.

use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::statistics::{Data, OrderStatistics, RankTieBreaker, Statistics};

pub fn mean(xs: &[f64]) -> f64 {
    xs.mean()
}

pub fn population_variance(xs: &[f64]) -> f64 {
    xs.population_variance()
}

pub fn sample_variance(xs: &[f64]) -> f64 {
    xs.variance()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    a.covariance(b) / (a.std_dev() * b.std_dev())
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let ra = Data::new(a.to_vec()).ranks(RankTieBreaker::Average);
    let rb = Data::new(b.to_vec()).ranks(RankTieBreaker::Average);
    pearson(&ra, &rb)
}

/// `(t, two-sided p)` of the paired test.
pub fn paired_t(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let t = d.clone().mean() / (d.std_dev() / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).unwrap();
    (t, 2.0 * (1.0 - dist.cdf(t.abs())))
}

/// Counts by explicit edge comparison; the last bin is closed.
pub fn histogram(xs: &[f64], bins: usize, lo: f64, hi: f64) -> Vec<u64> {
    let edges: Vec<f64> = (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect();
    let mut counts = vec![0; bins];
    for &x in xs {
        for i in 0..bins {
            let last = i == bins - 1;
            if x >= edges[i] && (x < edges[i + 1] || (last && x <= hi)) {
                counts[i] += 1;
                break;
            }
        }
    }
    counts
}

/// Reference 5×5 agreement matrix between four human annotators and a
/// model judge.
pub const AGREEMENT: [[f64; 5]; 5] = [
    [1.000, 0.812, 0.931, 0.891, 0.771],
    [0.812, 1.000, 0.737, 0.717, 0.636],
    [0.931, 0.737, 1.000, 0.818, 0.756],
    [0.891, 0.717, 0.818, 1.000, 0.664],
    [0.771, 0.636, 0.756, 0.664, 1.000],
];
