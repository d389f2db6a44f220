//! Samples whose correlation matrix is prescribed exactly.

use rand::Rng;

use super::stats::cholesky;
use super::StatsError;
use crate::seed;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `k` columns of length `n` whose sample Pearson correlation matrix equals
/// `target` up to rounding. Random centered columns are orthonormalized and
/// then mixed by the Cholesky factor of `target`, so every column has unit
/// norm and the pairwise inner products are exactly the target entries.
pub fn correlated_columns(target: &[Vec<f64>], n: usize, seed: u64) -> Result<Vec<Vec<f64>>, StatsError> {
    let k = target.len();
    if k == 0 {
        return Err(StatsError::InvalidMatrix("empty matrix".into()));
    }
    if target.iter().enumerate().any(|(i, r)| (r[i] - 1.0).abs() > 1e-12) {
        return Err(StatsError::InvalidMatrix("diagonal must be 1".into()));
    }
    if n < k + 1 {
        return Err(StatsError::TooFewSamples { needed: k + 1, got: n });
    }
    let l = cholesky(target)?;
    let mut rng = seed::rng(seed);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = v.iter().sum::<f64>() / n as f64;
        v.iter_mut().for_each(|x| *x -= m);
        // Two rounds of modified Gram-Schmidt keep the basis orthogonal to rounding.
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&v, q);
                v.iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    Ok((0..k)
        .map(|j| (0..n).map(|t| (0..=j).map(|i| l[j][i] * basis[i][t]).sum()).collect())
        .collect())
}
