//! Descriptive statistics, correlation and the paired t-test.

use serde::{Deserialize, Serialize};

use super::StatsError;

fn non_empty(xs: &[f64]) -> Result<(), StatsError> {
    if xs.is_empty() {
        Err(StatsError::EmptyList)
    } else {
        Ok(())
    }
}

fn same_length(a: &[f64], b: &[f64], min: usize) -> Result<(), StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch { a: a.len(), b: b.len() });
    }
    if a.len() < min {
        return Err(StatsError::TooFewSamples { needed: min, got: a.len() });
    }
    Ok(())
}

pub fn mean(xs: &[f64]) -> Result<f64, StatsError> {
    non_empty(xs)?;
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Population variance (divides by `n`), two-pass.
pub fn variance(xs: &[f64]) -> Result<f64, StatsError> {
    let m = mean(xs)?;
    Ok(xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64)
}

/// Unbiased sample variance (divides by `n − 1`).
pub fn sample_variance(xs: &[f64]) -> Result<f64, StatsError> {
    if xs.len() < 2 {
        return Err(StatsError::TooFewSamples { needed: 2, got: xs.len() });
    }
    let m = mean(xs)?;
    Ok(xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMethod {
    Pearson,
    Spearman,
}

/// Pearson's r. `None` when either input has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<Option<f64>, StatsError> {
    same_length(a, b, 3)?;
    let (ma, mb) = (mean(a)?, mean(b)?);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(None);
    }
    Ok(Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)))
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson's r on average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<Option<f64>, StatsError> {
    same_length(a, b, 3)?;
    pearson(&average_ranks(a), &average_ranks(b))
}

pub fn correlation(a: &[f64], b: &[f64], method: CorrelationMethod) -> Result<Option<f64>, StatsError> {
    match method {
        CorrelationMethod::Pearson => pearson(a, b),
        CorrelationMethod::Spearman => spearman(a, b),
    }
}

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7, nine terms).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - front * beta_cf(1.0 - x, b, a) / b
    }
}

/// Two-sided p-value of Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    incomplete_beta(df / (df + t * t), df / 2.0, 0.5).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTTest {
    pub n: usize,
    /// `mean(a − b)`.
    pub mean_diff: f64,
    pub t: f64,
    /// Two-sided.
    pub p: f64,
    /// The differences have zero variance but a nonzero mean; `t` is infinite and `p` is 0.
    pub degenerate: bool,
}

/// Paired t-test on seed-matched samples.
///
/// Identical samples give `t = 0, p = 1`. A constant nonzero difference is
/// reported as degenerate with infinite `t` and `p = 0`.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<PairedTTest, StatsError> {
    same_length(a, b, 2)?;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len();
    let m = mean(&d)?;
    let sd = sample_variance(&d)?.sqrt();
    if sd == 0.0 {
        return Ok(if m == 0.0 {
            PairedTTest { n, mean_diff: 0.0, t: 0.0, p: 1.0, degenerate: false }
        } else {
            PairedTTest { n, mean_diff: m, t: f64::INFINITY.copysign(m), p: 0.0, degenerate: true }
        });
    }
    let t = m / (sd / (n as f64).sqrt());
    Ok(PairedTTest {
        n,
        mean_diff: m,
        t,
        p: student_t_two_sided(t, (n - 1) as f64),
        degenerate: false,
    })
}

/// Fixed-width histogram. Bin `i` covers `[lo + i·w, lo + (i+1)·w)`, except
/// that the last bin also includes `hi`. Values outside `[lo, hi]` are
/// counted in `below` / `above` instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub below: u64,
    pub above: u64,
}

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    /// `bins + 1` edges.
    pub fn edges(&self) -> Vec<f64> {
        let n = self.counts.len();
        (0..=n).map(|i| self.lo + (self.hi - self.lo) * i as f64 / n as f64).collect()
    }
}

pub const HISTOGRAM_BINS: usize = 20;

pub fn histogram(xs: &[f64], bins: usize, lo: f64, hi: f64) -> Histogram {
    let bins = bins.max(1);
    let mut h = Histogram { lo, hi, counts: vec![0; bins], below: 0, above: 0 };
    for &x in xs {
        if x < lo || x.is_nan() {
            h.below += 1;
        } else if x > hi {
            h.above += 1;
        } else {
            let i = (((x - lo) / (hi - lo)) * bins as f64).floor() as usize;
            h.counts[i.min(bins - 1)] += 1;
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionStats {
    pub label: String,
    pub n: usize,
    pub mean: f64,
    /// Population variance.
    pub variance: f64,
    /// 20 bins over `[0, 1]`.
    pub histogram: Histogram,
}

/// Mean, population variance and a 20-bin `[0, 1]` histogram per condition.
pub fn reward_distribution_stats(conditions: &[(String, Vec<f64>)]) -> Result<Vec<DistributionStats>, StatsError> {
    conditions
        .iter()
        .map(|(label, xs)| {
            Ok(DistributionStats {
                label: label.clone(),
                n: xs.len(),
                mean: mean(xs)?,
                variance: variance(xs)?,
                histogram: histogram(xs, HISTOGRAM_BINS, 0.0, 1.0),
            })
        })
        .collect()
}

/// Lower-triangular `L` with `L Lᵀ = m`.
pub fn cholesky(m: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, StatsError> {
    let n = m.len();
    if m.iter().any(|r| r.len() != n) {
        return Err(StatsError::InvalidMatrix("matrix is not square".into()));
    }
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            if (m[i][j] - m[j][i]).abs() > 1e-12 {
                return Err(StatsError::InvalidMatrix("matrix is not symmetric".into()));
            }
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let v = m[i][i] - s;
                if v <= 0.0 {
                    return Err(StatsError::InvalidMatrix("matrix is not positive definite".into()));
                }
                l[i][j] = v.sqrt();
            } else {
                l[i][j] = (m[i][j] - s) / l[j][j];
            }
        }
    }
    Ok(l)
}
