mod common;

use common::refs;
use proptest::prelude::*;
use rand::Rng;
use social_rl::eval::{
    correlated_columns, correlation, histogram, mean, paired_ttest, pearson, sample_variance, spearman,
    student_t_two_sided, variance, CorrelationMethod, StatsError,
};
use social_rl::seed;

fn sample(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-5.0..5.0)).collect()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

#[test]
fn matches_statrs_on_random_inputs() {
    let mut rng = seed::rng(99);
    for i in 0..100 {
        let n = rng.random_range(5..60);
        let a = sample(&mut rng, n);
        // Partly dependent so correlations are not all near zero.
        let b: Vec<f64> = a.iter().map(|x| 0.6 * x + rng.random_range(-3.0..3.0)).collect();
        assert!(close(mean(&a).unwrap(), refs::mean(&a), 1e-12), "mean {i}");
        assert!(close(variance(&a).unwrap(), refs::population_variance(&a), 1e-10), "variance {i}");
        assert!(close(sample_variance(&a).unwrap(), refs::sample_variance(&a), 1e-10), "sample variance {i}");
        assert!(close(pearson(&a, &b).unwrap().unwrap(), refs::pearson(&a, &b), 1e-10), "pearson {i}");
        assert!(close(spearman(&a, &b).unwrap().unwrap(), refs::spearman(&a, &b), 1e-10), "spearman {i}");
        let test = paired_ttest(&a, &b).unwrap();
        let (t, p) = refs::paired_t(&a, &b);
        assert!(close(test.t, t, 1e-10), "t {i}");
        assert!((test.p - p).abs() < 1e-8, "p {i}: {} vs {p}", test.p);
        let h = histogram(&a, 20, -5.0, 5.0);
        assert_eq!(h.counts, refs::histogram(&a, 20, -5.0, 5.0), "histogram {i}");
    }
}

#[test]
fn spearman_handles_ties_like_the_reference() {
    let a = [1.0, 2.0, 2.0, 3.0, 3.0, 3.0, 7.0];
    let b = [5.0, 1.0, 1.0, 2.0, 9.0, 2.0, 4.0];
    assert!(close(spearman(&a, &b).unwrap().unwrap(), refs::spearman(&a, &b), 1e-12));
}

#[test]
fn t_distribution_tail_matches_reference() {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    for df in [1.0, 2.0, 5.0, 9.0, 30.0, 199.0] {
        let dist = StudentsT::new(0.0, 1.0, df).unwrap();
        for t in [0.0, 0.1, 0.5, 1.0, 2.0, 3.5, 8.0] {
            let want = 2.0 * (1.0 - dist.cdf(t));
            assert!((student_t_two_sided(t, df) - want).abs() < 1e-10, "df {df} t {t}");
        }
    }
}

#[test]
fn agreement_matrix_is_reproduced_when_re_fed() {
    let target: Vec<Vec<f64>> = refs::AGREEMENT.iter().map(|r| r.to_vec()).collect();
    let cols = correlated_columns(&target, 50, 7).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            let r = pearson(&cols[i], &cols[j]).unwrap().unwrap();
            assert!((r - target[i][j]).abs() < 1e-9, "({i},{j}) {r}");
        }
    }
    let r13 = pearson(&cols[0], &cols[2]).unwrap().unwrap();
    assert_eq!(format!("{r13:.3}"), "0.931");
}

#[test]
fn degenerate_and_invalid_inputs() {
    assert!(matches!(mean(&[]), Err(StatsError::EmptyList)));
    assert!(matches!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]), Err(StatsError::LengthMismatch { .. })));
    assert!(matches!(pearson(&[1.0, 2.0], &[1.0, 2.0]), Err(StatsError::TooFewSamples { .. })));
    assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap(), None);
    let same = paired_ttest(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
    assert_eq!((same.t, same.p, same.degenerate), (0.0, 1.0, false));
    let shifted = paired_ttest(&[2.0, 3.0, 4.0], &[1.0, 2.0, 3.0]).unwrap();
    assert!(shifted.degenerate && shifted.t.is_infinite() && shifted.p == 0.0);
    assert!(correlated_columns(&[vec![1.0, 2.0], vec![2.0, 1.0]], 10, 0).is_err());
    let h = histogram(&[-1.0, 0.0, 0.5, 1.0, 2.0], 2, 0.0, 1.0);
    assert_eq!((h.below, h.counts.clone(), h.above), (1, vec![1, 2], 1));
}

proptest! {
    #[test]
    fn correlation_symmetry_and_invariance(
        pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..40),
        scale in 0.1f64..10.0,
        shift in -50.0f64..50.0,
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        for method in [CorrelationMethod::Pearson, CorrelationMethod::Spearman] {
            let r = correlation(&a, &b, method).unwrap();
            prop_assert_eq!(r, correlation(&b, &a, method).unwrap());
            let moved: Vec<f64> = a.iter().map(|x| scale * x + shift).collect();
            match (r, correlation(&moved, &b, method).unwrap()) {
                (Some(x), Some(y)) => {
                    prop_assert!((x - y).abs() < 1e-9);
                    prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&x));
                }
                (None, None) => {}
                (x, y) => prop_assert!(false, "{x:?} vs {y:?}"),
            }
        }
        // Any strictly increasing map leaves the rank correlation unchanged.
        let cubed: Vec<f64> = a.iter().map(|x| x.powi(3)).collect();
        let s1 = spearman(&a, &b).unwrap();
        let s2 = spearman(&cubed, &b).unwrap();
        if let (Some(x), Some(y)) = (s1, s2) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn paired_t_is_antisymmetric(
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..30),
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let ab = paired_ttest(&a, &b).unwrap();
        let ba = paired_ttest(&b, &a).unwrap();
        prop_assert_eq!(ab.t, -ba.t);
        prop_assert_eq!(ab.p, ba.p);
        prop_assert!((0.0..=1.0).contains(&ab.p));
    }
}
