//! Evaluation metrics: ROC-AUC and the one-sided Wilcoxon signed-rank test.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest sample size evaluated by exact sign enumeration.
pub const WILCOXON_EXACT_MAX: usize = 12;
/// Fewest nonzero paired differences the test accepts.
pub const WILCOXON_MIN_N: usize = 5;

/// Midranks (1-based) of `x`; tied values share the average of their ranks.
pub fn midranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && x[order[j]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &o in &order[i..j] {
            ranks[o] = r;
        }
        i = j;
    }
    ranks
}

/// Probability that a random anomaly outscores a random inlier, ties
/// counting one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Parameter(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::MetricUndefined("ROC-AUC needs both positive and negative labels".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::MetricUndefined("NaN score".into()));
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    pub p_value: f64,
    /// Sum of ranks of positive differences `y - x`.
    pub w_plus: f64,
    /// Number of nonzero differences.
    pub n: usize,
    pub exact: bool,
}

/// One-sided paired test of the alternative `y > x`.
pub fn wilcoxon_one_sided(x: &[f64], y: &[f64]) -> Result<f64> {
    wilcoxon_detailed(x, y).map(|r| r.p_value)
}

pub fn wilcoxon_detailed(x: &[f64], y: &[f64]) -> Result<WilcoxonResult> {
    if x.len() != y.len() {
        return Err(Error::Parameter(format!("paired samples of length {} and {}", x.len(), y.len())));
    }
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - a).filter(|d| *d != 0.0).collect();
    if diffs.is_empty() {
        return Ok(WilcoxonResult {
            p_value: 1.0,
            w_plus: 0.0,
            n: 0,
            exact: true,
        });
    }
    let n = diffs.len();
    if n < WILCOXON_MIN_N {
        return Err(Error::MetricUndefined(format!(
            "Wilcoxon test needs at least {WILCOXON_MIN_N} nonzero differences, got {n}"
        )));
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&abs);
    let w_plus: f64 = ranks.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    if n <= WILCOXON_EXACT_MAX {
        Ok(WilcoxonResult {
            p_value: exact_upper_tail(&ranks, w_plus),
            w_plus,
            n,
            exact: true,
        })
    } else {
        Ok(WilcoxonResult {
            p_value: normal_upper_tail(&ranks, w_plus),
            w_plus,
            n,
            exact: false,
        })
    }
}

/// P(W+ >= w) under the null by enumerating all sign patterns of `ranks`.
pub fn exact_upper_tail(ranks: &[f64], w: f64) -> f64 {
    let n = ranks.len();
    assert!(n < 31, "exact enumeration limited to small samples");
    let total = 1u64 << n;
    let mut hits = 0u64;
    for mask in 0..total {
        let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if s >= w - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}

/// Normal approximation with tie and continuity corrections.
pub fn normal_upper_tail(ranks: &[f64], w: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    // Null variance is the sum of squared ranks over four; midranks absorb
    // the tie correction.
    let var: f64 = ranks.iter().map(|r| r * r).sum::<f64>() / 4.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = (w - mean - 0.5) / var.sqrt();
    let p = 1.0 - Normal::standard().cdf(z);
    p.clamp(f64::MIN_POSITIVE, 1.0)
}

/// Sample mean and population standard deviation.
pub fn mean_std(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn concordant(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    den += 1.0;
                    num += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_cases() {
        assert_eq!(roc_auc(&[3.0, 4.0, 1.0, 0.0], &[true, true, false, false]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[1.0; 4], &[true, false, true, false]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false]).unwrap(), 0.75);
        assert!(matches!(roc_auc(&[1.0, 2.0], &[true, true]), Err(Error::MetricUndefined(_))));
    }

    #[test]
    fn midranks_ties() {
        assert_eq!(midranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn wilcoxon_cases() {
        let x = [0.0; 5];
        assert_eq!(wilcoxon_one_sided(&x, &x).unwrap(), 1.0);
        let y = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((wilcoxon_one_sided(&x, &y).unwrap() - 1.0 / 32.0).abs() < 1e-15);
        assert!((wilcoxon_one_sided(&y, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!(wilcoxon_one_sided(&[0.0; 3], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn wilcoxon_swap_is_complementary_tail() {
        let x = [0.3, 1.2, -0.4, 2.0, 0.9, -1.1, 0.05];
        let y = [0.1, 1.5, 0.2, 1.0, 2.0, -0.2, 0.8];
        let a = wilcoxon_detailed(&x, &y).unwrap();
        let b = wilcoxon_detailed(&y, &x).unwrap();
        // P(W >= w) + P(W <= w) = 1 + P(W = w); the swapped statistic is n(n+1)/2 - w.
        let n = a.n as f64;
        assert!((a.w_plus + b.w_plus - n * (n + 1.0) / 2.0).abs() < 1e-12);
        let ranks: Vec<f64> = (1..=a.n).map(|r| r as f64).collect();
        let point = exact_upper_tail(&ranks, a.w_plus) - exact_upper_tail(&ranks, a.w_plus + 1.0);
        assert!((a.p_value + b.p_value - 1.0 - point).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn auc_matches_pair_count(v in proptest::collection::vec((0u8..20, any::<bool>()), 2..40)) {
            let scores: Vec<f64> = v.iter().map(|(s, _)| *s as f64).collect();
            let labels: Vec<bool> = v.iter().map(|(_, l)| *l).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            prop_assert!((roc_auc(&scores, &labels).unwrap() - concordant(&scores, &labels)).abs() < 1e-12);
        }

        #[test]
        fn auc_rank_invariant(v in proptest::collection::vec((-5.0f64..5.0, any::<bool>()), 2..30)) {
            let scores: Vec<f64> = v.iter().map(|(s, _)| *s).collect();
            let labels: Vec<bool> = v.iter().map(|(_, l)| *l).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let t: Vec<f64> = scores.iter().map(|s| s.exp() * 3.0 + 1.0).collect();
            prop_assert!((roc_auc(&scores, &labels).unwrap() - roc_auc(&t, &labels).unwrap()).abs() < 1e-12);
        }
    }
}
