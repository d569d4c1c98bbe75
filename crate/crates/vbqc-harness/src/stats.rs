//! Statistical helpers for the experiment harness: uniformity tests,
//! distinguisher training, and rate comparisons.
//!
//! Calibration conventions used throughout the harness:
//! - significance level 0.01, Bonferroni-corrected across the tests in a
//!   family (so each reported family has ~1% false-alarm probability);
//! - distinguisher quality is reported as AUC, with "indistinguishable"
//!   meaning AUC within [0.45, 0.55] at the sample sizes we run (>= 10^4).

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Pearson chi-square test of uniformity over `counts.len()` categories.
/// Returns `(statistic, p_value)` with `counts.len() - 1` degrees of freedom.
pub fn chi_square_uniform(counts: &[u64]) -> (f64, f64) {
    assert!(counts.len() >= 2, "need at least two categories");
    let total: u64 = counts.iter().sum();
    assert!(total > 0, "need at least one observation");
    let expected = total as f64 / counts.len() as f64;
    let statistic: f64 =
        counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let df = (counts.len() - 1) as f64;
    let dist = ChiSquared::new(df).expect("positive degrees of freedom");
    (statistic, dist.sf(statistic))
}

/// Bonferroni-corrected per-test threshold for a family of `tests` tests at
/// family-wise level `alpha`.
pub fn bonferroni_threshold(alpha: f64, tests: usize) -> f64 {
    assert!(tests > 0);
    alpha / tests as f64
}

/// Area under the ROC curve for separating `positives` from `negatives` by
/// score, computed as the Mann-Whitney U statistic with average tie ranks.
/// 0.5 means the scores carry no information about the label.
pub fn mann_whitney_auc(positives: &[f64], negatives: &[f64]) -> f64 {
    assert!(!positives.is_empty() && !negatives.is_empty());
    let mut all: Vec<(f64, bool)> = positives
        .iter()
        .map(|&s| (s, true))
        .chain(negatives.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("scores must not be NaN"));
    // Sum average ranks of the positive class, handling ties in blocks.
    let mut rank_sum = 0.0f64;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // 1-based ranks i+1 ..= j averaged over the tie block.
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for item in &all[i..j] {
            if item.1 {
                rank_sum += avg_rank;
            }
        }
        i = j;
    }
    let np = positives.len() as f64;
    let nn = negatives.len() as f64;
    let u = rank_sum - np * (np + 1.0) / 2.0;
    u / (np * nn)
}

/// A naive-Bayes distinguisher over categorical feature vectors. Each feature
/// `f` takes values in `0..arity[f]`; training estimates per-class category
/// frequencies with Laplace smoothing and scoring returns the log-likelihood
/// ratio `ln P(x | class 1) - ln P(x | class 0)`.
#[derive(Debug, Clone)]
pub struct NaiveBayes {
    arity: Vec<usize>,
    /// `log_ratio[f][v]` = ln p1(f=v) - ln p0(f=v).
    log_ratio: Vec<Vec<f64>>,
}

impl NaiveBayes {
    pub fn train(arity: &[usize], class0: &[Vec<usize>], class1: &[Vec<usize>]) -> NaiveBayes {
        assert!(!class0.is_empty() && !class1.is_empty());
        let per_class = |examples: &[Vec<usize>]| -> Vec<Vec<f64>> {
            let mut log_p = Vec::with_capacity(arity.len());
            for (f, &a) in arity.iter().enumerate() {
                let mut counts = vec![1.0f64; a]; // Laplace smoothing
                for x in examples {
                    assert_eq!(x.len(), arity.len(), "feature vector length mismatch");
                    assert!(x[f] < a, "feature value out of range");
                    counts[x[f]] += 1.0;
                }
                let total: f64 = counts.iter().sum();
                log_p.push(counts.into_iter().map(|c| (c / total).ln()).collect());
            }
            log_p
        };
        let p0 = per_class(class0);
        let p1 = per_class(class1);
        let log_ratio = p0
            .into_iter()
            .zip(p1)
            .map(|(f0, f1)| f0.into_iter().zip(f1).map(|(a, b)| b - a).collect())
            .collect();
        NaiveBayes { arity: arity.to_vec(), log_ratio }
    }

    pub fn score(&self, x: &[usize]) -> f64 {
        assert_eq!(x.len(), self.arity.len());
        x.iter().enumerate().map(|(f, &v)| self.log_ratio[f][v]).sum()
    }
}

/// Trains a naive-Bayes distinguisher on the first half of each class and
/// returns its AUC on the held-out second halves. 0.5 = indistinguishable.
pub fn held_out_auc(arity: &[usize], class0: &[Vec<usize>], class1: &[Vec<usize>]) -> f64 {
    assert!(class0.len() >= 4 && class1.len() >= 4, "need enough samples to split");
    let (train0, eval0) = class0.split_at(class0.len() / 2);
    let (train1, eval1) = class1.split_at(class1.len() / 2);
    let model = NaiveBayes::train(arity, train0, train1);
    let pos: Vec<f64> = eval1.iter().map(|x| model.score(x)).collect();
    let neg: Vec<f64> = eval0.iter().map(|x| model.score(x)).collect();
    mann_whitney_auc(&pos, &neg)
}

/// Two-proportion z statistic with pooled variance; near 0 when both samples
/// share a success rate. Returns 0 when both samples are all-success or
/// all-failure (no evidence of a difference).
pub fn two_proportion_z(successes_a: u64, n_a: u64, successes_b: u64, n_b: u64) -> f64 {
    assert!(n_a > 0 && n_b > 0);
    let pa = successes_a as f64 / n_a as f64;
    let pb = successes_b as f64 / n_b as f64;
    let pooled = (successes_a + successes_b) as f64 / (n_a + n_b) as f64;
    let var = pooled * (1.0 - pooled) * (1.0 / n_a as f64 + 1.0 / n_b as f64);
    if var == 0.0 {
        return 0.0;
    }
    (pa - pb) / var.sqrt()
}

/// Standard error of an empirical frequency `p_hat` over `n` trials.
pub fn binomial_se(p_hat: f64, n: u64) -> f64 {
    assert!(n > 0);
    (p_hat * (1.0 - p_hat) / n as f64).sqrt()
}
