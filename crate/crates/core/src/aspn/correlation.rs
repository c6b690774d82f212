//! Randomized rank-based dependence scores.
//!
//! The score of an attribute pair is the maximum absolute Pearson
//! correlation over randomized feature transforms of the two columns'
//! normalized ranks: the identity transform (recovering Spearman's rho)
//! plus a handful of seeded sinusoidal projections that catch non-monotone
//! dependence. Scores live in [0, 1], are symmetric, and are fully
//! deterministic given the seed. Constant columns score 0.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use std::collections::BTreeSet;

/// Pairwise scores plus the strong subset D: the union of attribute pairs
/// whose score meets the threshold.
#[derive(Debug, Clone)]
pub struct CorrelationReport {
    /// Global attribute ids, in the order the score matrix is indexed.
    pub attrs: Vec<usize>,
    /// Symmetric pairwise score matrix with a zero diagonal.
    pub scores: Vec<Vec<f64>>,
    pub strong_subset: BTreeSet<usize>,
}

impl CorrelationReport {
    pub fn score_between(&self, a: usize, b: usize) -> f64 {
        let ia = self.attrs.iter().position(|&x| x == a).expect("attr in report");
        let ib = self.attrs.iter().position(|&x| x == b).expect("attr in report");
        self.scores[ia][ib]
    }

    /// Highest score this attribute has against any other.
    pub fn max_score_of(&self, a: usize) -> f64 {
        let ia = self.attrs.iter().position(|&x| x == a).expect("attr in report");
        self.scores[ia]
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != ia)
            .map(|(_, &s)| s)
            .fold(0.0, f64::max)
    }
}

/// Average ranks normalized to [0, 1]; ties share their mean rank.
fn normalized_ranks(values: &[i64]) -> Vec<f64> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by_key(|&i| (values[i], i));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    let denom = (n.max(2) - 1) as f64;
    ranks.iter().map(|r| r / denom).collect()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 1e-12 || vb <= 1e-12 {
        return 0.0;
    }
    (cov / (va * vb).sqrt()).clamp(-1.0, 1.0)
}

/// Sinusoidal feature parameters, shared across columns so scores stay
/// symmetric.
fn feature_params(seed: u64, features: usize) -> Vec<(f64, f64)> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x52DC_FEA7);
    (0..features)
        .map(|_| {
            let w: f64 = rng.gen_range(0.5..4.0) * std::f64::consts::PI;
            let b: f64 = rng.gen_range(0.0..(2.0 * std::f64::consts::PI));
            (w, b)
        })
        .collect()
}

/// Dependence score for one column pair (see module docs).
pub fn dependence_score(a: &[i64], b: &[i64], seed: u64, features: usize) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.len() < 2 {
        return 0.0;
    }
    let ra = normalized_ranks(a);
    let rb = normalized_ranks(b);
    let params = feature_params(seed, features);

    let transforms = |r: &[f64]| -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(params.len() + 1);
        out.push(r.to_vec());
        for &(w, ph) in &params {
            out.push(r.iter().map(|&x| (w * x + ph).sin()).collect());
        }
        out
    };
    let fa = transforms(&ra);
    let fb = transforms(&rb);
    let mut best: f64 = 0.0;
    for x in &fa {
        for y in &fb {
            best = best.max(pearson(x, y).abs());
        }
    }
    best
}

/// Pairwise dependence analysis over projected rows (`rows[i][k]` is the
/// value of `attrs[k]` in record i). Rows beyond `sample_cap` are reduced
/// by even-stride subsampling; the cap keeps score computation bounded and
/// deterministic.
pub fn find_strong_subset(
    attrs: &[usize],
    rows: &[Vec<i64>],
    threshold: f64,
    seed: u64,
    features: usize,
    sample_cap: usize,
) -> CorrelationReport {
    debug_assert!(attrs.len() >= 2, "need at least two attributes");
    debug_assert!(rows.len() >= 2, "need at least two records");
    let step = rows.len().div_ceil(sample_cap.max(1)).max(1);
    let k = attrs.len();
    let columns: Vec<Vec<i64>> = (0..k)
        .map(|c| rows.iter().step_by(step).map(|r| r[c]).collect())
        .collect();

    let mut scores = vec![vec![0.0; k]; k];
    let mut strong = BTreeSet::new();
    for i in 0..k {
        for j in i + 1..k {
            let s = dependence_score(&columns[i], &columns[j], seed, features);
            scores[i][j] = s;
            scores[j][i] = s;
            if s >= threshold {
                strong.insert(attrs[i]);
                strong.insert(attrs[j]);
            }
        }
    }
    CorrelationReport { attrs: attrs.to_vec(), scores, strong_subset: strong }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn functional_dependence_scores_high() {
        let a: Vec<i64> = (0..1000).collect();
        let b: Vec<i64> = a.iter().map(|x| x + 1).collect();
        let report = find_strong_subset(&[0, 1], &rows2(&a, &b), 0.3, 7, 4, 2000);
        assert!(report.score_between(0, 1) > 0.95);
        assert_eq!(report.strong_subset, BTreeSet::from([0, 1]));
    }

    #[test]
    fn independent_uniform_columns_score_low() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let a: Vec<i64> = (0..1000).map(|_| rng.gen_range(0..10_000)).collect();
        let b: Vec<i64> = (0..1000).map(|_| rng.gen_range(0..10_000)).collect();
        let report = find_strong_subset(&[0, 1], &rows2(&a, &b), 0.3, 7, 4, 2000);
        assert!(report.score_between(0, 1) < 0.3, "score {}", report.score_between(0, 1));
        assert!(report.strong_subset.is_empty());
    }

    #[test]
    fn equal_triple_forms_strong_subset() {
        let a: Vec<i64> = (0..500).map(|i| i % 37).collect();
        let rows: Vec<Vec<i64>> = a.iter().map(|&x| vec![x, x, x]).collect();
        let report = find_strong_subset(&[0, 1, 2], &rows, 0.3, 7, 4, 2000);
        assert_eq!(report.strong_subset, BTreeSet::from([0, 1, 2]));
    }

    #[test]
    fn constant_column_scores_zero() {
        let a: Vec<i64> = (0..200).collect();
        let b = vec![5i64; 200];
        let report = find_strong_subset(&[0, 1], &rows2(&a, &b), 0.3, 7, 4, 2000);
        assert_eq!(report.score_between(0, 1), 0.0);
        assert!(report.strong_subset.is_empty());
    }

    #[test]
    fn non_monotone_dependence_detected() {
        // b = (a - 500)^2: Spearman alone is near zero, sinusoid features
        // pick up the dependence.
        let a: Vec<i64> = (0..1000).collect();
        let b: Vec<i64> = a.iter().map(|x| (x - 500) * (x - 500)).collect();
        let report = find_strong_subset(&[0, 1], &rows2(&a, &b), 0.3, 7, 4, 2000);
        assert!(report.score_between(0, 1) >= 0.3, "score {}", report.score_between(0, 1));
    }

    #[test]
    fn scores_deterministic_given_seed() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let a: Vec<i64> = (0..500).map(|_| rng.gen_range(0..100)).collect();
        let b: Vec<i64> = (0..500).map(|_| rng.gen_range(0..100)).collect();
        let s1 = dependence_score(&a, &b, 99, 4);
        let s2 = dependence_score(&a, &b, 99, 4);
        assert_eq!(s1.to_bits(), s2.to_bits());
    }

    fn rows2(a: &[i64], b: &[i64]) -> Vec<Vec<i64>> {
        a.iter().zip(b).map(|(&x, &y)| vec![x, y]).collect()
    }
}
