//! Ranking and classification metrics.
//!
//! Conventions: ROC AUC credits tied (positive, negative) pairs with 0.5;
//! average precision breaks score ties by original order; argmax breaks ties
//! toward the lowest class index; NLL floors probabilities at `1e-12`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const NLL_FLOOR: f64 = 1e-12;

/// Scores with binary labels (`true` = positive).
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryScoredSet {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl BinaryScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::shape(
                "BinaryScoredSet",
                format!("{} scores, {} labels", scores.len(), labels.len()),
            ));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("BinaryScoredSet"));
        }
        Ok(BinaryScoredSet { scores, labels })
    }

    /// Negatives first (label 0), then positives (label 1).
    pub fn from_groups(negatives: &[f64], positives: &[f64]) -> Result<Self> {
        let scores = negatives.iter().chain(positives).copied().collect();
        let labels = std::iter::repeat_n(false, negatives.len())
            .chain(std::iter::repeat_n(true, positives.len()))
            .collect();
        BinaryScoredSet::new(scores, labels)
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn n_negative(&self) -> usize {
        self.labels.len() - self.n_positive()
    }

    pub fn roc_auc(&self) -> Result<f64> {
        roc_auc(&self.scores, &self.labels)
    }

    pub fn average_precision(&self) -> Result<f64> {
        average_precision(&self.scores, &self.labels)
    }
}

/// Mann–Whitney estimate of `P(score_pos > score_neg)` with half credit for
/// ties, via a single sort and tie-averaged ranks.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let set_check = BinaryScoredSet::new(scores.to_vec(), labels.to_vec())?;
    let (n_pos, n_neg) = (set_check.n_positive(), set_check.n_negative());
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidArgument(
            "ROC AUC needs both positive and negative samples".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Twice the positive rank sum keeps tie-averaged (half-integer) ranks exact.
    let mut twice_rank_sum: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j share the average (i + 1 + j) / 2.
        let positives = order[i..j].iter().filter(|&&k| labels[k]).count() as u64;
        twice_rank_sum += positives * (i as u64 + 1 + j as u64);
        i = j;
    }
    let (p, n) = (n_pos as u64, n_neg as u64);
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / 2.0 / (p * n) as f64)
}

/// Mean over positives of the precision at each positive's rank, ranking by
/// descending score and keeping the original order among ties.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let set = BinaryScoredSet::new(scores.to_vec(), labels.to_vec())?;
    let n_pos = set.n_positive();
    if n_pos == 0 {
        return Err(Error::InvalidArgument(
            "average precision needs at least one positive".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &k) in order.iter().enumerate() {
        if labels[k] {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(total / n_pos as f64)
}

fn check_labels(probs: &Matrix, labels: &[usize]) -> Result<()> {
    if probs.rows() != labels.len() {
        return Err(Error::shape(
            "metrics",
            format!("{} rows, {} labels", probs.rows(), labels.len()),
        ));
    }
    if probs.rows() == 0 {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= probs.cols()) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            n_classes: probs.cols(),
        });
    }
    Ok(())
}

pub fn accuracy(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    check_labels(probs, labels)?;
    let correct = probs
        .argmax_rows()
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Mean `-ln p_label`; rows must be probability vectors.
pub fn nll(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    check_labels(probs, labels)?;
    for (r, row) in probs.row_iter().enumerate() {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-9 || row.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "row {r} is not a probability vector (sum {s})"
            )));
        }
    }
    let total: f64 = probs
        .row_iter()
        .zip(labels)
        .map(|(row, &l)| -row[l].max(NLL_FLOOR).ln())
        .sum();
    Ok(total / labels.len() as f64)
}

/// Equal-population rank binning onto `[0, 1]`.
///
/// Values are ranked ascending (0-based), tied values share their mean rank,
/// and rank `r` maps to bin `⌊r · bins / len⌋`, reported as `bin / (bins - 1)`.
/// With `bins = 1` every output is 0.
pub fn rank_bin_normalise(values: &[f64], bins: usize) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("nothing to normalise".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("need at least one bin".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("rank_bin_normalise"));
    }
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; n];
    let denom = (bins - 1).max(1) as f64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // Mean 0-based rank of the group is (i + j - 1) / 2.
        let bin = ((i + j - 1) * bins) / (2 * n);
        let v = if bins == 1 { 0.0 } else { bin as f64 / denom };
        for &k in &order[i..j] {
            out[k] = v;
        }
        i = j;
    }
    Ok(out)
}

/// Summary metrics for one experiment run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub roc_auc: f64,
    pub average_precision: f64,
    pub accuracy: f64,
    pub nll: f64,
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    fn labels(v: &[u8]) -> Vec<bool> {
        v.iter().map(|&x| x == 1).collect()
    }

    #[test]
    fn roc_examples() {
        let s = [0.9, 0.8, 0.3, 0.2];
        assert_eq!(roc_auc(&s, &labels(&[1, 1, 0, 0])).unwrap(), 1.0);
        assert_eq!(roc_auc(&s, &labels(&[1, 0, 0, 1])).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.5, 0.5], &labels(&[1, 0])).unwrap(), 0.5);
        assert!(roc_auc(&s, &labels(&[1, 1, 1, 1])).is_err());
        assert!(roc_auc(&[f64::NAN, 1.0], &labels(&[1, 0])).is_err());
    }

    #[test]
    fn ap_examples() {
        let s = [0.9, 0.8, 0.7, 0.6];
        let ap = average_precision(&s, &labels(&[1, 0, 1, 0])).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(average_precision(&s, &labels(&[1, 1, 0, 0])).unwrap(), 1.0);
        assert_eq!(average_precision(&s, &labels(&[0, 0, 0, 1])).unwrap(), 0.25);
        assert!(average_precision(&s, &labels(&[0, 0, 0, 0])).is_err());
        // Ties keep the original order.
        assert_eq!(average_precision(&[0.5, 0.5], &labels(&[0, 1])).unwrap(), 0.5);
        assert_eq!(average_precision(&[0.5, 0.5], &labels(&[1, 0])).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_examples() {
        let one_hot = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(accuracy(&one_hot, &[0, 1]).unwrap(), 1.0);
        let uniform = Matrix::filled(3, 4, 0.25).unwrap();
        assert_eq!(accuracy(&uniform, &[0, 0, 0]).unwrap(), 1.0);
        assert_eq!(accuracy(&uniform, &[1, 0, 0]).unwrap(), 2.0 / 3.0);
        assert!(accuracy(&uniform, &[4, 0, 0]).is_err());
    }

    #[test]
    fn nll_examples() {
        let one_hot = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(nll(&one_hot, &[0, 1]).unwrap(), 0.0);
        let uniform = Matrix::filled(2, 2, 0.5).unwrap();
        assert!((nll(&uniform, &[0, 1]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        let p = Matrix::from_rows(&[[0.7, 0.3]]).unwrap();
        assert!((nll(&p, &[0]).unwrap() - 0.356674943938732442353954404107).abs() < 1e-15);
        // Floor keeps a zero-probability label finite.
        assert!((nll(&one_hot, &[1, 1]).unwrap() - (-NLL_FLOOR.ln()) / 2.0).abs() < 1e-12);
        let bad = Matrix::from_rows(&[[0.7, 0.7]]).unwrap();
        assert!(nll(&bad, &[0]).is_err());
        assert!(matches!(nll(&p, &[2]), Err(Error::LabelOutOfRange { .. })));
    }

    #[test]
    fn rank_bin_examples() {
        assert_eq!(
            rank_bin_normalise(&[3.0, 1.0, 2.0, 4.0], 4).unwrap(),
            vec![2.0 / 3.0, 0.0, 1.0 / 3.0, 1.0]
        );
        assert_eq!(rank_bin_normalise(&[5.0; 7], 400).unwrap(), vec![
            rank_bin_normalise(&[5.0; 7], 400).unwrap()[0];
            7
        ]);
        let values: Vec<f64> = (0..400).rev().map(f64::from).collect();
        let out = rank_bin_normalise(&values, 400).unwrap();
        for (v, o) in values.iter().zip(&out) {
            assert_eq!(*o, *v / 399.0);
        }
        assert!(rank_bin_normalise(&[], 4).is_err());
        assert!(rank_bin_normalise(&[1.0], 0).is_err());
        assert_eq!(rank_bin_normalise(&[1.0, 2.0], 1).unwrap(), vec![0.0, 0.0]);
    }
}
