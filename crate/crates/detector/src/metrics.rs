//! Ranking and threshold metrics. The positive class (label 1) is the
//! hallucinated one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if let Some(row) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite { row, col: 0 });
    }
    let mut pos = 0;
    for (row, &l) in labels.iter().enumerate() {
        match l {
            0 => {}
            1 => pos += 1,
            _ => return Err(Error::BadLabel { row, label: l as i64 }),
        }
    }
    Ok((pos, labels.len() - pos))
}

fn require_both(pos: usize, neg: usize) -> Result<()> {
    match (pos, neg) {
        (0, _) => Err(Error::SingleClass { label: 0 }),
        (_, 0) => Err(Error::SingleClass { label: 1 }),
        _ => Ok(()),
    }
}

/// Area under the ROC curve: the probability that a random positive outscores
/// a random negative, counting ties as one half.
///
/// Computed from midranks, so it equals the pairwise count exactly.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (n_pos, n_neg) = check(scores, labels)?;
    require_both(n_pos, n_neg)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Twice the rank sum keeps midranks integral.
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share the midrank (i + j + 2) / 2.
        let mid2 = (i + j + 2) as u128;
        let pos_in_tie = order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        rank_sum2 += mid2 * pos_in_tie;
        i = j + 1;
    }
    let (p, n) = (n_pos as u128, n_neg as u128);
    let u2 = rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * n) as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    /// A sample is predicted positive when `score >= threshold`.
    pub fn at_threshold(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Self> {
        check(scores, labels)?;
        let mut c = Confusion::default();
        for (&s, &l) in scores.iter().zip(labels) {
            match (s >= threshold, l == 1) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// 0 when nothing is predicted positive.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// 0 when there are no positives.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// 0 when there are no true positives.
    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if num == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `(f1, recall)` at `threshold`.
pub fn f1_recall(scores: &[f64], labels: &[u8], threshold: f64) -> Result<(f64, f64)> {
    let (pos, neg) = check(scores, labels)?;
    require_both(pos, neg)?;
    let c = Confusion::at_threshold(scores, labels, threshold)?;
    Ok((c.f1(), c.recall()))
}

/// Threshold in `(0, 1)` maximising F1 over the observed scores. Ties go to
/// the candidate closest to 0.5.
pub fn tune_threshold(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check(scores, labels)?;
    require_both(pos, neg)?;
    let mut candidates: Vec<f64> = scores.to_vec();
    candidates.push(0.5);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let mut best = (f64::NEG_INFINITY, 0.5_f64);
    for t in candidates.into_iter().filter(|t| *t > 0.0 && *t < 1.0) {
        let f1 = Confusion::at_threshold(scores, labels, t)?.f1();
        let closer = (t - 0.5).abs() < (best.1 - 0.5).abs();
        if f1 > best.0 || (f1 == best.0 && closer) {
            best = (f1, t);
        }
    }
    Ok(best.1)
}

/// Mean logistic loss of probabilities against labels, clamped away from 0 and 1.
pub fn log_loss(probs: &[f64], labels: &[u8]) -> f64 {
    let eps = 1e-15;
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(eps, 1.0 - eps);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    total / probs.len().max(1) as f64
}
