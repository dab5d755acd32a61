//! Out-of-distribution detection metrics: AUROC and AUPR.
//!
//! Detection is a binary problem over confidence scores: in-distribution
//! points should outscore out-of-distribution ones. AUROC is the exact
//! probability that a positive outscores a negative (ties count half),
//! computed by counting rather than curve integration. AUPR is the average
//! precision of the descending-score sweep with tied scores grouped; it is
//! computed twice — in-distribution as positive (AUPR-in), then roles
//! swapped with negated scores (AUPR-out) — because precision-recall areas
//! depend on which class is called positive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{ConfidenceKind, PredictionRecord};

/// OOD detection quality under one confidence function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodReport {
    pub confidence: ConfidenceKind,
    pub n_in: usize,
    pub n_out: usize,
    pub auroc: f64,
    pub aupr_in: f64,
    pub aupr_out: f64,
}

fn check_scores(name: &str, scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Config(format!("{name} score list is empty")));
    }
    if let Some(bad) = scores.iter().find(|v| !v.is_finite()) {
        return Err(Error::Config(format!("non-finite {name} score {bad}")));
    }
    Ok(())
}

/// Probability that a positive (in-distribution) score exceeds a negative
/// one, ties counted half: `(wins + ties/2) / (n_in · n_out)`, evaluated
/// exactly by counting over the sorted negatives.
pub fn auroc(scores_in: &[f64], scores_out: &[f64]) -> Result<f64> {
    check_scores("in-distribution", scores_in)?;
    check_scores("out-of-distribution", scores_out)?;
    let mut sorted_out = scores_out.to_vec();
    sorted_out.sort_unstable_by(f64::total_cmp);
    let mut wins = 0u64;
    let mut ties = 0u64;
    for &s in scores_in {
        let below = sorted_out.partition_point(|&o| o < s);
        let not_above = sorted_out.partition_point(|&o| o <= s);
        wins += below as u64;
        ties += (not_above - below) as u64;
    }
    let pairs = (scores_in.len() * scores_out.len()) as u64;
    Ok((2 * wins + ties) as f64 / (2 * pairs) as f64)
}

/// Average precision of the positive class over a descending-score sweep.
///
/// Scores are grouped by exact value; after absorbing a whole group the
/// sweep records precision at the new recall, and AP sums precision ×
/// recall-increment over the groups that contain positives. Constant scores
/// therefore give exactly the positive base rate.
pub fn aupr(scores_pos: &[f64], scores_neg: &[f64]) -> Result<f64> {
    check_scores("positive", scores_pos)?;
    check_scores("negative", scores_neg)?;
    // merge into (score, is_positive) sorted by descending score
    let mut all: Vec<(f64, bool)> = scores_pos
        .iter()
        .map(|&s| (s, true))
        .chain(scores_neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));
    let n_pos = scores_pos.len() as f64;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut ap = 0.0;
    let mut i = 0usize;
    while i < all.len() {
        let score = all[i].0;
        let mut group_pos = 0usize;
        let mut group_neg = 0usize;
        let mut j = i;
        while j < all.len() && all[j].0 == score {
            if all[j].1 {
                group_pos += 1;
            } else {
                group_neg += 1;
            }
            j += 1;
        }
        tp += group_pos;
        fp += group_neg;
        if group_pos > 0 {
            let precision = tp as f64 / (tp + fp) as f64;
            let recall_delta = group_pos as f64 / n_pos;
            ap += precision * recall_delta;
        }
        i = j;
    }
    Ok(ap)
}

/// AUROC, AUPR-in, and AUPR-out over the chosen confidence of two record
/// sets scored by the same ensemble.
pub fn ood_evaluate(
    records_in: &[PredictionRecord],
    records_out: &[PredictionRecord],
    kind: ConfidenceKind,
) -> Result<OodReport> {
    let scores_in: Vec<f64> = records_in.iter().map(|r| r.confidence(kind)).collect();
    let scores_out: Vec<f64> = records_out.iter().map(|r| r.confidence(kind)).collect();
    let neg_in: Vec<f64> = scores_in.iter().map(|v| -v).collect();
    let neg_out: Vec<f64> = scores_out.iter().map(|v| -v).collect();
    Ok(OodReport {
        confidence: kind,
        n_in: records_in.len(),
        n_out: records_out.len(),
        auroc: auroc(&scores_in, &scores_out)?,
        aupr_in: aupr(&scores_in, &scores_out)?,
        // out-of-distribution as positive: negated scores flip the ranking
        aupr_out: aupr(&neg_out, &neg_in)?,
    })
}
