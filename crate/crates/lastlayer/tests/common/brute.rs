//! Brute-force reference implementations of the evaluation metrics, written
//! to mirror the definitions literally: every threshold is recomputed by an
//! independent scan, nothing is shared or accumulated incrementally. The
//! production implementations must agree with these to 1e-12 on arbitrary
//! record sets.

use lastlayer::inference::{ConfidenceKind, PredictionRecord};
use lastlayer::metrics::{aupr, aurc, auroc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A record with the given label/prediction correctness and all three
/// confidence channels set independently.
pub fn record(correct: bool, sr: f64, std_kappa: f64, q_entropy_kappa: f64) -> PredictionRecord {
    PredictionRecord {
        index: 0,
        label: 0,
        predicted: usize::from(!correct),
        p_hat: vec![sr, 1.0 - sr],
        sr,
        std_kappa,
        q_entropy_kappa,
    }
}

/// Random records whose confidences come from coarse grids, so duplicate
/// values (the tie-handling edge cases) occur constantly.
pub fn random_records(rng: &mut ChaCha8Rng, n: usize) -> Vec<PredictionRecord> {
    (0..n)
        .map(|_| {
            let sr = f64::from(rng.gen_range(0..=20u32)) / 20.0;
            let std_kappa = -f64::from(rng.gen_range(0..=10u32)) / 20.0;
            let q_entropy_kappa = -f64::from(rng.gen_range(0..=8u32)) * 0.15;
            record(rng.gen_bool(0.7), sr, std_kappa, q_entropy_kappa)
        })
        .collect()
}

/// Random scores on a coarse grid in [0,1], rich in ties.
pub fn random_scores(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| f64::from(rng.gen_range(0..=12u32)) / 12.0).collect()
}

/// AURC by the definition: the multiset of thresholds is the achieved κ of
/// every record; each srisk is recomputed from scratch.
pub fn brute_aurc(records: &[PredictionRecord], kind: ConfidenceKind) -> f64 {
    let mut total = 0.0;
    for r in records {
        let t = r.confidence(kind);
        let mut selected = 0usize;
        let mut errors = 0usize;
        for q in records {
            if q.confidence(kind) >= t {
                selected += 1;
                if !q.correct() {
                    errors += 1;
                }
            }
        }
        total += errors as f64 / selected as f64;
    }
    total / records.len() as f64
}

/// AUROC as the literal pairwise win rate: ties count one half.
pub fn brute_auroc(scores_in: &[f64], scores_out: &[f64]) -> f64 {
    let mut score = 0.0;
    for &a in scores_in {
        for &b in scores_out {
            if a > b {
                score += 1.0;
            } else if a == b {
                score += 0.5;
            }
        }
    }
    score / (scores_in.len() as f64 * scores_out.len() as f64)
}

/// Average precision with precision and recall recomputed by independent
/// scans at every distinct threshold, descending.
pub fn brute_average_precision(scores_pos: &[f64], scores_neg: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = scores_pos.iter().chain(scores_neg).copied().collect();
    thresholds.sort_unstable_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let n_pos = scores_pos.len() as f64;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for &t in &thresholds {
        let tp = scores_pos.iter().filter(|&&s| s >= t).count();
        let fp = scores_neg.iter().filter(|&&s| s >= t).count();
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / n_pos;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

/// Largest absolute disagreement between the production metrics and the
/// brute-force references over each random set.
#[derive(Debug, Default)]
pub struct OracleDiffs {
    pub aurc: f64,
    pub auroc: f64,
    pub aupr: f64,
    pub sets: usize,
}

/// Compare production and brute-force metrics on `n_sets` random record sets
/// of size ≤ 50 (per side for the detection metrics), deterministically.
pub fn oracle_equivalence(n_sets: usize, seed: u64) -> OracleDiffs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut diffs = OracleDiffs::default();
    for _ in 0..n_sets {
        let n = rng.gen_range(1..=50);
        let records = random_records(&mut rng, n);
        for kind in ConfidenceKind::ALL {
            let (fast, _) = aurc(&records, kind).expect("finite confidences");
            let slow = brute_aurc(&records, kind);
            diffs.aurc = diffs.aurc.max((fast - slow).abs());
        }

        let n_in = rng.gen_range(1..=50);
        let n_out = rng.gen_range(1..=50);
        let scores_in = random_scores(&mut rng, n_in);
        let scores_out = random_scores(&mut rng, n_out);
        let fast = auroc(&scores_in, &scores_out).expect("non-empty sides");
        diffs.auroc = diffs.auroc.max((fast - brute_auroc(&scores_in, &scores_out)).abs());
        let fast = aupr(&scores_in, &scores_out).expect("non-empty sides");
        diffs.aupr =
            diffs.aupr.max((fast - brute_average_precision(&scores_in, &scores_out)).abs());
        diffs.sets += 1;
    }
    diffs
}
