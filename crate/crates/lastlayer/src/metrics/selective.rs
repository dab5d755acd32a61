//! Selective classification: coverage, selective risk, and the area under
//! the risk-coverage curve.
//!
//! For a confidence function κ and threshold s, the selection keeps the test
//! points with κ ≥ s. Coverage is the kept fraction; selective risk is the
//! error rate among the kept. The AURC averages the selective risk over the
//! *multiset* of achieved κ values — a duplicated κ value contributes one
//! term per duplicate, so the sum always has exactly n_test terms — rather
//! than integrating the curve trapezoidally.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{ConfidenceKind, PredictionRecord};

/// One point of the risk-coverage curve, at an achieved threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskCoveragePoint {
    pub threshold: f64,
    pub coverage: f64,
    pub selective_risk: f64,
}

/// Coverage and selective risk at an arbitrary threshold `s`.
///
/// Errors with [`Error::EmptySelection`] when no record reaches `s`; achieved
/// thresholds (any κ value present in the records) never trigger that.
pub fn coverage_and_risk(
    records: &[PredictionRecord],
    kind: ConfidenceKind,
    threshold: f64,
) -> Result<(f64, f64)> {
    if records.is_empty() {
        return Err(Error::Config("selective risk of zero records".into()));
    }
    let mut selected = 0usize;
    let mut errors = 0usize;
    for r in records {
        if r.confidence(kind) >= threshold {
            selected += 1;
            if !r.correct() {
                errors += 1;
            }
        }
    }
    if selected == 0 {
        return Err(Error::EmptySelection { threshold });
    }
    Ok((selected as f64 / records.len() as f64, errors as f64 / selected as f64))
}

/// AURC plus the risk-coverage curve, one point per distinct achieved κ,
/// sorted by decreasing threshold.
///
/// AURC = (1/n) Σ_{s ∈ S} srisk(s) where S is the multiset of achieved κ
/// values (duplicates replicated, |S| = n).
pub fn aurc(
    records: &[PredictionRecord],
    kind: ConfidenceKind,
) -> Result<(f64, Vec<RiskCoveragePoint>)> {
    if records.is_empty() {
        return Err(Error::Config("aurc of zero records".into()));
    }
    let mut pairs: Vec<(f64, bool)> =
        records.iter().map(|r| (r.confidence(kind), r.correct())).collect();
    if let Some((bad, _)) = pairs.iter().find(|(v, _)| !v.is_finite()) {
        return Err(Error::Config(format!("non-finite confidence {bad} in records")));
    }
    pairs.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));
    let n = pairs.len();
    let mut curve = Vec::new();
    let mut aurc_sum = 0.0;
    let mut seen = 0usize;
    let mut errors = 0usize;
    let mut i = 0usize;
    while i < n {
        let threshold = pairs[i].0;
        let mut j = i;
        while j < n && pairs[j].0 == threshold {
            if !pairs[j].1 {
                errors += 1;
            }
            j += 1;
        }
        // selection at this threshold includes the whole tie group
        seen = j;
        let risk = errors as f64 / seen as f64;
        let multiplicity = j - i;
        aurc_sum += risk * multiplicity as f64;
        curve.push(RiskCoveragePoint {
            threshold,
            coverage: seen as f64 / n as f64,
            selective_risk: risk,
        });
        i = j;
    }
    debug_assert_eq!(seen, n);
    Ok((aurc_sum / n as f64, curve))
}

/// Risk-coverage curve CSV: `threshold,coverage,selective_risk`, preceded by
/// a `# manifest:` comment when a hash is given.
pub fn save_curve_csv(
    curve: &[RiskCoveragePoint],
    path: &Path,
    manifest: Option<&str>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let werr = |e| Error::io(path, e);
    if let Some(hash) = manifest {
        writeln!(w, "# manifest: {hash}").map_err(werr)?;
    }
    writeln!(w, "threshold,coverage,selective_risk").map_err(werr)?;
    for p in curve {
        writeln!(w, "{},{},{}", p.threshold, p.coverage, p.selective_risk).map_err(werr)?;
    }
    w.flush().map_err(werr)
}
