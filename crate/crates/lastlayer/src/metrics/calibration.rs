//! Calibration: reliability bins, expected and maximum calibration error.
//!
//! The softmax response of each record falls into one of `m` equal-width
//! bins over [0,1] (last bin closed at 1). With per-bin accuracy A_j and
//! mean confidence C_j,
//!
//! ```text
//! ECE = Σ_j (n_j / n) |A_j − C_j|        MCE = max_{j : n_j > 0} |A_j − C_j|
//! ```
//!
//! Empty bins report A = C = 0 and contribute nothing to either error.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::PredictionRecord;

/// One reliability-diagram bin over `[lower, upper)` (the last bin is
/// closed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Fraction correct among the bin's records; 0 when empty.
    pub accuracy: f64,
    /// Mean softmax response among the bin's records; 0 when empty.
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    /// Bin count m.
    pub m: usize,
    pub ece: f64,
    pub mce: f64,
    pub bins: Vec<CalibrationBin>,
}

/// Bin records by softmax response and compute ECE/MCE.
pub fn calibration(records: &[PredictionRecord], m: usize) -> Result<CalibrationReport> {
    if m == 0 {
        return Err(Error::Config("calibration needs at least one bin".into()));
    }
    if records.is_empty() {
        return Err(Error::Config("calibration of zero records".into()));
    }
    let mut counts = vec![0usize; m];
    let mut hits = vec![0usize; m];
    let mut conf_sums = vec![0.0f64; m];
    for r in records {
        if !(0.0..=1.0).contains(&r.sr) {
            return Err(Error::Config(format!(
                "softmax response {} outside [0,1]",
                r.sr
            )));
        }
        let mut j = (r.sr * m as f64).floor() as usize;
        if j == m {
            j = m - 1; // sr = 1.0 belongs to the closed last bin
        }
        counts[j] += 1;
        if r.correct() {
            hits[j] += 1;
        }
        conf_sums[j] += r.sr;
    }
    let n = records.len() as f64;
    let mut bins = Vec::with_capacity(m);
    let mut ece = 0.0f64;
    let mut mce = 0.0f64;
    for j in 0..m {
        let (accuracy, confidence) = if counts[j] > 0 {
            (hits[j] as f64 / counts[j] as f64, conf_sums[j] / counts[j] as f64)
        } else {
            (0.0, 0.0)
        };
        let gap = (accuracy - confidence).abs();
        if counts[j] > 0 {
            ece += counts[j] as f64 / n * gap;
            mce = mce.max(gap);
        }
        bins.push(CalibrationBin {
            lower: j as f64 / m as f64,
            upper: if j + 1 == m { 1.0 } else { (j + 1) as f64 / m as f64 },
            count: counts[j],
            accuracy,
            confidence,
        });
    }
    Ok(CalibrationReport { m, ece, mce, bins })
}

/// Reliability-diagram CSV: `bin_lo,bin_hi,count,accuracy,confidence`,
/// preceded by a `# manifest:` comment when a hash is given.
pub fn save_reliability_csv(
    report: &CalibrationReport,
    path: &Path,
    manifest: Option<&str>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let werr = |e| Error::io(path, e);
    if let Some(hash) = manifest {
        writeln!(w, "# manifest: {hash}").map_err(werr)?;
    }
    writeln!(w, "bin_lo,bin_hi,count,accuracy,confidence").map_err(werr)?;
    for b in &report.bins {
        writeln!(w, "{},{},{},{},{}", b.lower, b.upper, b.count, b.accuracy, b.confidence)
            .map_err(werr)?;
    }
    w.flush().map_err(werr)
}
