//! Evaluation of prediction records: selective classification, calibration,
//! and out-of-distribution detection, plus the serializable reports the CLI
//! emits.

mod calibration;
mod ood;
mod selective;

pub use calibration::{calibration, save_reliability_csv, CalibrationBin, CalibrationReport};
pub use ood::{aupr, auroc, ood_evaluate, OodReport};
pub use selective::{aurc, coverage_and_risk, save_curve_csv, RiskCoveragePoint};

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{ConfidenceKind, PredictionRecord};
use crate::samplers::{Ensemble, SamplerKind, Scope};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Fraction of records whose prediction matches the label.
pub fn records_accuracy(records: &[PredictionRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Config("accuracy of zero records".into()));
    }
    let correct = records.iter().filter(|r| r.correct()).count();
    Ok(correct as f64 / records.len() as f64)
}

/// The method identity a report describes, lifted from ensemble provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodInfo {
    pub kind: SamplerKind,
    pub scope: Scope,
    pub n_samples: usize,
    #[serde(default)]
    pub diverged: bool,
}

impl MethodInfo {
    pub fn from_ensemble(ens: &Ensemble) -> Self {
        MethodInfo {
            kind: ens.kind(),
            scope: ens.scope(),
            n_samples: ens.n_samples(),
            diverged: ens.provenance().diverged,
        }
    }
}

/// AURC under one confidence function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AurcEntry {
    pub confidence: ConfidenceKind,
    pub aurc: f64,
}

/// The evaluate stage's JSON artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    /// Inputs hash of the producing run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
    pub method: MethodInfo,
    pub n_test: usize,
    pub accuracy: f64,
    /// One AURC per available confidence function (point estimates report
    /// only SR — the disagreement scores are degenerate there).
    pub aurc: Vec<AurcEntry>,
    /// Smallest AURC across the available confidence functions.
    pub min_aurc: f64,
    /// SR-AURC of the baseline report, when one was supplied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_aurc: Option<f64>,
    /// `min_aurc / baseline_aurc`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized_min_aurc: Option<f64>,
    pub calibration: CalibrationReport,
}

impl MetricReport {
    /// AURC under a specific confidence, when the report carries it.
    pub fn aurc_for(&self, kind: ConfidenceKind) -> Option<f64> {
        self.aurc.iter().find(|e| e.confidence == kind).map(|e| e.aurc)
    }
}

/// Per-confidence OOD summary plus the cross-confidence maximum, as the ood
/// stage's JSON artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodSummary {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
    pub method: MethodInfo,
    pub n_in: usize,
    pub n_out: usize,
    pub reports: Vec<OodReport>,
    /// Largest AUROC across the available confidence functions.
    pub max_auroc: f64,
    /// SR-AUROC of the baseline report, when one was supplied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_auroc: Option<f64>,
    /// `max_auroc / baseline_auroc`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auroc_ratio: Option<f64>,
}

impl OodSummary {
    pub fn auroc_for(&self, kind: ConfidenceKind) -> Option<f64> {
        self.reports.iter().find(|e| e.confidence == kind).map(|e| e.auroc)
    }
}

/// Save any of the JSON report types, pretty-printed with a trailing newline.
pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| Error::format(path.display(), format!("serialization failed: {e}")))?;
    use std::io::Write;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Load a JSON report written by [`save_json`].
pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::format(path.display(), format!("not a valid report: {e}")))
}
