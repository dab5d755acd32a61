//! From ensembles to predictions and confidence scores.
//!
//! The predictive posterior p̂(y|x) is the arithmetic mean of the per-sample
//! probability vectors; the classifier f̂ takes its argmax (lowest index on
//! ties). Three confidence functions κ rank test points for selection:
//!
//! * **SR** — softmax response, the largest entry of p̂.
//! * **STD** — negative standard deviation of the per-sample probability of
//!   the predicted class (agreeing members ⇒ κ near 0).
//! * **q-entropy** — negative entropy of the distribution of per-sample
//!   argmax votes.
//!
//! A one-sample ensemble carries no disagreement, so STD and q-entropy are
//! exactly 0 there; evaluation code checks [`Ensemble::is_point_estimate`]
//! and reports only SR for those.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::argmax_lowest;
use crate::samplers::Ensemble;

/// Which confidence function ranks the predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfidenceKind {
    Sr,
    Std,
    QEntropy,
}

impl ConfidenceKind {
    pub const ALL: [ConfidenceKind; 3] =
        [ConfidenceKind::Sr, ConfidenceKind::Std, ConfidenceKind::QEntropy];

    /// The closed range κ can take for a K-class problem; histogram bins
    /// cover exactly this interval.
    pub fn range(self, num_classes: usize) -> (f64, f64) {
        match self {
            ConfidenceKind::Sr => (0.0, 1.0),
            ConfidenceKind::Std => (-0.5, 0.0),
            ConfidenceKind::QEntropy => (-(num_classes as f64).ln(), 0.0),
        }
    }
}

impl std::fmt::Display for ConfidenceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ConfidenceKind::Sr => "sr",
            ConfidenceKind::Std => "std",
            ConfidenceKind::QEntropy => "q-entropy",
        })
    }
}

impl std::str::FromStr for ConfidenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sr" => Ok(ConfidenceKind::Sr),
            "std" => Ok(ConfidenceKind::Std),
            "q-entropy" => Ok(ConfidenceKind::QEntropy),
            other => Err(Error::Config(format!(
                "unknown confidence {other:?} (expected sr, std, or q-entropy)"
            ))),
        }
    }
}

/// One scored test point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    /// Position of the example in its dataset.
    pub index: usize,
    pub label: usize,
    pub predicted: usize,
    /// Predictive posterior p̂(·|x), length K.
    pub p_hat: Vec<f64>,
    /// Softmax response: max entry of `p_hat`.
    pub sr: f64,
    /// −std of the predicted-class probability across samples; exactly 0 for
    /// point estimates.
    pub std_kappa: f64,
    /// −entropy of the argmax vote distribution; exactly 0 for point
    /// estimates.
    pub q_entropy_kappa: f64,
}

impl PredictionRecord {
    pub fn correct(&self) -> bool {
        self.predicted == self.label
    }

    pub fn confidence(&self, kind: ConfidenceKind) -> f64 {
        match kind {
            ConfidenceKind::Sr => self.sr,
            ConfidenceKind::Std => self.std_kappa,
            ConfidenceKind::QEntropy => self.q_entropy_kappa,
        }
    }
}

/// Entrywise mean of the per-sample probability vectors.
pub fn predictive_posterior(samples: &[Array1<f64>]) -> Result<Array1<f64>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Config("predictive posterior of zero samples".into()))?;
    let k = first.len();
    let mut mean = Array1::zeros(k);
    for s in samples {
        if s.len() != k {
            return Err(Error::Dimension(format!(
                "probability vectors of length {} and {k} in one sample set",
                s.len()
            )));
        }
        mean += s;
    }
    Ok(mean / samples.len() as f64)
}

/// Argmax of p̂ with lowest-index tie-break.
pub fn classify(p_hat: ArrayView1<f64>) -> usize {
    argmax_lowest(p_hat)
}

/// Softmax response: the largest entry of p̂.
pub fn sr_confidence(p_hat: ArrayView1<f64>) -> f64 {
    p_hat[argmax_lowest(p_hat)]
}

/// κ = −sqrt(E[p²] − E[p]²) over the per-sample probabilities of class
/// `f_hat`, population moments (divide by the sample count). Computed as the
/// two-pass mean of squared deviations, which is the same quantity but keeps
/// identical samples at variance ~0 instead of amplifying cancellation error.
pub fn std_confidence(samples: &[Array1<f64>], f_hat: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Config("std confidence of zero samples".into()));
    }
    let n = samples.len() as f64;
    let mut sum = 0.0;
    for s in samples {
        if f_hat >= s.len() {
            return Err(Error::Dimension(format!(
                "class {f_hat} out of range for {} classes",
                s.len()
            )));
        }
        sum += s[f_hat];
    }
    let mean = sum / n;
    let variance = samples.iter().map(|s| (s[f_hat] - mean).powi(2)).sum::<f64>() / n;
    Ok(-variance.sqrt())
}

/// κ = −H(q̂) where q̂ is the distribution of per-sample argmax votes;
/// natural log, 0·ln 0 = 0.
pub fn q_entropy_confidence(samples: &[Array1<f64>]) -> Result<f64> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Config("q-entropy confidence of zero samples".into()))?;
    let k = first.len();
    let mut votes = vec![0usize; k];
    for s in samples {
        if s.len() != k {
            return Err(Error::Dimension(format!(
                "probability vectors of length {} and {k} in one sample set",
                s.len()
            )));
        }
        votes[argmax_lowest(s.view())] += 1;
    }
    Ok(-vote_entropy(&votes, samples.len()))
}

fn vote_entropy(votes: &[usize], total: usize) -> f64 {
    let n = total as f64;
    votes
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let q = c as f64 / n;
            -q * q.ln()
        })
        .sum()
}

/// Examples scored per prediction batch; bounds transient memory at
/// `chunk × n_samples × K` probabilities.
const RECORD_CHUNK: usize = 512;

/// Score every example of `ds` with `ens`, in dataset order.
///
/// For point estimates (one sample) the disagreement scores are exactly 0;
/// otherwise every record carries all three confidences.
pub fn predict_dataset(ens: &Ensemble, ds: &Dataset) -> Result<Vec<PredictionRecord>> {
    if ens.input_dim() != ds.feature_dim() {
        return Err(Error::Dimension(format!(
            "ensemble expects {} inputs, dataset has {}",
            ens.input_dim(),
            ds.feature_dim()
        )));
    }
    if ens.num_classes() != ds.num_classes() {
        return Err(Error::Dimension(format!(
            "ensemble outputs {} classes, dataset has {}",
            ens.num_classes(),
            ds.num_classes()
        )));
    }
    let k = ds.num_classes();
    let point = ens.is_point_estimate();
    let labels = ds.labels();
    let feats = ds.features();
    let mut records = Vec::with_capacity(ds.len());
    let mut start = 0usize;
    while start < ds.len() {
        let end = (start + RECORD_CHUNK).min(ds.len());
        let xs = feats.slice(ndarray::s![start..end, ..]);
        let sample_mats = ens.predictive_samples_batch(xs, start);
        let t = sample_mats.len() as f64;
        for i in 0..end - start {
            let mut p_hat = vec![0.0; k];
            for mat in &sample_mats {
                for (acc, &p) in p_hat.iter_mut().zip(mat.row(i)) {
                    *acc += p;
                }
            }
            for acc in p_hat.iter_mut() {
                *acc /= t;
            }
            let p_view = ArrayView1::from(&p_hat);
            let predicted = argmax_lowest(p_view);
            let sr = p_hat[predicted];
            let (std_kappa, q_entropy_kappa) = if point {
                (0.0, 0.0)
            } else {
                let mut sum = 0.0;
                let mut votes = vec![0usize; k];
                for mat in &sample_mats {
                    let row = mat.row(i);
                    sum += row[predicted];
                    votes[argmax_lowest(row)] += 1;
                }
                let mean = sum / t;
                let variance = sample_mats
                    .iter()
                    .map(|mat| (mat.row(i)[predicted] - mean).powi(2))
                    .sum::<f64>()
                    / t;
                (-variance.sqrt(), -vote_entropy(&votes, sample_mats.len()))
            };
            records.push(PredictionRecord {
                index: start + i,
                label: labels[start + i],
                predicted,
                p_hat,
                sr,
                std_kappa,
                q_entropy_kappa,
            });
        }
        start = end;
    }
    Ok(records)
}

/// Write records as CSV: `index,label,predicted,sr,std_kappa,q_entropy_kappa`
/// plus one `p0..p{K-1}` column per class when `with_posterior` is set. A
/// `# manifest:` comment line precedes the header when a hash is given.
pub fn save_records(
    records: &[PredictionRecord],
    path: &Path,
    manifest: Option<&str>,
    with_posterior: bool,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let werr = |e| Error::io(path, e);
    if let Some(hash) = manifest {
        writeln!(w, "# manifest: {hash}").map_err(werr)?;
    }
    let k = records.first().map_or(0, |r| r.p_hat.len());
    write!(w, "index,label,predicted,sr,std_kappa,q_entropy_kappa").map_err(werr)?;
    if with_posterior {
        for j in 0..k {
            write!(w, ",p{j}").map_err(werr)?;
        }
    }
    writeln!(w).map_err(werr)?;
    for r in records {
        write!(
            w,
            "{},{},{},{},{},{}",
            r.index, r.label, r.predicted, r.sr, r.std_kappa, r.q_entropy_kappa
        )
        .map_err(werr)?;
        if with_posterior {
            for p in &r.p_hat {
                write!(w, ",{p}").map_err(werr)?;
            }
        }
        writeln!(w).map_err(werr)?;
    }
    w.flush().map_err(werr)
}

/// Read a records CSV written by [`save_records`]. Returns the records and
/// the manifest hash from the leading comment, if present. Files written
/// without the posterior columns load with empty `p_hat`s.
pub fn load_records(path: &Path) -> Result<(Vec<PredictionRecord>, Option<String>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let fail = |line: usize, message: String| {
        Error::format(path.display(), format!("line {line}: {message}"))
    };
    let mut manifest = None;
    let mut records = Vec::new();
    let mut saw_header = false;
    let mut n_prob_cols = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# manifest:") {
            manifest = Some(rest.trim().to_string());
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        if !saw_header {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() < 6 || cols[0] != "index" {
                return Err(fail(lineno, format!("unexpected header {line:?}")));
            }
            n_prob_cols = cols.len() - 6;
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 + n_prob_cols {
            return Err(fail(
                lineno,
                format!("expected {} fields, found {}", 6 + n_prob_cols, fields.len()),
            ));
        }
        let int = |idx: usize, name: &str| {
            fields[idx]
                .parse::<usize>()
                .map_err(|_| fail(lineno, format!("bad {name} {:?}", fields[idx])))
        };
        let real = |idx: usize, name: &str| {
            fields[idx]
                .parse::<f64>()
                .map_err(|_| fail(lineno, format!("bad {name} {:?}", fields[idx])))
        };
        let mut p_hat = Vec::with_capacity(n_prob_cols);
        for j in 0..n_prob_cols {
            p_hat.push(real(6 + j, "posterior entry")?);
        }
        records.push(PredictionRecord {
            index: int(0, "index")?,
            label: int(1, "label")?,
            predicted: int(2, "predicted class")?,
            p_hat,
            sr: real(3, "sr")?,
            std_kappa: real(4, "std_kappa")?,
            q_entropy_kappa: real(5, "q_entropy_kappa")?,
        });
    }
    if !saw_header {
        return Err(Error::format(path.display(), "missing header row"));
    }
    Ok((records, manifest))
}

/// Confidence histogram split by correctness, for p̂_max-style figures. The
/// `correct` and `incorrect` counts partition the records exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSplit {
    pub kind: ConfidenceKind,
    /// `n_bins + 1` edges spanning the kind's range; equal-width bins, last
    /// bin closed at the upper edge.
    pub edges: Vec<f64>,
    pub correct: Vec<usize>,
    pub incorrect: Vec<usize>,
}

/// Histogram the chosen confidence over `records` with `n_bins` equal-width
/// bins spanning [`ConfidenceKind::range`].
pub fn confidence_histogram(
    records: &[PredictionRecord],
    kind: ConfidenceKind,
    num_classes: usize,
    n_bins: usize,
) -> Result<HistogramSplit> {
    if n_bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    if num_classes < 2 {
        return Err(Error::Config("histogram needs at least two classes".into()));
    }
    let (lo, hi) = kind.range(num_classes);
    let width = (hi - lo) / n_bins as f64;
    let edges: Vec<f64> = (0..=n_bins)
        .map(|j| if j == n_bins { hi } else { lo + width * j as f64 })
        .collect();
    let mut correct = vec![0usize; n_bins];
    let mut incorrect = vec![0usize; n_bins];
    for r in records {
        let v = r.confidence(kind);
        // values sit inside the closed range by construction; rounding drift
        // lands in the end bins
        let mut bin = ((v - lo) / width).floor() as isize;
        bin = bin.clamp(0, n_bins as isize - 1);
        if r.correct() {
            correct[bin as usize] += 1;
        } else {
            incorrect[bin as usize] += 1;
        }
    }
    Ok(HistogramSplit { kind, edges, correct, incorrect })
}

impl HistogramSplit {
    /// CSV: `bin_lo,bin_hi,correct,incorrect`, preceded by a `# manifest:`
    /// comment when a hash is given.
    pub fn save_csv(&self, path: &Path, manifest: Option<&str>) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let werr = |e| Error::io(path, e);
        if let Some(hash) = manifest {
            writeln!(w, "# manifest: {hash}").map_err(werr)?;
        }
        writeln!(w, "# confidence: {}", self.kind).map_err(werr)?;
        writeln!(w, "bin_lo,bin_hi,correct,incorrect").map_err(werr)?;
        for j in 0..self.correct.len() {
            writeln!(
                w,
                "{},{},{},{}",
                self.edges[j],
                self.edges[j + 1],
                self.correct[j],
                self.incorrect[j]
            )
            .map_err(werr)?;
        }
        w.flush().map_err(werr)
    }
}
