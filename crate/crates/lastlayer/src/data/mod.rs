//! Datasets and dataset-level operations.
//!
//! A [`Dataset`] is an ordered, immutable collection of feature vectors with
//! integer class labels — either raw inputs (MNIST pixels in [0,1]) or learned
//! features extracted by a trained network. File I/O lives in [`idx`] (the
//! classic big-endian image/label format) and [`features`] (this crate's own
//! binary feature container).

mod features;
mod idx;

pub use features::{
    load_feature_file, read_feature_meta, save_feature_file, FeatureMeta, FEATURE_FILE_VERSION,
};
pub use idx::{load_idx, write_idx, IMAGES_MAGIC, LABELS_MAGIC};

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Ordered set of labeled examples with a fixed feature dimension and class
/// count. Construction validates every invariant; the contents are immutable
/// afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    /// Build a dataset from an N×d feature matrix and N labels.
    ///
    /// Requires at least one example, at least two classes, one label per
    /// row, and every label in `0..num_classes`.
    pub fn new(features: Array2<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Dataset("empty dataset".into()));
        }
        if features.nrows() != labels.len() {
            return Err(Error::Dataset(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if features.ncols() == 0 {
            return Err(Error::Dataset("zero-dimensional features".into()));
        }
        if num_classes < 2 {
            return Err(Error::Dataset(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        Ok(Dataset { features, labels, num_classes })
    }

    /// Number of examples N.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// Always false — the constructor rejects empty datasets — but keeps
    /// clippy and callers that expect the pair happy.
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature dimension d.
    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    /// Number of classes K.
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// The i-th example as (feature view, label).
    pub fn example(&self, i: usize) -> (ArrayView1<'_, f64>, usize) {
        (self.features.row(i), self.labels[i])
    }

    /// Gather a minibatch by example indices (rows are copied).
    pub fn batch(&self, indices: &[usize]) -> (Array2<f64>, Vec<usize>) {
        let feats = self.features.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        (feats, labels)
    }

    /// Replace the class count, e.g. when a loader inferred it from labels
    /// but the caller knows the true K. Must still cover every label.
    pub fn with_num_classes(mut self, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Dataset(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if let Some(&label) = self.labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        self.num_classes = num_classes;
        Ok(self)
    }

    /// Content hash over (N, d, K, feature bits, labels); used for artifact
    /// provenance. Identical datasets hash identically regardless of origin.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.len() as u64).to_le_bytes());
        hasher.update((self.feature_dim() as u64).to_le_bytes());
        hasher.update((self.num_classes as u64).to_le_bytes());
        for row in self.features.rows() {
            for &v in row {
                hasher.update(v.to_le_bytes());
            }
        }
        for &label in &self.labels {
            hasher.update((label as u64).to_le_bytes());
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Partition of the label set into in-distribution and out-of-distribution
/// classes, for the half-class OOD protocol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSplit {
    in_classes: BTreeSet<usize>,
    out_classes: BTreeSet<usize>,
    num_classes: usize,
}

impl ClassSplit {
    /// Split `0..num_classes` into the given in-distribution classes and the
    /// complementary out-distribution classes. The out side must be non-empty
    /// and the in side needs at least two classes to stay a classification
    /// problem.
    pub fn new(in_classes: impl IntoIterator<Item = usize>, num_classes: usize) -> Result<Self> {
        let in_classes: BTreeSet<usize> = in_classes.into_iter().collect();
        if let Some(&c) = in_classes.iter().find(|&&c| c >= num_classes) {
            return Err(Error::Config(format!(
                "in-distribution class {c} out of range for {num_classes} classes"
            )));
        }
        if in_classes.len() < 2 {
            return Err(Error::Config(
                "need at least two in-distribution classes".into(),
            ));
        }
        let out_classes: BTreeSet<usize> =
            (0..num_classes).filter(|c| !in_classes.contains(c)).collect();
        if out_classes.is_empty() {
            return Err(Error::Config(
                "class split leaves no out-of-distribution classes".into(),
            ));
        }
        Ok(ClassSplit { in_classes, out_classes, num_classes })
    }

    /// Lower half `0..K/2` of the classes as in-distribution — the protocol
    /// used for the reported MNIST numbers (digits 0–4 in, 5–9 out).
    pub fn first_half(num_classes: usize) -> Result<Self> {
        ClassSplit::new(0..num_classes / 2, num_classes)
    }

    pub fn in_classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.in_classes.iter().copied()
    }

    pub fn out_classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.out_classes.iter().copied()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Dense relabeling for the in-distribution side: the i-th smallest
    /// original class maps to label i.
    pub fn dense_label(&self, original: usize) -> Option<usize> {
        self.in_classes.iter().position(|&c| c == original)
    }
}

/// Split a dataset by class membership.
///
/// The in-distribution side is relabeled densely (ascending original class
/// index → 0,1,2,…) and its class count becomes the number of in-classes;
/// the out-distribution side keeps its original labels and class count.
/// Example order within each side is preserved. Errors if either side would
/// be empty.
pub fn split_by_class(ds: &Dataset, split: &ClassSplit) -> Result<(Dataset, Dataset)> {
    if split.num_classes() != ds.num_classes() {
        return Err(Error::Dimension(format!(
            "class split over {} classes applied to dataset with {}",
            split.num_classes(),
            ds.num_classes()
        )));
    }
    let mut in_idx = Vec::new();
    let mut out_idx = Vec::new();
    for (i, &label) in ds.labels().iter().enumerate() {
        if split.dense_label(label).is_some() {
            in_idx.push(i);
        } else {
            out_idx.push(i);
        }
    }
    if in_idx.is_empty() {
        return Err(Error::Dataset(
            "class split selects no in-distribution examples".into(),
        ));
    }
    if out_idx.is_empty() {
        return Err(Error::Dataset(
            "class split selects no out-of-distribution examples".into(),
        ));
    }
    let in_feats = ds.features.select(Axis(0), &in_idx);
    let in_labels: Vec<usize> = in_idx
        .iter()
        .map(|&i| split.dense_label(ds.labels[i]).expect("index came from the in side"))
        .collect();
    let out_feats = ds.features.select(Axis(0), &out_idx);
    let out_labels: Vec<usize> = out_idx.iter().map(|&i| ds.labels[i]).collect();
    let in_ds = Dataset::new(in_feats, in_labels, split.in_classes.len())?;
    let out_ds = Dataset::new(out_feats, out_labels, ds.num_classes())?;
    Ok((in_ds, out_ds))
}

/// Draw a bootstrap resample: N examples chosen uniformly with replacement,
/// deterministically from `seed`. Every output row is a bitwise copy of some
/// input row.
pub fn bootstrap_resample(ds: &Dataset, seed: u64) -> Dataset {
    let n = ds.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    let (features, labels) = ds.batch(&indices);
    Dataset { features, labels, num_classes: ds.num_classes }
}
