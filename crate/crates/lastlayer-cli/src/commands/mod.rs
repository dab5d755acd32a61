//! The six pipeline subcommands plus the plumbing they share: dataset
//! loading, class-split handling, manifest construction, and cross-stage
//! artifact checks.

pub mod evaluate;
pub mod extract;
pub mod ood;
pub mod sample;
pub mod sweep;
pub mod train;

use std::path::{Path, PathBuf};

use lastlayer::data::{load_idx, split_by_class, ClassSplit, Dataset};
use lastlayer::manifest::{sha256_file, RunManifest};
use lastlayer::{Error, Result};

use crate::config::Effective;

/// The four MNIST-layout IDX files under `data_dir`.
pub struct IdxPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

pub fn idx_paths(data_dir: &Path) -> IdxPaths {
    IdxPaths {
        train_images: data_dir.join("train-images-idx3-ubyte"),
        train_labels: data_dir.join("train-labels-idx1-ubyte"),
        test_images: data_dir.join("t10k-images-idx3-ubyte"),
        test_labels: data_dir.join("t10k-labels-idx1-ubyte"),
    }
}

/// Load the raw train and test datasets.
pub fn load_raw(data_dir: &Path) -> Result<(Dataset, Dataset)> {
    let paths = idx_paths(data_dir);
    let train = load_idx(&paths.train_images, &paths.train_labels)?;
    let test = load_idx(&paths.test_images, &paths.test_labels)?;
    if train.feature_dim() != test.feature_dim() {
        return Err(Error::Dimension(format!(
            "train rows have {} pixels, test rows {}",
            train.feature_dim(),
            test.feature_dim()
        )));
    }
    // label spaces must agree; num_classes is inferred per file as max+1
    let k = train.num_classes().max(test.num_classes());
    Ok((train.with_num_classes(k)?, test.with_num_classes(k)?))
}

/// Record the four IDX file hashes as manifest inputs.
pub fn hash_idx_inputs(manifest: &mut RunManifest, data_dir: &Path) -> Result<()> {
    let paths = idx_paths(data_dir);
    manifest.input("train-images", sha256_file(&paths.train_images)?);
    manifest.input("train-labels", sha256_file(&paths.train_labels)?);
    manifest.input("test-images", sha256_file(&paths.test_images)?);
    manifest.input("test-labels", sha256_file(&paths.test_labels)?);
    Ok(())
}

/// The class split configured for stage one, if any.
pub fn train_split(cfg: &Effective, num_classes: usize) -> Result<Option<ClassSplit>> {
    match &cfg.train.in_classes {
        Some(classes) => Ok(Some(ClassSplit::new(classes.iter().copied(), num_classes)?)),
        None => Ok(None),
    }
}

/// Reduce a raw dataset to the in-distribution side of `split` (when one is
/// configured), relabeled densely.
pub fn in_side(ds: &Dataset, split: Option<&ClassSplit>) -> Result<Dataset> {
    match split {
        Some(split) => Ok(split_by_class(ds, split)?.0),
        None => Ok(ds.clone()),
    }
}

/// The out-of-distribution side of `split`, rewrapped for evaluation under a
/// `K = |in|`-class model: labels are a placeholder zero because no
/// in-distribution label exists for these examples — out-side records are
/// scored only through their confidence values.
pub fn out_side_for_eval(ds: &Dataset, split: &ClassSplit) -> Result<Dataset> {
    let (_, out) = split_by_class(ds, split)?;
    let k_in = split.in_classes().count();
    Dataset::new(out.features().to_owned(), vec![0; out.len()], k_in)
}

/// Start a manifest for one stage: command name, effective-config snapshot,
/// run seed.
pub fn stage_manifest(command: &str, cfg: &Effective, stage_seed: u64) -> RunManifest {
    let snapshot = serde_json::to_value(cfg).expect("effective config serializes");
    let mut manifest = RunManifest::new(command, snapshot);
    manifest.seed("run", cfg.seed);
    manifest.seed(command, stage_seed);
    manifest
}

/// Finish a manifest: hash the listed output files, stamp, save next to them.
pub fn finish_manifest(
    mut manifest: RunManifest,
    outputs: &[(&str, &Path)],
    path: &Path,
) -> Result<String> {
    let inputs_hash = manifest.inputs_hash();
    for (name, file) in outputs {
        manifest.output(*name, sha256_file(file)?);
    }
    manifest.stamp();
    manifest.save(path)?;
    Ok(inputs_hash)
}

pub fn ensure_out_dir(cfg: &Effective) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::Io {
        path: cfg.out_dir.clone(),
        source: e,
    })
}

/// Shorthand for cross-stage artifact checks.
pub fn mismatch(message: impl Into<String>) -> Error {
    Error::ArtifactMismatch(message.into())
}

/// A feature file consumed by a later stage must have been extracted by the
/// expected network and play the expected role.
pub fn check_feature_meta(path: &Path, expected_theta: &str, role: &str) -> Result<()> {
    let meta = lastlayer::data::read_feature_meta(path)?;
    match &meta.theta_star {
        Some(h) if h.as_str() == expected_theta => {}
        Some(h) => {
            return Err(mismatch(format!(
                "{} was extracted by network {}, expected {}",
                path.display(),
                &h[..12.min(h.len())],
                &expected_theta[..12.min(expected_theta.len())],
            )))
        }
        None => {
            return Err(mismatch(format!(
                "{} does not record its source network",
                path.display()
            )))
        }
    }
    match &meta.role {
        Some(r) if r.as_str() == role => Ok(()),
        Some(r) => Err(mismatch(format!(
            "{} holds {r:?} features, expected {role:?}",
            path.display()
        ))),
        None => Ok(()),
    }
}
