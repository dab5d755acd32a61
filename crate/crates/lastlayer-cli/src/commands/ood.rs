//! `lastlayer ood`: out-of-distribution detection across a class split.
//!
//! The ensemble (trained on the in-distribution classes only) scores the
//! in-test and out-test sets; each confidence function is then rated by how
//! well it ranks in-distribution above out-of-distribution — AUROC, AUPR-in,
//! and AUPR-out.

use std::path::{Path, PathBuf};

use lastlayer::data::{load_feature_file, read_feature_meta, ClassSplit, Dataset};
use lastlayer::inference::ConfidenceKind;
use lastlayer::inference::predict_dataset;
use lastlayer::manifest::{sha256_file, RunManifest};
use lastlayer::metrics::{
    load_json, ood_evaluate, save_json, MethodInfo, OodSummary, REPORT_SCHEMA_VERSION,
};
use lastlayer::samplers::{load_ensemble, Ensemble, SamplerKind, Scope};
use lastlayer::seeding;
use lastlayer::Result;

use super::{
    ensure_out_dir, finish_manifest, hash_idx_inputs, load_raw, mismatch, out_side_for_eval,
    stage_manifest,
};
use crate::config::{parse_confidences, Effective};
use super::evaluate::{confidence_kinds, default_ensemble_path, verify_feature_lineage};

pub struct OodArgs {
    pub ensemble: Option<PathBuf>,
    pub baseline_report: Option<PathBuf>,
    pub confidence: Vec<String>,
    pub kind: Option<SamplerKind>,
    pub scope: Option<Scope>,
}

/// The class split this OOD run uses: `[ood] in_classes`, falling back to
/// `[train] in_classes`, falling back to the lower half of the classes.
pub fn ood_split(cfg: &Effective, num_classes: usize) -> Result<ClassSplit> {
    let configured = cfg.ood.in_classes.as_ref().or(cfg.train.in_classes.as_ref());
    match configured {
        Some(classes) => ClassSplit::new(classes.iter().copied(), num_classes),
        None => ClassSplit::first_half(num_classes),
    }
}

/// A feature file's stored split must match this run's split exactly.
fn verify_feature_split(path: &Path, split: &ClassSplit) -> Result<()> {
    let meta = read_feature_meta(path)?;
    match &meta.split {
        Some(s) if s == split => Ok(()),
        Some(s) => Err(mismatch(format!(
            "{} was extracted under in-classes {:?}, this run uses {:?}",
            path.display(),
            s.in_classes().collect::<Vec<_>>(),
            split.in_classes().collect::<Vec<_>>(),
        ))),
        None => Err(mismatch(format!(
            "{} was extracted without a class split",
            path.display()
        ))),
    }
}

/// Load the in-test and out-test datasets for the ensemble's scope.
fn ood_datasets(
    cfg: &Effective,
    ens: &Ensemble,
    manifest: &mut RunManifest,
) -> Result<(Dataset, Dataset, ClassSplit)> {
    match ens.scope() {
        Scope::LastLayer => {
            let in_path = cfg.features_path("test");
            let out_path = cfg.features_path("out-test");
            // the split the features were built under is checked against the
            // configured one, so K here only sizes the ClassSplit domain
            let meta = read_feature_meta(&in_path)?;
            let domain = meta.split.as_ref().map_or(10, |s| s.num_classes());
            let split = ood_split(cfg, domain)?;
            verify_feature_lineage(&in_path, ens, "test")?;
            verify_feature_lineage(&out_path, ens, "out-test")?;
            verify_feature_split(&in_path, &split)?;
            verify_feature_split(&out_path, &split)?;
            manifest.input("features-test", sha256_file(&in_path)?);
            manifest.input("features-out-test", sha256_file(&out_path)?);
            Ok((load_feature_file(&in_path)?, load_feature_file(&out_path)?, split))
        }
        Scope::FullNetwork => {
            hash_idx_inputs(manifest, &cfg.data_dir)?;
            let (_, raw_test) = load_raw(&cfg.data_dir)?;
            let split = ood_split(cfg, raw_test.num_classes())?;
            let k_in = split.in_classes().count();
            if ens.num_classes() != k_in {
                return Err(mismatch(format!(
                    "ensemble outputs {} classes but the split keeps {} in-distribution classes",
                    ens.num_classes(),
                    k_in
                )));
            }
            let (in_ds, _) = lastlayer::data::split_by_class(&raw_test, &split)?;
            let out_ds = out_side_for_eval(&raw_test, &split)?;
            Ok((in_ds, out_ds, split))
        }
    }
}

/// Load a point-estimate baseline OOD summary and return its SR AUROC.
fn baseline_sr_auroc(path: &Path) -> Result<f64> {
    let baseline: OodSummary = load_json(path)?;
    if baseline.method.kind != SamplerKind::SgdPe {
        return Err(mismatch(format!(
            "baseline OOD summary {} is a {} run; the baseline must be sgd-pe",
            path.display(),
            baseline.method.kind
        )));
    }
    baseline.auroc_for(ConfidenceKind::Sr).ok_or_else(|| {
        mismatch(format!("baseline OOD summary {} has no sr AUROC", path.display()))
    })
}

pub fn run(cfg: &Effective, args: &OodArgs) -> Result<()> {
    ensure_out_dir(cfg)?;
    let ensemble_path = args
        .ensemble
        .clone()
        .unwrap_or_else(|| default_ensemble_path(cfg, args.kind, args.scope));
    let (ens, _) = load_ensemble(&ensemble_path)?;
    let kind = ens.kind();
    let scope = ens.scope();

    let stage_seed = seeding::derive(cfg.seed, "stage-ood");
    let mut manifest = stage_manifest("ood", cfg, stage_seed);
    manifest.input("ensemble", sha256_file(&ensemble_path)?);
    let (in_ds, out_ds, split) = ood_datasets(cfg, &ens, &mut manifest)?;

    let requested = parse_confidences(&args.confidence)?;
    let kinds = confidence_kinds(&ens, &requested)?;

    let baseline_path = args
        .baseline_report
        .clone()
        .or_else(|| cfg.ood.baseline_report.clone());
    let baseline = match &baseline_path {
        Some(path) => {
            manifest.input("baseline-report", sha256_file(path)?);
            Some(baseline_sr_auroc(path)?)
        }
        None => None,
    };
    let inputs_hash = manifest.inputs_hash();

    log::info!(
        "ood {} {}: {} in-test vs {} out-test examples (in-classes {:?})",
        kind,
        scope,
        in_ds.len(),
        out_ds.len(),
        split.in_classes().collect::<Vec<_>>()
    );
    let records_in = predict_dataset(&ens, &in_ds)?;
    let records_out = predict_dataset(&ens, &out_ds)?;

    let mut reports = Vec::with_capacity(kinds.len());
    for &ckind in &kinds {
        reports.push(ood_evaluate(&records_in, &records_out, ckind)?);
    }
    let max_auroc = reports
        .iter()
        .map(|r| r.auroc)
        .fold(f64::NEG_INFINITY, f64::max);
    let summary = OodSummary {
        schema_version: REPORT_SCHEMA_VERSION,
        manifest: Some(inputs_hash.clone()),
        method: MethodInfo::from_ensemble(&ens),
        n_in: records_in.len(),
        n_out: records_out.len(),
        reports,
        max_auroc,
        baseline_auroc: baseline,
        auroc_ratio: baseline.map(|b| max_auroc / b),
    };

    let out_path = cfg.ood_report_path(kind, scope);
    save_json(&summary, &out_path)?;
    finish_manifest(manifest, &[("ood-report", out_path.as_path())], &cfg.manifest_path("ood"))?;

    println!("method {kind} {scope} ({} samples)", summary.method.n_samples);
    for report in &summary.reports {
        println!(
            "auroc {} {:.4}  aupr-in {:.4}  aupr-out {:.4}",
            report.confidence, report.auroc, report.aupr_in, report.aupr_out
        );
    }
    println!("max-auroc {max_auroc:.4}");
    if let (Some(b), Some(ratio)) = (summary.baseline_auroc, summary.auroc_ratio) {
        println!("baseline-auroc {b:.4}");
        println!("auroc-ratio {ratio:.4}");
    }
    println!("wrote {}", out_path.display());
    Ok(())
}
