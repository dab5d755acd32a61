//! `lastlayer evaluate`: score an ensemble on the test set — accuracy, AURC
//! per confidence function, calibration, and CSV exports of the
//! risk–coverage curves, reliability diagram, and confidence histograms.

use std::path::{Path, PathBuf};

use lastlayer::data::{load_feature_file, Dataset};
use lastlayer::inference::{
    confidence_histogram, predict_dataset, save_records, ConfidenceKind, PredictionRecord,
};
use lastlayer::manifest::{sha256_file, RunManifest};
use lastlayer::metrics::{
    aurc, calibration, load_json, records_accuracy, save_curve_csv, save_json,
    save_reliability_csv, AurcEntry, MethodInfo, MetricReport, REPORT_SCHEMA_VERSION,
};
use lastlayer::samplers::{load_ensemble, Ensemble, SamplerKind, Scope};
use lastlayer::seeding;
use lastlayer::{Error, Result};

use super::{
    check_feature_meta, ensure_out_dir, finish_manifest, hash_idx_inputs, in_side, load_raw,
    mismatch, stage_manifest, train_split,
};
use crate::config::{parse_confidences, Effective};

pub struct EvaluateArgs {
    pub ensemble: Option<PathBuf>,
    pub baseline_report: Option<PathBuf>,
    pub confidence: Vec<String>,
    pub kind: Option<SamplerKind>,
    pub scope: Option<Scope>,
}

/// Default ensemble path from the effective kind/scope (flags override the
/// config file).
pub fn default_ensemble_path(cfg: &Effective, kind: Option<SamplerKind>, scope: Option<Scope>) -> PathBuf {
    cfg.ensemble_path(
        kind.unwrap_or(cfg.sample.kind),
        scope.unwrap_or(cfg.sample.scope),
    )
}

/// Load the test dataset matching the ensemble's scope, recording lineage.
/// Last-layer ensembles evaluate on extracted test features; full-network
/// ensembles on the raw (in-distribution) test set.
pub fn test_dataset(cfg: &Effective, ens: &Ensemble, manifest: &mut RunManifest) -> Result<Dataset> {
    match ens.scope() {
        Scope::LastLayer => {
            let path = cfg.features_path("test");
            verify_feature_lineage(&path, ens, "test")?;
            manifest.input("features-test", sha256_file(&path)?);
            load_feature_file(&path)
        }
        Scope::FullNetwork => {
            hash_idx_inputs(manifest, &cfg.data_dir)?;
            let (_, raw_test) = load_raw(&cfg.data_dir)?;
            let split = train_split(cfg, raw_test.num_classes())?;
            in_side(&raw_test, split.as_ref())
        }
    }
}

/// A feature file consumed alongside an ensemble must have been extracted by
/// the very network the ensemble was sampled from, and play the right role.
pub fn verify_feature_lineage(path: &Path, ens: &Ensemble, role: &str) -> Result<()> {
    check_feature_meta(path, &ens.provenance().theta_star, role)
}

/// The confidence functions to score: every function the ensemble supports,
/// optionally narrowed by an explicit request. Point estimates support only
/// SR — their disagreement confidences are identically zero.
pub fn confidence_kinds(ens: &Ensemble, requested: &[ConfidenceKind]) -> Result<Vec<ConfidenceKind>> {
    let available: &[ConfidenceKind] = if ens.is_point_estimate() {
        &[ConfidenceKind::Sr]
    } else {
        &ConfidenceKind::ALL
    };
    if requested.is_empty() {
        return Ok(available.to_vec());
    }
    for kind in requested {
        if !available.contains(kind) {
            return Err(Error::Config(format!(
                "confidence {kind} is unavailable for a point estimate (only sr)"
            )));
        }
    }
    Ok(requested.to_vec())
}

/// Load a point-estimate baseline report and return its SR AURC.
pub fn baseline_sr_aurc(path: &Path) -> Result<f64> {
    let baseline: MetricReport = load_json(path)?;
    if baseline.method.kind != SamplerKind::SgdPe {
        return Err(mismatch(format!(
            "baseline report {} is a {} run; the normalization baseline must be sgd-pe",
            path.display(),
            baseline.method.kind
        )));
    }
    baseline.aurc_for(ConfidenceKind::Sr).ok_or_else(|| {
        mismatch(format!("baseline report {} has no sr AURC", path.display()))
    })
}

/// Score records under the given confidences into a `MetricReport`.
pub fn build_report(
    records: &[PredictionRecord],
    kinds: &[ConfidenceKind],
    method: MethodInfo,
    calibration_bins: usize,
    manifest: Option<String>,
    baseline: Option<f64>,
) -> Result<MetricReport> {
    let mut entries = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let (value, _) = aurc(records, kind)?;
        entries.push(AurcEntry { confidence: kind, aurc: value });
    }
    let min_aurc = entries
        .iter()
        .map(|e| e.aurc)
        .fold(f64::INFINITY, f64::min);
    Ok(MetricReport {
        schema_version: REPORT_SCHEMA_VERSION,
        manifest,
        method,
        n_test: records.len(),
        accuracy: records_accuracy(records)?,
        aurc: entries,
        min_aurc,
        baseline_aurc: baseline,
        normalized_min_aurc: baseline.map(|b| min_aurc / b),
        calibration: calibration(records, calibration_bins)?,
    })
}

pub fn run(cfg: &Effective, args: &EvaluateArgs) -> Result<()> {
    ensure_out_dir(cfg)?;
    let ensemble_path = args
        .ensemble
        .clone()
        .unwrap_or_else(|| default_ensemble_path(cfg, args.kind, args.scope));
    let (ens, _) = load_ensemble(&ensemble_path)?;
    let kind = ens.kind();
    let scope = ens.scope();

    let stage_seed = seeding::derive(cfg.seed, "stage-evaluate");
    let mut manifest = stage_manifest("evaluate", cfg, stage_seed);
    manifest.input("ensemble", sha256_file(&ensemble_path)?);
    let test_ds = test_dataset(cfg, &ens, &mut manifest)?;

    let requested = if args.confidence.is_empty() {
        parse_confidences(cfg.evaluate.confidence.as_deref().unwrap_or(&[]))?
    } else {
        parse_confidences(&args.confidence)?
    };
    let kinds = confidence_kinds(&ens, &requested)?;

    let baseline_path = args
        .baseline_report
        .clone()
        .or_else(|| cfg.evaluate.baseline_report.clone());
    let baseline = match &baseline_path {
        Some(path) => {
            manifest.input("baseline-report", sha256_file(path)?);
            Some(baseline_sr_aurc(path)?)
        }
        None => None,
    };
    let inputs_hash = manifest.inputs_hash();

    log::info!(
        "evaluating {} {} on {} test examples",
        kind,
        scope,
        test_ds.len()
    );
    let records = predict_dataset(&ens, &test_ds)?;
    let report = build_report(
        &records,
        &kinds,
        MethodInfo::from_ensemble(&ens),
        cfg.evaluate.calibration_bins,
        Some(inputs_hash.clone()),
        baseline,
    )?;

    let slug = format!("{kind}-{scope}");
    let report_path = cfg.report_path(kind, scope);
    save_json(&report, &report_path)?;
    let records_path = cfg.out_dir.join(format!("records-{slug}.csv"));
    save_records(&records, &records_path, Some(&inputs_hash), false)?;
    let reliability_path = cfg.out_dir.join(format!("reliability-{slug}.csv"));
    save_reliability_csv(&report.calibration, &reliability_path, Some(&inputs_hash))?;

    let mut outputs: Vec<(String, PathBuf)> = vec![
        ("report".into(), report_path.clone()),
        ("records".into(), records_path),
        ("reliability".into(), reliability_path),
    ];
    for &ckind in &kinds {
        let (_, curve) = aurc(&records, ckind)?;
        let curve_path = cfg.out_dir.join(format!("curve-{slug}-{ckind}.csv"));
        save_curve_csv(&curve, &curve_path, Some(&inputs_hash))?;
        outputs.push((format!("curve-{ckind}"), curve_path));
        let hist = confidence_histogram(&records, ckind, ens.num_classes(), cfg.evaluate.histogram_bins)?;
        let hist_path = cfg.out_dir.join(format!("histogram-{slug}-{ckind}.csv"));
        hist.save_csv(&hist_path, Some(&inputs_hash))?;
        outputs.push((format!("histogram-{ckind}"), hist_path));
    }
    let output_refs: Vec<(&str, &Path)> =
        outputs.iter().map(|(n, p)| (n.as_str(), p.as_path())).collect();
    finish_manifest(manifest, &output_refs, &cfg.manifest_path("evaluate"))?;

    println!("method {kind} {scope} ({} samples)", report.method.n_samples);
    println!("accuracy {:.4}", report.accuracy);
    for entry in &report.aurc {
        println!("aurc {} {:.6e}", entry.confidence, entry.aurc);
    }
    println!("min-aurc {:.6e}", report.min_aurc);
    if let (Some(b), Some(norm)) = (report.baseline_aurc, report.normalized_min_aurc) {
        println!("baseline-aurc {b:.6e}");
        println!("normalized-min-aurc {norm:.4}");
    }
    println!(
        "ece {:.4} mce {:.4}",
        report.calibration.ece, report.calibration.mce
    );
    println!("wrote {}", report_path.display());
    Ok(())
}
