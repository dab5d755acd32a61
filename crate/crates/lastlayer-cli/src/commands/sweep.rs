//! `lastlayer sweep`: grid-search sampler hyper-parameters.
//!
//! The grid is the cartesian product of the configured learning rates,
//! ensemble sizes, and (for mc-dropout) drop probabilities. Every point gets
//! its own derived seed, so results do not depend on execution order and the
//! sweep is reproducible point-by-point. Points run sequentially unless
//! `--jobs` asks for more workers. A failing point is recorded in the results
//! table and the sweep moves on; the command only fails if *every* point does.
//!
//! Per-point metric reports are written under `out/sweep/`; the ensembles
//! themselves are deliberately not persisted (a full-network grid would write
//! hundreds of megabytes of members that the results table already
//! summarizes). Re-run `sample` with the winning settings to keep one.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use lastlayer::data::{load_feature_file, Dataset};
use lastlayer::inference::predict_dataset;
use lastlayer::manifest::sha256_file;
use lastlayer::metrics::{save_json, MethodInfo, MetricReport};
use lastlayer::network::{load_params, NetworkParams};
use lastlayer::samplers::{SamplerConfig, SamplerKind, Scope};
use lastlayer::seeding;
use lastlayer::{Error, Result};

use super::evaluate::{build_report, confidence_kinds};
use super::sample::build_ensemble;
use super::{
    check_feature_meta, ensure_out_dir, finish_manifest, hash_idx_inputs, in_side, load_raw,
    stage_manifest, train_split,
};
use crate::config::{Effective, Objective};

pub struct SweepArgs {
    pub kind: Option<SamplerKind>,
    pub scope: Option<Scope>,
    pub params: Option<PathBuf>,
    pub jobs: usize,
}

/// One grid point: the swept values plus the fully resolved sampler config.
struct Point {
    index: usize,
    learning_rate: f64,
    n_samples: usize,
    p_drop: Option<f64>,
    scfg: SamplerConfig,
}

enum Outcome {
    Done(MetricReport),
    Failed(String),
}

pub fn run(cfg: &Effective, args: &SweepArgs) -> Result<()> {
    ensure_out_dir(cfg)?;
    let sweep = cfg.sweep.as_ref().ok_or_else(|| {
        Error::Config("sweep needs a [sweep] section in the config file".into())
    })?;

    let mut section = cfg.sample.clone();
    if let Some(kind) = args.kind {
        section.kind = kind;
    }
    if let Some(scope) = args.scope {
        section.scope = scope;
    }
    if section.kind == SamplerKind::SgdPe {
        return Err(Error::Config(
            "sgd-pe is a deterministic point estimate with nothing to sweep; \
             pick a sampler kind via [sample] or --kind"
                .into(),
        ));
    }

    // Resolve the grid axes up front so a bad grid is a config error, not a
    // string of failed points.
    let learning_rates = sweep.learning_rates.values()?;
    let sample_counts = if sweep.n_samples.is_empty() {
        vec![section.n_samples]
    } else {
        sweep.n_samples.clone()
    };
    let drop_probs: Vec<Option<f64>> = if section.kind == SamplerKind::McDropout {
        if sweep.p_drop.is_empty() {
            vec![section.p_drop]
        } else {
            sweep.p_drop.iter().copied().map(Some).collect()
        }
    } else {
        if !sweep.p_drop.is_empty() {
            log::warn!("p_drop grid ignored: {} does not drop units", section.kind);
        }
        vec![None]
    };

    let stage_seed = seeding::derive(cfg.seed, "stage-sweep");
    let mut points = Vec::new();
    for &learning_rate in &learning_rates {
        for &n_samples in &sample_counts {
            for &p_drop in &drop_probs {
                let index = points.len();
                let mut point_section = section.clone();
                point_section.learning_rate = learning_rate;
                point_section.n_samples = n_samples;
                if p_drop.is_some() {
                    point_section.p_drop = p_drop;
                }
                let seed = seeding::derive_indexed(stage_seed, "sweep-point", index as u64);
                let scfg = point_section.to_sampler_config(seed)?;
                points.push(Point { index, learning_rate, n_samples, p_drop, scfg });
            }
        }
    }

    let params_path = args.params.clone().unwrap_or_else(|| cfg.params_path());
    let (params, _) = load_params(&params_path)?;
    let theta_hash = params.content_hash();

    let mut manifest = stage_manifest("sweep", cfg, stage_seed);
    manifest.input("theta-star", sha256_file(&params_path)?);
    let (train_ds, test_ds) = match section.scope {
        Scope::LastLayer => {
            let train_path = cfg.features_path("train");
            let test_path = cfg.features_path("test");
            check_feature_meta(&train_path, &theta_hash, "train")?;
            check_feature_meta(&test_path, &theta_hash, "test")?;
            manifest.input("features-train", sha256_file(&train_path)?);
            manifest.input("features-test", sha256_file(&test_path)?);
            (load_feature_file(&train_path)?, load_feature_file(&test_path)?)
        }
        Scope::FullNetwork => {
            hash_idx_inputs(&mut manifest, &cfg.data_dir)?;
            let (raw_train, raw_test) = load_raw(&cfg.data_dir)?;
            let split = train_split(cfg, raw_train.num_classes())?;
            (in_side(&raw_train, split.as_ref())?, in_side(&raw_test, split.as_ref())?)
        }
    };
    let inputs_hash = manifest.inputs_hash();

    log::info!(
        "sweeping {} {} over {} points ({} workers)",
        section.kind,
        section.scope,
        points.len(),
        args.jobs.max(1)
    );
    let outcomes = run_points(
        &points,
        &train_ds,
        &test_ds,
        &params,
        cfg.evaluate.calibration_bins,
        &inputs_hash,
        args.jobs.max(1),
    );

    // Persist per-point reports, then rank: successes by objective ascending,
    // failures last, ties broken by point index so reruns order identically.
    let sweep_dir = cfg.out_dir.join("sweep");
    fs::create_dir_all(&sweep_dir).map_err(|source| Error::Io {
        path: sweep_dir.clone(),
        source,
    })?;
    let mut outputs: Vec<(String, PathBuf)> = Vec::new();
    for (point, outcome) in points.iter().zip(&outcomes) {
        if let Outcome::Done(report) = outcome {
            let path = sweep_dir.join(format!("report-point-{:02}.json", point.index));
            save_json(report, &path)?;
            outputs.push((format!("report-point-{:02}", point.index), path));
        }
    }

    let objective = sweep.objective;
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let va = objective_value(&outcomes[a], objective);
        let vb = objective_value(&outcomes[b], objective);
        match (va, vb) {
            (Some(x), Some(y)) => x.total_cmp(&y).then(a.cmp(&b)),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => a.cmp(&b),
        }
    });

    let results_path = cfg.out_dir.join("sweep-results.csv");
    write_results_csv(&results_path, &points, &outcomes, &order, objective, &inputs_hash)?;
    outputs.push(("results".into(), results_path.clone()));

    let succeeded = outcomes
        .iter()
        .filter(|o| matches!(o, Outcome::Done(_)))
        .count();
    for &i in &order {
        let point = &points[i];
        let label = describe(point);
        match &outcomes[i] {
            Outcome::Done(report) => match objective.extract(report) {
                Some(value) => println!("point {:02} {label} -> {objective} {value:.6e}", point.index),
                None => println!("point {:02} {label} -> {objective} unavailable", point.index),
            },
            Outcome::Failed(message) => {
                println!("point {:02} {label} -> failed: {message}", point.index)
            }
        }
    }

    let best = order
        .iter()
        .find(|&&i| objective_value(&outcomes[i], objective).is_some());
    if let Some(&i) = best {
        let point = &points[i];
        let Outcome::Done(report) = &outcomes[i] else { unreachable!() };
        let value = objective.extract(report).expect("ranked as scored");
        let best_doc = serde_json::json!({
            "manifest": inputs_hash,
            "objective": objective.to_string(),
            "value": value,
            "point": point.index,
            "kind": section.kind.to_string(),
            "scope": section.scope.to_string(),
            "learning_rate": point.learning_rate,
            "n_samples": point.n_samples,
            "p_drop": point.p_drop,
            "report": report,
        });
        let best_path = cfg.out_dir.join("sweep-best.json");
        save_json(&best_doc, &best_path)?;
        outputs.push(("best".into(), best_path.clone()));
        println!(
            "best point {:02} {} with {objective} {value:.6e}",
            point.index,
            describe(point)
        );
        println!("wrote {}", best_path.display());
    }
    println!("wrote {}", results_path.display());

    let output_refs: Vec<(&str, &Path)> =
        outputs.iter().map(|(n, p)| (n.as_str(), p.as_path())).collect();
    finish_manifest(manifest, &output_refs, &cfg.manifest_path("sweep"))?;

    if succeeded == 0 {
        return Err(Error::Divergence(format!(
            "all {} sweep points failed; see {}",
            points.len(),
            results_path.display()
        )));
    }
    Ok(())
}

/// Run every point, sequentially or on `jobs` worker threads. Outcomes land
/// at their point's index, so parallel runs produce identical output.
fn run_points(
    points: &[Point],
    train_ds: &Dataset,
    test_ds: &Dataset,
    params: &NetworkParams,
    calibration_bins: usize,
    inputs_hash: &str,
    jobs: usize,
) -> Vec<Outcome> {
    let run_one = |point: &Point| -> Outcome {
        log::info!("sweep point {:02}: {}", point.index, describe(point));
        match score_point(point, train_ds, test_ds, params, calibration_bins, inputs_hash) {
            Ok(report) => Outcome::Done(report),
            Err(e) => Outcome::Failed(e.to_string()),
        }
    };
    if jobs <= 1 || points.len() <= 1 {
        return points.iter().map(run_one).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Outcome>>> =
        Mutex::new((0..points.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(points.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= points.len() {
                    break;
                }
                let outcome = run_one(&points[i]);
                slots.lock().expect("sweep results lock")[i] = Some(outcome);
            });
        }
    });
    slots
        .into_inner()
        .expect("sweep results lock")
        .into_iter()
        .map(|slot| slot.expect("every point ran"))
        .collect()
}

fn score_point(
    point: &Point,
    train_ds: &Dataset,
    test_ds: &Dataset,
    params: &NetworkParams,
    calibration_bins: usize,
    inputs_hash: &str,
) -> Result<MetricReport> {
    let ens = build_ensemble(train_ds, params, &point.scfg)?;
    let records = predict_dataset(&ens, test_ds)?;
    let kinds = confidence_kinds(&ens, &[])?;
    build_report(
        &records,
        &kinds,
        MethodInfo::from_ensemble(&ens),
        calibration_bins,
        Some(inputs_hash.to_string()),
        None,
    )
}

fn objective_value(outcome: &Outcome, objective: Objective) -> Option<f64> {
    match outcome {
        Outcome::Done(report) => objective.extract(report),
        Outcome::Failed(_) => None,
    }
}

fn describe(point: &Point) -> String {
    let mut label = format!(
        "lr {:.3e} n_samples {}",
        point.learning_rate, point.n_samples
    );
    if let Some(p) = point.p_drop {
        let _ = write!(label, " p_drop {p}");
    }
    label
}

fn write_results_csv(
    path: &Path,
    points: &[Point],
    outcomes: &[Outcome],
    order: &[usize],
    objective: Objective,
    inputs_hash: &str,
) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# manifest: {inputs_hash}");
    let _ = writeln!(
        out,
        "point,learning_rate,n_samples,p_drop,objective,value,min_aurc,accuracy,status"
    );
    for &i in order {
        let point = &points[i];
        let p_drop = point.p_drop.map(|p| p.to_string()).unwrap_or_default();
        match &outcomes[i] {
            Outcome::Done(report) => {
                let value = objective
                    .extract(report)
                    .map(|v| format!("{v:.12e}"))
                    .unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{},{:e},{},{},{},{},{:.12e},{:.6},ok",
                    point.index,
                    point.learning_rate,
                    point.n_samples,
                    p_drop,
                    objective,
                    value,
                    report.min_aurc,
                    report.accuracy,
                );
            }
            Outcome::Failed(message) => {
                let clean = message.replace([',', '\n'], ";");
                let _ = writeln!(
                    out,
                    "{},{:e},{},{},{},,,,failed: {}",
                    point.index, point.learning_rate, point.n_samples, p_drop, objective, clean,
                );
            }
        }
    }
    fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
