//! `lastlayer sample`: build a posterior ensemble from θ*.
//!
//! Last-layer samplers run on the extracted-feature files (and verify that
//! those features came from the supplied network); full-network samplers run
//! on the raw training data. A diverging chain still writes whatever members
//! it completed, flagged in the ensemble's provenance, before the command
//! fails with the divergence exit code.

use std::path::{Path, PathBuf};

use lastlayer::data::{load_feature_file, Dataset};
use lastlayer::manifest::{sha256_file, RunManifest};
use lastlayer::network::{load_params, NetworkParams};
use lastlayer::samplers::{
    bootstrap_ensemble, mc_dropout_build, run_chain, save_ensemble, Ensemble, Provenance,
    SamplerConfig, SamplerKind, Scope, ENSEMBLE_FILE_VERSION,
};
use lastlayer::seeding;
use lastlayer::{Error, Result};

use super::{
    check_feature_meta, ensure_out_dir, finish_manifest, hash_idx_inputs, in_side, load_raw,
    stage_manifest, train_split,
};
use crate::config::Effective;

pub struct SampleArgs {
    pub kind: Option<SamplerKind>,
    pub scope: Option<Scope>,
    pub params: Option<PathBuf>,
}

/// Load the dataset a sampler of `scope` trains on, recording its lineage in
/// `manifest`.
pub fn sampling_dataset(
    cfg: &Effective,
    scope: Scope,
    theta_hash: &str,
    manifest: &mut RunManifest,
) -> Result<Dataset> {
    match scope {
        Scope::LastLayer => {
            let path = cfg.features_path("train");
            check_feature_meta(&path, theta_hash, "train")?;
            manifest.input("features-train", sha256_file(&path)?);
            load_feature_file(&path)
        }
        Scope::FullNetwork => {
            hash_idx_inputs(manifest, &cfg.data_dir)?;
            let (raw_train, _) = load_raw(&cfg.data_dir)?;
            let split = train_split(cfg, raw_train.num_classes())?;
            in_side(&raw_train, split.as_ref())
        }
    }
}

/// Dispatch one sampler configuration against its dataset.
pub fn build_ensemble(
    ds: &Dataset,
    theta_star: &NetworkParams,
    scfg: &SamplerConfig,
) -> Result<Ensemble> {
    match scfg.kind {
        SamplerKind::SgdPe => Ok(Ensemble::dirac(
            theta_star,
            scfg.scope,
            ds.content_hash(),
            scfg.seed,
        )),
        SamplerKind::Sgd | SamplerKind::Sgld => run_chain(ds, theta_star, scfg),
        SamplerKind::Bootstrap => bootstrap_ensemble(ds, theta_star, scfg),
        SamplerKind::McDropout => mc_dropout_build(ds, theta_star, scfg),
    }
}

pub fn run(cfg: &Effective, args: &SampleArgs) -> Result<()> {
    ensure_out_dir(cfg)?;
    let mut section = cfg.sample.clone();
    if let Some(kind) = args.kind {
        section.kind = kind;
    }
    if let Some(scope) = args.scope {
        section.scope = scope;
    }
    let stage_seed = seeding::derive(cfg.seed, "stage-sample");
    let scfg = section.to_sampler_config(stage_seed)?;

    let params_path = args.params.clone().unwrap_or_else(|| cfg.params_path());
    let (params, _) = load_params(&params_path)?;
    let theta_hash = params.content_hash();

    let mut manifest = stage_manifest("sample", cfg, stage_seed);
    manifest.input("theta-star", sha256_file(&params_path)?);
    manifest.artifact_version("ensemble", ENSEMBLE_FILE_VERSION);
    let ds = sampling_dataset(cfg, scfg.scope, &theta_hash, &mut manifest)?;
    let inputs_hash = manifest.inputs_hash();

    let out_path = cfg.ensemble_path(scfg.kind, scfg.scope);
    log::info!(
        "sampling {} {} ({} members) on {} examples",
        scfg.kind,
        scfg.scope,
        scfg.n_samples,
        ds.len()
    );
    match build_ensemble(&ds, &params, &scfg) {
        Ok(ens) => {
            save_ensemble(&ens, &out_path, Some(&inputs_hash))?;
            finish_manifest(
                manifest,
                &[("ensemble", out_path.as_path())],
                &cfg.manifest_path("sample"),
            )?;
            println!(
                "ensemble {} {} with {} members",
                scfg.kind,
                scfg.scope,
                ens.n_samples()
            );
            println!("wrote {}", out_path.display());
            Ok(())
        }
        Err(Error::ChainDiverged(divergence)) => {
            let summary = format!(
                "chain diverged at update {}: {} ({} members completed)",
                divergence.step,
                divergence.message,
                divergence.completed.len()
            );
            save_partial(
                cfg,
                divergence.completed,
                &scfg,
                &theta_hash,
                &ds,
                &out_path,
                &inputs_hash,
                manifest,
            )?;
            Err(Error::Divergence(summary))
        }
        Err(e) => Err(e),
    }
}

#[allow(clippy::too_many_arguments)]
fn save_partial(
    cfg: &Effective,
    completed: Vec<NetworkParams>,
    scfg: &SamplerConfig,
    theta_hash: &str,
    ds: &Dataset,
    out_path: &Path,
    inputs_hash: &str,
    manifest: RunManifest,
) -> Result<()> {
    if completed.is_empty() {
        log::warn!("no members completed before the divergence; nothing to save");
        return Ok(());
    }
    let provenance = Provenance {
        config: scfg.clone(),
        theta_star: theta_hash.to_string(),
        data: ds.content_hash(),
        diverged: false, // Ensemble::partial raises the flag
    };
    let partial = Ensemble::partial(completed, provenance)?;
    save_ensemble(&partial, out_path, Some(inputs_hash))?;
    finish_manifest(manifest, &[("ensemble", out_path)], &cfg.manifest_path("sample"))?;
    eprintln!(
        "saved partial ensemble ({} members, flagged diverged) to {}",
        partial.n_samples(),
        out_path.display()
    );
    Ok(())
}
