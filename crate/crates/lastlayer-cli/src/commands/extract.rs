//! `lastlayer extract`: run the trained network over the raw datasets and
//! save penultimate-layer features — the stage-two training set.

use std::path::PathBuf;

use lastlayer::data::{save_feature_file, FeatureMeta, FEATURE_FILE_VERSION};
use lastlayer::manifest::sha256_file;
use lastlayer::network::{extract_features, load_params};
use lastlayer::seeding;
use lastlayer::Result;

use super::{
    ensure_out_dir, finish_manifest, hash_idx_inputs, in_side, load_raw, out_side_for_eval,
    stage_manifest, train_split,
};
use crate::config::Effective;

pub fn run(cfg: &Effective, params_path: Option<PathBuf>) -> Result<()> {
    ensure_out_dir(cfg)?;
    let params_path = params_path.unwrap_or_else(|| cfg.params_path());
    let (params, _meta) = load_params(&params_path)?;
    let theta_hash = params.content_hash();

    let (raw_train, raw_test) = load_raw(&cfg.data_dir)?;
    let split = train_split(cfg, raw_train.num_classes())?;
    let train_ds = in_side(&raw_train, split.as_ref())?;
    let test_ds = in_side(&raw_test, split.as_ref())?;

    let stage_seed = seeding::derive(cfg.seed, "stage-extract");
    let mut manifest = stage_manifest("extract", cfg, stage_seed);
    hash_idx_inputs(&mut manifest, &cfg.data_dir)?;
    manifest.input("theta-star", sha256_file(&params_path)?);
    manifest.artifact_version("features", FEATURE_FILE_VERSION);
    let inputs_hash = manifest.inputs_hash();

    let meta = |role: &str| FeatureMeta {
        manifest: Some(inputs_hash.clone()),
        theta_star: Some(theta_hash.clone()),
        split: split.clone(),
        role: Some(role.to_string()),
    };

    let feats_train = extract_features(&params, &train_ds)?;
    let feats_test = extract_features(&params, &test_ds)?;
    let train_path = cfg.features_path("train");
    let test_path = cfg.features_path("test");
    save_feature_file(&feats_train, &train_path, &meta("train"))?;
    save_feature_file(&feats_test, &test_path, &meta("test"))?;
    println!(
        "wrote {} ({} x {})",
        train_path.display(),
        feats_train.len(),
        feats_train.feature_dim()
    );
    println!(
        "wrote {} ({} x {})",
        test_path.display(),
        feats_test.len(),
        feats_test.feature_dim()
    );

    let mut outputs: Vec<(&str, std::path::PathBuf)> = vec![
        ("features-train", train_path),
        ("features-test", test_path),
    ];
    if let Some(split) = &split {
        // features of the held-out classes, for the OOD stage
        let out_ds = out_side_for_eval(&raw_test, split)?;
        let feats_out = extract_features(&params, &out_ds)?;
        let out_path = cfg.features_path("out-test");
        save_feature_file(&feats_out, &out_path, &meta("out-test"))?;
        println!(
            "wrote {} ({} x {})",
            out_path.display(),
            feats_out.len(),
            feats_out.feature_dim()
        );
        outputs.push(("features-out-test", out_path));
    }

    let output_refs: Vec<(&str, &std::path::Path)> =
        outputs.iter().map(|(n, p)| (*n, p.as_path())).collect();
    finish_manifest(manifest, &output_refs, &cfg.manifest_path("extract"))?;
    Ok(())
}
