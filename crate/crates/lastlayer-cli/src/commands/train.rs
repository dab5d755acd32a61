//! `lastlayer train`: fit the stage-one network and persist θ*.

use lastlayer::network::{
    accuracy, save_params, train, Architecture, ParamsMeta, TrainConfig, PARAMS_FILE_VERSION,
};
use lastlayer::seeding;
use lastlayer::Result;

use super::{
    ensure_out_dir, finish_manifest, hash_idx_inputs, in_side, load_raw, stage_manifest,
    train_split,
};
use crate::config::Effective;

pub fn run(cfg: &Effective) -> Result<()> {
    ensure_out_dir(cfg)?;
    let (raw_train, raw_test) = load_raw(&cfg.data_dir)?;
    let split = train_split(cfg, raw_train.num_classes())?;
    let train_ds = in_side(&raw_train, split.as_ref())?;
    let test_ds = in_side(&raw_test, split.as_ref())?;

    let mut sizes = vec![train_ds.feature_dim()];
    sizes.extend(&cfg.train.hidden);
    sizes.push(train_ds.num_classes());
    let arch = Architecture::new(sizes)?;

    let stage_seed = seeding::derive(cfg.seed, "stage-train");
    let train_cfg = TrainConfig {
        learning_rate: cfg.train.learning_rate,
        batch_size: cfg.train.batch_size,
        epochs: cfg.train.epochs,
        optimizer: cfg.train.optimizer,
        seed: stage_seed,
    };

    let mut manifest = stage_manifest("train", cfg, stage_seed);
    hash_idx_inputs(&mut manifest, &cfg.data_dir)?;
    manifest.artifact_version("params", PARAMS_FILE_VERSION);
    let inputs_hash = manifest.inputs_hash();

    log::info!(
        "training {:?} on {} examples ({} epochs)",
        arch.sizes(),
        train_ds.len(),
        cfg.train.epochs
    );
    let started = std::time::Instant::now();
    let outcome = train(&train_ds, &arch, &train_cfg)?;
    let elapsed = started.elapsed();

    let train_acc = accuracy(&outcome.params, &train_ds)?;
    let test_acc = accuracy(&outcome.params, &test_ds)?;

    let params_path = cfg.params_path();
    let meta = ParamsMeta {
        manifest: Some(inputs_hash),
        note: Some("stage-one optimum".into()),
    };
    save_params(&outcome.params, &params_path, &meta)?;
    finish_manifest(
        manifest,
        &[("theta-star", params_path.as_path())],
        &cfg.manifest_path("train"),
    )?;

    println!("architecture {:?}", arch.sizes());
    println!("final loss {:.6}", outcome.final_loss);
    println!("train accuracy {train_acc:.4}");
    println!("test accuracy {test_acc:.4}");
    println!("elapsed {:.1}s", elapsed.as_secs_f64());
    println!("wrote {}", params_path.display());
    Ok(())
}
