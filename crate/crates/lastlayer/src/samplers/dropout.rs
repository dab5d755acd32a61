//! MC-dropout: train one network under inverted dropout, predict by
//! averaging stochastic forward passes.
//!
//! Training multiplies the masked activations by `1/(1-p)` so the expected
//! activation matches the mask-free network; prediction keeps dropout *on*
//! and treats each masked pass as one posterior sample. Scope picks the
//! masked units: last-layer drops entries of the feature vector feeding the
//! detached output layer, full-network drops hidden activations of the whole
//! net.

use ndarray::{Array1, ArrayView1};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::{
    softmax, train_with_dropout, DropoutPlan, NetworkParams, OptimizerKind, TrainConfig,
};
use crate::samplers::{DropoutEnsemble, Ensemble, Provenance, SamplerConfig, SamplerKind, Scope};

/// Train the MC-dropout network from θ* and package it as an ensemble whose
/// members are `n_samples` stochastic forward passes.
pub fn mc_dropout_build(
    ds: &Dataset,
    theta_star: &NetworkParams,
    cfg: &SamplerConfig,
) -> Result<Ensemble> {
    cfg.validate()?;
    if cfg.kind != SamplerKind::McDropout {
        return Err(Error::Config(format!(
            "mc_dropout_build builds mc-dropout ensembles, not {}",
            cfg.kind
        )));
    }
    let (base, mask_input) = match cfg.scope {
        Scope::LastLayer => (theta_star.detach_last_layer(), true),
        Scope::FullNetwork => (theta_star.clone(), false),
    };
    if base.input_dim() != ds.feature_dim() {
        return Err(Error::Dimension(format!(
            "network expects {} inputs, dataset has {}",
            base.input_dim(),
            ds.feature_dim()
        )));
    }
    if base.output_dim() != ds.num_classes() {
        return Err(Error::Dimension(format!(
            "network outputs {} classes, dataset has {}",
            base.output_dim(),
            ds.num_classes()
        )));
    }
    let p_drop = cfg.p_drop.expect("validated above");
    let train_cfg = TrainConfig {
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        epochs: cfg.n_epochs.expect("validated above"),
        optimizer: OptimizerKind::Sgd,
        seed: cfg.seed,
    };
    let outcome = train_with_dropout(base, ds, &train_cfg, Some(DropoutPlan { p: p_drop, mask_input }))?;
    let provenance = Provenance {
        config: cfg.clone(),
        theta_star: theta_star.content_hash(),
        data: ds.content_hash(),
        diverged: false,
    };
    Ensemble::from_dropout(
        DropoutEnsemble {
            params: outcome.params,
            p_drop,
            n_passes: cfg.n_samples,
            seed: cfg.seed,
            mask_input,
        },
        provenance,
    )
}

/// One stochastic forward pass for a single example. Draws one uniform per
/// masked unit in a fixed order — input vector first (when `mask_input`),
/// then each hidden layer's activations front to back — so a given RNG state
/// yields exactly one mask configuration.
pub(crate) fn masked_forward(
    params: &NetworkParams,
    x: ArrayView1<f64>,
    p_drop: f64,
    mask_input: bool,
    rng: &mut ChaCha8Rng,
) -> Array1<f64> {
    let keep_scale = 1.0 / (1.0 - p_drop);
    let mut mask = |a: &mut Array1<f64>| {
        for v in a.iter_mut() {
            if rng.gen::<f64>() < p_drop {
                *v = 0.0;
            } else {
                *v *= keep_scale;
            }
        }
    };
    let mut a = x.to_owned();
    if mask_input {
        mask(&mut a);
    }
    let layers = params.layers();
    for layer in &layers[..layers.len() - 1] {
        let mut z = layer.weights.dot(&a) + &layer.bias;
        z.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 });
        mask(&mut z);
        a = z;
    }
    let last = layers.last().expect("at least one layer");
    let z = last.weights.dot(&a) + &last.bias;
    softmax(z.view())
}
