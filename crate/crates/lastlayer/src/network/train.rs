//! Minibatch training of dense networks.

use ndarray::Zip;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::gradient::{loss_and_gradient_masked, DropoutMasks};
use crate::network::{Architecture, DenseLayer, NetworkParams};
use crate::seeding;

/// Adam moment decay for the gradient mean.
pub const ADAM_BETA1: f64 = 0.9;
/// Adam moment decay for the squared gradient.
pub const ADAM_BETA2: f64 = 0.999;
/// Adam denominator offset.
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    /// Plain SGD: `θ ← θ - γ g`.
    Sgd,
    /// Adam with the canonical constants above.
    Adam,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl TrainConfig {
    /// Learning rate must be finite and non-negative (zero is legal and
    /// leaves parameters untouched — useful as a diagnostic), batch size and
    /// epoch count at least one.
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epoch count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    /// Mean training loss over the final epoch (batch-size weighted).
    pub final_loss: f64,
}

/// Dropout applied during MC-dropout training; see the samplers module for
/// how the two scopes map onto `mask_input`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DropoutPlan {
    pub p: f64,
    /// Mask the input vectors themselves (last-layer scope) instead of only
    /// hidden activations (full-network scope).
    pub mask_input: bool,
}

/// Train a freshly initialized network (fan-in uniform init from the config
/// seed) on `ds`.
pub fn train(ds: &Dataset, arch: &Architecture, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if arch.output_dim() != ds.num_classes() {
        return Err(Error::Dimension(format!(
            "architecture outputs {} classes, dataset has {}",
            arch.output_dim(),
            ds.num_classes()
        )));
    }
    let params = NetworkParams::init(arch, seeding::derive(cfg.seed, "init"));
    train_from(params, ds, cfg)
}

/// Continue training from an existing parameter set (warm start). This is
/// the path posterior samplers use: bootstrap members and MC-dropout both
/// start at the stage-one optimum.
pub fn train_from(init: NetworkParams, ds: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_dropout(init, ds, cfg, None)
}

/// [`train_from`] with optional inverted dropout. Minibatch shuffling and
/// mask sampling use separate seed streams ("shuffle", "dropout"), so the
/// example order is identical with and without masking.
pub(crate) fn train_with_dropout(
    init: NetworkParams,
    ds: &Dataset,
    cfg: &TrainConfig,
    dropout: Option<DropoutPlan>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if let Some(plan) = dropout {
        if !(plan.p > 0.0 && plan.p < 1.0) {
            return Err(Error::Config(format!(
                "dropout probability must lie in (0,1), got {}",
                plan.p
            )));
        }
    }
    if init.input_dim() != ds.feature_dim() {
        return Err(Error::Dimension(format!(
            "network expects {} inputs, dataset has {}",
            init.input_dim(),
            ds.feature_dim()
        )));
    }
    if init.output_dim() != ds.num_classes() {
        return Err(Error::Dimension(format!(
            "network outputs {} classes, dataset has {}",
            init.output_dim(),
            ds.num_classes()
        )));
    }

    let mut params = init;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seeding::derive(cfg.seed, "shuffle"));
    let mut mask_rng = ChaCha8Rng::seed_from_u64(seeding::derive(cfg.seed, "dropout"));
    let mut optimizer = OptimizerState::new(cfg.optimizer, &params);
    let mut perm: Vec<usize> = (0..ds.len()).collect();
    let mut final_loss = f64::INFINITY;

    for epoch in 0..cfg.epochs {
        perm.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for (step, batch_idx) in perm.chunks(cfg.batch_size).enumerate() {
            let (xs, ys) = ds.batch(batch_idx);
            let masks = dropout.map(|plan| draw_masks(&plan, &params, batch_idx.len(), &mut mask_rng));
            let (loss, grad) = loss_and_gradient_masked(&params, xs.view(), &ys, masks.as_ref())
                .map_err(|e| match e {
                    Error::Divergence(msg) => {
                        Error::Divergence(format!("epoch {epoch}, update {step}: {msg}"))
                    }
                    other => other,
                })?;
            optimizer.apply(&mut params, &grad, cfg.learning_rate);
            epoch_loss += loss * batch_idx.len() as f64;
        }
        final_loss = epoch_loss / ds.len() as f64;
        log::debug!("epoch {epoch}: mean train loss {final_loss:.6}");
    }
    if !params.all_finite() {
        return Err(Error::Divergence(
            "non-finite parameters after training".into(),
        ));
    }
    Ok(TrainOutcome { params, final_loss })
}

/// Sample one batch worth of inverted-dropout multipliers. Draw order is
/// fixed: input mask first (if any), then hidden layers front to back, each
/// row-major.
fn draw_masks(
    plan: &DropoutPlan,
    params: &NetworkParams,
    batch: usize,
    rng: &mut ChaCha8Rng,
) -> DropoutMasks {
    let scale = 1.0 / (1.0 - plan.p);
    let mut draw = |rows: usize, cols: usize| {
        ndarray::Array2::from_shape_simple_fn((rows, cols), || {
            if rng.gen::<f64>() < plan.p {
                0.0
            } else {
                scale
            }
        })
    };
    let input = if plan.mask_input {
        Some(draw(batch, params.input_dim()))
    } else {
        None
    };
    let hidden = params.layers()[..params.layers().len() - 1]
        .iter()
        .map(|l| draw(batch, l.weights.nrows()))
        .collect();
    DropoutMasks { input, hidden }
}

enum OptimizerState {
    Sgd,
    Adam { m: Vec<DenseLayer>, v: Vec<DenseLayer>, t: u64 },
}

impl OptimizerState {
    fn new(kind: OptimizerKind, params: &NetworkParams) -> Self {
        match kind {
            OptimizerKind::Sgd => OptimizerState::Sgd,
            OptimizerKind::Adam => {
                let zeros = || {
                    params
                        .layers()
                        .iter()
                        .map(|l| DenseLayer {
                            weights: ndarray::Array2::zeros(l.weights.raw_dim()),
                            bias: ndarray::Array1::zeros(l.bias.raw_dim()),
                        })
                        .collect()
                };
                OptimizerState::Adam { m: zeros(), v: zeros(), t: 0 }
            }
        }
    }

    fn apply(&mut self, params: &mut NetworkParams, grad: &NetworkParams, lr: f64) {
        match self {
            OptimizerState::Sgd => {
                for (p, g) in params.layers.iter_mut().zip(grad.layers()) {
                    Zip::from(&mut p.weights)
                        .and(&g.weights)
                        .for_each(|p, &g| *p -= lr * g);
                    Zip::from(&mut p.bias).and(&g.bias).for_each(|p, &g| *p -= lr * g);
                }
            }
            OptimizerState::Adam { m, v, t } => {
                *t += 1;
                let bc1 = 1.0 - ADAM_BETA1.powi(*t as i32);
                let bc2 = 1.0 - ADAM_BETA2.powi(*t as i32);
                let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *p -= lr * mhat / (vhat.sqrt() + ADAM_EPSILON);
                };
                for ((p, g), (ml, vl)) in params
                    .layers
                    .iter_mut()
                    .zip(grad.layers())
                    .zip(m.iter_mut().zip(v.iter_mut()))
                {
                    Zip::from(&mut p.weights)
                        .and(&g.weights)
                        .and(&mut ml.weights)
                        .and(&mut vl.weights)
                        .for_each(|p, &g, m, v| update(p, g, m, v));
                    Zip::from(&mut p.bias)
                        .and(&g.bias)
                        .and(&mut ml.bias)
                        .and(&mut vl.bias)
                        .for_each(|p, &g, m, v| update(p, g, m, v));
                }
            }
        }
    }
}
