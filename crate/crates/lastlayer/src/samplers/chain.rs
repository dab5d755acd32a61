//! SGD and SGLD sampling chains.
//!
//! Both chains iterate the same drift
//!
//! ```text
//! θ ← θ + γ · ( (1/|B|) Σ_{i∈B} ∇log p(y_i|x_i,θ)  +  ∇log prior(θ) / N )
//! ```
//!
//! over per-epoch reshuffled minibatches B; SGLD additionally injects
//! `√(2γ/N) · z` with `z` standard normal per coordinate. Every `n_thinning`
//! updates the current parameters are saved as an ensemble member — with the
//! default thinning of `⌈N/batch⌉` that is once per epoch. There is no
//! burn-in: chains start at the stage-one optimum θ*, which is the point of
//! initializing at a mode.
//!
//! The driver is generic over [`StochasticGradientTarget`] so the identical
//! update rule runs on classification posteriors and on synthetic targets
//! with known closed-form posteriors (the correctness diagnostics).

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::error::{ChainDivergence, Error, Result};
use crate::network::{loss_and_gradient, NetworkParams};
use crate::samplers::{Ensemble, Provenance, SamplerConfig, SamplerKind, Scope};
use crate::seeding;

/// A log-posterior whose likelihood part is estimated on minibatches — the
/// interface sampling chains step against.
///
/// Gradients are written into caller-provided buffers; chains call these once
/// per update and reuse allocations.
pub trait StochasticGradientTarget {
    /// Parameter dimension.
    fn dim(&self) -> usize;

    /// Number of data points N (scales the prior and the SGLD noise).
    fn num_data(&self) -> usize;

    /// Fill `grad` with the minibatch mean of per-example log-likelihood
    /// gradients, `(1/|B|) Σ_{i∈B} ∇log p(y_i|x_i,θ)`. Returns the minibatch
    /// mean negative log-likelihood, the chain's divergence monitor.
    fn loglik_grad(&mut self, theta: &[f64], batch: &[usize], grad: &mut [f64]) -> Result<f64>;

    /// Fill `grad` with `∇log prior(θ)`; all zeros for a flat (disabled)
    /// prior.
    fn prior_grad(&mut self, theta: &[f64], grad: &mut [f64]);
}

/// Dataset reference plus prior for a sampling run.
#[derive(Debug, Clone)]
pub struct PosteriorTarget<'a> {
    data: &'a Dataset,
    data_count: usize,
    /// `Some(v)`: zero-mean Gaussian prior with variance `v` per coordinate;
    /// `None`: flat prior (no drift contribution).
    prior_variance: Option<f64>,
}

impl<'a> PosteriorTarget<'a> {
    pub fn new(data: &'a Dataset, prior_variance: Option<f64>) -> Result<Self> {
        if let Some(v) = prior_variance {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Config(format!(
                    "prior variance must be positive and finite, got {v}"
                )));
            }
        }
        Ok(PosteriorTarget { data, data_count: data.len(), prior_variance })
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    /// N; equals `data().len()` by construction.
    pub fn data_count(&self) -> usize {
        self.data_count
    }

    pub fn prior_variance(&self) -> Option<f64> {
        self.prior_variance
    }
}

/// Softmax-classification log-posterior over the parameters of a dense
/// network: log-likelihood is negative cross-entropy on the target dataset,
/// prior is the optional Gaussian from the [`PosteriorTarget`].
pub struct ClassificationTarget<'a> {
    posterior: PosteriorTarget<'a>,
    /// Working parameter buffer; architecture fixes the flat coordinates.
    params: NetworkParams,
}

impl<'a> ClassificationTarget<'a> {
    pub fn new(posterior: PosteriorTarget<'a>, template: NetworkParams) -> Result<Self> {
        if template.input_dim() != posterior.data().feature_dim() {
            return Err(Error::Dimension(format!(
                "network expects {} inputs, dataset has {}",
                template.input_dim(),
                posterior.data().feature_dim()
            )));
        }
        if template.output_dim() != posterior.data().num_classes() {
            return Err(Error::Dimension(format!(
                "network outputs {} classes, dataset has {}",
                template.output_dim(),
                posterior.data().num_classes()
            )));
        }
        Ok(ClassificationTarget { posterior, params: template })
    }
}

impl StochasticGradientTarget for ClassificationTarget<'_> {
    fn dim(&self) -> usize {
        self.params.num_params()
    }

    fn num_data(&self) -> usize {
        self.posterior.data_count()
    }

    fn loglik_grad(&mut self, theta: &[f64], batch: &[usize], grad: &mut [f64]) -> Result<f64> {
        self.params.unflatten_from(theta)?;
        let (xs, ys) = self.posterior.data().batch(batch);
        let (nll, ce_grad) = loss_and_gradient(&self.params, xs.view(), &ys)?;
        // ∇ log-likelihood = -∇ cross-entropy
        ce_grad.flatten_into(grad)?;
        for g in grad.iter_mut() {
            *g = -*g;
        }
        Ok(nll)
    }

    fn prior_grad(&mut self, theta: &[f64], grad: &mut [f64]) {
        match self.posterior.prior_variance() {
            Some(v) => {
                for (g, &t) in grad.iter_mut().zip(theta) {
                    *g = -t / v;
                }
            }
            None => grad.fill(0.0),
        }
    }
}

/// One SGLD update with explicit noise (one standard-normal draw per
/// coordinate): `θ' = θ + γ(L + P/N) + √(2γ/N)·z` where L is the minibatch
/// log-likelihood gradient and P the prior gradient.
pub fn sgld_step<T: StochasticGradientTarget>(
    theta: &[f64],
    batch: &[usize],
    learning_rate: f64,
    target: &mut T,
    noise: &[f64],
) -> Result<Vec<f64>> {
    if theta.len() != target.dim() {
        return Err(Error::Dimension(format!(
            "theta has {} coordinates, target has {}",
            theta.len(),
            target.dim()
        )));
    }
    if noise.len() != theta.len() {
        return Err(Error::Dimension(format!(
            "noise has {} coordinates, theta has {}",
            noise.len(),
            theta.len()
        )));
    }
    let dim = theta.len();
    let mut loglik = vec![0.0; dim];
    let nll = target.loglik_grad(theta, batch, &mut loglik)?;
    if !nll.is_finite() {
        return Err(Error::Divergence(format!("non-finite minibatch loss {nll}")));
    }
    let mut prior = vec![0.0; dim];
    target.prior_grad(theta, &mut prior);
    let n = target.num_data() as f64;
    let noise_scale = (2.0 * learning_rate / n).sqrt();
    let mut out = Vec::with_capacity(dim);
    for i in 0..dim {
        out.push(theta[i] + learning_rate * (loglik[i] + prior[i] / n) + noise_scale * noise[i]);
    }
    Ok(out)
}

/// One SGD update: exactly [`sgld_step`] with an all-zero noise vector (the
/// noise term then contributes `+0.0` to every coordinate).
pub fn sgd_step<T: StochasticGradientTarget>(
    theta: &[f64],
    batch: &[usize],
    learning_rate: f64,
    target: &mut T,
) -> Result<Vec<f64>> {
    sgld_step(theta, batch, learning_rate, target, &vec![0.0; theta.len()])
}

/// Chain parameters for [`run_chain_on_target`].
#[derive(Debug, Clone)]
pub struct ChainSettings {
    /// Inject SGLD noise; false runs the plain SGD chain.
    pub sgld: bool,
    pub n_samples: usize,
    pub n_thinning: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

struct ChainFailure {
    step: usize,
    message: String,
    completed: Vec<Vec<f64>>,
}

/// The one chain loop both public entry points share. Minibatches partition a
/// per-epoch reshuffled permutation (the final batch of an epoch may be
/// short); shuffling and noise use separate seed streams.
fn drive_chain<T: StochasticGradientTarget>(
    target: &mut T,
    theta0: &[f64],
    settings: &ChainSettings,
) -> std::result::Result<Vec<Vec<f64>>, Box<ChainFailure>> {
    let dim = target.dim();
    debug_assert_eq!(theta0.len(), dim);
    let n = target.num_data();
    let n_f = n as f64;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seeding::derive(settings.seed, "shuffle"));
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seeding::derive(settings.seed, "noise"));
    let mut perm: Vec<usize> = (0..n).collect();
    let mut pos = n; // forces a shuffle before the first batch
    let mut theta = theta0.to_vec();
    let mut loglik = vec![0.0; dim];
    let mut prior = vec![0.0; dim];
    let mut noise = vec![0.0; dim];
    let noise_scale = if settings.sgld {
        (2.0 * settings.learning_rate / n_f).sqrt()
    } else {
        0.0
    };
    let mut samples: Vec<Vec<f64>> = Vec::with_capacity(settings.n_samples);
    let mut step = 0usize;
    for _ in 0..settings.n_samples {
        for _ in 0..settings.n_thinning {
            step += 1;
            if pos >= n {
                perm.shuffle(&mut shuffle_rng);
                pos = 0;
            }
            let end = (pos + settings.batch_size).min(n);
            let batch = &perm[pos..end];
            pos = end;
            let nll = match target.loglik_grad(&theta, batch, &mut loglik) {
                Ok(v) => v,
                Err(e) => {
                    return Err(Box::new(ChainFailure {
                        step,
                        message: e.to_string(),
                        completed: samples,
                    }))
                }
            };
            if !nll.is_finite() {
                return Err(Box::new(ChainFailure {
                    step,
                    message: format!("non-finite minibatch loss {nll}"),
                    completed: samples,
                }));
            }
            target.prior_grad(&theta, &mut prior);
            if settings.sgld {
                for z in noise.iter_mut() {
                    *z = StandardNormal.sample(&mut noise_rng);
                }
            }
            for i in 0..dim {
                theta[i] += settings.learning_rate * (loglik[i] + prior[i] / n_f)
                    + noise_scale * noise[i];
            }
        }
        if let Some(bad) = theta.iter().find(|v| !v.is_finite()) {
            return Err(Box::new(ChainFailure {
                step,
                message: format!("non-finite parameter {bad} after update"),
                completed: samples,
            }));
        }
        samples.push(theta.clone());
    }
    Ok(samples)
}

/// Run a chain against an arbitrary target, returning the thinned iterates as
/// flat vectors. Divergence is reported as an error (the partial iterate list
/// is dropped here — classification runs go through [`run_chain`], which
/// preserves partial ensembles).
pub fn run_chain_on_target<T: StochasticGradientTarget>(
    target: &mut T,
    theta0: &[f64],
    settings: &ChainSettings,
) -> Result<Vec<Vec<f64>>> {
    validate_settings(settings)?;
    if theta0.len() != target.dim() {
        return Err(Error::Dimension(format!(
            "theta0 has {} coordinates, target has {}",
            theta0.len(),
            target.dim()
        )));
    }
    drive_chain(target, theta0, settings).map_err(|f| {
        Error::Divergence(format!(
            "chain diverged at update {}: {} ({} iterates completed)",
            f.step,
            f.message,
            f.completed.len()
        ))
    })
}

fn validate_settings(settings: &ChainSettings) -> Result<()> {
    if settings.n_samples == 0 || settings.n_thinning == 0 {
        return Err(Error::Config(
            "n_samples and n_thinning must be at least 1".into(),
        ));
    }
    if !settings.learning_rate.is_finite() || settings.learning_rate <= 0.0 {
        return Err(Error::Config(format!(
            "learning rate must be positive and finite, got {}",
            settings.learning_rate
        )));
    }
    if settings.batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    Ok(())
}

/// Run an SGD or SGLD chain from θ* over `ds` and collect the thinned
/// iterates into an ensemble.
///
/// Scope selects the coordinates: last-layer chains step only the detached
/// output layer (on the feature dataset R), leaving every other parameter of
/// θ* untouched; full-network chains step everything (on raw inputs). On a
/// non-finite loss or parameter, the members saved so far are returned inside
/// [`Error::ChainDiverged`].
pub fn run_chain(ds: &Dataset, theta_star: &NetworkParams, cfg: &SamplerConfig) -> Result<Ensemble> {
    cfg.validate()?;
    if !matches!(cfg.kind, SamplerKind::Sgd | SamplerKind::Sgld) {
        return Err(Error::Config(format!(
            "run_chain drives sgd and sgld chains, not {}",
            cfg.kind
        )));
    }
    let base = match cfg.scope {
        Scope::LastLayer => theta_star.detach_last_layer(),
        Scope::FullNetwork => theta_star.clone(),
    };
    let prior_variance = match cfg.kind {
        SamplerKind::Sgld => cfg.prior_variance,
        SamplerKind::Sgd if cfg.sgd_prior => cfg.prior_variance,
        _ => None,
    };
    let posterior = PosteriorTarget::new(ds, prior_variance)?;
    let mut target = ClassificationTarget::new(posterior, base.clone())?;
    let theta0 = base.to_flat();
    let settings = ChainSettings {
        sgld: cfg.kind == SamplerKind::Sgld,
        n_samples: cfg.n_samples,
        n_thinning: cfg.effective_thinning(ds.len()),
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
    };
    let provenance = Provenance {
        config: cfg.clone(),
        theta_star: theta_star.content_hash(),
        data: ds.content_hash(),
        diverged: false,
    };
    let unflatten = |flat: &[f64]| -> NetworkParams {
        let mut p = base.clone();
        p.unflatten_from(flat).expect("chain coordinates match the template");
        p
    };
    match drive_chain(&mut target, &theta0, &settings) {
        Ok(flats) => {
            let members = flats.iter().map(|f| unflatten(f)).collect();
            Ensemble::from_members(members, provenance)
        }
        Err(failure) => Err(Error::ChainDiverged(Box::new(ChainDivergence {
            step: failure.step,
            message: failure.message,
            completed: failure.completed.iter().map(|f| unflatten(f)).collect(),
        }))),
    }
}

/// Deterministic synthetic minibatch dataset for chain tests and diagnostics
/// wanting a [`Dataset`]: features are standard-normal draws, labels follow a
/// random linear score with the requested class count.
pub fn synthetic_classification(
    n: usize,
    dim: usize,
    classes: usize,
    seed: u64,
) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let features = Array2::from_shape_simple_fn((n, dim), || draw(&mut rng));
    let directions = Array2::from_shape_simple_fn((classes, dim), || draw(&mut rng));
    let scores = features.dot(&directions.t());
    let labels = scores
        .rows()
        .into_iter()
        .map(|row| crate::network::argmax_lowest(row))
        .collect();
    Dataset::new(features, labels, classes)
}
