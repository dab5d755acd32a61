//! Posterior sampling over network parameters.
//!
//! All samplers share one shape: start from the stage-one optimum θ*, produce
//! an ensemble of parameter settings whose predictive distributions are later
//! averaged. The *scope* decides which parameters the posterior covers:
//!
//! * **last-layer** — only the output layer (W, b), trained on the extracted
//!   feature dataset R; members are single-layer networks over feature space.
//! * **full-network** — every parameter, trained on the raw inputs.
//!
//! Kinds:
//!
//! * `sgd-pe` — the point estimate θ* itself as a one-member ensemble.
//! * `sgd` — iterates of plain SGD saved every `n_thinning` updates.
//! * `sgld` — SGD drift plus `√(2γ/N)` Gaussian noise per update
//!   (stochastic-gradient Langevin dynamics), same thinning scheme.
//! * `bootstrap` — retrain on resampled datasets, one member per resample.
//! * `mc-dropout` — one dropout-trained network; members are stochastic
//!   forward passes with fresh inverted-dropout masks.

mod bootstrap;
mod chain;
mod dropout;
mod io;

pub use bootstrap::bootstrap_ensemble;
pub use chain::{
    run_chain, run_chain_on_target, sgd_step, sgld_step, synthetic_classification,
    ChainSettings, ClassificationTarget, PosteriorTarget, StochasticGradientTarget,
};
pub use dropout::mc_dropout_build;
pub use io::{load_ensemble, save_ensemble, ENSEMBLE_FILE_VERSION};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Classifier, NetworkParams};
use crate::seeding;

/// Which posterior approximation builds the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    SgdPe,
    Sgd,
    Sgld,
    Bootstrap,
    McDropout,
}

impl std::fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            SamplerKind::SgdPe => "sgd-pe",
            SamplerKind::Sgd => "sgd",
            SamplerKind::Sgld => "sgld",
            SamplerKind::Bootstrap => "bootstrap",
            SamplerKind::McDropout => "mc-dropout",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd-pe" => Ok(SamplerKind::SgdPe),
            "sgd" => Ok(SamplerKind::Sgd),
            "sgld" => Ok(SamplerKind::Sgld),
            "bootstrap" => Ok(SamplerKind::Bootstrap),
            "mc-dropout" => Ok(SamplerKind::McDropout),
            other => Err(Error::Config(format!(
                "unknown sampler kind {other:?} (expected sgd-pe, sgd, sgld, bootstrap, or mc-dropout)"
            ))),
        }
    }
}

/// Which parameters the posterior covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    LastLayer,
    FullNetwork,
}

impl std::fmt::Display for Scope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scope::LastLayer => "last-layer",
            Scope::FullNetwork => "full-network",
        })
    }
}

impl std::str::FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last-layer" => Ok(Scope::LastLayer),
            "full-network" => Ok(Scope::FullNetwork),
            other => Err(Error::Config(format!(
                "unknown scope {other:?} (expected last-layer or full-network)"
            ))),
        }
    }
}

/// Configuration for one sampler run. Kind-specific fields are `Option`s and
/// must be present exactly when their kind requires them — [`validate`]
/// enforces that in both directions.
///
/// [`validate`]: SamplerConfig::validate
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub scope: Scope,
    /// Ensemble size (chains: saved iterates; bootstrap: members; mc-dropout:
    /// stochastic forward passes at prediction time).
    pub n_samples: usize,
    /// Chain kinds only: updates between saved iterates. Defaults to
    /// `ceil(N / batch_size)` — one save per epoch — when left `None`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_thinning: Option<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Gaussian prior variance for the SGLD drift term (and for SGD when
    /// `sgd_prior` keeps the prior on).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_variance: Option<f64>,
    /// SGD-as-sampler shares the SGLD drift including the prior; set false to
    /// drop the prior term and take raw SGD steps. Ignored by other kinds.
    #[serde(default = "default_true")]
    pub sgd_prior: bool,
    /// MC-dropout only: unit drop probability, in (0,1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_drop: Option<f64>,
    /// Bootstrap and MC-dropout only: training epochs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_epochs: Option<usize>,
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

impl SamplerConfig {
    /// A one-member point-estimate "ensemble" of θ* itself.
    pub fn point_estimate(scope: Scope, seed: u64) -> Self {
        SamplerConfig {
            kind: SamplerKind::SgdPe,
            scope,
            n_samples: 1,
            n_thinning: None,
            learning_rate: 0.0,
            batch_size: 1,
            prior_variance: None,
            sgd_prior: true,
            p_drop: None,
            n_epochs: None,
            seed,
        }
    }

    /// Check every kind-specific requirement (present when needed, absent
    /// when not) plus the common ranges.
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be at least 1".into()));
        }
        let requires_prior = match self.kind {
            SamplerKind::Sgld => true,
            SamplerKind::Sgd => self.sgd_prior,
            _ => false,
        };
        if requires_prior {
            match self.prior_variance {
                Some(v) if v.is_finite() && v > 0.0 => {}
                Some(v) => {
                    return Err(Error::Config(format!(
                        "prior_variance must be positive and finite, got {v}"
                    )))
                }
                None => {
                    return Err(Error::Config(format!(
                        "{} requires prior_variance",
                        self.kind
                    )))
                }
            }
        } else if self.prior_variance.is_some() {
            return Err(Error::Config(format!(
                "prior_variance is not used by {}{}",
                self.kind,
                if self.kind == SamplerKind::Sgd { " with sgd_prior = false" } else { "" }
            )));
        }
        let is_chain = matches!(self.kind, SamplerKind::Sgd | SamplerKind::Sgld);
        if !is_chain && self.n_thinning.is_some() {
            return Err(Error::Config(format!("n_thinning is not used by {}", self.kind)));
        }
        if let Some(t) = self.n_thinning {
            if t == 0 {
                return Err(Error::Config("n_thinning must be at least 1".into()));
            }
        }
        let trains = self.kind != SamplerKind::SgdPe;
        if trains {
            if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
                return Err(Error::Config(format!(
                    "learning rate must be positive and finite, got {}",
                    self.learning_rate
                )));
            }
            if self.batch_size == 0 {
                return Err(Error::Config("batch size must be at least 1".into()));
            }
        } else if self.n_samples != 1 {
            return Err(Error::Config(format!(
                "sgd-pe is a point estimate: n_samples must be 1, got {}",
                self.n_samples
            )));
        }
        let needs_epochs = matches!(self.kind, SamplerKind::Bootstrap | SamplerKind::McDropout);
        match (needs_epochs, self.n_epochs) {
            (true, None) => {
                return Err(Error::Config(format!("{} requires n_epochs", self.kind)))
            }
            (true, Some(0)) => {
                return Err(Error::Config("n_epochs must be at least 1".into()))
            }
            (false, Some(_)) => {
                return Err(Error::Config(format!("n_epochs is not used by {}", self.kind)))
            }
            _ => {}
        }
        match (self.kind == SamplerKind::McDropout, self.p_drop) {
            (true, None) => {
                return Err(Error::Config("mc-dropout requires p_drop".into()))
            }
            (true, Some(p)) if !(p > 0.0 && p < 1.0) => {
                return Err(Error::Config(format!(
                    "p_drop must lie strictly inside (0,1), got {p}"
                )))
            }
            (false, Some(_)) => {
                return Err(Error::Config(format!("p_drop is not used by {}", self.kind)))
            }
            _ => {}
        }
        Ok(())
    }

    /// Effective thinning interval on a dataset of `n` examples: explicit
    /// value or one save per epoch.
    pub fn effective_thinning(&self, n: usize) -> usize {
        self.n_thinning.unwrap_or((n + self.batch_size - 1) / self.batch_size)
    }
}

/// Where an ensemble came from; stored inside the ensemble artifact and
/// verified by downstream consumers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// The exact sampler configuration that produced the members.
    pub config: SamplerConfig,
    /// Content hash of the stage-one network the sampler started from.
    pub theta_star: String,
    /// Content hash of the dataset the sampler trained on.
    pub data: String,
    /// True when the run diverged and the members are a prefix of the
    /// requested ensemble.
    #[serde(default)]
    pub diverged: bool,
}

/// MC-dropout "ensemble": one trained network plus the recipe for stochastic
/// forward passes.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutEnsemble {
    pub params: NetworkParams,
    pub p_drop: f64,
    /// Stochastic forward passes per prediction.
    pub n_passes: usize,
    /// Base seed for mask streams; combined with the example index so any
    /// traversal order yields the same masks.
    pub seed: u64,
    /// Mask the input vector itself (last-layer scope) rather than hidden
    /// activations (full-network scope).
    pub mask_input: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum EnsembleMembers {
    Parameters(Vec<NetworkParams>),
    Dropout(DropoutEnsemble),
}

/// A posterior ensemble: the product of every sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    members: EnsembleMembers,
    provenance: Provenance,
}

impl Ensemble {
    /// Build a parameter-member ensemble, validating that members exist and
    /// share one architecture.
    pub fn from_members(members: Vec<NetworkParams>, provenance: Provenance) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Config("ensemble needs at least one member".into()));
        }
        let arch = members[0].architecture();
        if let Some(bad) = members.iter().position(|m| m.architecture() != arch) {
            return Err(Error::Dimension(format!(
                "ensemble member {bad} has architecture {:?}, expected {:?}",
                members[bad].architecture().sizes(),
                arch.sizes()
            )));
        }
        Ok(Ensemble { members: EnsembleMembers::Parameters(members), provenance })
    }

    /// Build an MC-dropout ensemble.
    pub fn from_dropout(dropout: DropoutEnsemble, provenance: Provenance) -> Result<Self> {
        if dropout.n_passes == 0 {
            return Err(Error::Config("dropout ensemble needs at least one pass".into()));
        }
        if !(dropout.p_drop > 0.0 && dropout.p_drop < 1.0) {
            return Err(Error::Config(format!(
                "p_drop must lie strictly inside (0,1), got {}",
                dropout.p_drop
            )));
        }
        Ok(Ensemble { members: EnsembleMembers::Dropout(dropout), provenance })
    }

    /// Wrap members completed before a divergence into a flagged partial
    /// ensemble (see [`crate::error::ChainDivergence`]).
    pub fn partial(members: Vec<NetworkParams>, mut provenance: Provenance) -> Result<Self> {
        provenance.diverged = true;
        Ensemble::from_members(members, provenance)
    }

    /// The SGD point estimate as a one-member ensemble: θ* itself for
    /// full-network scope, its detached output layer for last-layer scope.
    pub fn dirac(theta_star: &NetworkParams, scope: Scope, data_hash: String, seed: u64) -> Self {
        let member = match scope {
            Scope::LastLayer => theta_star.detach_last_layer(),
            Scope::FullNetwork => theta_star.clone(),
        };
        let provenance = Provenance {
            config: SamplerConfig::point_estimate(scope, seed),
            theta_star: theta_star.content_hash(),
            data: data_hash,
            diverged: false,
        };
        Ensemble { members: EnsembleMembers::Parameters(vec![member]), provenance }
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn scope(&self) -> Scope {
        self.provenance.config.scope
    }

    pub fn kind(&self) -> SamplerKind {
        self.provenance.config.kind
    }

    /// Number of predictive samples each prediction averages over.
    pub fn n_samples(&self) -> usize {
        match &self.members {
            EnsembleMembers::Parameters(m) => m.len(),
            EnsembleMembers::Dropout(d) => d.n_passes,
        }
    }

    /// A single-sample ensemble carries no disagreement signal: its variance
    /// and vote-entropy confidences are identically zero and evaluation code
    /// reports only the softmax-response confidence.
    pub fn is_point_estimate(&self) -> bool {
        self.n_samples() == 1
    }

    /// Parameter members, when this is not a dropout ensemble.
    pub fn parameter_members(&self) -> Option<&[NetworkParams]> {
        match &self.members {
            EnsembleMembers::Parameters(m) => Some(m),
            EnsembleMembers::Dropout(_) => None,
        }
    }

    pub fn dropout(&self) -> Option<&DropoutEnsemble> {
        match &self.members {
            EnsembleMembers::Parameters(_) => None,
            EnsembleMembers::Dropout(d) => Some(d),
        }
    }

    fn first_params(&self) -> &NetworkParams {
        match &self.members {
            EnsembleMembers::Parameters(m) => &m[0],
            EnsembleMembers::Dropout(d) => &d.params,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.first_params().input_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.first_params().output_dim()
    }

    /// One predictive probability vector per posterior sample for example
    /// `x`. For parameter members these are the member softmax outputs in
    /// member order; for MC-dropout, `n_passes` stochastic forward passes
    /// whose masks are a pure function of (ensemble seed, `example_index`).
    pub fn predictive_samples(&self, x: ArrayView1<f64>, example_index: usize) -> Vec<Array1<f64>> {
        match &self.members {
            EnsembleMembers::Parameters(members) => members
                .iter()
                .map(|m| m.forward(x).expect("dimension checked by caller").probs)
                .collect(),
            EnsembleMembers::Dropout(d) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive_indexed(
                    d.seed,
                    "mask",
                    example_index as u64,
                ));
                (0..d.n_passes)
                    .map(|_| dropout::masked_forward(&d.params, x, d.p_drop, d.mask_input, &mut rng))
                    .collect()
            }
        }
    }

    /// Batch counterpart of [`predictive_samples`]: one probability matrix
    /// per posterior sample, rows aligned with `xs`. Numerically identical to
    /// calling `predictive_samples` per row for dropout ensembles; parameter
    /// members use batched matrix products.
    ///
    /// [`predictive_samples`]: Ensemble::predictive_samples
    pub fn predictive_samples_batch(
        &self,
        xs: ArrayView2<f64>,
        start_index: usize,
    ) -> Vec<Array2<f64>> {
        match &self.members {
            EnsembleMembers::Parameters(members) => members
                .iter()
                .map(|m| m.forward_batch(xs).expect("dimension checked by caller").probs)
                .collect(),
            EnsembleMembers::Dropout(d) => {
                let mut out =
                    vec![Array2::zeros((xs.nrows(), self.num_classes())); d.n_passes];
                for (i, row) in xs.rows().into_iter().enumerate() {
                    let samples = self.predictive_samples(row, start_index + i);
                    for (t, sample) in samples.into_iter().enumerate() {
                        out[t].row_mut(i).assign(&sample);
                    }
                }
                out
            }
        }
    }
}

impl Classifier for Ensemble {
    fn input_dim(&self) -> usize {
        Ensemble::input_dim(self)
    }

    fn num_classes(&self) -> usize {
        Ensemble::num_classes(self)
    }

    fn class_probabilities(&self, x: ArrayView1<f64>, example_index: usize) -> Array1<f64> {
        let samples = self.predictive_samples(x, example_index);
        let mut mean = Array1::zeros(self.num_classes());
        for s in &samples {
            mean += s;
        }
        mean / samples.len() as f64
    }

    fn class_probabilities_batch(&self, xs: ArrayView2<f64>, start_index: usize) -> Array2<f64> {
        let samples = self.predictive_samples_batch(xs, start_index);
        let mut mean = Array2::zeros((xs.nrows(), self.num_classes()));
        for s in &samples {
            mean += s;
        }
        mean / samples.len() as f64
    }
}

/// Free-function form of [`Ensemble::predictive_samples`].
pub fn draw_predictive_samples(
    ens: &Ensemble,
    x: ArrayView1<f64>,
    example_index: usize,
) -> Vec<Array1<f64>> {
    ens.predictive_samples(x, example_index)
}
