//! Bootstrap ensembles: retrain on resampled datasets.
//!
//! Each member draws its own dataset of N examples with replacement from the
//! training set, then runs plain SGD from θ* for `n_epochs`. The spread of
//! the resulting parameter settings reflects sampling variability of the data
//! rather than posterior noise injected into the updates.

use crate::data::{bootstrap_resample, Dataset};
use crate::error::{ChainDivergence, Error, Result};
use crate::network::{train_from, NetworkParams, OptimizerKind, TrainConfig};
use crate::samplers::{Ensemble, Provenance, SamplerConfig, SamplerKind, Scope};
use crate::seeding;

/// Build a bootstrap ensemble over `ds` starting each member at θ* (or its
/// detached last layer under last-layer scope).
///
/// Member `m` resamples with seed stream `("bootstrap-resample", m)` and
/// trains with seed stream `("bootstrap-train", m)`, so members are
/// independent and any one member is reproducible in isolation. A member
/// whose training diverges aborts the run; the members completed so far come
/// back inside [`Error::ChainDiverged`].
pub fn bootstrap_ensemble(
    ds: &Dataset,
    theta_star: &NetworkParams,
    cfg: &SamplerConfig,
) -> Result<Ensemble> {
    cfg.validate()?;
    if cfg.kind != SamplerKind::Bootstrap {
        return Err(Error::Config(format!(
            "bootstrap_ensemble builds bootstrap ensembles, not {}",
            cfg.kind
        )));
    }
    let base = match cfg.scope {
        Scope::LastLayer => theta_star.detach_last_layer(),
        Scope::FullNetwork => theta_star.clone(),
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
    let epochs = cfg.n_epochs.expect("validated above");
    let mut members = Vec::with_capacity(cfg.n_samples);
    for m in 0..cfg.n_samples {
        let resampled =
            bootstrap_resample(ds, seeding::derive_indexed(cfg.seed, "bootstrap-resample", m as u64));
        let train_cfg = TrainConfig {
            learning_rate: cfg.learning_rate,
            batch_size: cfg.batch_size,
            epochs,
            optimizer: OptimizerKind::Sgd,
            seed: seeding::derive_indexed(cfg.seed, "bootstrap-train", m as u64),
        };
        match train_from(base.clone(), &resampled, &train_cfg) {
            Ok(outcome) => members.push(outcome.params),
            Err(e) => {
                return Err(Error::ChainDiverged(Box::new(ChainDivergence {
                    step: m + 1,
                    message: format!("bootstrap member {m}: {e}"),
                    completed: members,
                })))
            }
        }
    }
    let provenance = Provenance {
        config: cfg.clone(),
        theta_star: theta_star.content_hash(),
        data: ds.content_hash(),
        diverged: false,
    };
    Ensemble::from_members(members, provenance)
}
