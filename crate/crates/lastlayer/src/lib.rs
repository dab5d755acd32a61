//! Two-stage uncertainty estimation for dense classifiers.
//!
//! Stage one trains a small fully connected network to convergence and treats its
//! penultimate activations as learned features. Stage two builds an approximate
//! posterior over either the last layer (on those features) or the full network,
//! using one of four samplers: plain SGD snapshots, SGLD, bootstrap retraining, or
//! MC-dropout. The resulting ensembles are scored with selective-classification
//! (risk–coverage / AURC), calibration (ECE / MCE), and out-of-distribution
//! (AUROC / AUPR) metrics.
//!
//! Module layout mirrors the pipeline:
//!
//! * [`data`] — datasets, IDX and feature-file I/O, class splits, bootstrap resampling
//! * [`network`] — dense nets, forward/backward, training, feature extraction
//! * [`samplers`] — posterior sampling (SGD/SGLD chains, bootstrap, MC-dropout)
//! * [`inference`] — predictive posterior, confidence functions, prediction records
//! * [`metrics`] — AURC, calibration, OOD detection, evaluation reports
//! * [`manifest`] — run manifests and content hashing for artifact provenance
//!
//! Everything is deterministic given the configured seeds: random streams are
//! ChaCha8 generators derived per purpose (see [`seeding`]), and all arithmetic is
//! f64 with fixed evaluation order.

pub mod data;
pub mod error;
pub mod inference;
pub mod manifest;
pub mod metrics;
pub mod network;
pub mod samplers;
pub mod seeding;

pub use error::{Error, Result};
