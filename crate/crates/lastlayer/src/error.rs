//! Crate-wide error type.

use std::path::PathBuf;

use crate::network::NetworkParams;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// I/O failure, tagged with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file did not parse as the expected format. `message` names the
    /// offending field (magic, count, payload length, ...).
    #[error("{file}: {message}")]
    Format { file: String, message: String },

    /// Shapes or dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A dataset violates its invariants (empty, inconsistent rows, ...).
    #[error("invalid dataset: {0}")]
    Dataset(String),

    /// A label is outside `0..num_classes`.
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    /// A configuration value is missing, superfluous, or out of range.
    #[error("invalid config: {0}")]
    Config(String),

    /// Training produced a non-finite loss.
    #[error("divergence: {0}")]
    Divergence(String),

    /// A sampling chain produced a non-finite loss mid-run. Carries the
    /// members completed before the failure so callers can persist a
    /// partial ensemble.
    #[error("chain diverged at update {}: {} ({} members completed)",
            .0.step, .0.message, .0.completed.len())]
    ChainDiverged(Box<ChainDivergence>),

    /// Cross-stage artifact checks failed (wrong parent hash, wrong scope,
    /// wrong class split, ...).
    #[error("artifact mismatch: {0}")]
    ArtifactMismatch(String),

    /// A selective-classification query selected no points.
    #[error("empty selection at threshold {threshold}")]
    EmptySelection { threshold: f64 },
}

/// Payload of [`Error::ChainDiverged`].
#[derive(Debug)]
pub struct ChainDivergence {
    /// 1-based index of the parameter update (for chains) or of the member
    /// training run (for bootstrap) that produced a non-finite value.
    pub step: usize,
    pub message: String,
    /// Members saved before the failure (possibly empty).
    pub completed: Vec<NetworkParams>,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(file: impl std::fmt::Display, message: impl Into<String>) -> Self {
        Error::Format { file: file.to_string(), message: message.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
