//! Run configuration: one declarative TOML file per run, with command-line
//! flags overriding file values and environment overrides limited to paths
//! (`LASTLAYER_DATA_DIR`, `LASTLAYER_OUT_DIR`).
//!
//! ```toml
//! seed = 42
//! data_dir = "data/mnist"
//! out_dir = "runs/mnist"
//!
//! [train]
//! hidden = [512, 20]          # hidden widths; input/output come from the data
//! learning_rate = 0.001
//! batch_size = 32
//! epochs = 20
//! optimizer = "adam"          # or "sgd"
//! # in_classes = [0, 1, 2, 3, 4]   # restrict stage one to these classes
//!
//! [sample]
//! kind = "sgld"               # sgd-pe | sgd | sgld | bootstrap | mc-dropout
//! scope = "last-layer"        # last-layer | full-network
//! n_samples = 100
//! # n_thinning = 1875         # chain updates between saves; default one epoch
//! learning_rate = 0.01
//! batch_size = 32
//! prior_variance = 1.0        # sgld, and sgd when sgd_prior = true
//! sgd_prior = true
//! # p_drop = 0.3              # mc-dropout only
//! # n_epochs = 10             # bootstrap (default 10) / mc-dropout (default 100)
//!
//! [evaluate]
//! calibration_bins = 10
//! histogram_bins = 20
//! # confidence = ["sr", "std", "q-entropy"]
//! # baseline_report = "runs/mnist/report-sgd-pe-last-layer.json"
//!
//! [ood]
//! # in_classes = [0, 1, 2, 3, 4]   # defaults to train.in_classes
//! # baseline_report = "runs/mnist/ood-sgd-pe-last-layer.json"
//!
//! [sweep]
//! learning_rates = { lo = 1e-3, hi = 1e-1, count = 5 }   # or [1e-3, 1e-2, 1e-1]
//! n_samples = [10, 100]
//! # p_drop = [0.1, 0.3, 0.5]  # mc-dropout only
//! objective = "min-aurc"      # min-aurc | sr-aurc | std-aurc | q-entropy-aurc
//! ```

use std::path::{Path, PathBuf};

use lastlayer::inference::ConfidenceKind;
use lastlayer::metrics::MetricReport;
use lastlayer::network::OptimizerKind;
use lastlayer::samplers::{SamplerConfig, SamplerKind, Scope};
use lastlayer::{Error, Result};
use serde::{Deserialize, Serialize};

/// The configuration file as written.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub sample: SampleSection,
    #[serde(default)]
    pub evaluate: EvaluateSection,
    #[serde(default)]
    pub ood: OodSection,
    pub sweep: Option<SweepSection>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    /// Hidden layer widths; the input width and class count come from the
    /// dataset.
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    /// Restrict stage one to these classes (relabeled densely); the
    /// complement becomes the out-of-distribution test set.
    pub in_classes: Option<Vec<usize>>,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            hidden: vec![512, 20],
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 20,
            optimizer: OptimizerKind::Adam,
            in_classes: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleSection {
    pub kind: SamplerKind,
    pub scope: Scope,
    pub n_samples: usize,
    /// Chain updates between saved members; defaults to one pass over the
    /// training set.
    pub n_thinning: Option<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub prior_variance: f64,
    /// Whether plain SGD chains include the prior term.
    pub sgd_prior: bool,
    pub p_drop: Option<f64>,
    pub n_epochs: Option<usize>,
}

impl Default for SampleSection {
    fn default() -> Self {
        SampleSection {
            kind: SamplerKind::SgdPe,
            scope: Scope::LastLayer,
            n_samples: 100,
            n_thinning: None,
            learning_rate: 0.01,
            batch_size: 32,
            prior_variance: 1.0,
            sgd_prior: true,
            p_drop: None,
            n_epochs: None,
        }
    }
}

impl SampleSection {
    /// Materialize a validated [`SamplerConfig`] for this section's kind,
    /// passing each kind only the fields it understands.
    pub fn to_sampler_config(&self, seed: u64) -> Result<SamplerConfig> {
        let cfg = match self.kind {
            SamplerKind::SgdPe => SamplerConfig::point_estimate(self.scope, seed),
            kind => SamplerConfig {
                kind,
                scope: self.scope,
                n_samples: self.n_samples,
                n_thinning: match kind {
                    SamplerKind::Sgd | SamplerKind::Sgld => self.n_thinning,
                    _ => None,
                },
                learning_rate: self.learning_rate,
                batch_size: self.batch_size,
                prior_variance: match kind {
                    SamplerKind::Sgld => Some(self.prior_variance),
                    SamplerKind::Sgd if self.sgd_prior => Some(self.prior_variance),
                    _ => None,
                },
                sgd_prior: self.sgd_prior,
                p_drop: match kind {
                    SamplerKind::McDropout => Some(self.p_drop.ok_or_else(|| {
                        Error::Config("mc-dropout requires p_drop (e.g. 0.3)".into())
                    })?),
                    _ => None,
                },
                n_epochs: match kind {
                    SamplerKind::Bootstrap => Some(self.n_epochs.unwrap_or(10)),
                    SamplerKind::McDropout => Some(self.n_epochs.unwrap_or(100)),
                    _ => None,
                },
                seed,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateSection {
    pub calibration_bins: usize,
    pub histogram_bins: usize,
    /// Confidence functions to score; defaults to every function the
    /// ensemble supports (only SR for point estimates).
    pub confidence: Option<Vec<String>>,
    /// A point-estimate report whose SR AURC normalizes this run's min-AURC.
    pub baseline_report: Option<PathBuf>,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            calibration_bins: 10,
            histogram_bins: 20,
            confidence: None,
            baseline_report: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OodSection {
    /// In-distribution classes; defaults to `train.in_classes`, and to the
    /// lower half of the classes if that is unset too.
    pub in_classes: Option<Vec<usize>>,
    /// A point-estimate OOD summary whose SR AUROC this run is compared to.
    pub baseline_report: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub learning_rates: GridSpec,
    /// Ensemble sizes to try; defaults to just `sample.n_samples`.
    #[serde(default)]
    pub n_samples: Vec<usize>,
    /// Drop rates to try (mc-dropout only); defaults to just `sample.p_drop`.
    #[serde(default)]
    pub p_drop: Vec<f64>,
    #[serde(default)]
    pub objective: Objective,
}

/// A one-dimensional grid: either explicit values or `count` points spaced
/// between `lo` and `hi` (log spacing by default).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Explicit(Vec<f64>),
    Spaced {
        lo: f64,
        hi: f64,
        count: usize,
        #[serde(default)]
        spacing: Spacing,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    #[default]
    Log,
    Linear,
}

impl GridSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            GridSpec::Explicit(vals) => {
                if vals.is_empty() {
                    return Err(Error::Config("empty learning-rate grid".into()));
                }
                if let Some(v) = vals.iter().find(|v| !v.is_finite() || **v <= 0.0) {
                    return Err(Error::Config(format!("grid value {v} is not a positive rate")));
                }
                Ok(vals.clone())
            }
            GridSpec::Spaced { lo, hi, count, spacing } => {
                if *count == 0 {
                    return Err(Error::Config("grid count must be at least 1".into()));
                }
                if !(lo.is_finite() && hi.is_finite()) || *lo <= 0.0 || hi < lo {
                    return Err(Error::Config(format!(
                        "grid bounds must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
                    )));
                }
                if *count == 1 {
                    return Ok(vec![*lo]);
                }
                let n = (*count - 1) as f64;
                Ok((0..*count)
                    .map(|i| {
                        let t = i as f64 / n;
                        match spacing {
                            Spacing::Log => (lo.ln() + t * (hi.ln() - lo.ln())).exp(),
                            Spacing::Linear => lo + t * (hi - lo),
                        }
                    })
                    .collect())
            }
        }
    }
}

/// What a sweep minimizes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    #[default]
    MinAurc,
    SrAurc,
    StdAurc,
    QEntropyAurc,
}

impl Objective {
    /// Pull the objective value out of an evaluate-stage report; `None` when
    /// the report does not carry the required confidence function.
    pub fn extract(self, report: &MetricReport) -> Option<f64> {
        match self {
            Objective::MinAurc => Some(report.min_aurc),
            Objective::SrAurc => report.aurc_for(ConfidenceKind::Sr),
            Objective::StdAurc => report.aurc_for(ConfidenceKind::Std),
            Objective::QEntropyAurc => report.aurc_for(ConfidenceKind::QEntropy),
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Objective::MinAurc => "min-aurc",
            Objective::SrAurc => "sr-aurc",
            Objective::StdAurc => "std-aurc",
            Objective::QEntropyAurc => "q-entropy-aurc",
        })
    }
}

/// Fully resolved configuration: defaults, then file values, then environment
/// path overrides, then command-line flags.
#[derive(Debug, Clone, Serialize)]
pub struct Effective {
    pub seed: u64,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub train: TrainSection,
    pub sample: SampleSection,
    pub evaluate: EvaluateSection,
    pub ood: OodSection,
    pub sweep: Option<SweepSection>,
}

/// The path-and-seed flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct CommonFlags {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

pub fn resolve(flags: &CommonFlags) -> Result<Effective> {
    let file = match &flags.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let env_path = |name: &str| std::env::var_os(name).map(PathBuf::from);
    let data_dir = flags
        .data_dir
        .clone()
        .or_else(|| env_path("LASTLAYER_DATA_DIR"))
        .or(file.data_dir)
        .unwrap_or_else(|| PathBuf::from("data/mnist"));
    let out_dir = flags
        .out_dir
        .clone()
        .or_else(|| env_path("LASTLAYER_OUT_DIR"))
        .or(file.out_dir)
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok(Effective {
        seed: flags.seed.or(file.seed).unwrap_or(0),
        data_dir,
        out_dir,
        train: file.train,
        sample: file.sample,
        evaluate: file.evaluate,
        ood: file.ood,
        sweep: file.sweep,
    })
}

impl Effective {
    /// Artifact path conventions inside `out_dir`.
    pub fn params_path(&self) -> PathBuf {
        self.out_dir.join("theta-star.llnp")
    }

    pub fn features_path(&self, role: &str) -> PathBuf {
        self.out_dir.join(format!("features-{role}.llrf"))
    }

    pub fn ensemble_path(&self, kind: SamplerKind, scope: Scope) -> PathBuf {
        self.out_dir.join(format!("ensemble-{kind}-{scope}.llpe"))
    }

    pub fn report_path(&self, kind: SamplerKind, scope: Scope) -> PathBuf {
        self.out_dir.join(format!("report-{kind}-{scope}.json"))
    }

    pub fn ood_report_path(&self, kind: SamplerKind, scope: Scope) -> PathBuf {
        self.out_dir.join(format!("ood-{kind}-{scope}.json"))
    }

    pub fn manifest_path(&self, stage: &str) -> PathBuf {
        self.out_dir.join(format!("{stage}-manifest.json"))
    }
}

/// Parse `--confidence` values (or the `evaluate.confidence` list).
pub fn parse_confidences(names: &[String]) -> Result<Vec<ConfidenceKind>> {
    let mut kinds = Vec::new();
    for name in names {
        let kind: ConfidenceKind = name.parse()?;
        if !kinds.contains(&kind) {
            kinds.push(kind);
        }
    }
    Ok(kinds)
}
