//! `lastlayer` — train a dense classifier, extract its penultimate features,
//! build posterior ensembles over the last layer (or the full network), and
//! score them on selective classification, calibration, and OOD detection.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numeric
//! divergence (a partial ensemble is still saved, flagged), 4 artifact
//! incompatibility between pipeline stages.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lastlayer::samplers::{SamplerKind, Scope};
use lastlayer::Error;

use commands::evaluate::EvaluateArgs;
use commands::ood::OodArgs;
use commands::sample::SampleArgs;
use commands::sweep::SweepArgs;
use config::CommonFlags;

#[derive(Parser)]
#[command(
    name = "lastlayer",
    version,
    about = "Posterior ensembles over the last layer of a trained classifier"
)]
struct Cli {
    #[command(flatten)]
    common: CommonOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed; each stage derives its own stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory holding the IDX image/label files.
    #[arg(long, global = true, value_name = "DIR")]
    data_dir: Option<PathBuf>,
    /// Directory all artifacts are written to.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the stage-one network and save its parameters.
    Train,
    /// Extract penultimate-layer features with a trained network.
    Extract {
        /// Trained parameters (defaults to <out-dir>/theta-star.llnp).
        #[arg(long, value_name = "FILE")]
        params: Option<PathBuf>,
    },
    /// Build a posterior ensemble starting from the trained optimum.
    Sample {
        /// Sampler: sgd-pe, sgd, sgld, bootstrap, or mc-dropout.
        #[arg(long)]
        kind: Option<SamplerKind>,
        /// Parameter subset: last-layer or full-network.
        #[arg(long)]
        scope: Option<Scope>,
        /// Trained parameters (defaults to <out-dir>/theta-star.llnp).
        #[arg(long, value_name = "FILE")]
        params: Option<PathBuf>,
    },
    /// Score an ensemble on the test set: AURC, calibration, CSV exports.
    Evaluate {
        /// Ensemble file (defaults to <out-dir>/ensemble-<kind>-<scope>.llpe).
        #[arg(long, value_name = "FILE")]
        ensemble: Option<PathBuf>,
        /// Point-estimate report to normalize the minimum AURC against.
        #[arg(long, value_name = "FILE")]
        baseline_report: Option<PathBuf>,
        /// Confidence function to score (repeatable): sr, std, q-entropy.
        #[arg(long, value_name = "KIND")]
        confidence: Vec<String>,
        /// Kind used to locate the default ensemble file.
        #[arg(long)]
        kind: Option<SamplerKind>,
        /// Scope used to locate the default ensemble file.
        #[arg(long)]
        scope: Option<Scope>,
    },
    /// In- vs out-of-distribution detection: AUROC and AUPR per confidence.
    Ood {
        /// Ensemble file (defaults to <out-dir>/ensemble-<kind>-<scope>.llpe).
        #[arg(long, value_name = "FILE")]
        ensemble: Option<PathBuf>,
        /// Point-estimate OOD report to compare the best AUROC against.
        #[arg(long, value_name = "FILE")]
        baseline_report: Option<PathBuf>,
        /// Confidence function to score (repeatable): sr, std, q-entropy.
        #[arg(long, value_name = "KIND")]
        confidence: Vec<String>,
        /// Kind used to locate the default ensemble file.
        #[arg(long)]
        kind: Option<SamplerKind>,
        /// Scope used to locate the default ensemble file.
        #[arg(long)]
        scope: Option<Scope>,
    },
    /// Grid-search sampler hyper-parameters; rank points by an objective.
    Sweep {
        /// Sampler: sgd, sgld, bootstrap, or mc-dropout.
        #[arg(long)]
        kind: Option<SamplerKind>,
        /// Parameter subset: last-layer or full-network.
        #[arg(long)]
        scope: Option<Scope>,
        /// Trained parameters (defaults to <out-dir>/theta-star.llnp).
        #[arg(long, value_name = "FILE")]
        params: Option<PathBuf>,
        /// Worker threads; 1 (the default) runs points sequentially.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cli: Cli) -> lastlayer::Result<()> {
    let flags = CommonFlags {
        config: cli.common.config,
        seed: cli.common.seed,
        data_dir: cli.common.data_dir,
        out_dir: cli.common.out_dir,
    };
    let cfg = config::resolve(&flags)?;
    match cli.command {
        Command::Train => commands::train::run(&cfg),
        Command::Extract { params } => commands::extract::run(&cfg, params),
        Command::Sample { kind, scope, params } => {
            commands::sample::run(&cfg, &SampleArgs { kind, scope, params })
        }
        Command::Evaluate { ensemble, baseline_report, confidence, kind, scope } => {
            commands::evaluate::run(
                &cfg,
                &EvaluateArgs { ensemble, baseline_report, confidence, kind, scope },
            )
        }
        Command::Ood { ensemble, baseline_report, confidence, kind, scope } => commands::ood::run(
            &cfg,
            &OodArgs { ensemble, baseline_report, confidence, kind, scope },
        ),
        Command::Sweep { kind, scope, params, jobs } => {
            commands::sweep::run(&cfg, &SweepArgs { kind, scope, params, jobs })
        }
    }
}

/// Map library errors onto the documented exit codes.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. }
        | Error::Format { .. }
        | Error::Dataset(_)
        | Error::LabelOutOfRange { .. }
        | Error::Config(_)
        | Error::EmptySelection { .. } => 2,
        Error::Divergence(_) | Error::ChainDiverged(_) => 3,
        Error::Dimension(_) | Error::ArtifactMismatch(_) => 4,
    }
}
