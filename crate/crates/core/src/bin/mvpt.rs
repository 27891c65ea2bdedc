//! Command-line entry point: synthetic data generation, CMU-Panoptic
//! ingestion, joint/baseline training, evaluation and comparison grids.
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mvpt_core::commands;
use mvpt_core::config::RunConfigFile;

#[derive(Parser)]
#[command(
    name = "mvpt",
    about = "Multi-view person image translation supervised by 3D pose",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-view dataset.
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// Overrides train.seed for dataset generation.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ingest a CMU-Panoptic sequence into a dataset manifest.
    Ingest {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the joint model (or the independent per-view baseline).
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Train the lambda4 = 0 baseline (independent per-view models).
        #[arg(long)]
        baseline: bool,
        /// Resume from a checkpoint directory.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Reuse a pretrained detector (tensor file) instead of pretraining.
        #[arg(long)]
        detector: Option<PathBuf>,
    },
    /// Evaluate a checkpoint over the held-out split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Mark the report as a baseline run.
        #[arg(long)]
        baseline: bool,
    },
    /// Render real vs joint vs baseline grids for held-out frames.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        joint: PathBuf,
        #[arg(long)]
        baseline: PathBuf,
        /// Comma-separated held-out frame indices.
        #[arg(long, value_delimiter = ',')]
        frames: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run() -> mvpt_core::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Synth { config, seed, out } => {
            let cfg = RunConfigFile::load(&config)?;
            commands::cmd_synth(&cfg, seed, &out)?;
        }
        Command::Ingest { config, out } => {
            let cfg = RunConfigFile::load(&config)?;
            commands::cmd_ingest(&cfg, &out)?;
        }
        Command::Train {
            config,
            out,
            baseline,
            resume,
            detector,
        } => {
            let cfg = RunConfigFile::load(&config)?;
            commands::cmd_train(&cfg, &out, baseline, resume.as_deref(), detector.as_deref())?;
        }
        Command::Eval {
            config,
            checkpoint,
            report,
            baseline,
        } => {
            let cfg = RunConfigFile::load(&config)?;
            commands::cmd_eval(&cfg, &checkpoint, &report, baseline)?;
        }
        Command::Compare {
            config,
            joint,
            baseline,
            frames,
            out,
        } => {
            let cfg = RunConfigFile::load(&config)?;
            commands::cmd_compare(&cfg, &joint, &baseline, &frames, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
