//! `clef`: dataset generation, training, evaluation, ablation grids and
//! run reports for the counterfactual context-debiasing library.

mod artifacts;
mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use clef_core::experiment::Variant;
use clef_core::{ClefError, Scorer, TestVariant};

const EXIT_INTERNAL: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_DIVERGENCE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "clef",
    version,
    about = "Counterfactual context debiasing experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML file mirroring the experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (defaults to the config's `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write train/val/test JSON-Lines splits and print their summary.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = config::parse_test_split)]
        test_split: Option<TestVariant>,
    },
    /// Train one variant on a generated dataset directory.
    Train {
        #[command(flatten)]
        common: Common,
        /// Directory holding `train.jsonl` (and optionally `val.jsonl`, `test.jsonl`).
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "clef")]
        mode: Variant,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate a checkpoint on a dataset file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Defaults to the checkpoint's own scorer.
        #[arg(long)]
        scorer: Option<Scorer>,
        /// Defaults to the checkpoint's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the ablation grid on shared data and seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, value_parser = config::parse_test_split)]
        test_split: Option<TestVariant>,
    },
    /// Aggregate completed runs under a directory into summary tables.
    Report {
        run_dir: PathBuf,
        /// Defaults to `run_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate { common, test_split } => commands::generate(&common, test_split),
        Command::Train {
            common,
            data,
            mode,
            epochs,
        } => commands::train(&common, &data, mode, epochs),
        Command::Eval {
            checkpoint,
            data,
            scorer,
            out,
        } => commands::eval(&checkpoint, &data, scorer, out.as_deref()),
        Command::Ablate {
            common,
            epochs,
            test_split,
        } => commands::ablate(&common, epochs, test_split),
        Command::Report { run_dir, out } => report::run(&run_dir, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<ClefError>() {
            return match e {
                ClefError::Validation(_)
                | ClefError::Data(_)
                | ClefError::Shape(_)
                | ClefError::Serde(_) => EXIT_VALIDATION,
                ClefError::Io(_) => EXIT_IO,
                ClefError::Divergence(_) => EXIT_DIVERGENCE,
                ClefError::Contract(_) => EXIT_INTERNAL,
            };
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
        if cause.is::<toml::de::Error>() || cause.is::<serde_json::Error>() {
            return EXIT_VALIDATION;
        }
    }
    EXIT_INTERNAL
}
