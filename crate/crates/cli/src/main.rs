//! `organmix`: index datasets, generate phantoms, run augmentations, audit
//! their anatomy, score segmentations and time the strategies.
//!
//! Exit status: 0 success, 1 violations under `audit --strict`, 2 usage
//! error, 3 runtime error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use organmix::strategies::StrategyKind;
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "organmix", version, about = "Data augmentation for volumetric multi-organ segmentation")]
struct Cli {
    /// TOML file with one table per subcommand; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Read a dataset and print per-organ statistics.
    Index(IndexArgs),
    /// Write a synthetic multi-organ dataset.
    Phantom(PhantomArgs),
    /// Augment a dataset with one strategy.
    Augment(AugmentArgs),
    /// Check the anatomy of augmented (or original) cases.
    Audit(AuditArgs),
    /// Dice of predicted label maps against references.
    Evaluate(EvaluateArgs),
    /// Per-output latency of each strategy.
    Bench(BenchArgs),
}

// Flag structs serialize only the flags that were given, so they can be
// laid over the config file.

#[derive(Args, Debug, Serialize)]
pub struct IndexArgs {
    /// Dataset directory or manifest file.
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset: Option<PathBuf>,
    /// Also write the index as JSON here.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 96x144x144 voxels.
    Standard,
    /// 20x36x36 voxels.
    Small,
}

#[derive(Args, Debug, Serialize)]
pub struct PhantomArgs {
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<PathBuf>,
    /// Number of cases [default: 20]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    cases: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// [default: standard]
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    preset: Option<Preset>,
}

#[derive(Args, Debug, Serialize)]
pub struct AugmentArgs {
    /// Dataset directory or manifest file.
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<PathBuf>,
    /// Fresh directory for the outputs.
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<PathBuf>,
    /// cutmix, objectaug, carvemix or anatomix.
    #[arg(long, short)]
    #[serde(skip)]
    strategy: Option<StrategyKind>,
    /// Outputs per original case [default: 10]
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    multiplier: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// [default: $ORGANMIX_WORKERS, else the core count]
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    workers: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
pub struct AuditArgs {
    /// Directory of the cases to audit, usually an augment output.
    #[serde(skip_serializing_if = "Option::is_none")]
    run: Option<PathBuf>,
    /// Original dataset: reference anatomy and source cases.
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    reference: Option<PathBuf>,
    /// Exit with status 1 if any case fails a check.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    strict: bool,
    /// Per-case records [default: <run>/audit.jsonl]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<PathBuf>,
    /// [default: $ORGANMIX_WORKERS, else the core count]
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    workers: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
pub struct EvaluateArgs {
    /// Dataset of predicted label maps.
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    prediction: Option<PathBuf>,
    /// Dataset of reference label maps with the same case ids.
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    reference: Option<PathBuf>,
    /// Per (case, organ) records [default: <prediction>/dice.jsonl]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct BenchArgs {
    /// Dataset directory or manifest file.
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<PathBuf>,
    /// Comma-separated strategies [default: all four]
    #[arg(long = "strategy", short, value_delimiter = ',')]
    #[serde(rename = "strategies", skip_serializing_if = "Option::is_none")]
    strategies: Option<Vec<StrategyKind>>,
    /// Jobs per case [default: 1]
    #[arg(long, short)]
    #[serde(skip_serializing_if = "Option::is_none")]
    multiplier: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Use only the first N cases by id [default: all]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    cases: Option<usize>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<config::Usage>().is_some()
        || matches!(err.downcast_ref::<organmix::Error>(), Some(organmix::Error::InvalidParams(_)))
    {
        2
    } else {
        3
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let file = cli.config.as_deref();
    let result = match &cli.command {
        Command::Index(a) => commands::index(file, a),
        Command::Phantom(a) => commands::phantom(file, a),
        Command::Augment(a) => commands::augment(file, a),
        Command::Audit(a) => commands::audit(file, a),
        Command::Evaluate(a) => commands::evaluate(file, a),
        Command::Bench(a) => commands::bench(file, a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
