// SPDX-License-Identifier: MIT OR Apache-2.0

//! `graftlab`: data generation, training, grafted evaluation and reports.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data or I/O
//! error, 4 numeric divergence during training.

mod commands;
mod config;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use graftlab_core::datagen::DatasetVariant;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "graftlab", version, about = "Component grafting experiments on toy transformers")]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate relation metadata, corpora, vocabulary and test prompts.
    GenData(GenDataArgs),
    /// Train a model on a corpus, from scratch or from a checkpoint.
    Train(TrainArgs),
    /// Score a grafting suite on annotated prompts.
    GraftEval(GraftEvalArgs),
    /// Re-render charts and a summary table from result CSVs.
    Report(ReportArgs),
    /// Run the whole reference experiment in one process.
    Reference(ReferenceArgs),
}

#[derive(Args, Serialize, Deserialize, Default, Debug)]
#[serde(default, deny_unknown_fields)]
pub struct GenDataArgs {
    /// JSON file with any of the fields below.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// fake-real, fake-fake or real-shuffled [default: fake-real]
    #[arg(long)]
    pub variant: Option<DatasetVariant>,
    /// Number of base relations.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of held-out evaluation relations (0 = none) [default: 0]
    #[arg(long)]
    pub n_eval: Option<usize>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default, Debug)]
#[serde(default, deny_unknown_fields)]
pub struct TrainArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Text corpus, one document per line.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// vocab.json from gen-data.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Continue from this checkpoint instead of a fresh model.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Seed of the fresh model [default: 0]
    #[arg(long)]
    pub init_seed: Option<u64>,
    #[arg(long)]
    pub n_layers: Option<usize>,
    #[arg(long)]
    pub n_heads: Option<usize>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub d_ff: Option<usize>,
    #[arg(long)]
    pub max_seq_len: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub split_fraction: Option<f64>,
    /// Seed of the document split and shuffling.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub seq_len: Option<usize>,
    /// Output checkpoint.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-epoch loss CSV [default: <out>.history.csv]
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default, Debug)]
#[serde(default, deny_unknown_fields)]
pub struct GraftEvalArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Built-in suite: position, reversal or hybrid.
    #[arg(long, conflicts_with = "schemes")]
    pub suite: Option<String>,
    /// JSON file with one scheme or a list of schemes.
    #[arg(long)]
    pub schemes: Option<PathBuf>,
    /// Checkpoint as NAME=PATH, or PATH matched to the suite's weight sets
    /// in order (position: PRE SFT; reversal: ONE_WAY TWO_WAY; hybrid: PRE
    /// TASK RELATION). Repeat for each weight set.
    #[arg(long = "ckpt")]
    pub ckpt: Vec<String>,
    /// Prompts JSONL from gen-data.
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Top-k cutoff [default: 5]
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Report file stem [default: suite name]
    #[arg(long)]
    pub stem: Option<String>,
    /// Examples per scheme in the dump [default: 5]
    #[arg(long)]
    pub dump: Option<usize>,
}

#[derive(Args, Serialize, Deserialize, Default, Debug)]
#[serde(default, deny_unknown_fields)]
pub struct ReportArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Result CSVs written by graft-eval.
    #[arg(long = "results", num_args = 1..)]
    pub results: Vec<PathBuf>,
    /// Where to write charts and summary.md [default: next to each CSV]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReferenceArgs {
    /// Experiment config JSON; omitted fields take the built-in defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Core(graftlab_core::Error),
}

impl From<graftlab_core::Error> for CliError {
    fn from(e: graftlab_core::Error) -> Self {
        Self::Core(e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) | Self::Data(m) => f.write_str(m),
            Self::Core(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use graftlab_core::Error as E;
        match self {
            Self::Usage(_) => 2,
            Self::Data(_) => 3,
            Self::Core(E::Config(_) | E::Scheme(_)) => 2,
            Self::Core(E::Divergence { .. } | E::NonFinite { .. }) => 4,
            Self::Core(_) => 3,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::GraftEval(a) => commands::graft_eval(a),
        Command::Report(a) => commands::report(a),
        Command::Reference(a) => commands::reference(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
