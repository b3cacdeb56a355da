//! `latent-srl`: convert, train, parse, evaluate, induce, check and synth.

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use latent_srl::chart::Order;
use latent_srl::convert::Variant;
use latent_srl::scoring::ScorerKind;

use crate::io::Format;

#[derive(Parser, Debug)]
#[command(
    name = "latent-srl",
    version,
    about = "Span-based SRL as latent-tree dependency parsing"
)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// `key=value` file supplying defaults for flags not given.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Convert SRL annotations to dependency trees or back.
    Convert(ConvertArgs),
    /// Train a model and write the best checkpoint.
    Train(TrainArgs),
    /// Predict frames with a trained model.
    Parse(ParseArgs),
    /// Score predicted frames against gold frames.
    Evaluate(EvaluateArgs),
    /// Extract 1-best full dependency trees.
    Induce(InduceArgs),
    /// Audit chart computations against brute-force enumeration.
    Check(CheckArgs),
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Direction {
    SrlToTrees,
    TreesToSrl,
}

#[derive(Args, Debug)]
pub struct ConvertArgs {
    #[arg(long, default_value = "-")]
    input: PathBuf,
    #[arg(long, default_value = "-")]
    output: PathBuf,
    #[arg(long, value_enum)]
    direction: Direction,
    /// Format of the SRL side.
    #[arg(long)]
    format: Option<Format>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    format: Option<Format>,
    #[arg(long)]
    order: Option<Order>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    scorer: Option<ScorerKind>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    aux_weight: Option<f64>,
    #[arg(long)]
    batch_tokens: Option<usize>,
    #[arg(long)]
    hash_bits: Option<u32>,
    /// Stop after the first epoch ending past this many seconds.
    #[arg(long)]
    max_seconds: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Predicates {
    /// Identify predicates from root-arc labels.
    #[default]
    Predict,
    /// Use the predicate positions of the input frames.
    Gold,
}

impl std::str::FromStr for Predicates {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "predict" => Ok(Predicates::Predict),
            "gold" => Ok(Predicates::Gold),
            other => Err(format!(
                "unknown predicate mode `{other}`, expected predict or gold"
            )),
        }
    }
}

#[derive(Args, Debug)]
pub struct ParseArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "-")]
    input: PathBuf,
    #[arg(long, default_value = "-")]
    output: PathBuf,
    #[arg(long)]
    format: Option<Format>,
    /// Defaults to the order the model was trained with.
    #[arg(long)]
    order: Option<Order>,
    #[arg(long)]
    predicates: Option<Predicates>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    format: Option<Format>,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
pub struct InduceArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "-")]
    input: PathBuf,
    #[arg(long, default_value = "-")]
    output: PathBuf,
    #[arg(long)]
    format: Option<Format>,
    #[arg(long)]
    order: Option<Order>,
    /// Reference full trees; prints unlabeled attachment agreement.
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum FaultArg {
    None,
    Close,
    Sibling,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[arg(long, default_value = "-")]
    input: PathBuf,
    #[arg(long)]
    format: Option<Format>,
    /// Check one order only (default: both).
    #[arg(long)]
    order: Option<Order>,
    #[arg(long)]
    variant: Option<Variant>,
    /// Score with a model instead of seeded random tables.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "none", hide = true)]
    fault: FaultArg,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value = "-")]
    output: PathBuf,
    #[arg(long)]
    format: Option<Format>,
    #[arg(long, default_value_t = 500)]
    sentences: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    min_len: usize,
    #[arg(long, default_value_t = 12)]
    max_len: usize,
    #[arg(long, default_value_t = 2)]
    max_predicates: usize,
    #[arg(long, default_value_t = 3)]
    max_args: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
