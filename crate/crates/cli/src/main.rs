//! `lqre`: data generation, pretraining, training, evaluation and inference
//! for latent-question relation extraction.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "lqre",
    version,
    about = "Latent-question training for zero-shot relation extraction"
)]
struct Cli {
    /// Log progress at info level (RUST_LOG overrides).
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded toy world and its QA pretraining corpus.
    GenData(GenDataArgs),
    /// Pretrain the question and answer generators; the search model is a
    /// copy of the question generator.
    Pretrain(PretrainArgs),
    /// Train with one objective, keeping the best checkpoint on dev.
    Train(TrainArgs),
    /// Score tail extraction and/or relation classification.
    Eval(EvalArgs),
    /// Decode questions and tails for instances.
    Infer(InferArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// JSON config file; flags take precedence over it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SamplerArgs {
    /// Nucleus threshold for question sampling.
    #[arg(long)]
    pub p: Option<f64>,
    /// Questions sampled per instance.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub beam: Option<usize>,
    /// Question length limit, EOS included.
    #[arg(long = "max-len")]
    pub max_len: Option<usize>,
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Train, dev and test relation counts.
    #[arg(long, value_name = "TRAIN,DEV,TEST")]
    pub relations: Option<String>,
    #[arg(long)]
    pub entities: Option<usize>,
    /// Contexts per relation.
    #[arg(long)]
    pub contexts: Option<usize>,
    #[arg(long = "negative-fraction")]
    pub negative_fraction: Option<f64>,
    /// Add one relation-swapped negative per train instance.
    #[arg(long)]
    pub negs: bool,
    /// QA examples generated for pretraining.
    #[arg(long = "qa-examples")]
    pub qa_examples: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Toy-world directory; its instances are added to the vocabulary.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Pretraining instances with gold questions. Defaults to
    /// `qa_pretrain.jsonl` in the data directory, else its train split.
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "lr-question")]
    pub lr_question: Option<f64>,
    #[arg(long = "lr-answer")]
    pub lr_answer: Option<f64>,
    #[arg(long = "batch-size")]
    pub batch_size: Option<usize>,
    /// Question length limit, EOS included.
    #[arg(long = "max-len")]
    pub max_len: Option<usize>,
    /// Fraction of the corpus held out for the report.
    #[arg(long = "held-out")]
    pub held_out: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Pretrained checkpoint directory.
    #[arg(long, value_name = "DIR")]
    pub models: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// GOLD_Q, PSEUDO_Q, MML_MML, MML_G, OFFMML_OFFMML or OFFMML_G.
    #[arg(long)]
    pub objective: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Question-generator learning rate.
    #[arg(long = "lr-q")]
    pub lr_q: Option<f64>,
    #[arg(long = "clip-norm")]
    pub clip_norm: Option<f64>,
    #[arg(long = "batch-size")]
    pub batch_size: Option<usize>,
    #[arg(long = "eval-every")]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Leave the question generator untouched on negatives.
    #[arg(long = "skip-neg-q")]
    pub skip_neg_q: bool,
}

#[derive(Args, Debug, Clone)]
pub struct InputArgs {
    /// Toy-world directory.
    #[arg(long, value_name = "DIR", required_unless_present = "input")]
    pub data: Option<PathBuf>,
    /// Split read from `--data`.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Instance file, instead of a split of `--data`.
    #[arg(long, value_name = "FILE", conflicts_with = "data")]
    pub input: Option<PathBuf>,
    /// jsonl or reqa_tsv.
    #[arg(long, default_value = "jsonl")]
    pub format: String,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[command(flatten)]
    pub input: InputArgs,
    /// Checkpoint directory with vocab.txt, pq.json and pa.json.
    #[arg(long, value_name = "DIR")]
    pub models: PathBuf,
    /// te, zre or both.
    #[arg(long)]
    pub mode: Option<String>,
    /// generated, gold or pseudo answer inputs.
    #[arg(long)]
    pub source: Option<String>,
    /// Beam questions summed over when scoring a relation.
    #[arg(long = "marginal-k")]
    pub marginal_k: Option<usize>,
    /// Report path; printed to stdout when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_name = "DIR")]
    pub models: PathBuf,
    #[arg(long)]
    pub source: Option<String>,
    /// Predictions as JSON lines; printed to stdout when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(&a),
        Command::Pretrain(a) => commands::pretrain(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Infer(a) => commands::infer(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
