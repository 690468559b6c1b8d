//! The `maskgen` command line: synthdata, train, decode, eval and ablate.
//!
//! Every command writes its effective configuration to
//! `<out>/effective_config.toml`. Exit codes: 0 on success, 2 for
//! configuration or input errors, 3 when training diverges.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

pub use commands::{ablate, decode, eval, synthdata, train};
pub use config::{AblationSettings, InitSettings, LoadedTasks, ModelSettings, RunFile};

use crate::error::Error;

#[derive(Debug, Parser)]
#[command(
    name = "maskgen",
    version,
    about = "Masked-LM sequence generation on synthetic multimodal tasks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic corpora, a stats table and a vocabulary.
    Synthdata(SynthArgs),
    /// Train a model on the tasks of a run file.
    Train(TrainArgs),
    /// Greedy-decode a corpus with a checkpoint.
    Decode(DecodeArgs),
    /// Score hypotheses, or run the congruence or zero-shot protocols.
    Eval(EvalArgs),
    /// Initialization or multi-task ablation.
    Ablate(AblateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Configuration file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory, created if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the seed in the configuration file.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
}

/// Flags for every training setting; they override the run file.
#[derive(Debug, Clone, Default, Args)]
pub struct TrainFlags {
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub total_steps: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub validate_every: Option<usize>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    #[arg(long)]
    pub max_decode_len: Option<usize>,
    /// Lines held out from the end of each corpus.
    #[arg(long)]
    pub heldout: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Continue from this checkpoint; step numbering carries on.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Print validation progress.
    #[arg(long)]
    pub verbose: bool,
}

/// Decode settings; the same keys are accepted in the config file.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeOptions {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// JSON-lines corpus to decode; targets are ignored.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Vocabulary file; defaults to `vocab.txt` beside the checkpoint.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub source_lang: Option<String>,
    #[arg(long)]
    pub target_lang: Option<String>,
    /// MT, IC or MMT; inferred from the input when absent.
    #[arg(long)]
    pub modality: Option<String>,
    /// Allow a direction absent from the checkpoint's training registry.
    #[arg(long)]
    #[serde(default)]
    pub zero_shot: bool,
    #[arg(long)]
    pub max_len: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct DecodeArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub options: DecodeOptions,
}

/// Evaluation settings; the same keys are accepted in the config file.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    /// Hypotheses, one whitespace-tokenized line each.
    #[arg(long)]
    pub hyps: Option<PathBuf>,
    /// References: plain text lines or a JSON-lines corpus.
    #[arg(long)]
    pub refs: Option<PathBuf>,
    /// Needed by the congruence and zero-shot protocols.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub source_lang: Option<String>,
    #[arg(long)]
    pub target_lang: Option<String>,
    /// Configuration to decode under in the congruence protocol.
    #[arg(long)]
    pub modality: Option<String>,
    /// Decode with congruent and shuffled images and report the delta.
    #[arg(long)]
    #[serde(default)]
    pub congruence: bool,
    /// Score a direction the checkpoint was not trained on.
    #[arg(long)]
    #[serde(default)]
    pub zero_shot: bool,
    #[arg(long)]
    pub max_len: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub options: EvalOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AblateMode {
    Init,
    Multitask,
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    pub mode: AblateMode,
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub flags: TrainFlags,
    /// Comma-separated seeds; defaults to the run file's list or `--seed`.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub text_checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub visual_checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub verbose: bool,
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Diverged { .. } | Error::NonFinite(_) => 3,
        _ => 2,
    }
}

pub fn run(cli: Cli) -> crate::Result<()> {
    match cli.command {
        Command::Synthdata(a) => synthdata(&a),
        Command::Train(a) => train(&a),
        Command::Decode(a) => decode(&a),
        Command::Eval(a) => eval(&a),
        Command::Ablate(a) => ablate(&a),
    }
}

/// Parses the process arguments, runs the command and maps errors to exit
/// codes.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
