use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "qax", version, about = "Extractive QA toolkit for SQuAD v1.1 data")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Write the report here instead of stdout
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// Seed for every random choice
    #[arg(long, global = true, env = "QAX_SEED", default_value_t = 42)]
    pub seed: u64,

    /// Worker threads for per-example work
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: u64,

    /// Omit the generation timestamp so identical inputs give identical bytes
    #[arg(long, global = true)]
    pub no_timestamp: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Corpus statistics (lengths, answer positions, overlap, correlation)
    Eda(EdaArgs),
    /// Grow a corpus with offset-preserving synonym paraphrases
    Augment(AugmentArgs),
    /// Score the sentence-overlap baseline
    Baseline(BaselineArgs),
    /// Score externally produced start/end logits
    EvalLogits(EvalLogitsArgs),
    /// Answer one question with a weights file
    Infer(InferArgs),
    /// Per-question latency of encode, forward and decode
    Bench(BenchArgs),
    /// Check a weights file against its config
    ValidateWeights(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Independent,
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConstraintArg {
    /// Answers must lie inside the context segment
    Context,
    /// Legacy bound: start > 0 and end before the first separator
    ListingCompat,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Span decoder
    #[arg(long, value_enum, default_value_t = ModeArg::Independent)]
    pub mode: ModeArg,

    /// Longest span (in tokens) the joint decoder may return
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_answer_len: u64,

    /// Which segment answers may come from
    #[arg(long, value_enum, default_value_t = ConstraintArg::Context)]
    pub constraint: ConstraintArg,
}

#[derive(Debug, Args)]
pub struct EdaArgs {
    /// SQuAD v1.1 JSON (or JSONL from `augment`)
    pub dataset: PathBuf,

    /// Also write histogram CSVs into this directory
    #[arg(long, value_name = "DIR")]
    pub csv_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// SQuAD v1.1 JSON (or JSONL)
    pub dataset: PathBuf,

    /// Where to write the augmented corpus (JSON Lines)
    #[arg(long, value_name = "PATH")]
    pub output_data: PathBuf,

    /// Synonym lexicon (`headword<TAB>syn1,syn2` lines) [default: bundled]
    #[arg(long, value_name = "PATH")]
    pub lexicon: Option<PathBuf>,

    /// Target corpus size as a multiple of the input size
    #[arg(long, default_value_t = 2.0)]
    pub multiplier: f64,

    /// Probability of replacing each eligible lexicon word
    #[arg(long, default_value_t = 0.15)]
    pub p: f64,

    /// Write one substitution record per new example (JSON Lines)
    #[arg(long, value_name = "PATH")]
    pub audit: Option<PathBuf>,

    /// Skip question paraphrases
    #[arg(long)]
    pub no_questions: bool,

    /// Skip context paraphrases
    #[arg(long)]
    pub no_contexts: bool,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// SQuAD v1.1 JSON (or JSONL)
    pub dataset: PathBuf,

    /// Write per-example `id,f1,em` rows here
    #[arg(long, value_name = "PATH")]
    pub per_example: Option<PathBuf>,

    /// Also score the seeded random-sentence reference
    #[arg(long)]
    pub with_random: bool,
}

#[derive(Debug, Args)]
pub struct EvalLogitsArgs {
    /// SQuAD v1.1 JSON (or JSONL)
    pub dataset: PathBuf,

    /// Logits file (JSON Lines of id, start_logits, end_logits, encoding_fingerprint)
    #[arg(long, value_name = "PATH")]
    pub logits: PathBuf,

    /// WordPiece vocabulary, one token per line [default: bundled uncased]
    #[arg(long, value_name = "PATH")]
    pub vocab: Option<PathBuf>,

    /// Sequence length the logits were produced with
    #[arg(long, default_value_t = 384)]
    pub max_length: usize,

    #[command(flatten)]
    pub decode: DecodeArgs,

    /// Write per-example `id,f1,em` rows here
    #[arg(long, value_name = "PATH")]
    pub per_example: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// QAW1 weights file
    #[arg(long, value_name = "PATH")]
    pub weights: PathBuf,

    /// Model config JSON [default: weights path with a .json extension]
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// WordPiece vocabulary, one token per line [default: bundled uncased]
    #[arg(long, value_name = "PATH")]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    /// Question text
    #[arg(long)]
    pub question: String,

    /// Context paragraph
    #[arg(long)]
    pub context: String,

    /// Sequence length
    #[arg(long, default_value_t = 512)]
    pub max_length: usize,

    #[command(flatten)]
    pub decode: DecodeArgs,

    /// Print the full prediction as JSON instead of the answer text
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Questions are taken from the start of this dataset
    pub dataset: PathBuf,

    #[command(flatten)]
    pub model: ModelArgs,

    /// Number of timed questions
    #[arg(short = 'n', long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub questions: u64,

    /// Untimed passes on the first question
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,

    /// Free-text description of the machine, copied into the report
    #[arg(long, default_value = "")]
    pub hardware_note: String,

    /// Sequence length
    #[arg(long, default_value_t = 384)]
    pub max_length: usize,

    #[command(flatten)]
    pub decode: DecodeArgs,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// QAW1 weights file
    #[arg(long, value_name = "PATH")]
    pub weights: PathBuf,

    /// Model config JSON [default: weights path with a .json extension]
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
}
