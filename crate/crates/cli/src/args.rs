use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "vernqa",
    version,
    about = "Multilingual medical question answering over a QA-pair corpus"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Drop pairs whose normalized question and answer repeat an earlier pair.
    CorpusDedupe(DedupeArgs),
    /// Seeded train/test partition of a corpus.
    CorpusSplit(SplitArgs),
    /// Write the built-in templated corpus (symptom x patient group).
    CorpusSynth(SynthArgs),
    /// Build a vocabulary from a corpus.
    VocabBuild(VocabArgs),
    /// Train the dual encoder, checkpointing after every epoch.
    Train(TrainArgs),
    /// Embed a corpus and write a similarity index.
    IndexBuild(IndexBuildArgs),
    /// Convert an exact index to int8.
    IndexQuantize(QuantizeArgs),
    /// Answer one question.
    Ask(AskArgs),
    /// Extractive summary of a note.
    Summarize(SummarizeArgs),
    /// Strict accuracy, recall@k and MRR over a corpus.
    Eval(EvalArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct JsonFlag {
    /// Print a JSON document instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct DedupeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub json: JsonFlag,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub train_out: PathBuf,
    #[arg(long)]
    pub test_out: PathBuf,
    /// Fraction of pairs sent to the test side, in [0, 1].
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub json: JsonFlag,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of pairs, at most 64.
    #[arg(long, default_value_t = 64)]
    pub pairs: usize,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub json: JsonFlag,
}

#[derive(Debug, Args)]
pub struct VocabArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 8192)]
    pub max_size: usize,
    #[arg(long, default_value_t = 1)]
    pub min_freq: usize,
    #[command(flatten)]
    pub json: JsonFlag,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Checkpoint written after each epoch.
    #[arg(long)]
    pub output: PathBuf,
    /// Continue from this checkpoint; its encoder shape wins over the shape flags.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    /// Seeds both weight initialization and the per-epoch shuffle.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub d_ff: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub d_embed: Option<usize>,
    #[command(flatten)]
    pub json: JsonFlag,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Side {
    Answer,
    Question,
}

#[derive(Debug, Args)]
pub struct IndexBuildArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = Side::Answer)]
    pub side: Side,
    /// Store int8 vectors instead of f32.
    #[arg(long)]
    pub quantize: bool,
    #[command(flatten)]
    pub json: JsonFlag,
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub json: JsonFlag,
}

/// Artifact locations. Each flag overrides its environment variable, which
/// overrides the config file, which overrides the built-in default.
#[derive(Debug, Args)]
pub struct ArtifactArgs {
    /// Service config file (TOML, or JSON by extension).
    #[arg(long, env = "VERNQA_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, env = "VERNQA_VOCAB_PATH")]
    pub vocab_path: Option<PathBuf>,
    #[arg(long, env = "VERNQA_CHECKPOINT_PATH")]
    pub checkpoint_path: Option<PathBuf>,
    #[arg(long, env = "VERNQA_INDEX_PATH")]
    pub index_path: Option<PathBuf>,
    /// `top1`, `stitch`, `stitch:N` or `extractive`.
    #[arg(long)]
    pub composer: Option<String>,
    /// Extra dictionary adapter as `SRC:TGT:PATH`; also registers the reverse direction.
    #[arg(long = "dict", value_name = "SRC:TGT:PATH")]
    pub dicts: Vec<String>,
}

#[derive(Debug, Args)]
pub struct AskArgs {
    #[arg(long = "q", visible_alias = "question")]
    pub question: String,
    #[arg(long)]
    pub lang: Option<String>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[command(flatten)]
    pub artifacts: ArtifactArgs,
    #[command(flatten)]
    pub json: JsonFlag,
}

#[derive(Debug, Args)]
#[group(id = "source", required = true, multiple = false, args = ["text", "file"])]
pub struct SummarizeArgs {
    #[arg(long)]
    pub text: Option<String>,
    /// Read the note from a file.
    #[arg(long)]
    pub file: Option<PathBuf>,
    /// Fixed number of clusters instead of the config rule.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub max_sentences: Option<usize>,
    /// k-means seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub artifacts: ArtifactArgs,
    #[command(flatten)]
    pub json: JsonFlag,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Cutoffs for recall@k, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    pub k: Vec<usize>,
    /// Language the corpus questions are written in.
    #[arg(long, default_value = "en")]
    pub lang: String,
    #[command(flatten)]
    pub artifacts: ArtifactArgs,
    #[command(flatten)]
    pub json: JsonFlag,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "VERNQA_HOST")]
    pub host: Option<String>,
    #[arg(long, env = "VERNQA_PORT")]
    pub port: Option<u16>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[command(flatten)]
    pub artifacts: ArtifactArgs,
}
