use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use polyg2p::prompting::Style;

#[derive(Debug, Parser)]
#[command(name = "polyg2p", version, about = "Mandarin polyphone disambiguation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a polyphone dictionary from raw JSONL records.
    BuildDict(BuildDictArgs),
    /// Predict the pinyin of one marked character.
    Predict(PredictArgs),
    /// Train a toy model on a CPP-format dataset and write a checkpoint.
    TrainToy(TrainToyArgs),
    /// Evaluate a backend on the test split.
    Evaluate(EvaluateArgs),
    /// Run the style x knowledge x ratio grid.
    Ablate(AblateArgs),
    /// Print dataset statistics.
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StyleArg {
    Completion,
    Choice,
}

impl From<StyleArg> for Style {
    fn from(s: StyleArg) -> Self {
        match s {
            StyleArg::Completion => Style::Completion,
            StyleArg::Choice => Style::MultipleChoice,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

impl From<Toggle> for bool {
    fn from(t: Toggle) -> Self {
        t == Toggle::On
    }
}

/// `majority`, `toy`, `toy:<checkpoint>`, `remote` or `remote:<url>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Majority,
    Toy(Option<PathBuf>),
    Remote(Option<String>),
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = match s.split_once(':') {
            Some((k, r)) => (k, Some(r)),
            None => (s, None),
        };
        match (kind, rest) {
            ("majority", None) => Ok(Self::Majority),
            ("toy", None) => Ok(Self::Toy(None)),
            ("toy", Some(p)) if !p.is_empty() => Ok(Self::Toy(Some(PathBuf::from(p)))),
            ("remote", None) => Ok(Self::Remote(None)),
            ("remote", Some(u)) if !u.is_empty() => Ok(Self::Remote(Some(u.to_string()))),
            _ => Err(format!(
                "unknown backend {s:?}; expected majority, toy[:<checkpoint>] or remote[:<url>]"
            )),
        }
    }
}

#[derive(Debug, Args)]
pub struct PromptArgs {
    /// Dictionary file (JSONL).
    #[arg(long)]
    pub dict: PathBuf,
    /// Template catalog; the bundled one when omitted.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "choice")]
    pub style: StyleArg,
    #[arg(long, value_enum, default_value = "on")]
    pub knowledge: Toggle,
    /// Definitions per sense shown in knowledge lines.
    #[arg(long, default_value_t = 3)]
    pub max_definitions: usize,
    /// Phrases per sense shown in knowledge lines.
    #[arg(long, default_value_t = 3)]
    pub max_phrases: usize,
}

#[derive(Debug, Args)]
pub struct ToyArgs {
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 64)]
    pub d_model: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 128)]
    pub d_ff: usize,
    #[arg(long, default_value_t = 4)]
    pub prefix_len: usize,
    /// Lower bound; raised to fit the longest training prompt.
    #[arg(long, default_value_t = 64)]
    pub max_seq_len: usize,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 3e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    pub weight_decay: f64,
    /// Train only the prefix parameters.
    #[arg(long)]
    pub frozen: bool,
}

#[derive(Debug, Args)]
pub struct BuildDictArgs {
    /// Raw records, one JSON object per line.
    #[arg(long)]
    pub raw: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Provenance note stored in the dictionary header.
    #[arg(long, default_value = "")]
    pub provenance: String,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Sentence, with the target between two U+2582 marks unless --index is given.
    pub sentence: String,
    /// Character offset of the target.
    #[arg(long)]
    pub index: Option<usize>,
    #[command(flatten)]
    pub prompt: PromptArgs,
    /// `toy:<checkpoint>` or `remote:<url>`; defaults to the remote URL in
    /// POLYG2P_BACKEND_URL.
    #[arg(long)]
    pub backend: Option<BackendSpec>,
    #[arg(long, default_value_t = 8)]
    pub max_new_tokens: usize,
    /// Print the full result as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Directory with train/test (and optionally dev) split files, or a
    /// single file that is re-split 8:1:1.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainToyArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub prompt: PromptArgs,
    #[command(flatten)]
    pub toy: ToyArgs,
    /// Continue from this checkpoint instead of a fresh model.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Share of the train split to use.
    #[arg(long, default_value_t = 1.0)]
    pub ratio: f64,
    #[arg(long, default_value_t = 8)]
    pub max_new_tokens: usize,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub prompt: PromptArgs,
    /// `majority`, `toy:<checkpoint>` or `remote[:<url>]`.
    #[arg(long)]
    pub backend: BackendSpec,
    #[arg(long, default_value_t = 8)]
    pub max_new_tokens: usize,
    /// Output directory for reports.jsonl.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub dict: PathBuf,
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "completion,choice")]
    pub style: Vec<StyleArg>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "off,on")]
    pub knowledge: Vec<Toggle>,
    #[arg(long, value_delimiter = ',', default_value = "0.6,0.8,1.0")]
    pub ratio: Vec<f64>,
    /// `toy`, `toy:<checkpoint>` or `remote[:<url>]`.
    #[arg(long, default_value = "toy")]
    pub backend: BackendSpec,
    #[command(flatten)]
    pub toy: ToyArgs,
    #[arg(long, default_value_t = 3)]
    pub max_definitions: usize,
    #[arg(long, default_value_t = 3)]
    pub max_phrases: usize,
    #[arg(long, default_value_t = 8)]
    pub max_new_tokens: usize,
    /// Output directory for reports.jsonl and table.txt.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// A split directory or a single dataset file.
    #[arg(long)]
    pub data: PathBuf,
}
