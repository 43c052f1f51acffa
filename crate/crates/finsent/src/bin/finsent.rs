//! Thin CLI over the pipeline commands. All behavior lives in the library;
//! this binary only parses flags, merges them over an optional TOML config
//! file, and maps errors to exit codes.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use finsent::commands::{self, RunConfig};
use finsent::data::JsonFieldMap;

#[derive(Parser)]
#[command(name = "finsent", version, about = "Financial sentiment regression pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the model-running subcommands; every flag overrides the
/// config-file value.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// TOML config file with the same keys as these flags
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d_model: Option<usize>,
    /// Number of sentiment-stack encoder layers (1..=6)
    #[arg(long)]
    n_stack: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    max_len: Option<usize>,
    /// Baseline mode: feed-forward head over the base [CLS] only
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    senti_lexicon: Option<PathBuf>,
    #[arg(long)]
    market_lexicon: Option<PathBuf>,
    #[arg(long)]
    train_data: Option<PathBuf>,
    #[arg(long)]
    test_data: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

impl Overrides {
    fn merge(self) -> Result<RunConfig, finsent::Error> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { config.$field = v; })*
            };
        }
        set!(d_model, n_stack, seed, epochs, batch_size, learning_rate, dropout, max_len);
        if self.baseline {
            config.baseline = true;
        }
        macro_rules! set_path {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { config.$field = Some(v); })*
            };
        }
        set_path!(vocab, senti_lexicon, market_lexicon, train_data, test_data, checkpoint, report);
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Convert a JSON array of records to the tab-separated dataset format
    Convert {
        input: PathBuf,
        output: PathBuf,
        /// JSON field holding the source platform
        #[arg(long, default_value = "source")]
        source_field: String,
        /// JSON field holding the target entity
        #[arg(long, default_value = "entity")]
        entity_field: String,
        /// JSON field holding the text
        #[arg(long, default_value = "text")]
        text_field: String,
        /// JSON field holding the gold score
        #[arg(long, default_value = "score")]
        score_field: String,
        /// Source value for records without a source field
        #[arg(long, default_value = "unknown")]
        default_source: String,
    },
    /// Print corpus statistics for a dataset file
    Stats { data: PathBuf },
    /// Train a model and write a checkpoint plus a training report
    Train(Overrides),
    /// Evaluate a checkpoint: cosine, weighted score, signed breakdown
    Evaluate(Overrides),
    /// Score one text with a trained checkpoint
    Predict {
        #[command(flatten)]
        overrides: Overrides,
        /// Text to score
        text: String,
        /// Target entity (recorded for symmetry with the dataset rows; the
        /// score is a function of the text alone)
        #[arg(long, default_value = "")]
        entity: String,
    },
    /// Train baseline plus stack depths 1..=6 and print a comparison table
    Ablate(Overrides),
}

fn run() -> Result<(), finsent::Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::Convert {
            input,
            output,
            source_field,
            entity_field,
            text_field,
            score_field,
            default_source,
        } => {
            let map = JsonFieldMap {
                source: source_field,
                entity: entity_field,
                text: text_field,
                score: score_field,
            };
            commands::cmd_convert(&input, &output, &map, &default_source)
        }
        Command::Stats { data } => commands::cmd_stats(&data),
        Command::Train(overrides) => commands::cmd_train(&overrides.merge()?),
        Command::Evaluate(overrides) => commands::cmd_evaluate(&overrides.merge()?),
        Command::Predict { overrides, text, entity: _ } => {
            commands::cmd_predict(&overrides.merge()?, &text)
        }
        Command::Ablate(overrides) => commands::cmd_ablate(&overrides.merge()?),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("finsent: {}", err);
            ExitCode::from(commands::exit_code(&err) as u8)
        }
    }
}
