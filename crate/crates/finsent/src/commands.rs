//! Pipeline commands behind the `finsent` binary: convert, stats, train,
//! evaluate, predict, ablate. Each command is a plain function over a
//! [`RunConfig`] so the binary stays a thin argument parser.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::data::{self, JsonFieldMap};
use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::lexicon::{MarketLexicon, SentiLexicon};
use crate::model::{Model, ModelConfig};
use crate::tokenizer::Vocab;
use crate::train::{self, TrainConfig};

/// Merged run configuration: model and training hyperparameters plus file
/// paths. Loaded from a TOML key-value file; command-line flags override.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // model
    pub d_model: usize,
    pub n_stack: usize,
    pub n_base_layers: usize,
    pub n_heads_base: usize,
    pub n_heads_stack: usize,
    pub ffn_multiplier: usize,
    pub max_len: usize,
    pub dropout: f64,
    pub head_hidden: usize,
    pub baseline: bool,
    pub lowercase: bool,
    // training
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub adam_epsilon: f64,
    pub shuffle: bool,
    pub eval_each_epoch: bool,
    // paths
    pub vocab: Option<PathBuf>,
    pub senti_lexicon: Option<PathBuf>,
    pub market_lexicon: Option<PathBuf>,
    pub train_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            d_model: 32,
            n_stack: 2,
            n_base_layers: 2,
            n_heads_base: 4,
            n_heads_stack: 4,
            ffn_multiplier: 4,
            max_len: 64,
            dropout: 0.1,
            head_hidden: 64,
            baseline: false,
            lowercase: false,
            epochs: 10,
            batch_size: 16,
            seed: 0,
            learning_rate: 1e-5,
            adam_epsilon: 1e-6,
            shuffle: true,
            eval_each_epoch: false,
            vocab: None,
            senti_lexicon: None,
            market_lexicon: None,
            train_data: None,
            test_data: None,
            checkpoint: None,
            report: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e)))
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            d_model: self.d_model,
            n_stack_layers: self.n_stack,
            n_base_layers: self.n_base_layers,
            n_heads_base: self.n_heads_base,
            n_heads_stack: self.n_heads_stack,
            ffn_multiplier: self.ffn_multiplier,
            max_len: self.max_len,
            dropout: self.dropout,
            vocab_size,
            head_hidden: self.head_hidden,
            baseline: self.baseline,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            learning_rate: self.learning_rate,
            adam_epsilon: self.adam_epsilon,
            shuffle: self.shuffle,
            eval_each_epoch: self.eval_each_epoch,
        }
    }

    fn require(&self, field: &'static str, value: &Option<PathBuf>) -> Result<PathBuf> {
        value
            .clone()
            .ok_or_else(|| Error::Config(format!("`{}` path is required for this command", field)))
    }

    /// Fail-fast existence check over every configured input path.
    fn check_inputs(&self, paths: &[&Option<PathBuf>]) -> Result<()> {
        for path in paths.iter().filter_map(|p| p.as_ref()) {
            if !path.exists() {
                return Err(Error::MissingFile(path.clone()));
            }
        }
        Ok(())
    }

    fn load_lexicons(&self) -> Result<(SentiLexicon, MarketLexicon)> {
        let senti = match &self.senti_lexicon {
            Some(p) => SentiLexicon::load(p)?,
            None => SentiLexicon::default(),
        };
        let market = match &self.market_lexicon {
            Some(p) => MarketLexicon::load(p)?,
            None => MarketLexicon::default(),
        };
        Ok((senti, market))
    }

    fn load_vocab(&self) -> Result<Vocab> {
        Vocab::load(self.require("vocab", &self.vocab)?, self.lowercase)
    }
}

/// Maps every error to the documented process exit codes: 1 usage, 2 data,
/// 3 numeric failure.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::MissingFile(_) | Error::InvalidInput(_) => 1,
        Error::Parse { .. }
        | Error::Io { .. }
        | Error::EmptyDataset(_)
        | Error::Checkpoint(_)
        | Error::IdOutOfRange { .. } => 2,
        Error::NonFiniteLoss { .. }
        | Error::NonScalarLoss { .. }
        | Error::MissingGrad { .. }
        | Error::UndefinedSimilarity(_)
        | Error::ShapeMismatch { .. }
        | Error::InvalidShape { .. } => 3,
    }
}

fn config_header(config: &RunConfig) -> String {
    let toml = toml::to_string(config).unwrap_or_default();
    toml.lines().map(|l| format!("# {}\n", l)).collect()
}

fn write_report(path: &Option<PathBuf>, content: &str) -> Result<()> {
    if let Some(path) = path {
        std::fs::write(path, content).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Trains a model and writes the checkpoint plus a per-epoch report.
pub fn cmd_train(config: &RunConfig) -> Result<()> {
    config.check_inputs(&[
        &config.vocab,
        &config.senti_lexicon,
        &config.market_lexicon,
        &config.train_data,
        &config.test_data,
    ])?;
    let vocab = config.load_vocab()?;
    let (senti, market) = config.load_lexicons()?;
    let train_data = data::load_dataset(config.require("train_data", &config.train_data)?)?;
    let eval_data = match &config.test_data {
        Some(p) => Some(data::load_dataset(p)?),
        None => None,
    };
    let checkpoint_path = config.require("checkpoint", &config.checkpoint)?;

    let mut model = Model::new(config.model_config(vocab.len()), config.seed)?;
    let records = train::train(
        &mut model,
        &train_data,
        eval_data.as_deref(),
        &vocab,
        &senti,
        &market,
        &config.train_config(),
    )?;
    checkpoint::save(&model, &checkpoint_path)?;

    let mut report = config_header(config);
    for record in &records {
        report.push_str(&record.to_tsv());
        report.push('\n');
    }
    print!("{}", report);
    write_report(&config.report, &report)?;
    Ok(())
}

/// Evaluates a checkpoint on the test data and prints the metric report.
pub fn cmd_evaluate(config: &RunConfig) -> Result<()> {
    config.check_inputs(&[
        &config.vocab,
        &config.senti_lexicon,
        &config.market_lexicon,
        &config.test_data,
        &config.checkpoint,
    ])?;
    let vocab = config.load_vocab()?;
    let (senti, market) = config.load_lexicons()?;
    let test_data = data::load_dataset(config.require("test_data", &config.test_data)?)?;
    let model = checkpoint::load(config.require("checkpoint", &config.checkpoint)?)?;
    let preds = train::evaluate(&model, &test_data, &vocab, &senti, &market)?;
    let report = EvalReport::compute(&preds)?.to_tsv();
    print!("{}", report);
    write_report(&config.report, &report)?;
    Ok(())
}

/// Scores one text with a trained checkpoint; prints a float with 4 decimals.
pub fn cmd_predict(config: &RunConfig, text: &str) -> Result<()> {
    config.check_inputs(&[
        &config.vocab,
        &config.senti_lexicon,
        &config.market_lexicon,
        &config.checkpoint,
    ])?;
    let vocab = config.load_vocab()?;
    let (senti, market) = config.load_lexicons()?;
    let model = checkpoint::load(config.require("checkpoint", &config.checkpoint)?)?;
    let cleaned = data::strip_urls(text);
    let seq = crate::tokenizer::encode(&cleaned, &vocab, model.config.max_len);
    let feats = crate::lexicon::sentiment_features(&seq, &senti, &market);
    let score = model.predict_score(&seq, &feats)?;
    println!("{:.4}", score);
    Ok(())
}

/// Prints corpus statistics for a dataset file.
pub fn cmd_stats(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let examples = data::load_dataset(path)?;
    let stats = data::corpus_stats(&examples);
    println!("total\t{}", stats.total);
    println!("mean_words\t{:.2}", stats.mean_words);
    println!("negative\t{}", stats.count_negative);
    println!("nonnegative\t{}", stats.count_nonnegative);
    Ok(())
}

/// Converts a JSON array of records into the tab-separated dataset format.
pub fn cmd_convert(
    input: &Path,
    output: &Path,
    map: &JsonFieldMap,
    default_source: &str,
) -> Result<()> {
    if !input.exists() {
        return Err(Error::MissingFile(input.to_path_buf()));
    }
    let examples = data::convert_json(input, map, default_source)?;
    data::save_dataset(output, &examples)?;
    println!("converted {} examples to {}", examples.len(), output.display());
    Ok(())
}

/// One row of the ablation comparison table.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub model: String,
    pub cosine: f64,
}

/// Trains the baseline plus every stack depth 1..=6 and reports one cosine
/// per variant, in the shape of the results tables.
pub fn run_ablation(config: &RunConfig) -> Result<Vec<AblationRow>> {
    config.check_inputs(&[
        &config.vocab,
        &config.senti_lexicon,
        &config.market_lexicon,
        &config.train_data,
        &config.test_data,
    ])?;
    let vocab = config.load_vocab()?;
    let (senti, market) = config.load_lexicons()?;
    let train_data = data::load_dataset(config.require("train_data", &config.train_data)?)?;
    // evaluate on the test split when given, otherwise on the training split
    let eval_data = match &config.test_data {
        Some(p) => data::load_dataset(p)?,
        None => train_data.clone(),
    };
    let mut rows = Vec::new();
    let variant = |name: String, baseline: bool, n_stack: usize| -> Result<AblationRow> {
        let mut model_config = config.model_config(vocab.len());
        model_config.baseline = baseline;
        model_config.n_stack_layers = n_stack;
        let mut model = Model::new(model_config, config.seed)?;
        train::train(
            &mut model,
            &train_data,
            None,
            &vocab,
            &senti,
            &market,
            &config.train_config(),
        )?;
        let preds = train::evaluate(&model, &eval_data, &vocab, &senti, &market)?;
        let report = EvalReport::compute(&preds)?;
        Ok(AblationRow { model: name, cosine: report.cosine })
    };
    rows.push(variant("baseline".into(), true, 1)?);
    for n in 1..=6 {
        rows.push(variant(format!("base+{}xTransf", n), false, n)?);
    }
    Ok(rows)
}

pub fn cmd_ablate(config: &RunConfig) -> Result<()> {
    let rows = run_ablation(config)?;
    let mut table = String::from("model\tcosine\n");
    for row in &rows {
        table.push_str(&format!("{}\t{:.4}\n", row.model, row.cosine));
    }
    print!("{}", table);
    write_report(&config.report, &table)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_config_defaults_round_trip_through_toml() {
        let config = RunConfig::default();
        let toml = toml::to_string(&config).unwrap();
        let back: RunConfig = toml::from_str(&toml).unwrap();
        assert_eq!(back.d_model, config.d_model);
        assert_eq!(back.learning_rate, config.learning_rate);
    }

    #[test]
    fn run_config_rejects_unknown_keys() {
        let err = toml::from_str::<RunConfig>("d_modle = 32\n");
        assert!(err.is_err());
    }

    #[test]
    fn missing_required_path_is_usage_error() {
        let config = RunConfig::default();
        let err = cmd_train(&config).unwrap_err();
        assert_eq!(exit_code(&err), 1);
    }

    #[test]
    fn missing_file_is_usage_error_naming_path() {
        let config = RunConfig {
            vocab: Some(PathBuf::from("/nonexistent/vocab.txt")),
            ..Default::default()
        };
        let err = cmd_train(&config).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/vocab.txt"));
        assert_eq!(exit_code(&err), 1);
    }

    #[test]
    fn exit_codes_cover_all_classes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 1);
        assert_eq!(
            exit_code(&Error::parse("f", 1, "bad")),
            2
        );
        assert_eq!(exit_code(&Error::NonFiniteLoss { epoch: 1, batch: 0 }), 3);
    }
}
