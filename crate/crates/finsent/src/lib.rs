//! Financial sentiment regression with a hierarchical Transformer stack.
//!
//! A base Transformer encoder produces contextual token representations,
//! per-token sentiment lexicon scores are concatenated onto them, a stack of
//! additional encoder layers processes the fused width, and a feed-forward
//! head over the two [CLS] representations emits a score in (−1, +1).
//!
//! The crate ships its own reverse-mode autodiff tensor engine
//! ([`tensor::Tensor`]), Adam optimizer, WordPiece tokenizer, lexicon
//! loaders, MSE training loop, and the weighted-cosine evaluation harness.
//! See the `examples/` directory for a runnable tour of each capability and
//! the `finsent` binary for the end-to-end pipeline.

pub mod adam;
pub mod checkpoint;
pub mod commands;
pub mod data;
pub mod error;
pub mod eval;
pub mod lexicon;
pub mod model;
pub mod tensor;
pub mod tokenizer;
pub mod train;

pub use adam::AdamState;
pub use data::{corpus_stats, load_dataset, save_dataset, strip_urls, CorpusStats, Example};
pub use error::{Error, Result};
pub use eval::{cosine_similarity, signed_breakdown, weighted_score, EvalReport, PredictionSet};
pub use lexicon::{sentiment_features, MarketLexicon, SentiLexicon, SentimentFeatures};
pub use model::{sinusoidal_positions, ExampleInput, Model, ModelConfig, ModelParams};
pub use tensor::Tensor;
pub use tokenizer::{encode, whitespace_split, wordpiece, TokenSeq, Vocab};
pub use train::{mse_loss, train, EpochRecord, TrainConfig};
