//! Train the full model on the bundled 32-example synthetic set and print
//! the per-epoch training loss.
//!
//! Usage: cargo run --example train_synthetic [epochs] [learning_rate]

use std::path::Path;

use finsent::model::{Model, ModelConfig};
use finsent::train::{train, TrainConfig};
use finsent::{load_dataset, MarketLexicon, SentiLexicon, Vocab};

fn main() -> finsent::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let vocab = Vocab::load(fixtures.join("vocab.txt"), true)?;
    let senti = SentiLexicon::load(fixtures.join("senti.tsv"))?;
    let market = MarketLexicon::load(fixtures.join("market.tsv"))?;
    let examples = load_dataset(fixtures.join("train32.tsv"))?;

    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map(|s| s.parse().unwrap()).unwrap_or(200);
    let learning_rate: f64 = args.next().map(|s| s.parse().unwrap()).unwrap_or(2e-3);

    let mut config = ModelConfig::desk(vocab.len());
    config.n_stack_layers = 2;
    config.dropout = 0.0;
    let mut model = Model::new(config, 3)?;
    let train_config = TrainConfig {
        epochs,
        batch_size: 32,
        seed: 3,
        learning_rate,
        ..Default::default()
    };
    let records = train(&mut model, &examples, None, &vocab, &senti, &market, &train_config)?;
    println!("epoch\tloss");
    for r in &records {
        println!("{}\t{:.6}", r.epoch, r.loss);
    }
    Ok(())
}
