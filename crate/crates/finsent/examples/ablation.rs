//! Run the depth ablation on the bundled synthetic fixtures: the baseline
//! head plus sentiment-stack depths 1 through 6, reporting one cosine each.

use std::path::Path;

use finsent::commands::{run_ablation, RunConfig};

fn main() -> finsent::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let config = RunConfig {
        epochs: 5,
        learning_rate: 1e-3,
        seed: 1,
        vocab: Some(fixtures.join("vocab.txt")),
        senti_lexicon: Some(fixtures.join("senti.tsv")),
        market_lexicon: Some(fixtures.join("market.tsv")),
        train_data: Some(fixtures.join("train64.tsv")),
        test_data: Some(fixtures.join("test32.tsv")),
        ..Default::default()
    };
    println!("model\tcosine");
    for row in run_ablation(&config)? {
        println!("{}\t{:.4}", row.model, row.cosine);
    }
    Ok(())
}
