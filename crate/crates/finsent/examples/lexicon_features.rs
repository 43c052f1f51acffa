//! Show the 4-slot lexicon feature rows (positive, negative, objective,
//! market score) the model fuses onto each token representation.

use std::path::Path;

use finsent::{encode, sentiment_features, MarketLexicon, SentiLexicon, Vocab};

fn main() -> finsent::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let vocab = Vocab::load(fixtures.join("vocab.txt"), true)?;
    let senti = SentiLexicon::load(fixtures.join("senti.tsv"))?;
    let market = MarketLexicon::load(fixtures.join("market.tsv"))?;

    let text = "markets rally but earnings slump";
    let seq = encode(text, &vocab, 64);
    let feats = sentiment_features(&seq, &senti, &market);

    println!("text: {}", text);
    println!("{:<10} {:>6} {:>6} {:>6} {:>7}", "piece", "pos", "neg", "obj", "market");
    for (piece, row) in seq.pieces.iter().zip(&feats.rows) {
        println!(
            "{:<10} {:>6.2} {:>6.2} {:>6.2} {:>7.2}",
            piece, row[0], row[1], row[2], row[3]
        );
    }
    Ok(())
}
