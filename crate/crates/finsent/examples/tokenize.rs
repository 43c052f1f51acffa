//! Segment a few texts with the WordPiece tokenizer and the bundled fixture
//! vocabulary, showing pieces, ids, and the word each piece came from.
//!
//! Usage: cargo run --example tokenize [text...]

use std::path::Path;

use finsent::{encode, Vocab};

fn main() -> finsent::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let vocab = Vocab::load(fixtures.join("vocab.txt"), true)?;

    let args: Vec<String> = std::env::args().skip(1).collect();
    let texts: Vec<String> = if args.is_empty() {
        vec![
            "currencies rally as markets surge".into(),
            "shares plunge on weak earnings https://example.com/report".into(),
        ]
    } else {
        vec![args.join(" ")]
    };

    for text in &texts {
        let seq = encode(text, &vocab, 64);
        println!("text: {}", text);
        for (i, piece) in seq.pieces.iter().enumerate() {
            let word = match seq.word_index[i] {
                finsent::tokenizer::NO_WORD => "-".to_string(),
                w => seq.words[w].clone(),
            };
            println!("  {:>3}  {:<10} id {:>3}  from {}", i, piece, seq.ids[i], word);
        }
        println!();
    }
    Ok(())
}
