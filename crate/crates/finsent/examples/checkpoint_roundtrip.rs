//! Save a model to the binary checkpoint format, load it back, and confirm
//! the restored model predicts identically.

use std::path::Path;

use finsent::model::{Model, ModelConfig};
use finsent::{checkpoint, encode, sentiment_features, MarketLexicon, SentiLexicon, Vocab};

fn main() -> finsent::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let vocab = Vocab::load(fixtures.join("vocab.txt"), true)?;
    let senti = SentiLexicon::load(fixtures.join("senti.tsv"))?;
    let market = MarketLexicon::load(fixtures.join("market.tsv"))?;

    let model = Model::new(ModelConfig::desk(vocab.len()), 42)?;
    let dir = std::env::temp_dir().join("finsent_checkpoint_example");
    std::fs::create_dir_all(&dir).map_err(|e| finsent::Error::io(&dir, e))?;
    let path = dir.join("model.ckpt");

    checkpoint::save(&model, &path)?;
    let restored = checkpoint::load(&path)?;

    let seq = encode("markets rally on strong earnings", &vocab, 64);
    let feats = sentiment_features(&seq, &senti, &market);
    let before = model.predict_score(&seq, &feats)?;
    let after = restored.predict_score(&seq, &feats)?;

    println!("checkpoint: {}", path.display());
    println!("score before save: {:+.10}", before);
    println!("score after load:  {:+.10}", after);
    assert_eq!(before.to_bits(), after.to_bits());
    println!("round trip is bit-exact");
    Ok(())
}
