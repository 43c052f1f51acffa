//! Sentiment dictionaries and the 4-dimensional per-token feature vector
//! (Pos, Neg, Obj, market score) fused onto token representations.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tokenizer::TokenSeq;

/// SentiWordNet-style lexicon: word → (pos, neg, obj), each in [0,1] and
/// summing to 1.
#[derive(Debug, Clone, Default)]
pub struct SentiLexicon {
    entries: HashMap<String, (f64, f64, f64)>,
}

impl SentiLexicon {
    /// Parses `word<TAB>pos<TAB>neg` lines; obj is computed as 1 − pos − neg.
    /// Lines starting with `#` are ignored.
    pub fn load(path: impl AsRef<Path>) -> Result<SentiLexicon> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::parse(path, lineno, format!(
                    "expected `word<TAB>pos<TAB>neg`, got {} fields",
                    fields.len()
                )));
            }
            let word = fields[0].to_string();
            let pos: f64 = fields[1]
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad pos value `{}`", fields[1])))?;
            let neg: f64 = fields[2]
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad neg value `{}`", fields[2])))?;
            if !(0.0..=1.0).contains(&pos) || !(0.0..=1.0).contains(&neg) {
                return Err(Error::parse(path, lineno, "pos and neg must be in [0,1]"));
            }
            if pos + neg > 1.0 + 1e-9 {
                return Err(Error::parse(path, lineno, format!(
                    "pos + neg = {} exceeds 1 for `{}`",
                    pos + neg,
                    word
                )));
            }
            let obj = 1.0 - pos - neg;
            if entries.insert(word.clone(), (pos, neg, obj)).is_some() {
                return Err(Error::parse(path, lineno, format!("duplicate word `{}`", word)));
            }
        }
        Ok(SentiLexicon { entries })
    }

    pub fn get(&self, word: &str) -> Option<(f64, f64, f64)> {
        self.entries.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// NTUSD-style market lexicon: token → signed sentiment score.
#[derive(Debug, Clone, Default)]
pub struct MarketLexicon {
    entries: HashMap<String, f64>,
}

impl MarketLexicon {
    /// Parses `token<TAB>score` lines; `#` comment lines are ignored.
    pub fn load(path: impl AsRef<Path>) -> Result<MarketLexicon> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 {
                return Err(Error::parse(path, lineno, format!(
                    "expected `token<TAB>score`, got {} fields",
                    fields.len()
                )));
            }
            let token = fields[0].to_string();
            let score: f64 = fields[1]
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad score `{}`", fields[1])))?;
            if !score.is_finite() {
                return Err(Error::parse(path, lineno, "score must be finite"));
            }
            if entries.insert(token.clone(), score).is_some() {
                return Err(Error::parse(path, lineno, format!("duplicate token `{}`", token)));
            }
        }
        Ok(MarketLexicon { entries })
    }

    pub fn get(&self, token: &str) -> Option<f64> {
        self.entries.get(token).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub const FEATURE_WIDTH: usize = 4;

/// Per-token sentiment feature rows, ordered (Pos, Neg, Obj, market).
#[derive(Debug, Clone)]
pub struct SentimentFeatures {
    pub rows: Vec<[f64; FEATURE_WIDTH]>,
}

impl SentimentFeatures {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn zeros(len: usize) -> SentimentFeatures {
        SentimentFeatures { rows: vec![[0.0; FEATURE_WIDTH]; len] }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.rows.iter().flatten().copied().collect()
    }
}

/// Looks up each piece's originating whitespace word (lowercased) in both
/// lexicons. Every subword of a word shares the word's feature row; words
/// absent from a lexicon contribute zeros for its slots, and special tokens
/// get all-zero rows.
pub fn sentiment_features(
    seq: &TokenSeq,
    senti: &SentiLexicon,
    market: &MarketLexicon,
) -> SentimentFeatures {
    let word_features: Vec<[f64; FEATURE_WIDTH]> = seq
        .words
        .iter()
        .map(|w| {
            let key = w.to_lowercase();
            let (pos, neg, obj) = senti.get(&key).unwrap_or((0.0, 0.0, 0.0));
            let m = market.get(&key).unwrap_or(0.0);
            [pos, neg, obj, m]
        })
        .collect();
    let rows = seq
        .word_index
        .iter()
        .map(|&wi| {
            if wi == crate::tokenizer::NO_WORD {
                [0.0; FEATURE_WIDTH]
            } else {
                word_features[wi]
            }
        })
        .collect();
    SentimentFeatures { rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::{encode, Vocab, CLS, PAD, SEP, UNK};
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn senti_lexicon_computes_obj() {
        let f = write_temp("good\t0.75\t0.0\nthe\t0.0\t0.0\n");
        let lex = SentiLexicon::load(f.path()).unwrap();
        assert_eq!(lex.get("good"), Some((0.75, 0.0, 0.25)));
        assert_eq!(lex.get("the"), Some((0.0, 0.0, 1.0)));
    }

    #[test]
    fn senti_lexicon_rejects_sum_above_one() {
        let f = write_temp("good\t0.75\t0.0\nbad\t0.6\t0.6\n");
        let err = SentiLexicon::load(f.path()).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{}", err);
    }

    #[test]
    fn senti_lexicon_rejects_duplicates_and_bad_lines() {
        let f = write_temp("good\t0.75\t0.0\ngood\t0.1\t0.1\n");
        assert!(SentiLexicon::load(f.path()).is_err());
        let f = write_temp("good\t0.75\n");
        let err = SentiLexicon::load(f.path()).unwrap_err();
        assert!(err.to_string().contains(":1:"), "{}", err);
    }

    #[test]
    fn senti_lexicon_triples_sum_to_one() {
        let f = write_temp("good\t0.75\t0.0\nbad\t0.1\t0.8\nok\t0.25\t0.25\n");
        let lex = SentiLexicon::load(f.path()).unwrap();
        for word in ["good", "bad", "ok"] {
            let (p, n, o) = lex.get(word).unwrap();
            assert!((p + n + o - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn market_lexicon_round_trips_scores() {
        let f = write_temp("rally\t1.84\nslump\t-2.5\n");
        let lex = MarketLexicon::load(f.path()).unwrap();
        assert_eq!(lex.get("rally"), Some(1.84));
        assert_eq!(lex.get("slump"), Some(-2.5));
    }

    #[test]
    fn market_lexicon_empty_file() {
        let f = write_temp("");
        let lex = MarketLexicon::load(f.path()).unwrap();
        assert!(lex.is_empty());
    }

    #[test]
    fn market_lexicon_malformed_line_names_line() {
        let f = write_temp("rally\t1.84\noops\n");
        let err = MarketLexicon::load(f.path()).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{}", err);
    }

    #[test]
    fn comment_lines_ignored() {
        let f = write_temp("# header\nrally\t1.0\n");
        assert_eq!(MarketLexicon::load(f.path()).unwrap().len(), 1);
        let f = write_temp("# header\ngood\t0.5\t0.1\n");
        assert_eq!(SentiLexicon::load(f.path()).unwrap().len(), 1);
    }

    fn vocab() -> Vocab {
        let tokens = [PAD, UNK, CLS, SEP, "good", "goo", "##d", "rally", "xylophone"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        Vocab::from_tokens(tokens, false).unwrap()
    }

    #[test]
    fn subwords_share_their_words_features() {
        let senti = {
            let f = write_temp("good\t0.75\t0.0\n");
            SentiLexicon::load(f.path()).unwrap()
        };
        let market = MarketLexicon::default();
        // vocab contains "good" whole; drop it to force a split
        let tokens = [PAD, UNK, CLS, SEP, "goo", "##d"].iter().map(|s| s.to_string()).collect();
        let vocab = Vocab::from_tokens(tokens, false).unwrap();
        let seq = encode("good", &vocab, 64);
        assert_eq!(seq.pieces, vec![CLS, "goo", "##d", SEP]);
        let feats = sentiment_features(&seq, &senti, &market);
        assert_eq!(feats.rows[1], [0.75, 0.0, 0.25, 0.0]);
        assert_eq!(feats.rows[1], feats.rows[2]);
    }

    #[test]
    fn oov_words_and_special_tokens_get_zeros() {
        let seq = encode("xylophone rally", &vocab(), 64);
        let feats = sentiment_features(&seq, &SentiLexicon::default(), &MarketLexicon::default());
        for row in &feats.rows {
            assert_eq!(*row, [0.0; 4]);
        }
        assert_eq!(feats.len(), seq.len());
    }

    #[test]
    fn special_token_rows_are_zero_even_with_entries() {
        let senti = {
            let f = write_temp("rally\t0.9\t0.0\n");
            SentiLexicon::load(f.path()).unwrap()
        };
        let market = {
            let f = write_temp("rally\t1.84\n");
            MarketLexicon::load(f.path()).unwrap()
        };
        let seq = encode("rally", &vocab(), 64);
        let feats = sentiment_features(&seq, &senti, &market);
        assert_eq!(feats.rows[0], [0.0; 4]); // [CLS]
        assert_eq!(feats.rows[2], [0.0; 4]); // [SEP]
        let row = feats.rows[1];
        assert_eq!(row, [0.9, 0.0, 0.09999999999999998, 1.84]);
    }

    #[test]
    fn lookup_is_case_insensitive() {
        let market = {
            let f = write_temp("rally\t1.84\n");
            MarketLexicon::load(f.path()).unwrap()
        };
        let tokens = [PAD, UNK, CLS, SEP, "Rally"].iter().map(|s| s.to_string()).collect();
        let vocab = Vocab::from_tokens(tokens, false).unwrap();
        let seq = encode("Rally", &vocab, 64);
        let feats = sentiment_features(&seq, &SentiLexicon::default(), &market);
        assert_eq!(feats.rows[1][3], 1.84);
    }

    #[test]
    fn row_count_always_matches_piece_count() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let vocab = vocab();
        let words = ["good", "rally", "xylophone", "zzz"];
        for _ in 0..1000 {
            let n = rng.gen_range(0..8);
            let text: Vec<&str> =
                (0..n).map(|_| words[rng.gen_range(0..words.len())]).collect();
            let seq = encode(&text.join(" "), &vocab, 16);
            let feats =
                sentiment_features(&seq, &SentiLexicon::default(), &MarketLexicon::default());
            assert_eq!(feats.len(), seq.len());
        }
    }
}
