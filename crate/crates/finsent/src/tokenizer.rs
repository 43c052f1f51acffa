//! Two-step tokenization: whitespace splitting followed by greedy
//! longest-match-first WordPiece segmentation, plus [CLS]/[SEP] framing.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";

/// Sentinel word index for special tokens, which originate from no word.
pub const NO_WORD: usize = usize::MAX;

/// Fixed vocabulary: token strings with dense ids 0..N-1.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    id_of: HashMap<String, usize>,
    lowercase: bool,
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>, lowercase: bool) -> Result<Vocab> {
        let mut id_of = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if id_of.insert(tok.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate vocab token `{}`", tok)));
            }
        }
        for special in [CLS, SEP, PAD, UNK] {
            if !id_of.contains_key(special) {
                return Err(Error::InvalidInput(format!(
                    "vocabulary is missing special token {}",
                    special
                )));
            }
        }
        Ok(Vocab { tokens, id_of, lowercase })
    }

    /// Loads a vocabulary file: UTF-8, one token per line, line number = id.
    pub fn load(path: impl AsRef<Path>, lowercase: bool) -> Result<Vocab> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens: Vec<String> = text
            .lines()
            .map(|l| l.trim_end().to_string())
            .filter(|l| !l.is_empty())
            .collect();
        Self::from_tokens(tokens, lowercase)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.id_of.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(|s| s.as_str())
    }

    pub fn pad_id(&self) -> usize {
        self.id_of[PAD]
    }

    pub fn lowercase(&self) -> bool {
        self.lowercase
    }
}

/// Tokenized text: subword pieces, their vocab ids, and the index of the
/// whitespace word each piece came from.
#[derive(Debug, Clone)]
pub struct TokenSeq {
    pub pieces: Vec<String>,
    pub ids: Vec<usize>,
    pub word_index: Vec<usize>,
    pub words: Vec<String>,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn is_special(&self, i: usize) -> bool {
        self.word_index[i] == NO_WORD
    }
}

/// Splits on runs of Unicode whitespace; never yields empty tokens.
pub fn whitespace_split(text: &str) -> Vec<String> {
    text.split_whitespace().map(|w| w.to_string()).collect()
}

/// Greedy longest-match-first WordPiece segmentation. Continuation pieces
/// carry the `##` prefix. Returns `["[UNK]"]` when no segmentation exists.
pub fn wordpiece(word: &str, vocab: &Vocab) -> Vec<String> {
    debug_assert!(!word.is_empty() && !word.contains(char::is_whitespace));
    let chars: Vec<char> = word.chars().collect();
    let mut pieces = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        let mut end = chars.len();
        let mut found: Option<String> = None;
        while end > start {
            let sub: String = chars[start..end].iter().collect();
            let candidate = if start == 0 { sub } else { format!("##{}", sub) };
            if vocab.id(&candidate).is_some() {
                found = Some(candidate);
                break;
            }
            end -= 1;
        }
        match found {
            Some(p) => {
                pieces.push(p);
                start = end;
            }
            None => return vec![UNK.to_string()],
        }
    }
    pieces
}

/// Tokenizes to `[CLS] pieces... [SEP]`, truncating pieces to `max_len − 2`.
pub fn encode(text: &str, vocab: &Vocab, max_len: usize) -> TokenSeq {
    assert!(max_len >= 3, "max_len must leave room for [CLS], [SEP] and one piece");
    let words = whitespace_split(text);
    let mut pieces = vec![CLS.to_string()];
    let mut word_index = vec![NO_WORD];
    'outer: for (wi, word) in words.iter().enumerate() {
        let looked_up = if vocab.lowercase() { word.to_lowercase() } else { word.clone() };
        for piece in wordpiece(&looked_up, vocab) {
            if pieces.len() == max_len - 1 {
                break 'outer;
            }
            pieces.push(piece);
            word_index.push(wi);
        }
    }
    pieces.push(SEP.to_string());
    word_index.push(NO_WORD);
    let ids = pieces
        .iter()
        .map(|p| vocab.id(p).expect("wordpiece only emits in-vocab pieces"))
        .collect();
    TokenSeq { pieces, ids, word_index, words }
}
