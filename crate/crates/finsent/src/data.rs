//! Dataset ingestion: labeled examples in a tab-separated record format,
//! URL stripping, JSON conversion, and corpus statistics.

use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

use crate::error::{Error, Result};
use crate::tokenizer::whitespace_split;

/// One labeled instance: source platform, target entity, text, gold score.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub source: String,
    pub entity: String,
    pub text: String,
    pub score: f64,
}

/// Corpus statistics in the shape of the dataset summary table: totals,
/// average word count, and the split at score zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub total: usize,
    pub mean_words: f64,
    pub count_negative: usize,
    pub count_nonnegative: usize,
}

fn url_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"https?://\S+").expect("static regex"))
}

/// Removes `http(s)://...` substrings, collapses the surrounding whitespace
/// to single spaces, and trims. Idempotent.
pub fn strip_urls(text: &str) -> String {
    let stripped = url_regex().replace_all(text, " ");
    whitespace_split(&stripped).join(" ")
}

/// Loads a dataset file: UTF-8, tab-separated
/// `source<TAB>entity<TAB>text<TAB>score`, `#` comment lines ignored.
/// Texts are URL-stripped; rows whose text becomes empty are dropped.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<Example>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut examples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(path, lineno, format!(
                "expected `source<TAB>entity<TAB>text<TAB>score`, got {} fields",
                fields.len()
            )));
        }
        let score: f64 = fields[3]
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad score `{}`", fields[3])))?;
        if !(-1.0..=1.0).contains(&score) {
            return Err(Error::parse(path, lineno, format!(
                "score {} outside [-1, 1]",
                score
            )));
        }
        let cleaned = strip_urls(fields[2]);
        if cleaned.is_empty() {
            // empty-after-cleaning rows are dropped, not an error
            continue;
        }
        examples.push(Example {
            source: fields[0].to_string(),
            entity: fields[1].to_string(),
            text: cleaned,
            score,
        });
    }
    Ok(examples)
}

/// Writes examples in the same tab-separated format `load_dataset` reads.
pub fn save_dataset(path: impl AsRef<Path>, examples: &[Example]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for ex in examples {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", ex.source, ex.entity, ex.text, ex.score));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Word counts use whitespace splitting on the stored text; the negative /
/// nonnegative split is at score < 0.
pub fn corpus_stats(examples: &[Example]) -> CorpusStats {
    let total = examples.len();
    let word_total: usize = examples.iter().map(|e| whitespace_split(&e.text).len()).sum();
    let count_negative = examples.iter().filter(|e| e.score < 0.0).count();
    CorpusStats {
        total,
        mean_words: if total == 0 { 0.0 } else { word_total as f64 / total as f64 },
        count_negative,
        count_nonnegative: total - count_negative,
    }
}

/// Field-name mapping for converting upstream JSON arrays to the TSV format.
#[derive(Debug, Clone)]
pub struct JsonFieldMap {
    pub source: String,
    pub entity: String,
    pub text: String,
    pub score: String,
}

impl Default for JsonFieldMap {
    fn default() -> Self {
        JsonFieldMap {
            source: "source".into(),
            entity: "entity".into(),
            text: "text".into(),
            score: "score".into(),
        }
    }
}

/// Converts a JSON array of objects into examples using the given field map.
/// The source field may be absent in upstream files; `default_source` fills it.
pub fn convert_json(
    path: impl AsRef<Path>,
    map: &JsonFieldMap,
    default_source: &str,
) -> Result<Vec<Example>> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&raw)
        .map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
    let array = value
        .as_array()
        .ok_or_else(|| Error::parse(path, 1, "expected a top-level JSON array"))?;
    let mut examples = Vec::with_capacity(array.len());
    for (i, obj) in array.iter().enumerate() {
        let get_str = |key: &str| -> Option<String> {
            obj.get(key).and_then(|v| v.as_str()).map(|s| s.to_string())
        };
        let text = get_str(&map.text)
            .ok_or_else(|| Error::parse(path, i + 1, format!("record {} missing `{}`", i, map.text)))?;
        let score = obj
            .get(&map.score)
            .and_then(|v| {
                v.as_f64().or_else(|| v.as_str().and_then(|s| s.parse().ok()))
            })
            .ok_or_else(|| Error::parse(path, i + 1, format!("record {} missing `{}`", i, map.score)))?;
        if !(-1.0..=1.0).contains(&score) {
            return Err(Error::parse(path, i + 1, format!(
                "record {}: score {} outside [-1, 1]",
                i, score
            )));
        }
        let cleaned = strip_urls(&text);
        if cleaned.is_empty() {
            continue;
        }
        examples.push(Example {
            source: get_str(&map.source).unwrap_or_else(|| default_source.to_string()),
            entity: get_str(&map.entity).unwrap_or_default(),
            text: cleaned,
            score,
        });
    }
    Ok(examples)
}
