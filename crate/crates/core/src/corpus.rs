//! QA-pair corpora: JSONL ingestion, normalized deduplication and seeded splits.
//!
//! A corpus file holds one JSON object per line with the required keys
//! `id`, `question` and `answer`, plus optional `lang` (default `"en"`) and
//! `source` (default `"unknown"`). Lines starting with `#` at column 0 and
//! whitespace-only lines are skipped.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Longest accepted record line, in bytes (excluding the newline).
pub const MAX_LINE_BYTES: usize = 64 * 1024;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("duplicate id {id:?} on lines {first} and {second}")]
    DuplicateId {
        id: String,
        first: usize,
        second: usize,
    },
}

fn default_lang() -> String {
    "en".to_string()
}

fn default_source() -> String {
    "unknown".to_string()
}

/// One question/answer record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub id: String,
    pub question: String,
    pub answer: String,
    #[serde(default = "default_lang")]
    pub lang: String,
    #[serde(default = "default_source")]
    pub source: String,
}

impl QaPair {
    pub fn new(
        id: impl Into<String>,
        question: impl Into<String>,
        answer: impl Into<String>,
    ) -> Self {
        QaPair {
            id: id.into(),
            question: question.into(),
            answer: answer.into(),
            lang: default_lang(),
            source: default_source(),
        }
    }

    fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.question.trim().is_empty() {
            return Err("empty question".into());
        }
        if self.answer.trim().is_empty() {
            return Err("empty answer".into());
        }
        Ok(())
    }
}

/// An ordered, id-unique collection of [`QaPair`]s.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub name: String,
    pairs: Vec<QaPair>,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate ids or invalid records. Line
    /// numbers in errors are 1-based positions in `pairs`.
    pub fn from_pairs(name: impl Into<String>, pairs: Vec<QaPair>) -> Result<Self, CorpusError> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (i, p) in pairs.iter().enumerate() {
            p.validate().map_err(|reason| CorpusError::Malformed {
                line: i + 1,
                reason,
            })?;
            if let Some(first) = seen.insert(&p.id, i + 1) {
                return Err(CorpusError::DuplicateId {
                    id: p.id.clone(),
                    first,
                    second: i + 1,
                });
            }
        }
        Ok(Corpus {
            name: name.into(),
            pairs,
        })
    }

    pub fn empty(name: impl Into<String>) -> Self {
        Corpus {
            name: name.into(),
            pairs: Vec::new(),
        }
    }

    pub fn pairs(&self) -> &[QaPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, QaPair> {
        self.pairs.iter()
    }

    pub fn get(&self, id: &str) -> Option<&QaPair> {
        self.pairs.iter().find(|p| p.id == id)
    }

    /// Parses corpus text. `name` labels the result.
    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self, CorpusError> {
        let mut pairs = Vec::new();
        let mut lines_of: HashMap<String, usize> = HashMap::new();
        for (idx, raw) in text.split('\n').enumerate() {
            let line_no = idx + 1;
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.len() > MAX_LINE_BYTES {
                return Err(CorpusError::Malformed {
                    line: line_no,
                    reason: format!("line exceeds {MAX_LINE_BYTES} bytes"),
                });
            }
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let pair = parse_record(line).map_err(|reason| CorpusError::Malformed {
                line: line_no,
                reason,
            })?;
            if let Some(&first) = lines_of.get(&pair.id) {
                return Err(CorpusError::DuplicateId {
                    id: pair.id,
                    first,
                    second: line_no,
                });
            }
            lines_of.insert(pair.id.clone(), line_no);
            pairs.push(pair);
        }
        Ok(Corpus {
            name: name.into(),
            pairs,
        })
    }

    /// Serializes to the JSONL corpus format, one record per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for p in &self.pairs {
            out.push_str(&serde_json::to_string(p).expect("QaPair serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(self.to_jsonl().as_bytes())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        fs::write(path, self.to_jsonl())
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a QaPair;
    type IntoIter = std::slice::Iter<'a, QaPair>;

    fn into_iter(self) -> Self::IntoIter {
        self.pairs.iter()
    }
}

/// Parses a single corpus record line.
pub fn parse_record(line: &str) -> Result<QaPair, String> {
    let pair: QaPair = serde_json::from_str(line).map_err(|e| e.to_string())?;
    pair.validate()?;
    Ok(pair)
}

/// Reads a corpus file. The corpus is named after the file stem.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Corpus::parse(name, &text)
}

/// Trim, collapse internal whitespace runs to one space, casefold.
pub fn normalize_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

/// Drops pairs whose normalized (question, answer) was already seen.
pub fn dedupe(c: &Corpus) -> Corpus {
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let pairs = c
        .pairs
        .iter()
        .filter(|p| seen.insert((normalize_text(&p.question), normalize_text(&p.answer))))
        .cloned()
        .collect();
    Corpus {
        name: c.name.clone(),
        pairs,
    }
}

/// Seeded train/test partition. The test side receives
/// `round(test_fraction * len)` pairs; both sides keep the input order.
///
/// # Panics
/// If `test_fraction` is outside `[0, 1]` or NaN.
pub fn split(c: &Corpus, test_fraction: f64, seed: u64) -> (Corpus, Corpus) {
    assert!(
        (0.0..=1.0).contains(&test_fraction),
        "test_fraction must lie in [0, 1], got {test_fraction}"
    );
    let n = c.len();
    let n_test = ((test_fraction * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut in_test = vec![false; n];
    for &i in &order[..n_test] {
        in_test[i] = true;
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (p, t) in c.pairs.iter().zip(in_test) {
        if t {
            test.push(p.clone());
        } else {
            train.push(p.clone());
        }
    }
    (
        Corpus {
            name: format!("{}-train", c.name),
            pairs: train,
        },
        Corpus {
            name: format!("{}-test", c.name),
            pairs: test,
        },
    )
}
