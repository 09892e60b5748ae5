//! Translation adapters between a user's language and English.
//!
//! The pipeline translates inbound questions to English before retrieval and
//! composed English answers back to the user's language. Concrete
//! translators plug in through [`Translator`]; two are provided: the
//! identity and a word-for-word dictionary loaded from TSV.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TranslateError {
    #[error("unsupported language pair {src}->{tgt}; available: {}", format_pairs(.available))]
    UnsupportedPair {
        src: String,
        tgt: String,
        available: Vec<(String, String)>,
    },
    #[error("translator for {src}->{tgt} failed: {message}")]
    Adapter {
        src: String,
        tgt: String,
        message: String,
    },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("dictionary line {line}: {reason}")]
    Dictionary { line: usize, reason: String },
}

fn format_pairs(pairs: &[(String, String)]) -> String {
    if pairs.is_empty() {
        return "none".into();
    }
    pairs
        .iter()
        .map(|(s, t)| format!("{s}->{t}"))
        .collect::<Vec<_>>()
        .join(", ")
}

pub trait Translator: Send + Sync {
    /// Must return nonempty output for nonempty input.
    fn translate(&self, text: &str) -> Result<String, String>;
}

impl<F> Translator for F
where
    F: Fn(&str) -> Result<String, String> + Send + Sync,
{
    fn translate(&self, text: &str) -> Result<String, String> {
        self(text)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn translate(&self, text: &str) -> Result<String, String> {
        Ok(text.to_string())
    }
}

/// Replaces each whitespace-separated word found in the dictionary (exact
/// match first, then lowercase); other words pass through unchanged. Words
/// are rejoined with single spaces.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DictionaryTranslator {
    map: HashMap<String, String>,
}

impl DictionaryTranslator {
    pub fn new<I, K, V>(entries: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        DictionaryTranslator {
            map: entries
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
        }
    }

    /// Parses `source<TAB>target` lines. Blank lines and `#` comments are
    /// skipped; a later entry for the same source word replaces an earlier one.
    pub fn parse_tsv(text: &str) -> Result<Self, TranslateError> {
        let mut map = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: &str| TranslateError::Dictionary {
                line: i + 1,
                reason: reason.into(),
            };
            let (src, tgt) = line
                .split_once('\t')
                .ok_or_else(|| err("expected source<TAB>target"))?;
            if tgt.contains('\t') {
                return Err(err("more than two columns"));
            }
            let (src, tgt) = (src.trim(), tgt.trim());
            if src.is_empty() || tgt.is_empty() || src.contains(char::is_whitespace) {
                return Err(err("source must be one word and target nonempty"));
            }
            map.insert(src.to_string(), tgt.to_string());
        }
        Ok(DictionaryTranslator { map })
    }

    pub fn load_tsv(path: impl AsRef<Path>) -> Result<Self, TranslateError> {
        Self::parse_tsv(&fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// The reverse mapping; later duplicates of a target win.
    pub fn inverted(&self) -> Self {
        let mut entries: Vec<_> = self.map.iter().collect();
        entries.sort();
        DictionaryTranslator::new(entries.into_iter().map(|(k, v)| (v.clone(), k.clone())))
    }
}

impl Translator for DictionaryTranslator {
    fn translate(&self, text: &str) -> Result<String, String> {
        let words: Vec<&str> = text
            .split_whitespace()
            .map(|w| {
                self.map
                    .get(w)
                    .or_else(|| self.map.get(&w.to_lowercase()))
                    .map_or(w, String::as_str)
            })
            .collect();
        Ok(words.join(" "))
    }
}

/// Language pair → translator. `(x, x)` always resolves to the identity.
#[derive(Clone, Default)]
pub struct TranslatorRegistry {
    adapters: BTreeMap<(String, String), Arc<dyn Translator>>,
}

impl fmt::Debug for TranslatorRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TranslatorRegistry")
            .field("pairs", &self.pairs())
            .finish()
    }
}

fn norm_tag(tag: &str) -> String {
    tag.trim().to_ascii_lowercase()
}

impl TranslatorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers or replaces the adapter for `src -> tgt`.
    pub fn register_adapter(&mut self, src: &str, tgt: &str, adapter: Arc<dyn Translator>) {
        self.adapters
            .insert((norm_tag(src), norm_tag(tgt)), adapter);
    }

    pub fn pairs(&self) -> Vec<(String, String)> {
        self.adapters.keys().cloned().collect()
    }

    pub fn supports(&self, src: &str, tgt: &str) -> bool {
        let (s, t) = (norm_tag(src), norm_tag(tgt));
        s == t || self.adapters.contains_key(&(s, t))
    }

    pub fn translate(&self, text: &str, src: &str, tgt: &str) -> Result<String, TranslateError> {
        let (s, t) = (norm_tag(src), norm_tag(tgt));
        if s == t {
            return Ok(text.to_string());
        }
        let adapter = self.adapters.get(&(s.clone(), t.clone())).ok_or_else(|| {
            TranslateError::UnsupportedPair {
                src: s.clone(),
                tgt: t.clone(),
                available: self.pairs(),
            }
        })?;
        let out = adapter
            .translate(text)
            .map_err(|message| TranslateError::Adapter {
                src: s.clone(),
                tgt: t.clone(),
                message,
            })?;
        if out.trim().is_empty() && !text.trim().is_empty() {
            return Err(TranslateError::Adapter {
                src: s,
                tgt: t,
                message: "adapter returned empty text".into(),
            });
        }
        Ok(out)
    }
}
