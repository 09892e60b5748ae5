//! Word-level tokenizer, frequency-ranked vocabulary and fixed-length encoding.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::Corpus;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const EOS_ID: u32 = 3;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const CLS: &str = "<cls>";
pub const EOS: &str = "<eos>";

const SPECIALS: [&str; 4] = [PAD, UNK, CLS, EOS];

pub const DEFAULT_MAX_LEN: usize = 128;
pub const DEFAULT_MAX_SIZE: usize = 8192;
pub const DEFAULT_MIN_FREQ: usize = 2;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("vocabulary line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// Casefolds, splits on Unicode whitespace, and emits every maximal run of
/// ASCII punctuation as its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let folded = text.to_lowercase();
    let mut out = Vec::new();
    for word in folded.split_whitespace() {
        let mut cur = String::new();
        let mut cur_is_punct = false;
        for ch in word.chars() {
            let p = ch.is_ascii_punctuation();
            if !cur.is_empty() && p != cur_is_punct {
                out.push(std::mem::take(&mut cur));
            }
            cur_is_punct = p;
            cur.push(ch);
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

/// Bidirectional token/id map. Ids 0..=3 are the specials.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// The four special tokens and nothing else.
    pub fn specials_only() -> Self {
        Self::from_tokens(Vec::<String>::new()).expect("specials are valid")
    }

    /// Builds from non-special tokens, assigned ids 4, 5, ... in order.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self, VocabError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut id_to_token: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(tokens.into_iter().map(Into::into));
        Self::from_id_list(id_to_token)
    }

    fn from_id_list(id_to_token: Vec<String>) -> Result<Self, VocabError> {
        let mut token_to_id = HashMap::with_capacity(id_to_token.len());
        for (i, tok) in id_to_token.iter().enumerate() {
            let line = i + 1;
            if i < SPECIALS.len() {
                if tok != SPECIALS[i] {
                    return Err(VocabError::Malformed {
                        line,
                        reason: format!("expected special {:?}, found {tok:?}", SPECIALS[i]),
                    });
                }
            } else if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(VocabError::Malformed {
                    line,
                    reason: "token is empty or contains whitespace".into(),
                });
            }
            if token_to_id.insert(tok.clone(), i as u32).is_some() {
                return Err(VocabError::Malformed {
                    line,
                    reason: format!("duplicate token {tok:?}"),
                });
            }
        }
        Ok(Vocabulary {
            token_to_id,
            id_to_token,
        })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    /// One token per line, line `i` holding id `i`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.id_to_token {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, VocabError> {
        let body = text.strip_suffix('\n').unwrap_or(text);
        let tokens: Vec<String> = if body.is_empty() {
            Vec::new()
        } else {
            body.split('\n')
                .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
                .collect()
        };
        if tokens.len() < SPECIALS.len() {
            return Err(VocabError::Malformed {
                line: tokens.len() + 1,
                reason: "missing special tokens".into(),
            });
        }
        Self::from_id_list(tokens)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        fs::write(path, self.to_text())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VocabError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Hex SHA-256 of the file serialization; checkpoints record it to pin
    /// the vocabulary they were trained against.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Maps ids back to tokens, stopping at the first PAD. CLS/EOS are dropped.
    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter()
            .take_while(|&&id| id != PAD_ID)
            .filter(|&&id| id != CLS_ID && id != EOS_ID)
            .map(|&id| self.token(id).unwrap_or(UNK).to_string())
            .collect()
    }
}

/// Counts tokens over all questions and answers, keeps those with
/// `count >= min_freq`, and assigns ids from 4 in (descending count,
/// ascending token) order, capped so the total size is at most `max_size`.
///
/// # Panics
/// If `max_size < 5` or `min_freq < 1`.
pub fn build_vocab(c: &Corpus, max_size: usize, min_freq: usize) -> Vocabulary {
    assert!(max_size >= 5, "max_size must be at least 5");
    assert!(min_freq >= 1, "min_freq must be at least 1");
    let mut counts: HashMap<String, usize> = HashMap::new();
    for p in c {
        for t in tokenize(&p.question).into_iter().chain(tokenize(&p.answer)) {
            *counts.entry(t).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(t, n)| *n >= min_freq && !SPECIALS.contains(&t.as_str()))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_size - SPECIALS.len());
    Vocabulary::from_tokens(ranked.into_iter().map(|(t, _)| t))
        .expect("tokens are unique and non-blank")
}

/// A padded, fixed-length id sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub ids: Vec<u32>,
    pub true_len: usize,
    pub truncated: bool,
}

impl TokenSeq {
    pub fn max_len(&self) -> usize {
        self.ids.len()
    }

    pub fn content(&self) -> &[u32] {
        &self.ids[..self.true_len]
    }
}

/// `[CLS] tokens.. [EOS]` padded with PAD to `max_len`; OOV tokens map to UNK.
///
/// # Panics
/// If `max_len < 2`.
pub fn encode_text(v: &Vocabulary, text: &str, max_len: usize) -> TokenSeq {
    assert!(max_len >= 2, "max_len must be at least 2");
    let tokens = tokenize(text);
    let room = max_len - 2;
    let truncated = tokens.len() > room;
    let mut ids = Vec::with_capacity(max_len);
    ids.push(CLS_ID);
    ids.extend(tokens.iter().take(room).map(|t| v.id(t).unwrap_or(UNK_ID)));
    ids.push(EOS_ID);
    let true_len = ids.len();
    ids.resize(max_len, PAD_ID);
    TokenSeq {
        ids,
        true_len,
        truncated,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::QaPair;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            toks("Chest pain, fever."),
            ["chest", "pain", ",", "fever", "."]
        );
        assert!(toks("").is_empty());
        assert_eq!(toks("BP 120/80"), ["bp", "120", "/", "80"]);
        assert_eq!(
            toks("what?!  ok...\tdone"),
            ["what", "?!", "ok", "...", "done"]
        );
        assert_eq!(toks("Fièvre\u{00a0}forte"), ["fièvre", "forte"]);
    }

    fn corpus(texts: &[(&str, &str)]) -> Corpus {
        let pairs = texts
            .iter()
            .enumerate()
            .map(|(i, (q, a))| QaPair::new(i.to_string(), *q, *a))
            .collect();
        Corpus::from_pairs("c", pairs).unwrap()
    }

    #[test]
    fn min_freq_threshold() {
        let c = corpus(&[("fever fever rash", "fever"), ("fever rash", "fever")]);
        let v = build_vocab(&c, 100, 3);
        assert_eq!(v.id("fever"), Some(4));
        assert_eq!(v.id("rash"), None);
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn empty_corpus_gives_specials() {
        let v = build_vocab(&Corpus::empty("e"), 10, 1);
        assert_eq!(v.tokens(), [PAD, UNK, CLS, EOS]);
    }

    #[test]
    fn ties_break_lexicographically_and_cap_applies() {
        let c = corpus(&[("zeta alpha mid", "mid zeta alpha"), ("mid", "x")]);
        // counts: mid 3, alpha 2, zeta 2, x 1
        let v = build_vocab(&c, 100, 1);
        assert_eq!(&v.tokens()[4..], ["mid", "alpha", "zeta", "x"]);
        let capped = build_vocab(&c, 6, 1);
        assert_eq!(&capped.tokens()[4..], ["mid", "alpha"]);
    }

    #[test]
    fn encode_empty_text() {
        let v = Vocabulary::specials_only();
        let s = encode_text(&v, "", 8);
        assert_eq!(s.ids, [2, 3, 0, 0, 0, 0, 0, 0]);
        assert_eq!(s.true_len, 2);
        assert!(!s.truncated);
    }

    #[test]
    fn encode_in_vocab_and_truncation() {
        let v = Vocabulary::from_tokens(["fever", "child", "has"]).unwrap();
        let s = encode_text(&v, "Child has fever", 8);
        assert_eq!(s.ids, [2, 5, 6, 4, 3, 0, 0, 0]);
        assert!(!s.truncated && !s.ids.contains(&UNK_ID));

        let long = (0..20).map(|_| "fever").collect::<Vec<_>>().join(" ");
        let t = encode_text(&v, &long, 8);
        assert_eq!(t.true_len, 8);
        assert_eq!(t.ids[0], CLS_ID);
        assert_eq!(t.ids[7], EOS_ID);
        assert!(t.truncated);
        // exactly max_len - 2 tokens is not a truncation
        let exact = encode_text(&v, "fever fever fever fever fever fever", 8);
        assert!(!exact.truncated);
        assert_eq!(exact.true_len, 8);
    }

    #[test]
    fn vocab_file_round_trip_and_errors() {
        let v = Vocabulary::from_tokens(["a", "b"]).unwrap();
        assert_eq!(Vocabulary::parse(&v.to_text()).unwrap(), v);
        assert!(Vocabulary::parse("<pad>\n<unk>\n").is_err());
        assert!(Vocabulary::parse("<pad>\n<unk>\n<cls>\n<eos>\na\na\n").is_err());
        assert!(Vocabulary::parse("<unk>\n<pad>\n<cls>\n<eos>\n").is_err());
        assert!(Vocabulary::parse("<pad>\n<unk>\n<cls>\n<eos>\n\n").is_err());
    }

    proptest! {
        #[test]
        fn encode_ids_in_range(text in "\\PC{0,80}", max_len in 2usize..40) {
            let v = Vocabulary::from_tokens(["the", "fever", ",", "."]).unwrap();
            let s = encode_text(&v, &text, max_len);
            prop_assert_eq!(s.ids.len(), max_len);
            prop_assert!(s.true_len >= 2 && s.true_len <= max_len);
            prop_assert_eq!(s.ids[0], CLS_ID);
            prop_assert_eq!(s.ids[s.true_len - 1], EOS_ID);
            for (i, &id) in s.ids.iter().enumerate() {
                prop_assert!((id as usize) < v.len());
                if i < s.true_len { prop_assert!(id >= 1) } else { prop_assert_eq!(id, PAD_ID) }
            }
        }

        #[test]
        fn decode_inverts_encode(words in prop::collection::vec(prop::sample::select(vec!["fever", "child", "rash", "?", ","]), 0..10)) {
            let v = Vocabulary::from_tokens(["fever", "child", "rash", "?", ","]).unwrap();
            let text = words.join(" ");
            let s = encode_text(&v, &text, 16);
            prop_assert_eq!(v.decode(&s.ids), tokenize(&text));
        }

        #[test]
        fn build_vocab_deterministic(texts in prop::collection::vec(("[a-c ]{1,10}", "[a-d ,]{1,10}"), 1..10)) {
            let pairs = texts.iter().enumerate()
                .map(|(i, (q, a))| QaPair::new(i.to_string(), format!("q {q}"), format!("a {a}")))
                .collect();
            let c = Corpus::from_pairs("p", pairs).unwrap();
            prop_assert_eq!(build_vocab(&c, 50, 1), build_vocab(&c, 50, 1));
        }
    }
}
