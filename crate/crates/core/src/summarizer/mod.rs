//! Extractive summaries: split a note into sentences, embed each one, cluster
//! the embeddings with k-means, and keep the sentence nearest each centroid.

mod kmeans;

use serde::{Deserialize, Serialize};

pub use kmeans::{kmeans, objective, KMeansResult};

use kmeans::sq_dist;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SentenceSet {
    pub sentences: Vec<Sentence>,
}

impl SentenceSet {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn from_texts<I: IntoIterator<Item = S>, S: Into<String>>(texts: I) -> Self {
        SentenceSet {
            sentences: texts
                .into_iter()
                .enumerate()
                .map(|(position, t)| Sentence {
                    text: t.into(),
                    position,
                })
                .collect(),
        }
    }
}

/// Splits after `.`, `?` or `!` when followed by whitespace or end of text.
/// Abbreviations such as "Dr." therefore end a sentence.
pub fn split_sentences(text: &str) -> SentenceSet {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '?' | '!') {
            let boundary = match chars.peek() {
                None => true,
                Some(&(_, next)) => next.is_whitespace(),
            };
            if boundary {
                let end = i + c.len_utf8();
                push_trimmed(&mut out, &text[start..end]);
                start = end;
            }
        }
    }
    push_trimmed(&mut out, &text[start..]);
    SentenceSet::from_texts(out)
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let t = s.trim();
    if !t.is_empty() {
        out.push(t.to_string());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KRule {
    /// `max(1, round(sqrt(n)))`
    Sqrt,
    Fixed(usize),
    /// `max(1, round(r * n))`
    Ratio(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SummaryConfig {
    pub k_rule: KRule,
    pub max_sentences: usize,
    pub kmeans_seed: u64,
    pub kmeans_max_iters: usize,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        SummaryConfig {
            k_rule: KRule::Sqrt,
            max_sentences: 8,
            kmeans_seed: 0,
            kmeans_max_iters: 100,
        }
    }
}

impl SummaryConfig {
    /// Number of clusters for `n` sentences, clamped to `[1, min(n, max_sentences)]`.
    pub fn resolve_k(&self, n: usize) -> usize {
        let raw = match self.k_rule {
            KRule::Sqrt => (n as f64).sqrt().round() as usize,
            KRule::Fixed(k) => k,
            KRule::Ratio(r) => (r * n as f64).round() as usize,
        };
        raw.min(self.max_sentences).min(n).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    /// Selected sentences in original order.
    pub sentences: Vec<Sentence>,
    pub k_used: usize,
    pub clustering: Option<KMeansResult>,
}

/// Picks one representative sentence per k-means cluster of the sentence
/// embeddings; ties on distance go to the earlier sentence. An empty input
/// gives an empty summary.
pub fn summarize<F>(s: &SentenceSet, mut embed: F, cfg: &SummaryConfig) -> Summary
where
    F: FnMut(&str) -> Vec<f64>,
{
    let n = s.len();
    if n == 0 {
        return Summary {
            sentences: Vec::new(),
            k_used: 0,
            clustering: None,
        };
    }
    let k = cfg.resolve_k(n);
    let points: Vec<Vec<f64>> = s.sentences.iter().map(|x| embed(&x.text)).collect();
    let result = kmeans(&points, k, cfg.kmeans_seed, cfg.kmeans_max_iters);
    let mut picked: Vec<usize> = (0..k)
        .filter_map(|c| {
            let mut best: Option<(f64, usize)> = None;
            for (i, p) in points.iter().enumerate() {
                if result.assignments[i] != c {
                    continue;
                }
                let d = sq_dist(p, &result.centroids[c]);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, i));
                }
            }
            best.map(|(_, i)| i)
        })
        .collect();
    picked.sort_unstable();
    Summary {
        sentences: picked.into_iter().map(|i| s.sentences[i].clone()).collect(),
        k_used: k,
        clustering: Some(result),
    }
}
