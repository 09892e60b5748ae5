//! Dense answer-embedding store with exact top-k dot-product search.
//!
//! Vectors are stored in `f32`; scores accumulate in `f64`. Ranking is by
//! descending score with ties broken by ascending id, so results do not
//! depend on insertion order.

mod persist;
mod quant;

use std::cmp::Ordering;
use std::collections::HashMap;

use thiserror::Error;

pub use persist::{decode_index, encode_index, load_index, save_index, StoredIndex, INDEX_MAGIC};
pub use quant::{quantize, quantize_vector, QuantizedIndex, QuantizedVector};

#[derive(Debug, Error, PartialEq)]
pub enum IndexError {
    #[error("vector for {id:?} has dimension {got}, index dimension is {expected}")]
    Dimension {
        id: String,
        expected: usize,
        got: usize,
    },
    #[error("query has dimension {got}, index dimension is {expected}")]
    QueryDimension { expected: usize, got: usize },
    #[error("duplicate answer id {0:?}")]
    DuplicateId(String),
    #[error("vector for {0:?} has non-finite components")]
    NonFinite(String),
    #[error("query has non-finite components")]
    NonFiniteQuery,
    #[error("k must be at least 1")]
    ZeroK,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub answer_id: String,
    pub vector: Vec<f32>,
    /// Answer text served with hits.
    pub payload: String,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SearchHit {
    pub answer_id: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// Operations shared by the exact and quantized stores.
pub trait VectorSearch: Send + Sync {
    fn dim(&self) -> usize;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn search(&self, query: &[f32], k: usize) -> Result<Vec<SearchHit>, IndexError>;
    fn payload(&self, answer_id: &str) -> Option<&str>;
}

/// Immutable exact index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Index {
    dim: usize,
    entries: Vec<IndexEntry>,
    by_id: HashMap<String, usize>,
}

/// Validates and freezes `entries`. An empty list gives an empty index of
/// dimension 0.
pub fn build_index(entries: Vec<IndexEntry>) -> Result<Index, IndexError> {
    let dim = entries.first().map_or(0, |e| e.vector.len());
    let mut by_id = HashMap::with_capacity(entries.len());
    for (i, e) in entries.iter().enumerate() {
        if e.vector.len() != dim {
            return Err(IndexError::Dimension {
                id: e.answer_id.clone(),
                expected: dim,
                got: e.vector.len(),
            });
        }
        if e.vector.iter().any(|v| !v.is_finite()) {
            return Err(IndexError::NonFinite(e.answer_id.clone()));
        }
        if by_id.insert(e.answer_id.clone(), i).is_some() {
            return Err(IndexError::DuplicateId(e.answer_id.clone()));
        }
    }
    Ok(Index {
        dim,
        entries,
        by_id,
    })
}

impl Index {
    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn get(&self, answer_id: &str) -> Option<&IndexEntry> {
        self.by_id.get(answer_id).map(|&i| &self.entries[i])
    }
}

impl VectorSearch for Index {
    fn dim(&self) -> usize {
        self.dim
    }

    fn len(&self) -> usize {
        self.entries.len()
    }

    fn search(&self, query: &[f32], k: usize) -> Result<Vec<SearchHit>, IndexError> {
        search_topk(self, query, k)
    }

    fn payload(&self, answer_id: &str) -> Option<&str> {
        self.get(answer_id).map(|e| e.payload.as_str())
    }
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub(crate) fn check_query(
    dim: usize,
    len: usize,
    query: &[f32],
    k: usize,
) -> Result<(), IndexError> {
    if k == 0 {
        return Err(IndexError::ZeroK);
    }
    if len > 0 && query.len() != dim {
        return Err(IndexError::QueryDimension {
            expected: dim,
            got: query.len(),
        });
    }
    if query.iter().any(|v| !v.is_finite()) {
        return Err(IndexError::NonFiniteQuery);
    }
    Ok(())
}

fn hit_order(a: &(f64, &str), b: &(f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

/// Keeps the `k` best `(score, id)` pairs and assigns ranks.
pub(crate) fn rank_scored(mut scored: Vec<(f64, &str)>, k: usize) -> Vec<SearchHit> {
    let k = k.min(scored.len());
    if k == 0 {
        return Vec::new();
    }
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, hit_order);
        scored.truncate(k);
    }
    scored.sort_unstable_by(hit_order);
    scored
        .into_iter()
        .enumerate()
        .map(|(i, (score, id))| SearchHit {
            answer_id: id.to_string(),
            score,
            rank: i + 1,
        })
        .collect()
}

/// The `min(k, len)` entries with the largest dot product against `query`.
/// An empty index yields no hits regardless of the query's dimension.
pub fn search_topk(index: &Index, query: &[f32], k: usize) -> Result<Vec<SearchHit>, IndexError> {
    check_query(index.dim, index.entries.len(), query, k)?;
    let scored = index
        .entries
        .iter()
        .map(|e| (dot(&e.vector, query), e.answer_id.as_str()))
        .collect();
    Ok(rank_scored(scored, k))
}
