//! Retrieval metrics and the evaluation runner.
//!
//! Strict accuracy follows the BioASQ factoid convention: a question counts
//! as correct only when the gold answer is ranked first.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{normalize_text, Corpus};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no records to evaluate")]
    Empty,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("ranking failed for question {question_id:?}: {message}")]
    Ranking {
        question_id: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub question_id: String,
    pub gold_answer_id: String,
    /// Duplicate-free, best first.
    pub ranked_ids: Vec<String>,
}

impl EvalRecord {
    /// 1-based rank of the gold answer, if present.
    pub fn gold_rank(&self) -> Option<usize> {
        self.ranked_ids
            .iter()
            .position(|id| *id == self.gold_answer_id)
            .map(|p| p + 1)
    }
}

fn nonempty(records: &[EvalRecord]) -> Result<f64, EvalError> {
    if records.is_empty() {
        Err(EvalError::Empty)
    } else {
        Ok(records.len() as f64)
    }
}

/// Fraction of records whose first ranked id is the gold id.
pub fn strict_accuracy(records: &[EvalRecord]) -> Result<f64, EvalError> {
    let n = nonempty(records)?;
    let hits = records
        .iter()
        .filter(|r| r.ranked_ids.first() == Some(&r.gold_answer_id))
        .count();
    Ok(hits as f64 / n)
}

pub fn recall_at_k(records: &[EvalRecord], k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    let n = nonempty(records)?;
    let hits = records
        .iter()
        .filter(|r| r.gold_rank().is_some_and(|rk| rk <= k))
        .count();
    Ok(hits as f64 / n)
}

/// Mean reciprocal rank; an absent gold answer contributes 0.
pub fn mrr(records: &[EvalRecord]) -> Result<f64, EvalError> {
    let n = nonempty(records)?;
    Ok(records
        .iter()
        .map(|r| r.gold_rank().map_or(0.0, |rk| 1.0 / rk as f64))
        .sum::<f64>()
        / n)
}

/// A ranked candidate: answer id and its text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedAnswer {
    pub answer_id: String,
    pub text: String,
}

/// Anything that can rank stored answers for a question.
pub trait Ranker {
    fn rank(&self, question: &str, lang: &str) -> Result<Vec<RankedAnswer>, String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryLog {
    pub question_id: String,
    pub gold_answer_id: String,
    /// How the gold answer was identified: `"id"` or `"text"`.
    pub matched_by: String,
    pub gold_rank: Option<usize>,
    pub top_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub corpus: String,
    pub n_queries: usize,
    pub strict_accuracy: f64,
    pub mrr: f64,
    pub recall_at_k: BTreeMap<usize, f64>,
    pub per_query: Vec<QueryLog>,
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "corpus           {}", self.corpus);
        let _ = writeln!(s, "queries          {}", self.n_queries);
        let _ = writeln!(s, "strict accuracy  {:.4}", self.strict_accuracy);
        for (k, v) in &self.recall_at_k {
            let _ = writeln!(s, "recall@{k:<9} {v:.4}");
        }
        let _ = writeln!(s, "MRR              {:.4}", self.mrr);
        s
    }
}

const TOP_LOGGED: usize = 5;

/// Ranks every question of `eval` and scores the rankings.
///
/// The gold answer of a pair is its own id. When that id is not among the
/// ranked candidates (an index built from a different corpus), the first
/// candidate whose text equals the pair's answer under dedup normalization
/// is taken as gold instead.
pub fn run_eval<R: Ranker + ?Sized>(
    ranker: &R,
    eval: &Corpus,
    k_list: &[usize],
) -> Result<EvalReport, EvalError> {
    if eval.is_empty() {
        return Err(EvalError::Empty);
    }
    if k_list.contains(&0) {
        return Err(EvalError::ZeroK);
    }
    let mut records = Vec::with_capacity(eval.len());
    let mut logs = Vec::with_capacity(eval.len());
    for pair in eval {
        let ranked =
            ranker
                .rank(&pair.question, &pair.lang)
                .map_err(|message| EvalError::Ranking {
                    question_id: pair.id.clone(),
                    message,
                })?;
        let mut gold = pair.id.clone();
        let mut matched_by = "id";
        if !ranked.iter().any(|r| r.answer_id == gold) {
            let want = normalize_text(&pair.answer);
            if let Some(r) = ranked.iter().find(|r| normalize_text(&r.text) == want) {
                gold = r.answer_id.clone();
                matched_by = "text";
            }
        }
        let rec = EvalRecord {
            question_id: pair.id.clone(),
            gold_answer_id: gold,
            ranked_ids: ranked.into_iter().map(|r| r.answer_id).collect(),
        };
        logs.push(QueryLog {
            question_id: rec.question_id.clone(),
            gold_answer_id: rec.gold_answer_id.clone(),
            matched_by: matched_by.into(),
            gold_rank: rec.gold_rank(),
            top_ids: rec.ranked_ids.iter().take(TOP_LOGGED).cloned().collect(),
        });
        records.push(rec);
    }
    let mut recall = BTreeMap::new();
    for &k in k_list {
        recall.insert(k, recall_at_k(&records, k)?);
    }
    Ok(EvalReport {
        corpus: eval.name.clone(),
        n_queries: records.len(),
        strict_accuracy: strict_accuracy(&records)?,
        mrr: mrr(&records)?,
        recall_at_k: recall,
        per_query: logs,
    })
}
