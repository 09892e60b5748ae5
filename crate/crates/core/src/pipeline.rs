//! The ask path: inbound translation → question embedding → similarity
//! lookup → answer composition → outbound translation.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{normalize_text, Corpus};
use crate::evalkit::{RankedAnswer, Ranker};
use crate::langbridge::{TranslateError, TranslatorRegistry};
use crate::simindex::{build_index, Index, IndexEntry, IndexError, SearchHit, StoredIndex};
use crate::summarizer::split_sentences;
use crate::textpipe::{encode_text, tokenize, VocabError, Vocabulary};
use crate::tinybert::{encode, EncoderError, EncoderParams, Head};
use crate::trainer::load_checkpoint;
use crate::FormatError;

/// Language all stored answers and the encoder work in.
pub const PIVOT_LANG: &str = "en";
pub const DEFAULT_STITCH_SENTENCES: usize = 8;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("no answer available: the index is empty")]
    NoAnswer,
    #[error(transparent)]
    Translate(#[from] TranslateError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("answer composition failed: {0}")]
    Compose(String),
    #[error("artifact error: {0}")]
    Artifact(String),
}

impl From<FormatError> for PipelineError {
    fn from(e: FormatError) -> Self {
        PipelineError::Artifact(e.to_string())
    }
}

impl From<VocabError> for PipelineError {
    fn from(e: VocabError) -> Self {
        PipelineError::Artifact(e.to_string())
    }
}

/// Produces a natural-language answer from the question and retrieved
/// answer texts. Implementations must be deterministic for identical inputs
/// and must return nonempty text when `retrieved` is nonempty.
pub trait Generator: Send + Sync {
    fn name(&self) -> &str;
    fn generate(&self, prompt: &str, retrieved: &[String]) -> Result<String, String>;
}

/// Deterministic extractive stand-in for a learned generator: returns the
/// retrieved sentences sharing the most tokens with the prompt (ties by
/// retrieval order), in retrieval order.
#[derive(Debug, Clone)]
pub struct ExtractiveGenerator {
    pub max_sentences: usize,
}

impl Default for ExtractiveGenerator {
    fn default() -> Self {
        ExtractiveGenerator { max_sentences: 3 }
    }
}

impl Generator for ExtractiveGenerator {
    fn name(&self) -> &str {
        "extractive"
    }

    fn generate(&self, prompt: &str, retrieved: &[String]) -> Result<String, String> {
        let prompt_tokens: HashSet<String> = tokenize(prompt).into_iter().collect();
        let mut candidates: Vec<(usize, usize, String)> = Vec::new();
        let mut seen = HashSet::new();
        for text in retrieved {
            for s in split_sentences(text).sentences {
                if !seen.insert(normalize_text(&s.text)) {
                    continue;
                }
                let overlap = tokenize(&s.text)
                    .into_iter()
                    .collect::<HashSet<_>>()
                    .intersection(&prompt_tokens)
                    .count();
                candidates.push((overlap, candidates.len(), s.text));
            }
        }
        if candidates.is_empty() {
            return Err("nothing retrieved to generate from".into());
        }
        let mut best: Vec<usize> = (0..candidates.len()).collect();
        best.sort_by(|&a, &b| candidates[b].0.cmp(&candidates[a].0).then(a.cmp(&b)));
        best.truncate(self.max_sentences.max(1));
        best.sort_unstable();
        Ok(best
            .into_iter()
            .map(|i| candidates[i].2.as_str())
            .collect::<Vec<_>>()
            .join(" "))
    }
}

#[derive(Clone)]
pub enum ComposerMode {
    /// Highest-ranked answer, verbatim.
    Top1,
    /// Sentences of the ranked answers, deduplicated and capped.
    Stitch {
        max_sentences: usize,
    },
    Generator(Arc<dyn Generator>),
}

impl Default for ComposerMode {
    fn default() -> Self {
        ComposerMode::Stitch {
            max_sentences: DEFAULT_STITCH_SENTENCES,
        }
    }
}

impl ComposerMode {
    pub fn label(&self) -> String {
        match self {
            ComposerMode::Top1 => "top1".into(),
            ComposerMode::Stitch { .. } => "stitch".into(),
            ComposerMode::Generator(g) => format!("generator:{}", g.name()),
        }
    }

    /// Parses `top1`, `stitch`, `stitch:N` or `extractive`.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "top1" => Some(ComposerMode::Top1),
            "stitch" => Some(ComposerMode::default()),
            "extractive" | "generator" => Some(ComposerMode::Generator(Arc::new(
                ExtractiveGenerator::default(),
            ))),
            _ => s
                .strip_prefix("stitch:")
                .and_then(|n| n.parse().ok())
                .map(|max_sentences| ComposerMode::Stitch { max_sentences }),
        }
    }
}

impl fmt::Debug for ComposerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedHit {
    #[serde(flatten)]
    pub hit: SearchHit,
    pub text: String,
}

/// Builds the answer text from ranked hits.
pub fn compose_answer(
    question: &str,
    hits: &[RetrievedHit],
    mode: &ComposerMode,
) -> Result<String, PipelineError> {
    let first = hits
        .first()
        .ok_or_else(|| PipelineError::Compose("no hits to compose from".into()))?;
    match mode {
        ComposerMode::Top1 => Ok(first.text.clone()),
        ComposerMode::Stitch { max_sentences } => {
            let mut seen = HashSet::new();
            let mut out: Vec<String> = Vec::new();
            'hits: for h in hits {
                for s in split_sentences(&h.text).sentences {
                    if out.len() >= *max_sentences {
                        break 'hits;
                    }
                    if seen.insert(normalize_text(&s.text)) {
                        out.push(s.text);
                    }
                }
            }
            if out.is_empty() {
                return Err(PipelineError::Compose(
                    "retrieved answers contain no sentences".into(),
                ));
            }
            Ok(out.join(" "))
        }
        ComposerMode::Generator(g) => {
            let texts: Vec<String> = hits.iter().map(|h| h.text.clone()).collect();
            let out = g
                .generate(question, &texts)
                .map_err(PipelineError::Compose)?;
            if out.trim().is_empty() {
                return Err(PipelineError::Compose(format!(
                    "generator {} returned empty text",
                    g.name()
                )));
            }
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerBundle {
    pub final_text: String,
    pub hits: Vec<RetrievedHit>,
    pub query_lang: String,
    pub english_query: String,
    pub english_answer: String,
    pub composer_mode: String,
}

/// Which embedding the index stores for each pair. Queries always use the
/// question head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexSide {
    /// Answer-head embeddings of the answers.
    #[default]
    Answer,
    /// Question-head embeddings of the questions.
    Question,
}

/// Embeds every pair of `corpus` and builds an exact index keyed by pair id
/// with the answer text as payload.
pub fn build_corpus_index(
    params: &EncoderParams,
    vocab: &Vocabulary,
    corpus: &Corpus,
    side: IndexSide,
) -> Result<Index, PipelineError> {
    let max_len = params.config.max_len;
    let mut entries = Vec::with_capacity(corpus.len());
    for p in corpus {
        let (text, head) = match side {
            IndexSide::Answer => (&p.answer, Head::Answer),
            IndexSide::Question => (&p.question, Head::Question),
        };
        let emb = encode(params, &encode_text(vocab, text, max_len), head)?;
        entries.push(IndexEntry {
            answer_id: p.id.clone(),
            vector: emb.to_f32(),
            payload: p.answer.clone(),
        });
    }
    Ok(build_index(entries)?)
}

/// An immutable snapshot of everything the ask path needs.
pub struct Pipeline {
    pub vocab: Vocabulary,
    pub params: EncoderParams,
    pub index: StoredIndex,
    pub registry: TranslatorRegistry,
    pub composer: ComposerMode,
}

impl fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Pipeline")
            .field("vocab_size", &self.vocab.len())
            .field("index_size", &self.index.as_search().len())
            .field("quantized", &self.index.is_quantized())
            .field("registry", &self.registry)
            .field("composer", &self.composer)
            .finish()
    }
}

impl Pipeline {
    pub fn new(
        vocab: Vocabulary,
        params: EncoderParams,
        index: StoredIndex,
        registry: TranslatorRegistry,
        composer: ComposerMode,
    ) -> Result<Self, PipelineError> {
        if vocab.len() != params.config.vocab_size {
            return Err(PipelineError::Artifact(format!(
                "vocabulary has {} entries, encoder expects {}",
                vocab.len(),
                params.config.vocab_size
            )));
        }
        let s = index.as_search();
        if !s.is_empty() && s.dim() != params.config.d_embed {
            return Err(PipelineError::Artifact(format!(
                "index dimension {} does not match encoder output {}",
                s.dim(),
                params.config.d_embed
            )));
        }
        Ok(Pipeline {
            vocab,
            params,
            index,
            registry,
            composer,
        })
    }

    /// Loads the vocabulary, checkpoint and index files and checks that the
    /// checkpoint was trained against this vocabulary.
    pub fn from_artifacts(
        vocab_path: &Path,
        checkpoint_path: &Path,
        index_path: &Path,
        registry: TranslatorRegistry,
        composer: ComposerMode,
    ) -> Result<Self, PipelineError> {
        let vocab = Vocabulary::load(vocab_path)?;
        let ck = load_checkpoint(checkpoint_path)?;
        if ck.header.vocab_hash != vocab.content_hash() {
            return Err(PipelineError::Artifact(format!(
                "checkpoint {} was trained with a different vocabulary than {}",
                checkpoint_path.display(),
                vocab_path.display()
            )));
        }
        let index = crate::simindex::load_index(index_path)?;
        Self::new(vocab, ck.params, index, registry, composer)
    }

    pub fn index_size(&self) -> usize {
        self.index.as_search().len()
    }

    /// Question-head embedding of English text, in serving precision.
    pub fn embed_query(&self, english: &str) -> Result<Vec<f32>, PipelineError> {
        let seq = encode_text(&self.vocab, english, self.params.config.max_len);
        Ok(encode(&self.params, &seq, Head::Question)?.to_f32())
    }

    /// Answer-head embedding, used as the summarizer's sentence embedder.
    pub fn embed_sentence(&self, text: &str) -> Result<Vec<f64>, PipelineError> {
        let seq = encode_text(&self.vocab, text, self.params.config.max_len);
        Ok(encode(&self.params, &seq, Head::Answer)?.values)
    }

    fn retrieve(&self, english: &str, k: usize) -> Result<Vec<RetrievedHit>, PipelineError> {
        let index = self.index.as_search();
        let hits = index.search(&self.embed_query(english)?, k)?;
        Ok(hits
            .into_iter()
            .map(|hit| {
                let text = index
                    .payload(&hit.answer_id)
                    .unwrap_or_default()
                    .to_string();
                RetrievedHit { hit, text }
            })
            .collect())
    }

    pub fn ask(
        &self,
        question: &str,
        lang: &str,
        top_k: usize,
    ) -> Result<AnswerBundle, PipelineError> {
        if question.trim().is_empty() {
            return Err(PipelineError::EmptyQuestion);
        }
        if !self.registry.supports(lang, PIVOT_LANG) || !self.registry.supports(PIVOT_LANG, lang) {
            // Fail before doing any work if either direction is missing.
            let (src, tgt) = if self.registry.supports(lang, PIVOT_LANG) {
                (PIVOT_LANG, lang)
            } else {
                (lang, PIVOT_LANG)
            };
            self.registry.translate(question, src, tgt)?;
        }
        let english_query = self.registry.translate(question, lang, PIVOT_LANG)?;
        if self.index_size() == 0 {
            return Err(PipelineError::NoAnswer);
        }
        let hits = self.retrieve(&english_query, top_k.max(1))?;
        let english_answer = compose_answer(&english_query, &hits, &self.composer)?;
        let final_text = self.registry.translate(&english_answer, PIVOT_LANG, lang)?;
        Ok(AnswerBundle {
            final_text,
            hits,
            query_lang: lang.to_string(),
            english_query,
            english_answer,
            composer_mode: self.composer.label(),
        })
    }
}

impl Ranker for Pipeline {
    /// Full ranking of the index for `question`.
    fn rank(&self, question: &str, lang: &str) -> Result<Vec<RankedAnswer>, String> {
        let english = self
            .registry
            .translate(question, lang, PIVOT_LANG)
            .map_err(|e| e.to_string())?;
        let n = self.index_size();
        if n == 0 {
            return Ok(Vec::new());
        }
        let hits = self.retrieve(&english, n).map_err(|e| e.to_string())?;
        Ok(hits
            .into_iter()
            .map(|h| RankedAnswer {
                answer_id: h.hit.answer_id,
                text: h.text,
            })
            .collect())
    }
}
