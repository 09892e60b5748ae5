//! Dual-encoder training with in-batch negatives.
//!
//! Each batch embeds questions through the question head and answers through
//! the answer head, scores every question against every answer in the batch
//! by dot product, and minimizes row-wise softmax cross-entropy at the
//! diagonal. Gradients flow through both heads into the shared trunk and are
//! applied with Adam.

mod adam;
mod checkpoint;
mod loss;

use std::path::PathBuf;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint,
    CheckpointHeader, CHECKPOINT_MAGIC,
};
pub use loss::{batch_loss, BatchLossReport};

use crate::binfmt::FormatError;
use crate::corpus::Corpus;
use crate::textpipe::{encode_text, TokenSeq, Vocabulary};
use crate::tinybert::{backward, forward, EncoderError, EncoderParams, Head};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] FormatError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub shuffle_seed: u64,
    pub checkpoint_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            batch_size: 16,
            epochs: 100,
            learning_rate: adam.learning_rate,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_eps: adam.eps,
            shuffle_seed: 0,
            checkpoint_path: None,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        // lr == 0 is accepted as an explicit null update.
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(TrainError::Config(
                "learning_rate must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: u64,
    pub mean_loss: f64,
    /// Fraction of rows, over all batches, whose diagonal logit was the strict row max.
    pub diag_accuracy: f64,
    pub batches: usize,
}

/// Questions and answers of a corpus encoded once for repeated epochs.
#[derive(Debug, Clone)]
pub struct EncodedPairs {
    pub questions: Vec<TokenSeq>,
    pub answers: Vec<TokenSeq>,
}

impl EncodedPairs {
    pub fn new(corpus: &Corpus, vocab: &Vocabulary, max_len: usize) -> Self {
        EncodedPairs {
            questions: corpus
                .iter()
                .map(|p| encode_text(vocab, &p.question, max_len))
                .collect(),
            answers: corpus
                .iter()
                .map(|p| encode_text(vocab, &p.answer, max_len))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }
}

/// Loss report plus parameter gradients for one batch.
pub struct BatchGradient {
    pub report: BatchLossReport,
    pub grads: EncoderParams,
}

/// Forward and backward pass over one batch without touching `params`.
pub fn batch_gradient(
    params: &EncoderParams,
    questions: &[&TokenSeq],
    answers: &[&TokenSeq],
) -> Result<BatchGradient, TrainError> {
    if questions.len() != answers.len() || questions.is_empty() {
        return Err(TrainError::Shape(format!(
            "{} questions vs {} answers",
            questions.len(),
            answers.len()
        )));
    }
    let d = params.config.d_embed;
    let b = questions.len();
    let q_traces = questions
        .iter()
        .map(|s| forward(params, s, Head::Question))
        .collect::<Result<Vec<_>, _>>()?;
    let a_traces = answers
        .iter()
        .map(|s| forward(params, s, Head::Answer))
        .collect::<Result<Vec<_>, _>>()?;
    let mut q = Array2::zeros((b, d));
    let mut a = Array2::zeros((b, d));
    for i in 0..b {
        q.row_mut(i).assign(&q_traces[i].embedding);
        a.row_mut(i).assign(&a_traces[i].embedding);
    }
    let report = batch_loss(&q, &a)?;
    let ds = report.logits_grad();
    let dq = ds.dot(&a);
    let da = ds.t().dot(&q);
    let mut grads = params.zeros_like();
    for i in 0..b {
        backward(params, &q_traces[i], dq.row(i), &mut grads);
        backward(params, &a_traces[i], da.row(i), &mut grads);
    }
    Ok(BatchGradient { report, grads })
}

/// Per-epoch shuffle; seeded from the config seed and the epoch counter so
/// that a resumed run reproduces an uninterrupted one.
fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mixed = seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mixed));
    order
}

/// One pass over pre-encoded pairs. The final short batch is trained too.
pub fn train_epoch_encoded(
    params: &mut EncoderParams,
    opt: &mut AdamState,
    data: &EncodedPairs,
    cfg: &TrainConfig,
) -> Result<EpochReport, TrainError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let adam = cfg.adam();
    let epoch = opt.epochs_done;
    let order = epoch_order(data.len(), cfg.shuffle_seed, epoch);
    let mut loss_sum = 0.0;
    let mut hits = 0;
    let mut batches = 0;
    for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
        let qs: Vec<&TokenSeq> = chunk.iter().map(|&i| &data.questions[i]).collect();
        let ans: Vec<&TokenSeq> = chunk.iter().map(|&i| &data.answers[i]).collect();
        let BatchGradient { report, grads } = batch_gradient(params, &qs, &ans)?;
        if !report.loss.is_finite() {
            return Err(TrainError::NonFinite(format!(
                "loss {} at epoch {epoch}, batch {bi}",
                report.loss
            )));
        }
        opt.update(&adam, params, &grads);
        loss_sum += report.loss;
        hits += report.diag_rank_hits;
        batches += 1;
    }
    opt.epochs_done += 1;
    Ok(EpochReport {
        epoch,
        mean_loss: loss_sum / batches as f64,
        diag_accuracy: hits as f64 / data.len() as f64,
        batches,
    })
}

/// Encodes `train` with `vocab` and runs one epoch.
pub fn train_epoch(
    params: &mut EncoderParams,
    opt: &mut AdamState,
    train: &Corpus,
    vocab: &Vocabulary,
    cfg: &TrainConfig,
) -> Result<EpochReport, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    if vocab.len() != params.config.vocab_size {
        return Err(TrainError::Config(format!(
            "vocabulary has {} entries but the encoder expects {}",
            vocab.len(),
            params.config.vocab_size
        )));
    }
    let data = EncodedPairs::new(train, vocab, params.config.max_len);
    train_epoch_encoded(params, opt, &data, cfg)
}
