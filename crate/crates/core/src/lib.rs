//! Core library for a multilingual medical question-answering pipeline.
//!
//! Stages, in the order data flows through them:
//!
//! - [`corpus`]: QA-pair JSONL ingestion, dedup and splits
//! - [`textpipe`]: word tokenizer, vocabulary, fixed-length encoding
//! - [`tinybert`]: shared-trunk transformer encoder with question/answer heads
//! - [`trainer`]: in-batch softmax cross-entropy training, Adam, checkpoints
//! - [`simindex`]: exact and int8-quantized dot-product search, persistence
//! - [`summarizer`]: k-means extractive summaries of consultation notes
//! - [`langbridge`]: translation adapter registry
//! - [`pipeline`]: translate → embed → search → compose → translate
//! - [`evalkit`]: strict accuracy, recall@k and MRR

pub mod corpus;
pub mod evalkit;
pub mod langbridge;
pub mod pipeline;
pub mod simindex;
pub mod summarizer;
pub mod textpipe;
pub mod tinybert;
pub mod trainer;

mod binfmt;
pub use binfmt::FormatError;
pub mod synth;
