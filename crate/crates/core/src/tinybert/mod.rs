//! A small bidirectional transformer encoder with one shared trunk and two
//! dense projection heads (question and answer).
//!
//! Everything runs in `f64`. The forward pass only touches the non-PAD prefix
//! of a [`TokenSeq`]: PAD positions are masked out of attention as keys and
//! out of pooling, so nothing computed at them can reach the output. Skipping
//! them is therefore exact, not an approximation.

mod backprop;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backprop::{backward, forward, EncodeTrace};

use crate::textpipe::TokenSeq;

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Error, PartialEq)]
pub enum EncoderError {
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("token id {id} at position {pos} is outside the vocabulary (size {vocab_size})")]
    TokenOutOfRange {
        pos: usize,
        id: u32,
        vocab_size: usize,
    },
    #[error("sequence length {got} does not match configured max_len {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("sequence has no content (true_len {0})")]
    EmptySequence(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub d_embed: usize,
    pub seed: u64,
}

impl EncoderConfig {
    /// The default toy configuration for a given vocabulary size.
    pub fn toy(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 128,
            max_len: crate::textpipe::DEFAULT_MAX_LEN,
            d_embed: 32,
            seed: 0,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let counts = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("max_len", self.max_len),
            ("d_embed", self.d_embed),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(EncoderError::InvalidConfig(format!(
                "{name} must be at least 1"
            )));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(EncoderError::InvalidConfig(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.max_len < 2 {
            return Err(EncoderError::InvalidConfig(
                "max_len must be at least 2".into(),
            ));
        }
        Ok(())
    }
}

/// Affine map `x · weight + bias`, weight stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(d_in: usize, d_out: usize) -> Self {
        Dense {
            weight: Array2::zeros((d_in, d_out)),
            bias: Array1::zeros(d_out),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Array1<f64>,
    pub bias: Array1<f64>,
}

impl LayerNorm {
    fn identity(d: usize) -> Self {
        LayerNorm {
            gain: Array1::ones(d),
            bias: Array1::zeros(d),
        }
    }
}

/// One pre-norm block: attention sublayer then feed-forward sublayer.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub ln_attn: LayerNorm,
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    pub ln_ff: LayerNorm,
    pub ff_in: Dense,
    pub ff_out: Dense,
}

/// Parameters shared by both heads.
#[derive(Debug, Clone, PartialEq)]
pub struct Trunk {
    pub token_embeddings: Array2<f64>,
    pub positional_embeddings: Array2<f64>,
    pub layers: Vec<EncoderLayer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Question,
    Answer,
}

/// The full dual-encoder parameter set. There is a single [`Trunk`]; the two
/// heads are the only parameters that differ between the question and
/// answer paths.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub trunk: Trunk,
    pub q_head: Dense,
    pub a_head: Dense,
}

/// Borrowed view of one named tensor.
#[derive(Debug, Clone)]
pub struct TensorView<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

impl EncoderParams {
    /// All-zero parameters with the shapes of `cfg` (layer-norm gains included).
    pub fn zeros(cfg: &EncoderConfig) -> Self {
        let d = cfg.d_model;
        let layer = EncoderLayer {
            ln_attn: LayerNorm {
                gain: Array1::zeros(d),
                bias: Array1::zeros(d),
            },
            wq: Array2::zeros((d, d)),
            wk: Array2::zeros((d, d)),
            wv: Array2::zeros((d, d)),
            wo: Array2::zeros((d, d)),
            ln_ff: LayerNorm {
                gain: Array1::zeros(d),
                bias: Array1::zeros(d),
            },
            ff_in: Dense::zeros(d, cfg.d_ff),
            ff_out: Dense::zeros(cfg.d_ff, d),
        };
        EncoderParams {
            config: *cfg,
            trunk: Trunk {
                token_embeddings: Array2::zeros((cfg.vocab_size, d)),
                positional_embeddings: Array2::zeros((cfg.max_len, d)),
                layers: vec![layer; cfg.n_layers],
            },
            q_head: Dense::zeros(d, cfg.d_embed),
            a_head: Dense::zeros(d, cfg.d_embed),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config)
    }

    pub fn head(&self, head: Head) -> &Dense {
        match head {
            Head::Question => &self.q_head,
            Head::Answer => &self.a_head,
        }
    }

    /// Canonical tensor names, in the order used by checkpoints and the optimizer.
    pub fn tensor_names(cfg: &EncoderConfig) -> Vec<String> {
        Self::zeros(cfg)
            .tensors()
            .into_iter()
            .map(|t| t.name)
            .collect()
    }

    pub fn tensors<'a>(&'a self) -> Vec<TensorView<'a>> {
        let mut out = Vec::new();
        fn view<'a>(out: &mut Vec<TensorView<'a>>, name: String, shape: &[usize], data: &'a [f64]) {
            out.push(TensorView {
                name,
                shape: shape.to_vec(),
                data,
            });
        }
        let mut push =
            |name: String, shape: &[usize], data: &'a [f64]| view(&mut out, name, shape, data);
        let t = &self.trunk;
        push(
            "trunk.token_embeddings".into(),
            t.token_embeddings.shape(),
            slice(&t.token_embeddings),
        );
        push(
            "trunk.positional_embeddings".into(),
            t.positional_embeddings.shape(),
            slice(&t.positional_embeddings),
        );
        for (i, l) in t.layers.iter().enumerate() {
            let p = format!("trunk.layers.{i}");
            push(
                format!("{p}.ln_attn.gain"),
                l.ln_attn.gain.shape(),
                slice1(&l.ln_attn.gain),
            );
            push(
                format!("{p}.ln_attn.bias"),
                l.ln_attn.bias.shape(),
                slice1(&l.ln_attn.bias),
            );
            push(format!("{p}.wq"), l.wq.shape(), slice(&l.wq));
            push(format!("{p}.wk"), l.wk.shape(), slice(&l.wk));
            push(format!("{p}.wv"), l.wv.shape(), slice(&l.wv));
            push(format!("{p}.wo"), l.wo.shape(), slice(&l.wo));
            push(
                format!("{p}.ln_ff.gain"),
                l.ln_ff.gain.shape(),
                slice1(&l.ln_ff.gain),
            );
            push(
                format!("{p}.ln_ff.bias"),
                l.ln_ff.bias.shape(),
                slice1(&l.ln_ff.bias),
            );
            push(
                format!("{p}.ff_in.weight"),
                l.ff_in.weight.shape(),
                slice(&l.ff_in.weight),
            );
            push(
                format!("{p}.ff_in.bias"),
                l.ff_in.bias.shape(),
                slice1(&l.ff_in.bias),
            );
            push(
                format!("{p}.ff_out.weight"),
                l.ff_out.weight.shape(),
                slice(&l.ff_out.weight),
            );
            push(
                format!("{p}.ff_out.bias"),
                l.ff_out.bias.shape(),
                slice1(&l.ff_out.bias),
            );
        }
        push(
            "q_head.weight".into(),
            self.q_head.weight.shape(),
            slice(&self.q_head.weight),
        );
        push(
            "q_head.bias".into(),
            self.q_head.bias.shape(),
            slice1(&self.q_head.bias),
        );
        push(
            "a_head.weight".into(),
            self.a_head.weight.shape(),
            slice(&self.a_head.weight),
        );
        push(
            "a_head.bias".into(),
            self.a_head.bias.shape(),
            slice1(&self.a_head.bias),
        );
        out
    }

    /// Mutable slices in the same order as [`tensors`](Self::tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        let t = &mut self.trunk;
        out.push(slice_mut(&mut t.token_embeddings));
        out.push(slice_mut(&mut t.positional_embeddings));
        for l in &mut t.layers {
            out.push(slice1_mut(&mut l.ln_attn.gain));
            out.push(slice1_mut(&mut l.ln_attn.bias));
            out.push(slice_mut(&mut l.wq));
            out.push(slice_mut(&mut l.wk));
            out.push(slice_mut(&mut l.wv));
            out.push(slice_mut(&mut l.wo));
            out.push(slice1_mut(&mut l.ln_ff.gain));
            out.push(slice1_mut(&mut l.ln_ff.bias));
            out.push(slice_mut(&mut l.ff_in.weight));
            out.push(slice1_mut(&mut l.ff_in.bias));
            out.push(slice_mut(&mut l.ff_out.weight));
            out.push(slice1_mut(&mut l.ff_out.bias));
        }
        out.push(slice_mut(&mut self.q_head.weight));
        out.push(slice1_mut(&mut self.q_head.bias));
        out.push(slice_mut(&mut self.a_head.weight));
        out.push(slice1_mut(&mut self.a_head.bias));
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Checks ids and length of `seq` against this model.
    pub fn check_seq(&self, seq: &TokenSeq) -> Result<(), EncoderError> {
        let cfg = &self.config;
        if seq.ids.len() != cfg.max_len {
            return Err(EncoderError::LengthMismatch {
                expected: cfg.max_len,
                got: seq.ids.len(),
            });
        }
        if seq.true_len == 0 || seq.true_len > seq.ids.len() {
            return Err(EncoderError::EmptySequence(seq.true_len));
        }
        if let Some((pos, &id)) = seq
            .ids
            .iter()
            .enumerate()
            .find(|(_, &id)| id as usize >= cfg.vocab_size)
        {
            return Err(EncoderError::TokenOutOfRange {
                pos,
                id,
                vocab_size: cfg.vocab_size,
            });
        }
        Ok(())
    }
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameters are standard layout")
}

fn slice1(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("parameters are standard layout")
}

fn slice_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are standard layout")
}

fn slice1_mut(a: &mut Array1<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are standard layout")
}

/// Seeded initialization: every weight matrix and embedding table is drawn
/// from `U(-1, 1) / sqrt(fan_in)`; dense biases and layer-norm biases are 0,
/// layer-norm gains are 1.
pub fn init_params(cfg: &EncoderConfig) -> Result<EncoderParams, EncoderError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut uniform = |rows: usize, cols: usize, fan_in: usize| {
        let scale = 1.0 / (fan_in as f64).sqrt();
        Array2::from_shape_fn((rows, cols), |_| (rng.random::<f64>() * 2.0 - 1.0) * scale)
    };
    let d = cfg.d_model;
    let token_embeddings = uniform(cfg.vocab_size, d, d);
    let positional_embeddings = uniform(cfg.max_len, d, d);
    let mut layers = Vec::with_capacity(cfg.n_layers);
    for _ in 0..cfg.n_layers {
        let wq = uniform(d, d, d);
        let wk = uniform(d, d, d);
        let wv = uniform(d, d, d);
        let wo = uniform(d, d, d);
        let ff_in = Dense {
            weight: uniform(d, cfg.d_ff, d),
            bias: Array1::zeros(cfg.d_ff),
        };
        let ff_out = Dense {
            weight: uniform(cfg.d_ff, d, cfg.d_ff),
            bias: Array1::zeros(d),
        };
        layers.push(EncoderLayer {
            ln_attn: LayerNorm::identity(d),
            wq,
            wk,
            wv,
            wo,
            ln_ff: LayerNorm::identity(d),
            ff_in,
            ff_out,
        });
    }
    let q_head = Dense {
        weight: uniform(d, cfg.d_embed, d),
        bias: Array1::zeros(cfg.d_embed),
    };
    let a_head = Dense {
        weight: uniform(d, cfg.d_embed, d),
        bias: Array1::zeros(cfg.d_embed),
    };
    Ok(EncoderParams {
        config: *cfg,
        trunk: Trunk {
            token_embeddings,
            positional_embeddings,
            layers,
        },
        q_head,
        a_head,
    })
}

/// A real vector produced by one of the heads.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| v as f32).collect()
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Embeds `seq` through the shared trunk and the selected head.
pub fn encode(
    params: &EncoderParams,
    seq: &TokenSeq,
    head: Head,
) -> Result<EmbeddingVector, EncoderError> {
    Ok(EmbeddingVector {
        values: forward(params, seq, head)?.embedding.to_vec(),
    })
}

/// Masked mean of the last trunk layer's outputs, before any head.
pub fn pooled_trunk(params: &EncoderParams, seq: &TokenSeq) -> Result<Vec<f64>, EncoderError> {
    Ok(forward(params, seq, Head::Question)?.pooled.to_vec())
}

/// Mean of the raw token embeddings over the non-PAD prefix; a sentence
/// embedding usable before any training.
pub fn mean_token_embedding(
    params: &EncoderParams,
    seq: &TokenSeq,
) -> Result<Vec<f64>, EncoderError> {
    params.check_seq(seq)?;
    let table = &params.trunk.token_embeddings;
    let mut acc = Array1::<f64>::zeros(params.config.d_model);
    for &id in seq.content() {
        acc += &table.row(id as usize);
    }
    acc /= seq.true_len as f64;
    Ok(acc.to_vec())
}
