//! Checkpoint files.
//!
//! Layout (little-endian):
//!
//! ```text
//! "VQACKPT1"
//! u32 header_len, header JSON (CheckpointHeader)
//! tensor records, parameters first, then "adam.m.*", then "adam.v.*",
//! each in EncoderParams::tensors() order:
//!     u32 name_len, name, u8 dtype (1 = f64), u32 ndim, u64 dims[ndim], payload
//! u32 CRC32 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamConfig, AdamState};
use crate::binfmt::{open_frame, write_atomic, FormatError, FrameReader, FrameWriter};
use crate::tinybert::{EncoderConfig, EncoderParams};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"VQACKPT1";
pub const FORMAT_MAJOR: u32 = 1;
pub const FORMAT_MINOR: u32 = 0;
const DTYPE_F64: u8 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_major: u32,
    pub format_minor: u32,
    pub encoder: EncoderConfig,
    /// Content hash of the vocabulary the model was trained with.
    pub vocab_hash: String,
    pub optimizer: AdamConfig,
    pub adam_step: u64,
    pub epochs_done: u64,
    pub tensor_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: EncoderParams,
    pub opt: AdamState,
}

fn param_count(cfg: &EncoderConfig) -> Option<usize> {
    let d = cfg.d_model;
    let layer = d
        .checked_mul(d)?
        .checked_mul(4)?
        .checked_add(d.checked_mul(cfg.d_ff)?.checked_mul(2)?)?
        .checked_add(cfg.d_ff)?
        .checked_add(d.checked_mul(5)?)?;
    cfg.vocab_size
        .checked_add(cfg.max_len)?
        .checked_mul(d)?
        .checked_add(layer.checked_mul(cfg.n_layers)?)?
        .checked_add(d.checked_add(1)?.checked_mul(cfg.d_embed)?.checked_mul(2)?)
}

fn tensors_per_set(cfg: &EncoderConfig) -> Option<u32> {
    u32::try_from(cfg.n_layers.checked_mul(12)?.checked_add(6)?).ok()
}

pub fn encode_checkpoint(
    params: &EncoderParams,
    opt: &AdamState,
    adam: &AdamConfig,
    vocab_hash: &str,
) -> Vec<u8> {
    let header = CheckpointHeader {
        format_major: FORMAT_MAJOR,
        format_minor: FORMAT_MINOR,
        encoder: params.config,
        vocab_hash: vocab_hash.to_string(),
        optimizer: *adam,
        adam_step: opt.step,
        epochs_done: opt.epochs_done,
        tensor_count: 3 * tensors_per_set(&params.config).expect("valid config"),
    };
    let mut w = FrameWriter::new(CHECKPOINT_MAGIC, &header);
    for (prefix, set) in [("", params), ("adam.m.", &opt.m), ("adam.v.", &opt.v)] {
        for t in set.tensors() {
            w.string(&format!("{prefix}{}", t.name));
            w.u8(DTYPE_F64);
            w.u32(t.shape.len() as u32);
            for &dim in &t.shape {
                w.u64(dim as u64);
            }
            w.f64s(t.data);
        }
    }
    w.finish()
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, FormatError> {
    let (raw, mut r): (serde_json::Value, FrameReader) =
        open_frame(bytes, CHECKPOINT_MAGIC, "checkpoint")?;
    let major = raw
        .get("format_major")
        .and_then(|v| v.as_u64())
        .unwrap_or(0) as u32;
    let minor = raw
        .get("format_minor")
        .and_then(|v| v.as_u64())
        .unwrap_or(0) as u32;
    if major != FORMAT_MAJOR {
        return Err(FormatError::UnsupportedVersion {
            found_major: major,
            found_minor: minor,
            supported: FORMAT_MAJOR,
        });
    }
    let header: CheckpointHeader =
        serde_json::from_value(raw).map_err(|e| FormatError::Header(e.to_string()))?;
    let cfg = header.encoder;
    cfg.validate()
        .map_err(|e| FormatError::Header(e.to_string()))?;
    let per_set =
        tensors_per_set(&cfg).ok_or_else(|| FormatError::Header("too many layers".into()))?;
    if header.tensor_count != per_set.saturating_mul(3) {
        return Err(FormatError::Header(format!(
            "tensor_count {} does not match config ({})",
            header.tensor_count,
            per_set.saturating_mul(3)
        )));
    }
    // Refuse to allocate more than the file could possibly hold.
    let needed = param_count(&cfg)
        .and_then(|n| n.checked_mul(24))
        .ok_or(FormatError::Truncated)?;
    if needed > r.remaining() {
        return Err(FormatError::Truncated);
    }

    let names = EncoderParams::tensor_names(&cfg);
    let mut params = EncoderParams::zeros(&cfg);
    let mut m = EncoderParams::zeros(&cfg);
    let mut v = EncoderParams::zeros(&cfg);
    for (prefix, set) in [("", &mut params), ("adam.m.", &mut m), ("adam.v.", &mut v)] {
        for (name, slot) in names.iter().zip(set.tensors_mut()) {
            read_tensor(&mut r, &format!("{prefix}{name}"), slot)?;
        }
    }
    r.expect_end()?;
    if !params.all_finite() {
        return Err(FormatError::Invalid("non-finite parameter values".into()));
    }
    Ok(Checkpoint {
        opt: AdamState {
            step: header.adam_step,
            epochs_done: header.epochs_done,
            m,
            v,
        },
        params,
        header,
    })
}

fn read_tensor(
    r: &mut FrameReader,
    expected_name: &str,
    slot: &mut [f64],
) -> Result<(), FormatError> {
    let name = r.string()?;
    if name != expected_name {
        return Err(FormatError::Invalid(format!(
            "expected tensor {expected_name:?}, found {name:?}"
        )));
    }
    if r.u8()? != DTYPE_F64 {
        return Err(FormatError::Invalid(format!(
            "tensor {name} has unsupported dtype"
        )));
    }
    let ndim = r.u32()?;
    if ndim > 4 {
        return Err(FormatError::Invalid(format!(
            "tensor {name} has {ndim} dims"
        )));
    }
    let mut count: u64 = 1;
    for _ in 0..ndim {
        count = count.saturating_mul(r.u64()?);
    }
    if count != slot.len() as u64 {
        return Err(FormatError::Invalid(format!(
            "tensor {name} holds {count} values, expected {}",
            slot.len()
        )));
    }
    slot.copy_from_slice(&r.f64s(slot.len())?);
    Ok(())
}

/// Writes a checkpoint atomically.
pub fn save_checkpoint(
    params: &EncoderParams,
    opt: &AdamState,
    adam: &AdamConfig,
    vocab_hash: &str,
    path: impl AsRef<Path>,
) -> Result<(), FormatError> {
    write_atomic(
        path.as_ref(),
        &encode_checkpoint(params, opt, adam, vocab_hash),
    )?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, FormatError> {
    decode_checkpoint(&fs::read(path)?)
}
