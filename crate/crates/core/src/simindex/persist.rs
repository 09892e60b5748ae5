//! Index files.
//!
//! ```text
//! "VQAIDX1"
//! u32 header_len, header JSON {format_major, format_minor, dimension, count, quantized}
//! id table: count × (u32 len, id bytes, u32 len, payload bytes)
//! exact:     count × dimension f32
//! quantized: count f32 scales, then count × dimension i8 codes
//! u32 CRC32 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{build_index, Index, IndexEntry, QuantizedIndex, VectorSearch};
use crate::binfmt::{open_frame, write_atomic, FormatError, FrameWriter};

pub const INDEX_MAGIC: &[u8; 7] = b"VQAIDX1";
const FORMAT_MAJOR: u32 = 1;
const FORMAT_MINOR: u32 = 0;

#[derive(Debug, Serialize, Deserialize)]
struct IndexHeader {
    format_major: u32,
    format_minor: u32,
    dimension: usize,
    count: usize,
    quantized: bool,
}

/// Either kind of stored index.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredIndex {
    Exact(Index),
    Quantized(QuantizedIndex),
}

impl StoredIndex {
    pub fn as_search(&self) -> &dyn VectorSearch {
        match self {
            StoredIndex::Exact(i) => i,
            StoredIndex::Quantized(q) => q,
        }
    }

    pub fn is_quantized(&self) -> bool {
        matches!(self, StoredIndex::Quantized(_))
    }
}

pub fn encode_index(index: &StoredIndex) -> Vec<u8> {
    let s = index.as_search();
    let header = IndexHeader {
        format_major: FORMAT_MAJOR,
        format_minor: FORMAT_MINOR,
        dimension: s.dim(),
        count: s.len(),
        quantized: index.is_quantized(),
    };
    let mut w = FrameWriter::new(INDEX_MAGIC, &header);
    match index {
        StoredIndex::Exact(idx) => {
            for e in idx.entries() {
                w.string(&e.answer_id);
                w.string(&e.payload);
            }
            for e in idx.entries() {
                w.f32s(&e.vector);
            }
        }
        StoredIndex::Quantized(q) => {
            for (id, payload) in q.ids.iter().zip(&q.payloads) {
                w.string(id);
                w.string(payload);
            }
            w.f32s(&q.scales);
            w.bytes(&q.codes.iter().map(|&c| c as u8).collect::<Vec<_>>());
        }
    }
    w.finish()
}

pub fn decode_index(bytes: &[u8]) -> Result<StoredIndex, FormatError> {
    let (raw, mut r): (serde_json::Value, _) = open_frame(bytes, INDEX_MAGIC, "index")?;
    let major = raw
        .get("format_major")
        .and_then(|v| v.as_u64())
        .unwrap_or(0) as u32;
    if major != FORMAT_MAJOR {
        return Err(FormatError::UnsupportedVersion {
            found_major: major,
            found_minor: raw
                .get("format_minor")
                .and_then(|v| v.as_u64())
                .unwrap_or(0) as u32,
            supported: FORMAT_MAJOR,
        });
    }
    let h: IndexHeader =
        serde_json::from_value(raw).map_err(|e| FormatError::Header(e.to_string()))?;
    // Each record needs at least 8 bytes of id table plus its vector payload.
    let per_vector = if h.quantized {
        h.dimension.checked_add(4)
    } else {
        h.dimension.checked_mul(4)
    };
    let min_bytes = per_vector
        .and_then(|p| p.checked_add(8))
        .and_then(|p| p.checked_mul(h.count))
        .ok_or(FormatError::Truncated)?;
    if min_bytes > r.remaining() {
        return Err(FormatError::Truncated);
    }
    let mut ids = Vec::with_capacity(h.count);
    let mut payloads = Vec::with_capacity(h.count);
    for _ in 0..h.count {
        ids.push(r.string()?);
        payloads.push(r.string()?);
    }
    let invalid = |e: super::IndexError| FormatError::Invalid(e.to_string());
    let out = if h.quantized {
        let scales = r.f32s(h.count)?;
        let codes: Vec<i8> = r
            .take(h.count * h.dimension)?
            .iter()
            .map(|&b| b as i8)
            .collect();
        if scales.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(FormatError::Invalid("bad quantization scale".into()));
        }
        StoredIndex::Quantized(
            QuantizedIndex::from_parts(h.dimension, ids, payloads, codes, scales)
                .map_err(invalid)?,
        )
    } else {
        let mut entries = Vec::with_capacity(h.count);
        for (answer_id, payload) in ids.into_iter().zip(payloads) {
            entries.push(IndexEntry {
                answer_id,
                vector: r.f32s(h.dimension)?,
                payload,
            });
        }
        let idx = build_index(entries).map_err(invalid)?;
        if h.count > 0 && idx.dim() != h.dimension {
            return Err(FormatError::Invalid(
                "dimension disagrees with header".into(),
            ));
        }
        StoredIndex::Exact(idx)
    };
    r.expect_end()?;
    Ok(out)
}

pub fn save_index(index: &StoredIndex, path: impl AsRef<Path>) -> Result<(), FormatError> {
    write_atomic(path.as_ref(), &encode_index(index))?;
    Ok(())
}

pub fn load_index(path: impl AsRef<Path>) -> Result<StoredIndex, FormatError> {
    decode_index(&fs::read(path)?)
}
