//! Symmetric per-vector int8 quantization: `scale = max|x| / 127`,
//! `code = round(x / scale)`, dequantized value `code * scale`.

use std::collections::HashMap;

use super::{check_query, rank_scored, Index, IndexError, SearchHit, VectorSearch};

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedVector {
    pub codes: Vec<i8>,
    /// Zero for an all-zero vector.
    pub scale: f32,
}

impl QuantizedVector {
    pub fn dequantize(&self) -> Vec<f64> {
        self.codes
            .iter()
            .map(|&c| c as f64 * self.scale as f64)
            .collect()
    }
}

pub fn quantize_vector(v: &[f32]) -> QuantizedVector {
    let max_abs = v.iter().fold(0.0f32, |m, x| m.max(x.abs()));
    if max_abs == 0.0 {
        return QuantizedVector {
            codes: vec![0; v.len()],
            scale: 0.0,
        };
    }
    let scale = max_abs / 127.0;
    let s = scale as f64;
    let codes = v
        .iter()
        .map(|&x| (x as f64 / s).round().clamp(-127.0, 127.0) as i8)
        .collect();
    QuantizedVector { codes, scale }
}

/// Quantized counterpart of [`Index`]. Codes are stored row-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuantizedIndex {
    pub(crate) dim: usize,
    pub(crate) ids: Vec<String>,
    pub(crate) payloads: Vec<String>,
    pub(crate) codes: Vec<i8>,
    pub(crate) scales: Vec<f32>,
    pub(crate) by_id: HashMap<String, usize>,
}

impl QuantizedIndex {
    pub(crate) fn from_parts(
        dim: usize,
        ids: Vec<String>,
        payloads: Vec<String>,
        codes: Vec<i8>,
        scales: Vec<f32>,
    ) -> Result<Self, IndexError> {
        let mut by_id = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if by_id.insert(id.clone(), i).is_some() {
                return Err(IndexError::DuplicateId(id.clone()));
            }
        }
        Ok(QuantizedIndex {
            dim,
            ids,
            payloads,
            codes,
            scales,
            by_id,
        })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn scales(&self) -> &[f32] {
        &self.scales
    }

    pub fn vector(&self, answer_id: &str) -> Option<QuantizedVector> {
        let &i = self.by_id.get(answer_id)?;
        Some(QuantizedVector {
            codes: self.codes[i * self.dim..(i + 1) * self.dim].to_vec(),
            scale: self.scales[i],
        })
    }

    /// Same contract as [`super::search_topk`], scoring against dequantized vectors.
    pub fn search_topk_quantized(
        &self,
        query: &[f32],
        k: usize,
    ) -> Result<Vec<SearchHit>, IndexError> {
        check_query(self.dim, self.ids.len(), query, k)?;
        let scored = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let row = &self.codes[i * self.dim..(i + 1) * self.dim];
                let acc: f64 = row
                    .iter()
                    .zip(query)
                    .map(|(&c, &q)| c as f64 * q as f64)
                    .sum();
                (acc * self.scales[i] as f64, id.as_str())
            })
            .collect();
        Ok(rank_scored(scored, k))
    }
}

impl VectorSearch for QuantizedIndex {
    fn dim(&self) -> usize {
        self.dim
    }

    fn len(&self) -> usize {
        self.ids.len()
    }

    fn search(&self, query: &[f32], k: usize) -> Result<Vec<SearchHit>, IndexError> {
        self.search_topk_quantized(query, k)
    }

    fn payload(&self, answer_id: &str) -> Option<&str> {
        self.by_id
            .get(answer_id)
            .map(|&i| self.payloads[i].as_str())
    }
}

/// Post-training quantization of an exact index.
pub fn quantize(index: &Index) -> QuantizedIndex {
    let n = index.entries().len();
    let mut codes = Vec::with_capacity(n * index.dim());
    let mut scales = Vec::with_capacity(n);
    for e in index.entries() {
        let q = quantize_vector(&e.vector);
        codes.extend_from_slice(&q.codes);
        scales.push(q.scale);
    }
    QuantizedIndex::from_parts(
        index.dim(),
        index
            .entries()
            .iter()
            .map(|e| e.answer_id.clone())
            .collect(),
        index.entries().iter().map(|e| e.payload.clone()).collect(),
        codes,
        scales,
    )
    .expect("source index has unique ids")
}
