//! Scalar quantisation to IEEE-754 half precision, searched by exhaustive
//! scan with values widened back to f32.

use std::io::Write;
use std::path::Path;

use half::f16;
use half::slice::HalfFloatSliceExt;

use crate::exact::{local_topk, Query, ScoredHit, SearchError};
use crate::format::{self, Dtype, FormatError, Header, Payload, HEADER_LEN};
use crate::kernel::dot;
use crate::store::EmbeddingMatrix;

use super::IndexError;

pub const SQ_MAGIC: [u8; 4] = *b"SQIX";

/// Largest finite half-precision magnitude.
pub const F16_MAX: f32 = 65504.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SqIndex {
    dim: usize,
    normalized: bool,
    codes: Vec<f16>,
}

impl SqIndex {
    /// Rounds every value to the nearest fp16 (ties to even).
    pub fn build(matrix: &EmbeddingMatrix) -> Result<Self, IndexError> {
        let mut codes = Vec::with_capacity(matrix.values().len());
        for &v in matrix.values() {
            if v.abs() > F16_MAX {
                return Err(IndexError::F16Overflow(v));
            }
            codes.push(f16::from_f32(v));
        }
        Ok(Self {
            dim: matrix.dim(),
            normalized: matrix.is_normalized(),
            codes,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.codes.len() / self.dim
    }

    pub fn codes(&self) -> &[f16] {
        &self.codes
    }

    pub fn decode_row(&self, row: usize) -> Vec<f32> {
        let mut out = vec![0.0f32; self.dim];
        self.codes[row * self.dim..(row + 1) * self.dim].convert_to_f32_slice(&mut out);
        out
    }

    pub fn search(&self, query: &Query, k: usize) -> Result<Vec<ScoredHit>, SearchError> {
        if query.dim() != self.dim {
            return Err(SearchError::DimMismatch {
                expected: self.dim,
                found: query.dim(),
            });
        }
        let q = query.vector();
        let mut row_buf = vec![0.0f32; self.dim];
        let hits = self
            .codes
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(row, codes)| {
                codes.convert_to_f32_slice(&mut row_buf);
                ScoredHit::new(row, dot(q, &row_buf))
            })
            .collect();
        Ok(local_topk(hits, k))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header::new(
            SQ_MAGIC,
            Dtype::F16,
            self.normalized,
            self.dim as u32,
            self.count() as u64,
        );
        let mut out = Vec::with_capacity(HEADER_LEN + self.codes.len() * 2);
        out.extend_from_slice(&header.to_bytes());
        for c in &self.codes {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let header = Header::parse(bytes, &SQ_MAGIC)?;
        if header.dtype != Dtype::F16 {
            return Err(FormatError::Corrupt("SQ payload must be float16".into()));
        }
        if header.dim == 0 {
            return Err(FormatError::Corrupt("dim is zero".into()));
        }
        let n = header.elements()?;
        let mut payload = Payload::new(bytes);
        payload.take(HEADER_LEN)?;
        payload.expect_len((HEADER_LEN + 2 * n) as u64)?;
        let raw = payload.take(2 * n)?;
        payload.finish()?;
        let codes: Vec<f16> = raw
            .chunks_exact(2)
            .map(|c| f16::from_le_bytes([c[0], c[1]]))
            .collect();
        let dim = header.dim as usize;
        if let Some(p) = codes.iter().position(|c| !c.is_finite()) {
            return Err(FormatError::NonFinite {
                row: p / dim,
                col: p % dim,
            });
        }
        Ok(Self {
            dim,
            normalized: header.normalized,
            codes,
        })
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, FormatError> {
        Self::from_bytes(&format::read_file(path)?)
    }
}
