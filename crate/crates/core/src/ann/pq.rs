//! Product quantisation with asymmetric distance computation (ADC).
//!
//! Vectors are split into `m` contiguous subvectors of `dim / m`
//! coordinates. Each subspace gets its own k-means codebook of `ks`
//! centroids and every stored vector becomes `m` one-byte centroid indices.
//! At query time a lookup table of query-subvector · centroid inner
//! products is built per subspace; a row's score is the sum of its `m`
//! table entries, which equals the inner product of the query with the
//! row's reconstruction.

use std::io::Write;
use std::path::Path;

use crate::exact::{local_topk, Query, ScoredHit, SearchError};
use crate::format::{self, Dtype, FormatError, Header, Payload, HEADER_LEN};
use crate::kernel::dot;
use crate::store::EmbeddingMatrix;

use super::kmeans::{kmeans, nearest};
use super::IndexError;

pub const PQ_MAGIC: [u8; 4] = *b"PQIX";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PqParams {
    pub m: usize,
    pub ks: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for PqParams {
    fn default() -> Self {
        Self {
            m: 8,
            ks: 256,
            iters: 25,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PqIndex {
    dim: usize,
    m: usize,
    ks: usize,
    /// `m × ks × dsub`, empty until trained.
    codebooks: Vec<f32>,
    /// `count × m`.
    codes: Vec<u8>,
}

impl PqIndex {
    pub fn new(dim: usize, m: usize, ks: usize) -> Result<Self, IndexError> {
        if m == 0 || dim % m != 0 {
            return Err(IndexError::Indivisible { dim, m });
        }
        if ks == 0 || ks > 256 {
            return Err(IndexError::BadParameter(format!("ks = {ks} must be in 1..=256")));
        }
        Ok(Self {
            dim,
            m,
            ks,
            codebooks: Vec::new(),
            codes: Vec::new(),
        })
    }

    /// Trains on `matrix` and encodes it.
    pub fn build(matrix: &EmbeddingMatrix, params: PqParams) -> Result<Self, IndexError> {
        let mut index = Self::new(matrix.dim(), params.m, params.ks)?;
        index.train(matrix, params.iters, params.seed)?;
        index.add(matrix)?;
        Ok(index)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn ks(&self) -> usize {
        self.ks
    }

    pub fn dsub(&self) -> usize {
        self.dim / self.m
    }

    pub fn count(&self) -> usize {
        self.codes.len() / self.m
    }

    pub fn is_trained(&self) -> bool {
        !self.codebooks.is_empty()
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    fn codebook(&self, sub: usize) -> &[f32] {
        let size = self.ks * self.dsub();
        &self.codebooks[sub * size..(sub + 1) * size]
    }

    pub fn centroid(&self, sub: usize, code: usize) -> &[f32] {
        let dsub = self.dsub();
        &self.codebook(sub)[code * dsub..(code + 1) * dsub]
    }

    /// Learns one codebook per subspace from every row of `matrix`.
    pub fn train(&mut self, matrix: &EmbeddingMatrix, iters: usize, seed: u64) -> Result<(), IndexError> {
        self.check_dim(matrix.dim())?;
        let n = matrix.count();
        if n < self.ks {
            return Err(IndexError::TooFewPoints { points: n, k: self.ks });
        }
        let dsub = self.dsub();
        let mut codebooks = Vec::with_capacity(self.m * self.ks * dsub);
        let mut sub = Vec::with_capacity(n * dsub);
        for s in 0..self.m {
            sub.clear();
            for row in matrix.rows() {
                sub.extend_from_slice(&row[s * dsub..(s + 1) * dsub]);
            }
            let km = kmeans(&sub, dsub, self.ks, iters, seed.wrapping_add(s as u64))?;
            codebooks.extend_from_slice(&km.centroids);
        }
        self.codebooks = codebooks;
        Ok(())
    }

    /// Encodes each subvector as its nearest centroid (squared L2).
    pub fn encode(&self, matrix: &EmbeddingMatrix) -> Result<Vec<u8>, IndexError> {
        if !self.is_trained() {
            return Err(IndexError::Untrained);
        }
        self.check_dim(matrix.dim())?;
        let dsub = self.dsub();
        let norms: Vec<Vec<f32>> = (0..self.m)
            .map(|s| self.codebook(s).chunks_exact(dsub).map(|c| dot(c, c)).collect())
            .collect();
        let mut codes = Vec::with_capacity(matrix.count() * self.m);
        for row in matrix.rows() {
            for s in 0..self.m {
                let (c, _) = nearest(&row[s * dsub..(s + 1) * dsub], self.codebook(s), dsub, &norms[s]);
                codes.push(c as u8);
            }
        }
        Ok(codes)
    }

    /// Appends the encoding of `matrix` to the index.
    pub fn add(&mut self, matrix: &EmbeddingMatrix) -> Result<(), IndexError> {
        let codes = self.encode(matrix)?;
        self.codes.extend_from_slice(&codes);
        Ok(())
    }

    pub fn reconstruct(&self, row: usize) -> Vec<f32> {
        let codes = &self.codes[row * self.m..(row + 1) * self.m];
        codes
            .iter()
            .enumerate()
            .flat_map(|(s, &c)| self.centroid(s, c as usize).iter().copied())
            .collect()
    }

    /// Per-subspace inner products of the query with every centroid,
    /// `m × ks`.
    pub fn lookup_table(&self, query: &[f32]) -> Vec<f32> {
        let dsub = self.dsub();
        let mut table = Vec::with_capacity(self.m * self.ks);
        for s in 0..self.m {
            let qs = &query[s * dsub..(s + 1) * dsub];
            table.extend(self.codebook(s).chunks_exact(dsub).map(|c| dot(qs, c)));
        }
        table
    }

    pub fn search(&self, query: &Query, k: usize) -> Result<Vec<ScoredHit>, SearchError> {
        if !self.is_trained() {
            return Err(SearchError::Untrained);
        }
        if query.dim() != self.dim {
            return Err(SearchError::DimMismatch {
                expected: self.dim,
                found: query.dim(),
            });
        }
        let table = self.lookup_table(query.vector());
        let ks = self.ks;
        let hits = self
            .codes
            .chunks_exact(self.m)
            .enumerate()
            .map(|(row, codes)| {
                let score = codes
                    .iter()
                    .enumerate()
                    .map(|(s, &c)| table[s * ks + c as usize])
                    .sum();
                ScoredHit::new(row, score)
            })
            .collect();
        Ok(local_topk(hits, k))
    }

    fn check_dim(&self, dim: usize) -> Result<(), IndexError> {
        if dim != self.dim {
            return Err(IndexError::DimMismatch {
                expected: self.dim,
                found: dim,
            });
        }
        Ok(())
    }

    /// Header params: u32 slot 0 = `m`, slot 1 = `ks`. Payload: codebooks
    /// (f32) followed by codes (u8).
    pub fn to_bytes(&self) -> Result<Vec<u8>, IndexError> {
        if !self.is_trained() {
            return Err(IndexError::Untrained);
        }
        let mut header = Header::new(PQ_MAGIC, Dtype::F32, false, self.dim as u32, self.count() as u64);
        header.set_param_u32(0, self.m as u32);
        header.set_param_u32(1, self.ks as u32);
        let mut out = Vec::with_capacity(HEADER_LEN + self.codebooks.len() * 4 + self.codes.len());
        out.extend_from_slice(&header.to_bytes());
        format::write_f32s(&mut out, &self.codebooks)?;
        out.extend_from_slice(&self.codes);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let header = Header::parse(bytes, &PQ_MAGIC)?;
        let dim = header.dim as usize;
        let (m, ks) = (header.param_u32(0) as usize, header.param_u32(1) as usize);
        let mut index = Self::new(dim, m, ks).map_err(|e| FormatError::Corrupt(e.to_string()))?;
        let count = usize::try_from(header.count).map_err(|_| FormatError::Overflow {
            count: header.count,
            dim: header.dim,
        })?;
        let book_len = m * ks * (dim / m);
        let code_len = count.checked_mul(m).ok_or(FormatError::Overflow {
            count: header.count,
            dim: header.dim,
        })?;
        let mut payload = Payload::new(bytes);
        payload.take(HEADER_LEN)?;
        payload.expect_len((HEADER_LEN + book_len * 4 + code_len) as u64)?;
        index.codebooks = format::decode_f32s(payload.take(book_len * 4)?);
        index.codes = payload.take(code_len)?.to_vec();
        payload.finish()?;
        if index.codebooks.iter().any(|x| !x.is_finite()) {
            return Err(FormatError::Corrupt("non-finite codebook entry".into()));
        }
        if let Some(&bad) = index.codes.iter().find(|&&c| c as usize >= ks) {
            return Err(FormatError::Corrupt(format!("code {bad} >= ks {ks}")));
        }
        Ok(index)
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        std::fs::File::create(path)?.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, FormatError> {
        Self::from_bytes(&format::read_file(path)?)
    }
}
