//! Corpus embedding storage: ingest, the `EMBS` file pair, row
//! normalisation and contiguous worker partitioning.
//!
//! An index on disk is two files side by side:
//!
//! * `<name>.emb`: the [`format`](crate::format) header with magic `EMBS`
//!   followed by `count × dim` little-endian values, row-major;
//! * `<name>.ids`: UTF-8, one passage id per line, line *n* ↔ row *n*.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use half::f16;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedder::{EmbedError, Embedder};
use crate::format::{self, Dtype, FormatError, Header, Payload, HEADER_LEN};

pub const EMBS_MAGIC: [u8; 4] = *b"EMBS";

/// Tolerance on row norms for a matrix flagged as normalised.
pub const NORM_TOLERANCE_F32: f32 = 1e-4;
/// fp16 storage rounds every coordinate by up to 2^-11 relative, so the
/// norm tolerance is looser for half-precision matrices.
pub const NORM_TOLERANCE_F16: f32 = 1.0 / 1024.0;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("duplicate passage id {0:?}")]
    DuplicateId(String),
    #[error("invalid passage id {0:?}: ids must be non-empty and contain no line breaks")]
    InvalidId(String),
    #[error("passage {0:?} has empty text")]
    EmptyText(String),
    #[error("passage {id:?} embedded to {found} dims, expected {expected}")]
    DimMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("row {0} is an all-zero vector")]
    ZeroRow(usize),
    #[error("row {row}, column {col} is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("value {0} is outside the float16 range")]
    F16Overflow(f32),
    #[error("values length {len} does not equal count {count} x dim {dim}")]
    Shape { len: usize, count: usize, dim: usize },
    #[error("id map has {ids} entries but the matrix has {rows} rows")]
    IdCount { ids: usize, rows: usize },
    #[error("worker count must be at least 1")]
    ZeroWorkers,
    #[error("embedding failed for passage {id:?}: {source}")]
    Embed {
        id: String,
        #[source]
        source: EmbedError,
    },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// One passage of the searchable corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassageRecord {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang: Option<String>,
}

/// Dense row-major matrix of passage embeddings.
///
/// Values are always held as `f32` in memory. A matrix with
/// [`Dtype::F16`] holds values that are exactly representable in half
/// precision and is written to disk at two bytes per value.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    dtype: Dtype,
    normalized: bool,
    values: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, values: Vec<f32>) -> Result<Self, StoreError> {
        assert!(dim > 0, "dimension must be positive");
        if values.len() % dim != 0 {
            return Err(StoreError::Shape {
                len: values.len(),
                count: values.len() / dim,
                dim,
            });
        }
        check_finite(&values, dim)?;
        Ok(Self {
            dim,
            dtype: Dtype::F32,
            normalized: false,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self, StoreError> {
        let dim = rows.first().map_or(1, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(StoreError::DimMismatch {
                    id: format!("row {i}"),
                    expected: dim,
                    found: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::new(dim, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dtype(&self) -> Dtype {
        self.dtype
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.values.chunks_exact(self.dim)
    }

    /// Rounds every value to the nearest half-precision number (ties to
    /// even) and marks the matrix as [`Dtype::F16`].
    pub fn to_f16(&self) -> Result<Self, StoreError> {
        let mut values = Vec::with_capacity(self.values.len());
        for &v in &self.values {
            values.push(round_f16(v)?.to_f32());
        }
        Ok(Self {
            dim: self.dim,
            dtype: Dtype::F16,
            normalized: self.normalized,
            values,
        })
    }

    /// Checks the norm invariant of a matrix flagged as normalised.
    pub fn check_unit_rows(&self) -> Result<(), usize> {
        let tol = match self.dtype {
            Dtype::F32 => NORM_TOLERANCE_F32,
            Dtype::F16 => NORM_TOLERANCE_F16,
        };
        for (i, row) in self.rows().enumerate() {
            let norm = row.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
            if (norm as f32 - 1.0).abs() > tol {
                return Err(i);
            }
        }
        Ok(())
    }
}

pub(crate) fn round_f16(v: f32) -> Result<f16, StoreError> {
    let h = f16::from_f32(v);
    if !h.is_finite() {
        return Err(StoreError::F16Overflow(v));
    }
    Ok(h)
}

fn check_finite(values: &[f32], dim: usize) -> Result<(), StoreError> {
    match values.iter().position(|x| !x.is_finite()) {
        Some(p) => Err(StoreError::NonFinite {
            row: p / dim,
            col: p % dim,
        }),
        None => Ok(()),
    }
}

/// Row → passage id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IdMap {
    ids: Vec<String>,
}

impl IdMap {
    pub fn new(ids: Vec<String>) -> Result<Self, StoreError> {
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if id.is_empty() || id.contains(['\n', '\r']) {
                return Err(StoreError::InvalidId(id.clone()));
            }
            if !seen.insert(id.as_str()) {
                return Err(StoreError::DuplicateId(id.clone()));
            }
        }
        Ok(Self { ids })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, row: usize) -> Option<&str> {
        self.ids.get(row).map(String::as_str)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for id in &self.ids {
            writeln!(out, "{id}")?;
        }
        out.flush()
    }

    pub fn read(path: &Path) -> Result<Self, StoreError> {
        let reader = BufReader::new(File::open(path)?);
        let ids = reader.lines().collect::<Result<Vec<_>, _>>()?;
        Self::new(ids)
    }
}

/// Contiguous half-open row ranges, one per worker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub ranges: Vec<Range<usize>>,
}

/// Splits `count` rows into `workers` contiguous ranges whose sizes differ
/// by at most one; the first `count % workers` ranges take the extra row.
/// With more workers than rows the trailing ranges are empty.
pub fn partition(count: usize, workers: usize) -> Result<Partition, StoreError> {
    if workers == 0 {
        return Err(StoreError::ZeroWorkers);
    }
    let base = count / workers;
    let extra = count % workers;
    let mut start = 0;
    let ranges = (0..workers)
        .map(|w| {
            let len = base + usize::from(w < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect();
    Ok(Partition { ranges })
}

/// Divides each row by its L2 norm (computed in f64).
pub fn normalize_rows(matrix: &EmbeddingMatrix) -> Result<EmbeddingMatrix, StoreError> {
    let dim = matrix.dim;
    let mut values = Vec::with_capacity(matrix.values.len());
    for (i, row) in matrix.rows().enumerate() {
        let norm = row.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(StoreError::ZeroRow(i));
        }
        values.extend(row.iter().map(|&x| (f64::from(x) / norm) as f32));
    }
    Ok(EmbeddingMatrix {
        dim,
        dtype: Dtype::F32,
        normalized: true,
        values,
    })
}

/// Normalises a single vector, returning `None` for the zero vector.
pub fn normalize_vector(v: &[f32]) -> Option<Vec<f32>> {
    let norm = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    Some(v.iter().map(|&x| (f64::from(x) / norm) as f32).collect())
}

/// Path of the id map that accompanies an embedding file.
pub fn ids_path(emb_path: &Path) -> PathBuf {
    emb_path.with_extension("ids")
}

/// Embeds and normalises a corpus in memory.
pub fn embed_corpus(
    passages: &[PassageRecord],
    embedder: &dyn Embedder,
    dtype: Dtype,
) -> Result<(EmbeddingMatrix, IdMap), StoreError> {
    if passages.is_empty() {
        return Err(StoreError::EmptyCorpus);
    }
    let ids = IdMap::new(passages.iter().map(|p| p.id.clone()).collect())?;
    let dim = embedder.dim();
    let mut values = Vec::with_capacity(passages.len() * dim);
    for p in passages {
        if p.text.trim().is_empty() {
            return Err(StoreError::EmptyText(p.id.clone()));
        }
        let v = embedder.embed(&p.text).map_err(|source| StoreError::Embed {
            id: p.id.clone(),
            source,
        })?;
        if v.len() != dim {
            return Err(StoreError::DimMismatch {
                id: p.id.clone(),
                expected: dim,
                found: v.len(),
            });
        }
        values.extend_from_slice(&v);
    }
    let raw = EmbeddingMatrix::new(dim, values)?;
    let mut matrix = normalize_rows(&raw)?;
    if dtype == Dtype::F16 {
        matrix = matrix.to_f16()?;
    }
    Ok((matrix, ids))
}

/// Embeds a corpus, normalises it and writes the `.emb`/`.ids` pair.
pub fn ingest_corpus(
    passages: &[PassageRecord],
    embedder: &dyn Embedder,
    dtype: Dtype,
    emb_path: &Path,
) -> Result<(EmbeddingMatrix, IdMap), StoreError> {
    let (matrix, ids) = embed_corpus(passages, embedder, dtype)?;
    save_index(emb_path, &matrix, &ids)?;
    Ok((matrix, ids))
}

pub fn save_index(emb_path: &Path, matrix: &EmbeddingMatrix, ids: &IdMap) -> Result<(), StoreError> {
    if ids.len() != matrix.count() {
        return Err(StoreError::IdCount {
            ids: ids.len(),
            rows: matrix.count(),
        });
    }
    write_matrix(emb_path, matrix)?;
    ids.write(&ids_path(emb_path))?;
    Ok(())
}

pub fn load_index(emb_path: &Path) -> Result<(EmbeddingMatrix, IdMap), StoreError> {
    let matrix = read_matrix(emb_path)?;
    let ids = IdMap::read(&ids_path(emb_path))?;
    if ids.len() != matrix.count() {
        return Err(StoreError::IdCount {
            ids: ids.len(),
            rows: matrix.count(),
        });
    }
    Ok((matrix, ids))
}

pub fn encode_matrix(matrix: &EmbeddingMatrix) -> Vec<u8> {
    let header = Header::new(
        EMBS_MAGIC,
        matrix.dtype,
        matrix.normalized,
        matrix.dim as u32,
        matrix.count() as u64,
    );
    let mut out = Vec::with_capacity(HEADER_LEN + matrix.values.len() * matrix.dtype.width());
    out.extend_from_slice(&header.to_bytes());
    match matrix.dtype {
        Dtype::F32 => {
            for v in &matrix.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Dtype::F16 => {
            for v in &matrix.values {
                out.extend_from_slice(&f16::from_f32(*v).to_le_bytes());
            }
        }
    }
    out
}

pub fn decode_matrix(bytes: &[u8]) -> Result<EmbeddingMatrix, FormatError> {
    let header = Header::parse(bytes, &EMBS_MAGIC)?;
    if header.dim == 0 {
        return Err(FormatError::Corrupt("dim is zero".into()));
    }
    let n = header.elements()?;
    let width = header.dtype.width();
    let mut payload = Payload::new(bytes);
    payload.take(HEADER_LEN)?;
    payload.expect_len((HEADER_LEN + n * width) as u64)?;
    let raw = payload.take(n * width)?;
    payload.finish()?;
    let values: Vec<f32> = match header.dtype {
        Dtype::F32 => format::decode_f32s(raw),
        Dtype::F16 => raw
            .chunks_exact(2)
            .map(|c| f16::from_le_bytes([c[0], c[1]]).to_f32())
            .collect(),
    };
    let dim = header.dim as usize;
    if let Some(p) = values.iter().position(|x| !x.is_finite()) {
        return Err(FormatError::NonFinite {
            row: p / dim,
            col: p % dim,
        });
    }
    Ok(EmbeddingMatrix {
        dim,
        dtype: header.dtype,
        normalized: header.normalized,
        values,
    })
}

pub fn write_matrix(path: &Path, matrix: &EmbeddingMatrix) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&encode_matrix(matrix))?;
    out.flush()
}

pub fn read_matrix(path: &Path) -> Result<EmbeddingMatrix, FormatError> {
    decode_matrix(&format::read_file(path)?)
}

/// Reads a JSON-lines passage corpus (`{"id", "text", "lang"?}` per line).
pub fn read_passages(path: &Path) -> Result<Vec<PassageRecord>, StoreError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PassageRecord =
            serde_json::from_str(&line).map_err(|source| StoreError::Json { line: i + 1, source })?;
        out.push(rec);
    }
    Ok(out)
}
