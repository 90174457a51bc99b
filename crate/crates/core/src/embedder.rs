//! Text → vector adapters.
//!
//! Real transformer inference is not part of this crate. The search engine
//! only needs something that maps text to a fixed-width vector, so two
//! implementations are provided: a deterministic hashing stub (useful for
//! tests, demos and self-match checks) and an external adapter that takes
//! vectors produced elsewhere, either from a precomputed JSON-lines file or
//! from a subprocess speaking JSON over stdin/stdout.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Stdio};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("text {0:?} has no tokens to embed")]
    Empty(String),
    #[error("no precomputed vector for {0:?}")]
    Missing(String),
    #[error("embedder produced {found} dims, expected {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("embedder produced a non-finite value")]
    NonFinite,
    #[error("external embedder failed: {0}")]
    External(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Maps text to a vector of fixed dimensionality.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError>;
}

/// Seeded bag-of-tokens random projection.
///
/// Every lower-cased whitespace token is hashed together with the seed; the
/// hash seeds a ChaCha stream from which a Gaussian vector is drawn. The
/// text vector is the sum over tokens, L2-normalised. Identical text always
/// yields an identical vector, across processes and platforms.
#[derive(Debug, Clone)]
pub struct StubEmbedder {
    dim: usize,
    seed: u64,
}

impl StubEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, seed }
    }

    fn token_vector(&self, token: &str, out: &mut [f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(self.seed, token.as_bytes()));
        for slot in out.iter_mut() {
            let x: f64 = StandardNormal.sample(&mut rng);
            *slot += x;
        }
    }
}

impl Embedder for StubEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        let mut acc = vec![0.0f64; self.dim];
        let mut seen = false;
        for token in text.split_whitespace() {
            self.token_vector(&token.to_lowercase(), &mut acc);
            seen = true;
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !seen || norm == 0.0 {
            return Err(EmbedError::Empty(text.to_owned()));
        }
        Ok(acc.iter().map(|x| (x / norm) as f32).collect())
    }
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[derive(Debug, Deserialize)]
struct VectorLine {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    text: Option<String>,
    vector: Vec<f32>,
}

/// Lookup table of vectors computed by an external model, keyed by text
/// (and by id when the line carries one).
///
/// Input is JSON lines: `{"id": "...", "text": "...", "vector": [...]}`.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedEmbedder {
    dim: usize,
    vectors: HashMap<String, Vec<f32>>,
}

impl PrecomputedEmbedder {
    pub fn from_jsonl(path: &Path) -> Result<Self, EmbedError> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut out = Self::default();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: VectorLine = serde_json::from_str(&line)?;
            out.insert(parsed.id, parsed.text, parsed.vector)?;
        }
        Ok(out)
    }

    fn insert(
        &mut self,
        id: Option<String>,
        text: Option<String>,
        vector: Vec<f32>,
    ) -> Result<(), EmbedError> {
        if self.dim == 0 {
            self.dim = vector.len();
        } else if vector.len() != self.dim {
            return Err(EmbedError::DimMismatch {
                expected: self.dim,
                found: vector.len(),
            });
        }
        for key in id.into_iter().chain(text) {
            self.vectors.insert(key, vector.clone());
        }
        Ok(())
    }
}

impl Embedder for PrecomputedEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        self.vectors
            .get(text)
            .cloned()
            .ok_or_else(|| EmbedError::Missing(text.to_owned()))
    }
}

/// Runs an external program once per text: the text is written to its
/// stdin and a JSON array of numbers is expected on stdout.
#[derive(Debug, Clone)]
pub struct CommandEmbedder {
    program: String,
    args: Vec<String>,
    dim: usize,
}

impl CommandEmbedder {
    pub fn new(program: impl Into<String>, args: Vec<String>, dim: usize) -> Self {
        Self {
            program: program.into(),
            args,
            dim,
        }
    }
}

impl Embedder for CommandEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()?;
        child
            .stdin
            .take()
            .expect("stdin is piped")
            .write_all(text.as_bytes())?;
        let output = child.wait_with_output()?;
        if !output.status.success() {
            return Err(EmbedError::External(format!(
                "{} exited with {}: {}",
                self.program,
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        let vector: Vec<f32> = serde_json::from_slice(&output.stdout)?;
        if vector.len() != self.dim {
            return Err(EmbedError::DimMismatch {
                expected: self.dim,
                found: vector.len(),
            });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(vector)
    }
}
