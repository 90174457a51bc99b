//! Parameter counts for BERT-style encoders.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelShape {
    pub vocab: u64,
    pub hidden: u64,
    pub layers: u64,
    pub ffn: u64,
    pub max_positions: u64,
    pub token_types: u64,
}

impl ModelShape {
    pub fn xlmr_base() -> Self {
        Self {
            vocab: 250_002,
            hidden: 768,
            layers: 12,
            ffn: 3072,
            max_positions: 514,
            token_types: 1,
        }
    }

    pub fn mbert() -> Self {
        Self {
            vocab: 119_547,
            max_positions: 512,
            token_types: 2,
            ..Self::xlmr_base()
        }
    }

    /// XLM-R base cut down to a 43k-token vocabulary.
    pub fn xlmr_reduced() -> Self {
        Self {
            vocab: 43_000,
            ..Self::xlmr_base()
        }
    }

    pub fn with_vocab(self, vocab: u64) -> Self {
        Self { vocab, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamCount {
    /// Token embedding matrix alone (`vocab × hidden`).
    pub vocab_embedding: u64,
    /// Token, position and type embeddings plus the embedding layer norm.
    pub embedding: u64,
    pub encoder: u64,
    pub total: u64,
}

/// Counts weights and biases: embeddings with their layer norm, then per
/// layer the four attention projections, the two feed-forward matrices and
/// two layer norms. Pooler and LM head are not counted.
pub fn count_params(s: &ModelShape) -> ParamCount {
    let d = s.hidden;
    let vocab_embedding = s.vocab * d;
    let embedding = vocab_embedding + s.max_positions * d + s.token_types * d + 2 * d;
    let attention = 4 * (d * d + d);
    let ffn = (d * s.ffn + s.ffn) + (s.ffn * d + d);
    let norms = 4 * d;
    let encoder = s.layers * (attention + ffn + norms);
    ParamCount {
        vocab_embedding,
        embedding,
        encoder,
        total: embedding + encoder,
    }
}
