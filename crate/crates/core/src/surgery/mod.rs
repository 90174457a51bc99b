//! Vocabulary surgery on a multilingual encoder: trimming the embedding
//! table to the tokens a target language needs, extending it with new
//! domain tokens, and counting what that does to model size.

pub mod bpe;
pub mod params;
pub mod vocab;

pub use bpe::{default_specials, train_bpe, TokenizerModel};
pub use params::{count_params, ModelShape, ParamCount};
pub use vocab::{
    extend_vocab, intersect_vocab, missing_tokens, reduce_embeddings, EmbeddingTable, Extension, IdRemap, Reduction,
    SurgeryReport,
};

use thiserror::Error;

use crate::format::FormatError;
use crate::store::StoreError;

#[derive(Debug, Error)]
pub enum SurgeryError {
    #[error("malformed tokenizer or table: {0}")]
    Malformed(String),
    #[error("training corpus has no words")]
    EmptyCorpus,
    #[error("vocabulary size {requested} is smaller than the base alphabet ({alphabet})")]
    VocabTooSmall { requested: usize, alphabet: usize },
    #[error("token {0:?} is not in the original vocabulary")]
    UnknownToken(String),
    #[error("token {0:?} segments to <unk> only")]
    UnknownOnly(String),
    #[error("embedding table has {rows} rows but the vocabulary has {vocab} tokens")]
    TableSize { rows: usize, vocab: usize },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
