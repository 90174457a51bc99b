//! The approximate comparison indexes: fp16 scalar quantisation, product
//! quantisation and HNSW.

pub mod hnsw;
pub mod kmeans;
pub mod pq;
pub mod sq;

use thiserror::Error;

pub use hnsw::{HnswIndex, HnswParams, NeighborSelection};
pub use kmeans::{kmeans, KMeans};
pub use pq::{PqIndex, PqParams};
pub use sq::SqIndex;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("value {0} does not fit in float16")]
    F16Overflow(f32),
    #[error("dimension {dim} is not divisible by {m} subspaces")]
    Indivisible { dim: usize, m: usize },
    #[error("need at least {k} points to train {k} centroids, got {points}")]
    TooFewPoints { points: usize, k: usize },
    #[error("index is not trained")]
    Untrained,
    #[error("matrix has {found} dims, index expects {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Format(#[from] crate::format::FormatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
