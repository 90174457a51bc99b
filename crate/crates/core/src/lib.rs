//! Dense passage retrieval on the CPU.
//!
//! Passages are embedded once into a unit-norm matrix ([`store`]), searched
//! exactly by a pool of workers over contiguous row ranges ([`exact`]) or
//! approximately through a scalar-quantized, product-quantized or HNSW
//! index ([`ann`]). [`metrics`] scores rankings and benchmarks backends;
//! [`surgery`] trims and extends encoder vocabularies; [`contrastive`]
//! holds the training objective.

pub mod ann;
pub mod backend;
pub mod contrastive;
pub mod embedder;
pub mod exact;
pub mod format;
pub mod kernel;
pub mod metrics;
pub mod store;
pub mod surgery;
pub mod synth;

pub use backend::{ExactPool, ExactScan, SearchBackend};
pub use embedder::{Embedder, StubEmbedder};
pub use exact::{search, Query, RankedHit, ScoredHit, SearchConfig, SearchError, SearchResult, WorkerPool, WorkerReturn};
pub use store::{EmbeddingMatrix, IdMap, StoreError};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/store.md")]
    mod store {}
    #[doc = include_str!("../../../book/src/exact.md")]
    mod exact {}
    #[doc = include_str!("../../../book/src/ann.md")]
    mod ann {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/surgery.md")]
    mod surgery {}
    #[doc = include_str!("../../../book/src/objective.md")]
    mod objective {}
}
