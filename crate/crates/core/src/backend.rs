//! A common face over the exact pool and the approximate indexes, so the
//! benchmark harness and the service can treat them alike.

use std::sync::Arc;

use crate::ann::{HnswIndex, PqIndex, SqIndex};
use crate::exact::{local_topk, score_chunk, Query, ScoredHit, SearchError, WorkerPool, WorkerReturn};
use crate::store::EmbeddingMatrix;

pub trait SearchBackend: Send + Sync {
    /// Label used in reports, e.g. `exact-4w`.
    fn name(&self) -> String;
    fn search(&self, query: &Query, k: usize) -> Result<Vec<ScoredHit>, SearchError>;
}

/// Single-threaded full scan on the caller's thread; the benchmark baseline.
pub struct ExactScan {
    matrix: Arc<EmbeddingMatrix>,
}

impl ExactScan {
    pub fn new(matrix: Arc<EmbeddingMatrix>) -> Self {
        Self { matrix }
    }
}

impl SearchBackend for ExactScan {
    fn name(&self) -> String {
        "baseline".into()
    }

    fn search(&self, query: &Query, k: usize) -> Result<Vec<ScoredHit>, SearchError> {
        let hits = score_chunk(query, &self.matrix, 0..self.matrix.count())?;
        Ok(local_topk(hits, k))
    }
}

/// The multi-worker exact search.
pub struct ExactPool {
    pool: WorkerPool,
    mode: WorkerReturn,
}

impl ExactPool {
    pub fn new(matrix: Arc<EmbeddingMatrix>, workers: usize, mode: WorkerReturn) -> Result<Self, SearchError> {
        Ok(Self {
            pool: WorkerPool::new(matrix, workers)?,
            mode,
        })
    }

    pub fn pool(&self) -> &WorkerPool {
        &self.pool
    }
}

impl SearchBackend for ExactPool {
    fn name(&self) -> String {
        format!("exact-{}w", self.pool.workers())
    }

    fn search(&self, query: &Query, k: usize) -> Result<Vec<ScoredHit>, SearchError> {
        self.pool.search(query, k, self.mode)
    }
}

impl SearchBackend for SqIndex {
    fn name(&self) -> String {
        "sq-fp16".into()
    }

    fn search(&self, query: &Query, k: usize) -> Result<Vec<ScoredHit>, SearchError> {
        SqIndex::search(self, query, k)
    }
}

impl SearchBackend for PqIndex {
    fn name(&self) -> String {
        format!("pq-m{}", self.m())
    }

    fn search(&self, query: &Query, k: usize) -> Result<Vec<ScoredHit>, SearchError> {
        PqIndex::search(self, query, k)
    }
}

impl SearchBackend for HnswIndex {
    fn name(&self) -> String {
        "hnsw".into()
    }

    fn search(&self, query: &Query, k: usize) -> Result<Vec<ScoredHit>, SearchError> {
        HnswIndex::search(self, query, k)
    }
}

impl<T: SearchBackend + ?Sized> SearchBackend for Arc<T> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn search(&self, query: &Query, k: usize) -> Result<Vec<ScoredHit>, SearchError> {
        (**self).search(query, k)
    }
}

impl<T: SearchBackend + ?Sized> SearchBackend for Box<T> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn search(&self, query: &Query, k: usize) -> Result<Vec<ScoredHit>, SearchError> {
        (**self).search(query, k)
    }
}
