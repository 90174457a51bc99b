//! Exact cosine search fanned out over a pool of workers.
//!
//! The corpus is split into contiguous chunks, one per worker. A query is
//! sent to every worker, each worker scores every row of its chunk, the
//! per-worker results come back to the caller and are merged into a single
//! ranking sorted by score (descending) with ties broken by ascending row.
//!
//! Every row score is computed with [`dot_ordered`], so the ranking is
//! bit-identical for any number of workers and either
//! [`WorkerReturn`] mode.

use std::cmp::Ordering;
use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::dot_ordered;
use crate::store::{normalize_vector, partition, EmbeddingMatrix, IdMap, StoreError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("query has {found} dims, index has {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("cannot score a zero vector")]
    ZeroVector,
    #[error("query contains non-finite values")]
    NonFinite,
    #[error("row range {start}..{end} is outside 0..{count}")]
    OutOfBounds { start: usize, end: usize, count: usize },
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
    #[error("index is not trained")]
    Untrained,
    #[error("worker pool is shut down")]
    PoolClosed,
}

impl From<StoreError> for SearchError {
    fn from(e: StoreError) -> Self {
        SearchError::InvalidConfig(e.to_string())
    }
}

/// A unit-normalised query vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    vector: Vec<f32>,
    text: Option<String>,
}

impl Query {
    pub fn new(vector: &[f32]) -> Result<Self, SearchError> {
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(SearchError::NonFinite);
        }
        let vector = normalize_vector(vector).ok_or(SearchError::ZeroVector)?;
        Ok(Self { vector, text: None })
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text = Some(text.into());
        self
    }

    pub fn vector(&self) -> &[f32] {
        &self.vector
    }

    pub fn text(&self) -> Option<&str> {
        self.text.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub row: usize,
    pub score: f32,
}

impl ScoredHit {
    pub fn new(row: usize, score: f32) -> Self {
        Self { row, score }
    }
}

/// Ranking order shared by every search path: higher score first, then
/// lower row.
#[inline]
pub fn rank_order(a: &ScoredHit, b: &ScoredHit) -> Ordering {
    b.score.total_cmp(&a.score).then(a.row.cmp(&b.row))
}

/// What a worker sends back for one query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkerReturn {
    /// Every score of the worker's chunk.
    AllScores,
    /// Only the worker's own top-k; the merged result is the same.
    #[default]
    LocalTopk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchConfig {
    pub workers: usize,
    pub topk: usize,
    pub worker_return: WorkerReturn,
}

impl SearchConfig {
    pub fn new(workers: usize, topk: usize) -> Self {
        Self {
            workers,
            topk,
            worker_return: WorkerReturn::default(),
        }
    }

    pub fn with_return(mut self, mode: WorkerReturn) -> Self {
        self.worker_return = mode;
        self
    }

    fn validate(&self) -> Result<(), SearchError> {
        if self.workers == 0 {
            return Err(SearchError::InvalidConfig("workers must be >= 1".into()));
        }
        if self.topk == 0 {
            return Err(SearchError::InvalidConfig("topk must be >= 1".into()));
        }
        Ok(())
    }
}

/// Cosine similarity, accumulated in f64.
pub fn cosine(q: &[f32], p: &[f32]) -> Result<f64, SearchError> {
    if q.len() != p.len() {
        return Err(SearchError::DimMismatch {
            expected: q.len(),
            found: p.len(),
        });
    }
    let (mut dot, mut qq, mut pp) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in q.iter().zip(p) {
        let (a, b) = (f64::from(a), f64::from(b));
        dot += a * b;
        qq += a * a;
        pp += b * b;
    }
    if qq == 0.0 || pp == 0.0 {
        return Err(SearchError::ZeroVector);
    }
    Ok(dot / (qq.sqrt() * pp.sqrt()))
}

/// Scores every row of `range` against `query`, in row order.
pub fn score_chunk(
    query: &Query,
    matrix: &EmbeddingMatrix,
    range: Range<usize>,
) -> Result<Vec<ScoredHit>, SearchError> {
    if query.dim() != matrix.dim() {
        return Err(SearchError::DimMismatch {
            expected: matrix.dim(),
            found: query.dim(),
        });
    }
    if range.start > range.end || range.end > matrix.count() {
        return Err(SearchError::OutOfBounds {
            start: range.start,
            end: range.end,
            count: matrix.count(),
        });
    }
    let q = query.vector();
    Ok(range
        .map(|row| ScoredHit::new(row, dot_ordered(q, matrix.row(row))))
        .collect())
}

/// Keeps the `k` best hits of `hits`, sorted.
pub fn local_topk(mut hits: Vec<ScoredHit>, k: usize) -> Vec<ScoredHit> {
    if k == 0 {
        return Vec::new();
    }
    if hits.len() > k {
        hits.select_nth_unstable_by(k - 1, rank_order);
        hits.truncate(k);
    }
    hits.sort_unstable_by(rank_order);
    hits
}

/// Merges per-worker hit lists (over disjoint rows) into the global top `k`.
pub fn merge_topk(worker_outputs: Vec<Vec<ScoredHit>>, k: usize) -> Vec<ScoredHit> {
    let all: Vec<ScoredHit> = worker_outputs.into_iter().flatten().collect();
    local_topk(all, k)
}

fn worker_reply(
    query: &Query,
    matrix: &EmbeddingMatrix,
    range: Range<usize>,
    k: usize,
    mode: WorkerReturn,
) -> Result<Vec<ScoredHit>, SearchError> {
    let hits = score_chunk(query, matrix, range)?;
    Ok(match mode {
        WorkerReturn::AllScores => hits,
        WorkerReturn::LocalTopk => local_topk(hits, k),
    })
}

/// A hit resolved to its passage id.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedHit {
    pub row: usize,
    pub id: String,
    pub score: f32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchResult {
    pub hits: Vec<RankedHit>,
    /// Set when the search succeeded but there was nothing to rank.
    pub warning: Option<String>,
}

pub fn resolve(hits: &[ScoredHit], ids: &IdMap) -> Vec<RankedHit> {
    hits.iter()
        .map(|h| RankedHit {
            row: h.row,
            id: ids.get(h.row).unwrap_or_default().to_owned(),
            score: h.score,
        })
        .collect()
}

/// One-shot search: partitions the corpus, scores each chunk on its own
/// scoped thread and merges. [`WorkerPool`] is the long-lived equivalent.
pub fn search(
    query: &Query,
    config: &SearchConfig,
    matrix: &EmbeddingMatrix,
    ids: &IdMap,
) -> Result<SearchResult, SearchError> {
    config.validate()?;
    if matrix.is_empty() {
        log::warn!("search on an empty corpus");
        return Ok(SearchResult {
            hits: Vec::new(),
            warning: Some("corpus is empty".into()),
        });
    }
    if query.dim() != matrix.dim() {
        return Err(SearchError::DimMismatch {
            expected: matrix.dim(),
            found: query.dim(),
        });
    }
    let part = partition(matrix.count(), config.workers)?;
    let outputs = std::thread::scope(|s| {
        let handles: Vec<_> = part
            .ranges
            .iter()
            .cloned()
            .map(|range| {
                s.spawn(move || {
                    worker_reply(query, matrix, range, config.topk, config.worker_return)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("search worker panicked"))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let hits = merge_topk(outputs, config.topk);
    Ok(SearchResult {
        hits: resolve(&hits, ids),
        warning: None,
    })
}

struct Job {
    query: Arc<Query>,
    k: usize,
    mode: WorkerReturn,
    reply: Sender<Reply>,
}

struct Reply {
    worker: usize,
    range: Range<usize>,
    hits: Result<Vec<ScoredHit>, SearchError>,
}

/// Per-worker counters, for checking that each worker only ever touched
/// its own chunk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerStats {
    pub range: Range<usize>,
    pub queries: u64,
    pub rows_scored: u64,
}

struct WorkerHandle {
    jobs: Option<Sender<Job>>,
    range: Range<usize>,
    queries: Arc<AtomicU64>,
    rows_scored: Arc<AtomicU64>,
    thread: Option<JoinHandle<()>>,
}

/// Long-lived exact-search workers, each owning one contiguous chunk of an
/// immutable corpus and consuming queries from its own FIFO queue.
///
/// `search` may be called from many threads at once; replies for different
/// queries never mix because every query carries its own reply channel.
pub struct WorkerPool {
    matrix: Arc<EmbeddingMatrix>,
    workers: Vec<WorkerHandle>,
}

impl WorkerPool {
    pub fn new(matrix: Arc<EmbeddingMatrix>, workers: usize) -> Result<Self, SearchError> {
        let part = partition(matrix.count(), workers)?;
        let handles = part
            .ranges
            .into_iter()
            .enumerate()
            .map(|(w, range)| spawn_worker(w, Arc::clone(&matrix), range))
            .collect();
        Ok(Self {
            matrix,
            workers: handles,
        })
    }

    pub fn workers(&self) -> usize {
        self.workers.len()
    }

    pub fn matrix(&self) -> &Arc<EmbeddingMatrix> {
        &self.matrix
    }

    pub fn stats(&self) -> Vec<WorkerStats> {
        self.workers
            .iter()
            .map(|w| WorkerStats {
                range: w.range.clone(),
                queries: w.queries.load(AtomicOrdering::Relaxed),
                rows_scored: w.rows_scored.load(AtomicOrdering::Relaxed),
            })
            .collect()
    }

    /// Dispatches `query` to every worker, waits for all replies and merges.
    pub fn search(
        &self,
        query: &Query,
        k: usize,
        mode: WorkerReturn,
    ) -> Result<Vec<ScoredHit>, SearchError> {
        if k == 0 {
            return Err(SearchError::InvalidConfig("topk must be >= 1".into()));
        }
        if self.matrix.is_empty() {
            return Ok(Vec::new());
        }
        if query.dim() != self.matrix.dim() {
            return Err(SearchError::DimMismatch {
                expected: self.matrix.dim(),
                found: query.dim(),
            });
        }
        let query = Arc::new(query.clone());
        let (tx, rx) = mpsc::channel();
        for w in &self.workers {
            let job = Job {
                query: Arc::clone(&query),
                k,
                mode,
                reply: tx.clone(),
            };
            w.jobs
                .as_ref()
                .ok_or(SearchError::PoolClosed)?
                .send(job)
                .map_err(|_| SearchError::PoolClosed)?;
        }
        drop(tx);
        let mut outputs = Vec::with_capacity(self.workers.len());
        for _ in 0..self.workers.len() {
            let reply = rx.recv().map_err(|_| SearchError::PoolClosed)?;
            debug_assert_eq!(reply.range, self.workers[reply.worker].range);
            outputs.push(reply.hits?);
        }
        Ok(merge_topk(outputs, k))
    }
}

fn spawn_worker(index: usize, matrix: Arc<EmbeddingMatrix>, range: Range<usize>) -> WorkerHandle {
    let (tx, rx): (Sender<Job>, Receiver<Job>) = mpsc::channel();
    let queries = Arc::new(AtomicU64::new(0));
    let rows_scored = Arc::new(AtomicU64::new(0));
    let (q, r, own) = (Arc::clone(&queries), Arc::clone(&rows_scored), range.clone());
    let thread = std::thread::Builder::new()
        .name(format!("exact-worker-{index}"))
        .spawn(move || {
            for job in rx {
                let hits = worker_reply(&job.query, &matrix, own.clone(), job.k, job.mode);
                q.fetch_add(1, AtomicOrdering::Relaxed);
                r.fetch_add(own.len() as u64, AtomicOrdering::Relaxed);
                // The caller may have given up; nothing to do then.
                let _ = job.reply.send(Reply {
                    worker: index,
                    range: own.clone(),
                    hits,
                });
            }
        })
        .expect("failed to spawn search worker");
    WorkerHandle {
        jobs: Some(tx),
        range,
        queries,
        rows_scored,
        thread: Some(thread),
    }
}

impl Drop for WorkerPool {
    fn drop(&mut self) {
        for w in &mut self.workers {
            w.jobs.take();
        }
        for w in &mut self.workers {
            if let Some(t) = w.thread.take() {
                let _ = t.join();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::store::normalize_rows;

    fn random_corpus(n: usize, d: usize, seed: u64) -> EmbeddingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..n * d).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        normalize_rows(&EmbeddingMatrix::new(d, values).unwrap()).unwrap()
    }

    fn ids(n: usize) -> IdMap {
        IdMap::new((0..n).map(|i| format!("d{i}")).collect()).unwrap()
    }

    /// Sequential full scan + full sort, written independently of the
    /// partition/merge path.
    fn oracle(q: &[f32], m: &EmbeddingMatrix, k: usize) -> Vec<(usize, f32)> {
        let mut all: Vec<(usize, f32)> = Vec::new();
        for r in 0..m.count() {
            let row = m.row(r);
            let mut s = 0.0f32;
            for i in 0..row.len() {
                s += q[i] * row[i];
            }
            all.push((r, s));
        }
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }

    #[test]
    fn cosine_examples() {
        let v = [0.3f32, -2.0, 5.5];
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-6);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let expected = 32.0 / (14f64.sqrt() * 77f64.sqrt());
        let got = cosine(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.974631).abs() < 1e-6);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(SearchError::ZeroVector));
    }

    #[test]
    fn score_chunk_matches_cosine_and_splits() {
        let m = random_corpus(100, 8, 11);
        let q = Query::new(&[0.1, 0.2, -0.3, 0.4, 0.5, -0.6, 0.7, 0.8]).unwrap();
        assert!(score_chunk(&q, &m, 5..5).unwrap().is_empty());
        let full = score_chunk(&q, &m, 0..100).unwrap();
        for h in &full {
            let c = cosine(q.vector(), m.row(h.row)).unwrap();
            assert!((f64::from(h.score) - c).abs() < 1e-6);
        }
        for split in [[0, 10, 50, 51, 100], [0, 25, 50, 75, 100], [0, 0, 0, 99, 100]] {
            let joined: Vec<ScoredHit> = split
                .windows(2)
                .flat_map(|w| score_chunk(&q, &m, w[0]..w[1]).unwrap())
                .collect();
            assert_eq!(joined, full);
        }
        assert!(matches!(
            score_chunk(&q, &m, 90..101),
            Err(SearchError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn self_match_ranks_first() {
        let m = random_corpus(50, 16, 2);
        let q = Query::new(m.row(7)).unwrap();
        let r = search(&q, &SearchConfig::new(3, 5), &m, &ids(50)).unwrap();
        assert_eq!(r.hits[0].row, 7);
        assert_eq!(r.hits[0].id, "d7");
        assert!((r.hits[0].score - 1.0).abs() < 1e-6);
    }

    #[test]
    fn topk_is_clamped_to_corpus_size() {
        let m = random_corpus(2, 4, 5);
        let q = Query::new(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        let r = search(&q, &SearchConfig::new(4, 3), &m, &ids(2)).unwrap();
        assert_eq!(r.hits.len(), 2);
    }

    #[test]
    fn empty_corpus_warns() {
        let m = EmbeddingMatrix::new(4, vec![]).unwrap();
        let q = Query::new(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        let r = search(&q, &SearchConfig::new(2, 3), &m, &IdMap::default()).unwrap();
        assert!(r.hits.is_empty());
        assert!(r.warning.is_some());
    }

    #[test]
    fn dim_mismatch_is_rejected() {
        let m = random_corpus(5, 4, 5);
        let q = Query::new(&[1.0, 0.0]).unwrap();
        assert!(matches!(
            search(&q, &SearchConfig::new(1, 3), &m, &ids(5)),
            Err(SearchError::DimMismatch { expected: 4, found: 2 })
        ));
    }

    #[test]
    fn merge_examples() {
        let merged = merge_topk(
            vec![vec![ScoredHit::new(1, 0.9)], vec![ScoredHit::new(2, 0.8)]],
            2,
        );
        assert_eq!(merged, vec![ScoredHit::new(1, 0.9), ScoredHit::new(2, 0.8)]);
        let tied = merge_topk(
            vec![vec![ScoredHit::new(9, 0.5)], vec![ScoredHit::new(2, 0.5)]],
            2,
        );
        assert_eq!(tied[0].row, 2);
        assert!(merge_topk(vec![], 3).is_empty());
    }

    #[test]
    fn all_worker_counts_match_oracle() {
        let m = random_corpus(1000, 32, 42);
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let id_map = ids(1000);
        for _ in 0..5 {
            let qv: Vec<f32> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
            let q = Query::new(&qv).unwrap();
            let expected = oracle(q.vector(), &m, 10);
            for workers in [1, 2, 4, 6] {
                for mode in [WorkerReturn::AllScores, WorkerReturn::LocalTopk] {
                    let cfg = SearchConfig::new(workers, 10).with_return(mode);
                    let got: Vec<(usize, f32)> = search(&q, &cfg, &m, &id_map)
                        .unwrap()
                        .hits
                        .iter()
                        .map(|h| (h.row, h.score))
                        .collect();
                    assert_eq!(got, expected, "workers={workers} mode={mode:?}");
                }
            }
        }
    }

    #[test]
    fn pool_matches_scoped_search_and_respects_ranges() {
        let m = Arc::new(random_corpus(301, 16, 9));
        let pool = WorkerPool::new(Arc::clone(&m), 4).unwrap();
        let q = Query::new(m.row(3)).unwrap();
        let a = pool.search(&q, 20, WorkerReturn::LocalTopk).unwrap();
        let b = pool.search(&q, 20, WorkerReturn::AllScores).unwrap();
        let c = search(&q, &SearchConfig::new(1, 20), &m, &ids(301)).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a,
            c.hits.iter().map(|h| ScoredHit::new(h.row, h.score)).collect::<Vec<_>>()
        );
        let stats = pool.stats();
        assert_eq!(
            stats.iter().map(|s| s.range.clone()).collect::<Vec<_>>(),
            vec![0..76, 76..151, 151..226, 226..301]
        );
        for s in &stats {
            assert_eq!(s.queries, 2);
            assert_eq!(s.rows_scored, 2 * s.range.len() as u64);
        }
    }

    #[test]
    fn pool_serves_concurrent_callers() {
        let m = Arc::new(random_corpus(500, 8, 21));
        let pool = WorkerPool::new(Arc::clone(&m), 3).unwrap();
        let expected: Vec<Vec<ScoredHit>> = (0..8)
            .map(|i| {
                pool.search(&Query::new(m.row(i)).unwrap(), 7, WorkerReturn::LocalTopk)
                    .unwrap()
            })
            .collect();
        std::thread::scope(|s| {
            for t in 0..4 {
                let (pool, m, expected) = (&pool, &m, &expected);
                s.spawn(move || {
                    for i in (0..8).cycle().skip(t).take(16) {
                        let q = Query::new(m.row(i)).unwrap();
                        let got = pool.search(&q, 7, WorkerReturn::AllScores).unwrap();
                        assert_eq!(got, expected[i]);
                    }
                });
            }
        });
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn search_equals_oracle_for_any_worker_count(
            n in 1usize..400,
            d in 1usize..24,
            workers in 1usize..=8,
            k in 1usize..30,
            seed in any::<u64>(),
        ) {
            let m = random_corpus(n, d, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            let qv: Vec<f32> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            prop_assume!(qv.iter().any(|&x| x != 0.0));
            let q = Query::new(&qv).unwrap();
            let got: Vec<(usize, f32)> = search(&q, &SearchConfig::new(workers, k), &m, &ids(n))
                .unwrap().hits.iter().map(|h| (h.row, h.score)).collect();
            prop_assert_eq!(&got, &oracle(q.vector(), &m, k));
            for h in &got {
                prop_assert!(h.1.abs() <= 1.0 + 1e-6);
            }
            // Monotone truncation.
            let longer: Vec<(usize, f32)> = search(&q, &SearchConfig::new(workers, k + 1), &m, &ids(n))
                .unwrap().hits.iter().map(|h| (h.row, h.score)).collect();
            prop_assert_eq!(&longer[..got.len()], &got[..]);
        }

        #[test]
        fn merging_local_topk_equals_global_topk(
            scores in prop::collection::vec(-1.0f32..1.0, 1..300),
            workers in 1usize..8,
            k in 1usize..40,
        ) {
            let hits: Vec<ScoredHit> = scores.iter().enumerate().map(|(r, &s)| ScoredHit::new(r, s)).collect();
            let part = partition(hits.len(), workers).unwrap();
            let locals: Vec<Vec<ScoredHit>> = part.ranges.iter()
                .map(|r| local_topk(hits[r.clone()].to_vec(), k)).collect();
            let mut brute = hits.clone();
            brute.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap().then(a.row.cmp(&b.row)));
            brute.truncate(k);
            prop_assert_eq!(merge_topk(locals, k), brute);
        }
    }
}
