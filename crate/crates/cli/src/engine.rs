//! A loaded index together with its search backends and query embedder.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use log::info;
use qirat::ann::{HnswIndex, HnswParams, PqIndex, PqParams, SqIndex};
use qirat::backend::{ExactPool, SearchBackend};
use qirat::embedder::Embedder;
use qirat::exact::{Query, WorkerReturn};
use qirat::store::{load_index, read_passages, EmbeddingMatrix, IdMap, PassageRecord};
use serde::{Deserialize, Serialize};

use crate::opts::BackendKind;

/// Where `ingest` keeps passage texts for display.
pub fn passages_path(index: &Path) -> PathBuf {
    index.with_extension("passages.jsonl")
}

pub fn pq_cache_path(index: &Path) -> PathBuf {
    index.with_extension("pqix")
}

pub fn hnsw_cache_path(index: &Path) -> PathBuf {
    index.with_extension("hnsx")
}

#[derive(Debug, Clone)]
pub struct EngineOptions {
    pub workers: usize,
    pub backends: Vec<BackendKind>,
    pub worker_return: WorkerReturn,
    pub pq: PqParams,
    pub hnsw: HnswParams,
    pub cache: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            backends: vec![BackendKind::Exact],
            worker_return: WorkerReturn::LocalTopk,
            pq: PqParams::default(),
            hnsw: HnswParams::default(),
            cache: true,
        }
    }
}

/// Query as received from a user: text to embed, or a ready vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QueryInput {
    Text(String),
    Vector(Vec<f32>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: String,
    pub score: f32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

pub struct Engine {
    matrix: Arc<EmbeddingMatrix>,
    ids: IdMap,
    texts: Option<Vec<String>>,
    embedder: Option<Arc<dyn Embedder>>,
    workers: usize,
    exact: Option<Arc<ExactPool>>,
    backends: BTreeMap<BackendKind, Arc<dyn SearchBackend>>,
}

fn fresh(cache: &Path, index: &Path) -> bool {
    let mtime = |p: &Path| std::fs::metadata(p).and_then(|m| m.modified()).ok();
    match (mtime(cache), mtime(index)) {
        (Some(c), Some(i)) => c >= i,
        (Some(_), None) => true,
        _ => false,
    }
}

impl Engine {
    /// Loads `index` (and its passage texts if present) and prepares the
    /// requested backends. Approximate indexes are read from, or written
    /// to, files next to the index when `options.cache` is set.
    pub fn open(index: &Path, options: &EngineOptions, embedder: Option<Arc<dyn Embedder>>) -> Result<Self> {
        let (matrix, ids) = load_index(index).with_context(|| format!("loading index {}", index.display()))?;
        let texts_file = passages_path(index);
        let texts = if texts_file.exists() {
            let records = read_passages(&texts_file).with_context(|| format!("reading {}", texts_file.display()))?;
            Some(align_texts(&ids, records)?)
        } else {
            None
        };
        let cache = options.cache.then_some(index);
        Self::build(Arc::new(matrix), ids, texts, embedder, options, cache)
    }

    pub fn from_parts(
        matrix: EmbeddingMatrix,
        ids: IdMap,
        texts: Option<Vec<String>>,
        embedder: Option<Arc<dyn Embedder>>,
        options: &EngineOptions,
    ) -> Result<Self> {
        Self::build(Arc::new(matrix), ids, texts, embedder, options, None)
    }

    fn build(
        matrix: Arc<EmbeddingMatrix>,
        ids: IdMap,
        texts: Option<Vec<String>>,
        embedder: Option<Arc<dyn Embedder>>,
        options: &EngineOptions,
        cache: Option<&Path>,
    ) -> Result<Self> {
        if ids.len() != matrix.count() {
            bail!("{} ids for {} rows", ids.len(), matrix.count());
        }
        if let Some(e) = &embedder {
            if e.dim() != matrix.dim() {
                bail!("embedder produces {} dims but the index has {}", e.dim(), matrix.dim());
            }
        }
        if options.workers == 0 {
            bail!("workers must be at least 1");
        }
        let mut engine = Self {
            matrix,
            ids,
            texts,
            embedder,
            workers: options.workers,
            exact: None,
            backends: BTreeMap::new(),
        };
        let mut kinds = options.backends.clone();
        kinds.sort();
        kinds.dedup();
        for kind in kinds {
            let backend: Arc<dyn SearchBackend> = match kind {
                BackendKind::Exact => {
                    let pool = Arc::new(ExactPool::new(
                        Arc::clone(&engine.matrix),
                        options.workers,
                        options.worker_return,
                    )?);
                    engine.exact = Some(Arc::clone(&pool));
                    pool
                }
                BackendKind::Sq => Arc::new(SqIndex::build(&engine.matrix)?),
                BackendKind::Pq => Arc::new(engine.pq(options.pq, cache)?),
                BackendKind::Hnsw => Arc::new(engine.hnsw(options.hnsw, cache)?),
            };
            engine.backends.insert(kind, backend);
        }
        Ok(engine)
    }

    fn pq(&self, params: PqParams, cache: Option<&Path>) -> Result<PqIndex> {
        let path = cache.map(pq_cache_path);
        if let (Some(path), Some(index)) = (&path, cache) {
            if fresh(path, index) {
                match PqIndex::load(path) {
                    Ok(pq) if pq.count() == self.matrix.count() && pq.dim() == self.matrix.dim() && pq.m() == params.m && pq.ks() == params.ks => {
                        info!("loaded PQ index from {}", path.display());
                        return Ok(pq);
                    }
                    Ok(_) => info!("PQ cache {} does not match; rebuilding", path.display()),
                    Err(e) => info!("PQ cache {} unreadable ({e}); rebuilding", path.display()),
                }
            }
        }
        info!("training PQ (m={}, ks={})", params.m, params.ks);
        let pq = PqIndex::build(&self.matrix, params)?;
        if let Some(path) = path {
            pq.save(&path).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(pq)
    }

    fn hnsw(&self, params: HnswParams, cache: Option<&Path>) -> Result<HnswIndex> {
        let path = cache.map(hnsw_cache_path);
        if let (Some(path), Some(index)) = (&path, cache) {
            if fresh(path, index) {
                match HnswIndex::load(path, Arc::clone(&self.matrix)) {
                    Ok(mut h) if h.params().m == params.m && h.params().ef_construction == params.ef_construction => {
                        info!("loaded HNSW graph from {}", path.display());
                        h.set_ef_search(params.ef_search);
                        return Ok(h);
                    }
                    Ok(_) => info!("HNSW cache {} does not match; rebuilding", path.display()),
                    Err(e) => info!("HNSW cache {} unreadable ({e}); rebuilding", path.display()),
                }
            }
        }
        info!("building HNSW graph (M={}, efC={})", params.m, params.ef_construction);
        let h = HnswIndex::build(Arc::clone(&self.matrix), params)?;
        if let Some(path) = path {
            h.save(&path).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(h)
    }

    pub fn matrix(&self) -> &Arc<EmbeddingMatrix> {
        &self.matrix
    }

    pub fn ids(&self) -> &IdMap {
        &self.ids
    }

    pub fn count(&self) -> usize {
        self.matrix.count()
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn exact_pool(&self) -> Option<&ExactPool> {
        self.exact.as_deref()
    }

    pub fn backend_kinds(&self) -> Vec<BackendKind> {
        self.backends.keys().copied().collect()
    }

    pub fn backend(&self, kind: BackendKind) -> Result<&Arc<dyn SearchBackend>> {
        self.backends
            .get(&kind)
            .ok_or_else(|| anyhow!("backend {kind} is not loaded (available: {})", self.backend_list()))
    }

    fn backend_list(&self) -> String {
        self.backends.keys().map(|k| k.as_str()).collect::<Vec<_>>().join(", ")
    }

    pub fn query(&self, input: &QueryInput) -> Result<Query> {
        match input {
            QueryInput::Vector(v) => Ok(Query::new(v)?),
            QueryInput::Text(text) => {
                let embedder = self.embedder.as_ref().context("no embedder configured for text queries")?;
                let v = embedder.embed(text)?;
                Ok(Query::new(&v)?.with_text(text.clone()))
            }
        }
    }

    pub fn search(&self, query: &Query, k: usize, kind: BackendKind) -> Result<Vec<Hit>> {
        let hits = self.backend(kind)?.search(query, k)?;
        Ok(hits
            .into_iter()
            .map(|h| Hit {
                id: self.ids.get(h.row).unwrap_or_default().to_owned(),
                score: h.score,
                text: self.texts.as_ref().map(|t| t[h.row].clone()),
            })
            .collect())
    }
}

fn align_texts(ids: &IdMap, records: Vec<PassageRecord>) -> Result<Vec<String>> {
    let mut by_id: BTreeMap<String, String> = records.into_iter().map(|r| (r.id, r.text)).collect();
    ids.ids()
        .iter()
        .map(|id| by_id.remove(id).ok_or_else(|| anyhow!("passage file has no text for id {id:?}")))
        .collect()
}
