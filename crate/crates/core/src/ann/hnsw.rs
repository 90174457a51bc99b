//! Hierarchical navigable small world graph over unit-normalised vectors,
//! scored by inner product (= cosine).
//!
//! Construction follows the usual layered insertion: each node draws a level
//! `floor(-ln(U) · mL)` with `mL = 1 / ln(M)`; insertion greedily descends
//! the layers above the node's level, then runs a beam search of width
//! `ef_construction` on every layer it belongs to and links to the selected
//! neighbours. Layers above 0 keep at most `M` links per node, layer 0 at
//! most `2M`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exact::{rank_order, Query, ScoredHit, SearchError};
use crate::format::{self, Dtype, FormatError, Header, Payload, HEADER_LEN};
use crate::kernel::dot;
use crate::store::EmbeddingMatrix;

use super::IndexError;

pub const HNSW_MAGIC: [u8; 4] = *b"HNSX";

/// How a node's links are chosen from its candidate set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NeighborSelection {
    /// Keep the closest candidates.
    Simple,
    /// Keep a candidate only if it is closer to the node than to every
    /// neighbour already kept; spreads links across clusters.
    #[default]
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HnswParams {
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub seed: u64,
    pub selection: NeighborSelection,
}

impl Default for HnswParams {
    fn default() -> Self {
        Self {
            m: 16,
            ef_construction: 200,
            ef_search: 100,
            seed: 0,
            selection: NeighborSelection::Heuristic,
        }
    }
}

/// (similarity, node) ordered by similarity, then by lower node id.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cand {
    sim: f32,
    node: u32,
}

impl Eq for Cand {}

impl Ord for Cand {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim
            .total_cmp(&other.sim)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Cand {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Visited {
    bits: Vec<u64>,
}

impl Visited {
    fn new(n: usize) -> Self {
        Self {
            bits: vec![0; n.div_ceil(64)],
        }
    }

    /// Marks `i`, returning true if it was not yet marked.
    fn insert(&mut self, i: u32) -> bool {
        let (w, b) = ((i / 64) as usize, i % 64);
        let fresh = self.bits[w] & (1 << b) == 0;
        self.bits[w] |= 1 << b;
        fresh
    }
}

#[derive(Debug, Clone)]
pub struct HnswIndex {
    matrix: Arc<EmbeddingMatrix>,
    params: HnswParams,
    /// `links[node][layer]`, `layer <= level(node)`.
    links: Vec<Vec<Vec<u32>>>,
    entry: Option<u32>,
}

impl PartialEq for HnswIndex {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params && self.links == other.links && self.entry == other.entry
    }
}

impl HnswIndex {
    pub fn build(matrix: Arc<EmbeddingMatrix>, params: HnswParams) -> Result<Self, IndexError> {
        if params.m < 2 {
            return Err(IndexError::BadParameter("HNSW M must be >= 2".into()));
        }
        if params.ef_construction == 0 {
            return Err(IndexError::BadParameter("ef_construction must be >= 1".into()));
        }
        let n = matrix.count();
        if u32::try_from(n).is_err() {
            return Err(IndexError::BadParameter("HNSW supports at most 2^32 nodes".into()));
        }
        let mut index = Self {
            matrix,
            params,
            links: Vec::with_capacity(n),
            entry: None,
        };
        let ml = 1.0 / (params.m as f64).ln();
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        for node in 0..n as u32 {
            // U in (0, 1].
            let u = 1.0 - rng.random::<f64>();
            let level = (-u.ln() * ml).floor() as usize;
            index.insert(node, level);
        }
        Ok(index)
    }

    pub fn params(&self) -> HnswParams {
        self.params
    }

    pub fn set_ef_search(&mut self, ef: usize) {
        self.params.ef_search = ef;
    }

    pub fn count(&self) -> usize {
        self.links.len()
    }

    pub fn entry_point(&self) -> Option<usize> {
        self.entry.map(|e| e as usize)
    }

    pub fn level(&self, node: usize) -> usize {
        self.links[node].len() - 1
    }

    pub fn max_level(&self) -> usize {
        self.entry.map_or(0, |e| self.level(e as usize))
    }

    pub fn neighbors(&self, node: usize, layer: usize) -> &[u32] {
        &self.links[node][layer]
    }

    fn max_links(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.params.m
        } else {
            self.params.m
        }
    }

    #[inline]
    fn sim(&self, q: &[f32], node: u32) -> f32 {
        dot(q, self.matrix.row(node as usize))
    }

    fn insert(&mut self, node: u32, level: usize) {
        self.links.push(vec![Vec::new(); level + 1]);
        let Some(entry) = self.entry else {
            self.entry = Some(node);
            return;
        };
        let matrix = Arc::clone(&self.matrix);
        let q = matrix.row(node as usize);
        let top = self.max_level();
        let mut ep = vec![Cand {
            sim: self.sim(q, entry),
            node: entry,
        }];
        for layer in (level + 1..=top).rev() {
            ep = vec![self.greedy(q, ep[0], layer)];
        }
        for layer in (0..=level.min(top)).rev() {
            let found = self.search_layer(q, &ep, self.params.ef_construction, layer);
            let chosen = self.select(q, &found, self.params.m);
            for c in &chosen {
                self.links[node as usize][layer].push(c.node);
                self.links[c.node as usize][layer].push(node);
                if self.links[c.node as usize][layer].len() > self.max_links(layer) {
                    self.shrink(c.node, layer);
                }
            }
            ep = found;
        }
        if level > top {
            self.entry = Some(node);
        }
    }

    fn shrink(&mut self, node: u32, layer: usize) {
        let base = self.matrix.row(node as usize);
        let mut cands: Vec<Cand> = self.links[node as usize][layer]
            .iter()
            .map(|&n| Cand {
                sim: self.sim(base, n),
                node: n,
            })
            .collect();
        cands.sort_unstable_by(|a, b| b.cmp(a));
        let kept = self.select(base, &cands, self.max_links(layer));
        self.links[node as usize][layer] = kept.iter().map(|c| c.node).collect();
    }

    /// `cands` must be sorted best-first.
    fn select(&self, _q: &[f32], cands: &[Cand], limit: usize) -> Vec<Cand> {
        match self.params.selection {
            NeighborSelection::Simple => cands.iter().take(limit).copied().collect(),
            NeighborSelection::Heuristic => {
                let mut kept: Vec<Cand> = Vec::with_capacity(limit);
                for &c in cands {
                    if kept.len() >= limit {
                        break;
                    }
                    let row = self.matrix.row(c.node as usize);
                    if kept.iter().all(|k| self.sim(row, k.node) < c.sim) {
                        kept.push(c);
                    }
                }
                kept
            }
        }
    }

    fn greedy(&self, q: &[f32], mut best: Cand, layer: usize) -> Cand {
        loop {
            let mut moved = false;
            for &n in &self.links[best.node as usize][layer] {
                let c = Cand {
                    sim: self.sim(q, n),
                    node: n,
                };
                if c > best {
                    best = c;
                    moved = true;
                }
            }
            if !moved {
                return best;
            }
        }
    }

    /// Beam search on one layer; returns up to `ef` nodes, best first.
    fn search_layer(&self, q: &[f32], entry: &[Cand], ef: usize, layer: usize) -> Vec<Cand> {
        let mut visited = Visited::new(self.links.len());
        let mut frontier: BinaryHeap<Cand> = BinaryHeap::new();
        // Min-heap on similarity: worst kept result on top.
        let mut results: BinaryHeap<std::cmp::Reverse<Cand>> = BinaryHeap::new();
        for &e in entry {
            if visited.insert(e.node) {
                frontier.push(e);
                results.push(std::cmp::Reverse(e));
            }
        }
        while results.len() > ef {
            results.pop();
        }
        while let Some(c) = frontier.pop() {
            let worst = results.peek().map(|r| r.0);
            if let Some(w) = worst {
                if results.len() >= ef && c < w {
                    break;
                }
            }
            for &n in &self.links[c.node as usize][layer] {
                if !visited.insert(n) {
                    continue;
                }
                let cand = Cand {
                    sim: self.sim(q, n),
                    node: n,
                };
                let admit = results.len() < ef || results.peek().is_some_and(|w| cand > w.0);
                if admit {
                    frontier.push(cand);
                    results.push(std::cmp::Reverse(cand));
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        let mut out: Vec<Cand> = results.into_iter().map(|r| r.0).collect();
        out.sort_unstable_by(|a, b| b.cmp(a));
        out
    }

    /// Greedy descent to layer 0, beam of width `ef_search` there, top `k`.
    pub fn search_with_ef(&self, query: &Query, k: usize, ef_search: usize) -> Result<Vec<ScoredHit>, SearchError> {
        if query.dim() != self.matrix.dim() {
            return Err(SearchError::DimMismatch {
                expected: self.matrix.dim(),
                found: query.dim(),
            });
        }
        let Some(entry) = self.entry else {
            return Ok(Vec::new());
        };
        let q = query.vector();
        let mut best = Cand {
            sim: self.sim(q, entry),
            node: entry,
        };
        for layer in (1..=self.max_level()).rev() {
            best = self.greedy(q, best, layer);
        }
        let beam = self.search_layer(q, &[best], ef_search.max(k), 0);
        let mut hits: Vec<ScoredHit> = beam
            .iter()
            .map(|c| ScoredHit::new(c.node as usize, c.sim))
            .collect();
        hits.sort_unstable_by(rank_order);
        hits.truncate(k);
        Ok(hits)
    }

    pub fn search(&self, query: &Query, k: usize) -> Result<Vec<ScoredHit>, SearchError> {
        self.search_with_ef(query, k, self.params.ef_search)
    }

    /// Header params: u32 slot 0 = M, 1 = ef_construction, 2 = ef_search,
    /// 3 = selection (0 simple, 1 heuristic); u64 slot 2 = seed, slot 3 =
    /// entry point (`u64::MAX` when empty). Payload, per node in row order:
    /// u32 level, then for each layer `0..=level` a u32 length followed by
    /// that many u32 neighbour rows.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = Header::new(
            HNSW_MAGIC,
            Dtype::F32,
            self.matrix.is_normalized(),
            self.matrix.dim() as u32,
            self.links.len() as u64,
        );
        header.set_param_u32(0, self.params.m as u32);
        header.set_param_u32(1, self.params.ef_construction as u32);
        header.set_param_u32(2, self.params.ef_search as u32);
        header.set_param_u32(3, (self.params.selection == NeighborSelection::Heuristic) as u32);
        header.set_param_u64(2, self.params.seed);
        header.set_param_u64(3, self.entry.map_or(u64::MAX, u64::from));
        let mut out = header.to_bytes().to_vec();
        for layers in &self.links {
            out.extend_from_slice(&((layers.len() - 1) as u32).to_le_bytes());
            for list in layers {
                out.extend_from_slice(&(list.len() as u32).to_le_bytes());
                for n in list {
                    out.extend_from_slice(&n.to_le_bytes());
                }
            }
        }
        out
    }

    /// Restores a graph written by [`to_bytes`](Self::to_bytes) over the
    /// matrix it was built from.
    pub fn from_bytes(bytes: &[u8], matrix: Arc<EmbeddingMatrix>) -> Result<Self, FormatError> {
        let header = Header::parse(bytes, &HNSW_MAGIC)?;
        if header.dim as usize != matrix.dim() || header.count != matrix.count() as u64 {
            return Err(FormatError::Corrupt(format!(
                "graph is {}x{}, matrix is {}x{}",
                header.count,
                header.dim,
                matrix.count(),
                matrix.dim()
            )));
        }
        let params = HnswParams {
            m: header.param_u32(0) as usize,
            ef_construction: header.param_u32(1) as usize,
            ef_search: header.param_u32(2) as usize,
            selection: if header.param_u32(3) == 1 {
                NeighborSelection::Heuristic
            } else {
                NeighborSelection::Simple
            },
            seed: header.param_u64(2),
        };
        let n = matrix.count();
        let mut payload = Payload::new(bytes);
        payload.take(HEADER_LEN)?;
        let mut links = Vec::with_capacity(n);
        for _ in 0..n {
            let level = payload.u32()? as usize;
            if level > 64 {
                return Err(FormatError::Corrupt(format!("level {level}")));
            }
            let mut layers = Vec::with_capacity(level + 1);
            for _ in 0..=level {
                let len = payload.u32()? as usize;
                let raw = payload.take(len.checked_mul(4).ok_or_else(|| FormatError::Corrupt("list length".into()))?)?;
                let list: Vec<u32> = raw
                    .chunks_exact(4)
                    .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                if let Some(bad) = list.iter().find(|&&x| x as usize >= n) {
                    return Err(FormatError::Corrupt(format!("neighbour {bad} out of range")));
                }
                layers.push(list);
            }
            links.push(layers);
        }
        payload.finish()?;
        let entry = match header.param_u64(3) {
            u64::MAX => None,
            e if (e as usize) < n => Some(e as u32),
            e => return Err(FormatError::Corrupt(format!("entry point {e}"))),
        };
        Ok(Self {
            matrix,
            params,
            links,
            entry,
        })
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())
    }

    pub fn load(path: &Path, matrix: Arc<EmbeddingMatrix>) -> Result<Self, FormatError> {
        Self::from_bytes(&format::read_file(path)?, matrix)
    }
}
