//! Retrieval quality metrics over relevance judgments.
//!
//! Recall@k is macro-averaged: each query contributes
//! `|relevant ∩ top-k| / |relevant|`, and the result is the mean over the
//! queries of the run. MRR@k is the mean reciprocal rank of the first
//! relevant passage within the top `k` (0 if there is none).

pub mod bench;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("queries missing from qrels: {0:?}")]
    MissingQrels(Vec<String>),
    #[error("query {0:?} has an empty relevance set")]
    EmptyRelevance(String),
    #[error("query {query:?} lists passage {passage:?} twice")]
    DuplicateInRun { query: String, passage: String },
    #[error("run contains no queries")]
    EmptyRun,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("baseline recall is zero; relative recall is undefined")]
    ZeroBaseline,
    #[error("system and baseline rank different query sets")]
    QuerySetMismatch,
    #[error("no queries to benchmark")]
    NoQueries,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("search failed: {0}")]
    Search(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for MetricsError {
    fn from(e: std::io::Error) -> Self {
        MetricsError::Io(e.to_string())
    }
}

/// Query id → relevant passage ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Qrels {
    judged: BTreeMap<String, BTreeSet<String>>,
}

impl Qrels {
    pub fn new(judged: BTreeMap<String, BTreeSet<String>>) -> Result<Self, MetricsError> {
        if let Some((q, _)) = judged.iter().find(|(_, rel)| rel.is_empty()) {
            return Err(MetricsError::EmptyRelevance(q.clone()));
        }
        Ok(Self { judged })
    }

    pub fn from_pairs<Q, P>(pairs: impl IntoIterator<Item = (Q, P)>) -> Self
    where
        Q: Into<String>,
        P: Into<String>,
    {
        let mut judged: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (q, p) in pairs {
            judged.entry(q.into()).or_default().insert(p.into());
        }
        Self { judged }
    }

    pub fn relevant(&self, query: &str) -> Option<&BTreeSet<String>> {
        self.judged.get(query)
    }

    pub fn len(&self) -> usize {
        self.judged.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judged.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeSet<String>)> {
        self.judged.iter()
    }

    /// Parses `query_id<TAB>passage_id` lines. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self, MetricsError> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            match (cols.next(), cols.next(), cols.next()) {
                (Some(q), Some(p), None) if !q.is_empty() && !p.is_empty() => {
                    pairs.push((q.to_owned(), p.to_owned()))
                }
                _ => {
                    return Err(MetricsError::Parse {
                        line: i + 1,
                        message: format!("expected `query_id<TAB>passage_id`, got {line:?}"),
                    })
                }
            }
        }
        Ok(Self::from_pairs(pairs))
    }

    pub fn read(path: &Path) -> Result<Self, MetricsError> {
        let mut text = String::new();
        for line in BufReader::new(std::fs::File::open(path)?).lines() {
            text.push_str(&line?);
            text.push('\n');
        }
        Self::parse(&text)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (q, rel) in &self.judged {
            for p in rel {
                out.push_str(q);
                out.push('\t');
                out.push_str(p);
                out.push('\n');
            }
        }
        out
    }
}

/// Query id → ranked passage ids, best first.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunRanking {
    ranked: BTreeMap<String, Vec<String>>,
}

impl RunRanking {
    pub fn new(ranked: BTreeMap<String, Vec<String>>) -> Result<Self, MetricsError> {
        for (q, list) in &ranked {
            let mut seen = HashSet::with_capacity(list.len());
            if let Some(dup) = list.iter().find(|p| !seen.insert(p.as_str())) {
                return Err(MetricsError::DuplicateInRun {
                    query: q.clone(),
                    passage: dup.clone(),
                });
            }
        }
        Ok(Self { ranked })
    }

    pub fn insert(&mut self, query: impl Into<String>, ranking: Vec<String>) -> Result<(), MetricsError> {
        let query = query.into();
        let mut seen = HashSet::with_capacity(ranking.len());
        if let Some(dup) = ranking.iter().find(|p| !seen.insert(p.as_str())) {
            return Err(MetricsError::DuplicateInRun {
                query,
                passage: dup.clone(),
            });
        }
        self.ranked.insert(query, ranking);
        Ok(())
    }

    pub fn get(&self, query: &str) -> Option<&[String]> {
        self.ranked.get(query).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.ranked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranked.is_empty()
    }

    pub fn queries(&self) -> impl Iterator<Item = &String> {
        self.ranked.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Vec<String>)> {
        self.ranked.iter()
    }
}

fn judged_pairs<'a>(
    run: &'a RunRanking,
    qrels: &'a Qrels,
    k: usize,
) -> Result<Vec<(&'a [String], &'a BTreeSet<String>)>, MetricsError> {
    if k == 0 {
        return Err(MetricsError::ZeroK);
    }
    if run.is_empty() {
        return Err(MetricsError::EmptyRun);
    }
    let missing: Vec<String> = run
        .queries()
        .filter(|q| qrels.relevant(q).is_none())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(MetricsError::MissingQrels(missing));
    }
    Ok(run
        .iter()
        .map(|(q, list)| (&list[..list.len().min(k)], qrels.relevant(q).unwrap()))
        .collect())
}

pub fn recall_at_k(run: &RunRanking, qrels: &Qrels, k: usize) -> Result<f64, MetricsError> {
    let pairs = judged_pairs(run, qrels, k)?;
    let total: f64 = pairs
        .iter()
        .map(|(top, rel)| top.iter().filter(|p| rel.contains(*p)).count() as f64 / rel.len() as f64)
        .sum();
    Ok(total / pairs.len() as f64)
}

pub fn mrr_at_k(run: &RunRanking, qrels: &Qrels, k: usize) -> Result<f64, MetricsError> {
    let pairs = judged_pairs(run, qrels, k)?;
    let total: f64 = pairs
        .iter()
        .map(|(top, rel)| {
            top.iter()
                .position(|p| rel.contains(p))
                .map_or(0.0, |i| 1.0 / (i + 1) as f64)
        })
        .sum();
    Ok(total / pairs.len() as f64)
}

/// `100 × recall@k(system) / recall@k(baseline)`.
pub fn relative_recall(
    system: &RunRanking,
    baseline: &RunRanking,
    qrels: &Qrels,
    k: usize,
) -> Result<f64, MetricsError> {
    if !system.queries().eq(baseline.queries()) {
        return Err(MetricsError::QuerySetMismatch);
    }
    let base = recall_at_k(baseline, qrels, k)?;
    if base == 0.0 {
        return Err(MetricsError::ZeroBaseline);
    }
    Ok(100.0 * recall_at_k(system, qrels, k)? / base)
}

/// Judgments that treat a reference run's top `k` as the relevant set;
/// recall against them measures agreement with the reference.
pub fn qrels_from_run(run: &RunRanking, k: usize) -> Qrels {
    Qrels::from_pairs(
        run.iter()
            .flat_map(|(q, list)| list.iter().take(k).map(move |p| (q.clone(), p.clone()))),
    )
}
