//! Speed/recall comparison of search backends.
//!
//! Embeddings are assumed to be loaded already and queries already
//! embedded, so only search time is measured. Each run feeds every query,
//! one at a time and in a fixed order, to each system in turn; a system's
//! time is the mean over runs of the total wall time for all queries.
//! Speedup is relative to the baseline system and recall is reported as a
//! percentage of the baseline's recall.

use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use super::{qrels_from_run, recall_at_k, relative_recall, MetricsError, Qrels, RunRanking};
use crate::backend::SearchBackend;
use crate::exact::Query;
use crate::store::IdMap;

#[derive(Debug, Clone)]
pub struct BenchQuery {
    pub id: String,
    pub query: Query,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchConfig {
    pub runs: usize,
    pub k: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { runs: 10, k: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemResult {
    pub system: String,
    /// Mean over runs of the time to answer every query once.
    pub mean_run_secs: f64,
    pub mean_query_ms: f64,
    /// Baseline time divided by this system's time.
    pub speedup: f64,
    pub recall_at_k: f64,
    /// Recall as a percentage of the baseline's recall.
    pub recall_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub k: usize,
    pub runs: usize,
    pub queries: usize,
    pub baseline: String,
    /// Baseline first, then the systems in the order given.
    pub systems: Vec<SystemResult>,
}

fn ranking(
    system: &dyn SearchBackend,
    queries: &[BenchQuery],
    ids: &IdMap,
    k: usize,
) -> Result<(RunRanking, f64), MetricsError> {
    let mut run = RunRanking::default();
    let start = Instant::now();
    let mut answers = Vec::with_capacity(queries.len());
    for q in queries {
        answers.push(
            system
                .search(&q.query, k)
                .map_err(|e| MetricsError::Search(format!("{}: {e}", system.name())))?,
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    for (q, hits) in queries.iter().zip(answers) {
        let list = hits
            .iter()
            .map(|h| ids.get(h.row).unwrap_or_default().to_owned())
            .collect();
        run.insert(q.id.clone(), list)?;
    }
    Ok((run, elapsed))
}

/// Benchmarks `systems` against `baseline`.
///
/// Without `qrels`, the baseline's own top `k` per query is used as the
/// relevant set, making recall a measure of agreement with exact search.
pub fn bench(
    baseline: &dyn SearchBackend,
    systems: &[&dyn SearchBackend],
    queries: &[BenchQuery],
    qrels: Option<&Qrels>,
    ids: &IdMap,
    config: BenchConfig,
) -> Result<BenchReport, MetricsError> {
    if queries.is_empty() {
        return Err(MetricsError::NoQueries);
    }
    if config.k == 0 {
        return Err(MetricsError::ZeroK);
    }
    let runs = config.runs.max(1);
    let all: Vec<&dyn SearchBackend> = std::iter::once(baseline).chain(systems.iter().copied()).collect();
    let mut totals = vec![0.0f64; all.len()];
    let mut rankings: Vec<Option<RunRanking>> = vec![None; all.len()];
    for _ in 0..runs {
        for (i, system) in all.iter().enumerate() {
            let (run, secs) = ranking(*system, queries, ids, config.k)?;
            totals[i] += secs;
            if rankings[i].is_none() {
                rankings[i] = Some(run);
            }
        }
    }
    let rankings: Vec<RunRanking> = rankings.into_iter().map(Option::unwrap).collect();
    let derived;
    let qrels = match qrels {
        Some(q) => q,
        None => {
            derived = qrels_from_run(&rankings[0], config.k);
            &derived
        }
    };
    let base_time = totals[0] / runs as f64;
    let mut results = Vec::with_capacity(all.len());
    for (i, system) in all.iter().enumerate() {
        let mean = totals[i] / runs as f64;
        results.push(SystemResult {
            system: system.name(),
            mean_run_secs: mean,
            mean_query_ms: 1e3 * mean / queries.len() as f64,
            speedup: base_time / mean,
            recall_at_k: recall_at_k(&rankings[i], qrels, config.k)?,
            recall_pct: relative_recall(&rankings[i], &rankings[0], qrels, config.k)?,
        });
    }
    Ok(BenchReport {
        k: config.k,
        runs,
        queries: queries.len(),
        baseline: baseline.name(),
        systems: results,
    })
}

impl BenchReport {
    pub fn system(&self, name: &str) -> Option<&SystemResult> {
        self.systems.iter().find(|s| s.system == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per system: the speedup and recall series for plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("system,speedup,recall_pct,recall_at_k,mean_query_ms\n");
        for s in &self.systems {
            let _ = writeln!(
                out,
                "{},{:.4},{:.4},{:.6},{:.6}",
                s.system, s.speedup, s.recall_pct, s.recall_at_k, s.mean_query_ms
            );
        }
        out
    }

    /// Systems as columns, speedup and recall as rows.
    pub fn to_table(&self) -> String {
        let mut cols: Vec<(String, String, String)> = vec![(
            "SUT".into(),
            "Speedup".into(),
            format!("Recall@{}", self.k),
        )];
        for s in &self.systems {
            cols.push((
                s.system.clone(),
                format!("{:.1}x", s.speedup),
                format!("{:.1}%", s.recall_pct),
            ));
        }
        let widths: Vec<usize> = cols
            .iter()
            .map(|(a, b, c)| a.len().max(b.len()).max(c.len()))
            .collect();
        let mut out = String::new();
        for row in 0..3 {
            let cells: Vec<String> = cols
                .iter()
                .zip(&widths)
                .map(|((a, b, c), &w)| {
                    let cell = [a, b, c][row];
                    format!("{cell:>w$}")
                })
                .collect();
            out.push_str(cells.join(" | ").trim_end());
            out.push('\n');
            if row == 0 {
                let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
                out.push_str(&rule.join("-+-"));
                out.push('\n');
            }
        }
        out
    }
}
