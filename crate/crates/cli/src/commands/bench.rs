use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::Args;
use qirat::backend::{ExactPool, ExactScan, SearchBackend};
use qirat::exact::{Query, WorkerReturn};
use qirat::metrics::bench::{bench, BenchConfig, BenchQuery};
use qirat::metrics::Qrels;

use super::read_queries;
use crate::engine::{Engine, EngineOptions};
use crate::opts::{BackendKind, EmbedderOpts};

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, env = "QIRAT_INDEX")]
    pub index: PathBuf,
    /// JSON-lines queries: `{"id": ..., "text"?: ..., "vector"?: [...]}`.
    #[arg(long)]
    pub queries: PathBuf,
    /// Tab-separated `query_id<TAB>passage_id`; without it the baseline's
    /// own top-k is the relevant set.
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = BackendKind::ALL)]
    pub backends: Vec<BackendKind>,
    /// Worker counts for the exact backend.
    #[arg(long, value_delimiter = ',', default_values_t = [1, 4], env = "QIRAT_WORKERS")]
    pub workers: Vec<usize>,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set, env = "QIRAT_CACHE")]
    pub cache: bool,
    /// Write the report as JSON here.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Write the speedup and recall series as CSV here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub embedder: EmbedderOpts,
}

pub fn run(args: BenchArgs) -> Result<()> {
    let records = read_queries(&args.queries)?;
    let ann: Vec<BackendKind> = args.backends.iter().copied().filter(|b| *b != BackendKind::Exact).collect();
    let needs_embedder = records.iter().any(|r| r.vector.is_none());
    let options = EngineOptions {
        backends: ann.clone(),
        cache: args.cache,
        ..EngineOptions::default()
    };
    let embedder = if needs_embedder { Some(args.embedder.build()?) } else { None };
    let engine = Engine::open(&args.index, &options, embedder)?;

    let mut queries = Vec::with_capacity(records.len());
    for r in &records {
        let query = match (&r.vector, &r.text) {
            (Some(v), _) => Query::new(v)?,
            (None, Some(t)) => engine.query(&crate::engine::QueryInput::Text(t.clone()))?,
            (None, None) => unreachable!("rejected when reading"),
        };
        queries.push(BenchQuery {
            id: r.id.clone(),
            query,
        });
    }
    let qrels = match &args.qrels {
        Some(p) => Some(Qrels::read(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };

    let baseline = ExactScan::new(Arc::clone(engine.matrix()));
    let mut systems: Vec<Arc<dyn SearchBackend>> = Vec::new();
    for kind in &args.backends {
        if *kind == BackendKind::Exact {
            for &w in &args.workers {
                systems.push(Arc::new(ExactPool::new(
                    Arc::clone(engine.matrix()),
                    w,
                    WorkerReturn::LocalTopk,
                )?));
            }
        } else {
            systems.push(Arc::clone(engine.backend(*kind)?));
        }
    }
    let refs: Vec<&dyn SearchBackend> = systems.iter().map(|s| s.as_ref() as &dyn SearchBackend).collect();
    let report = bench(
        &baseline,
        &refs,
        &queries,
        qrels.as_ref(),
        engine.ids(),
        BenchConfig {
            runs: args.runs,
            k: args.k,
        },
    )?;

    print!("{}", report.to_table());
    if let Some(p) = &args.json {
        std::fs::write(p, report.to_json()).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &args.csv {
        std::fs::write(p, report.to_csv()).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}
