use std::time::Instant;

use anyhow::{bail, Result};
use clap::Args;

use crate::engine::{Engine, EngineOptions, QueryInput};
use crate::opts::{BackendKind, EmbedderOpts, IndexOpts};
use crate::server::SearchResponse;

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub index: IndexOpts,
    /// Query text, embedded with the configured embedder.
    #[arg(long, conflicts_with = "vector")]
    pub query: Option<String>,
    /// Query vector as a JSON array.
    #[arg(long)]
    pub vector: Option<String>,
    #[arg(long, default_value_t = 10, env = "QIRAT_TOPK")]
    pub topk: usize,
    #[arg(long, value_enum, default_value = "exact", env = "QIRAT_BACKEND")]
    pub backend: BackendKind,
    /// Print the same JSON object the HTTP API returns.
    #[arg(long)]
    pub json: bool,
    #[command(flatten)]
    pub embedder: EmbedderOpts,
}

pub fn run(args: SearchArgs) -> Result<()> {
    let input = match (&args.query, &args.vector) {
        (Some(q), None) => QueryInput::Text(q.clone()),
        (None, Some(v)) => QueryInput::Vector(serde_json::from_str(v)?),
        _ => bail!("give exactly one of --query or --vector"),
    };
    if args.topk == 0 {
        bail!("--topk must be at least 1");
    }
    let options = EngineOptions {
        workers: args.index.workers,
        backends: vec![args.backend],
        cache: args.index.cache,
        ..EngineOptions::default()
    };
    let embedder = match input {
        QueryInput::Text(_) => Some(args.embedder.build()?),
        QueryInput::Vector(_) => None,
    };
    let engine = Engine::open(&args.index.index, &options, embedder)?;
    let start = Instant::now();
    let query = engine.query(&input)?;
    let hits = engine.search(&query, args.topk, args.backend)?;
    let latency_ms = start.elapsed().as_secs_f64() * 1e3;

    if args.json {
        let reply = SearchResponse {
            hits,
            latency_ms,
            backend: args.backend.to_string(),
            workers: engine.workers(),
        };
        println!("{}", serde_json::to_string_pretty(&reply)?);
        return Ok(());
    }
    println!("{:>4}  {:>9}  {:<12}  text", "rank", "score", "id");
    for (i, h) in hits.iter().enumerate() {
        let text = h.text.as_deref().unwrap_or("");
        println!("{:>4}  {:>9.6}  {:<12}  {}", i + 1, h.score, h.id, truncate(text, 80));
    }
    eprintln!(
        "{} hits in {latency_ms:.2} ms ({}, {} workers)",
        hits.len(),
        args.backend,
        engine.workers()
    );
    Ok(())
}

fn truncate(s: &str, max: usize) -> String {
    let one_line = s.replace(['\n', '\t'], " ");
    match one_line.char_indices().nth(max) {
        Some((i, _)) => format!("{}…", &one_line[..i]),
        None => one_line,
    }
}
