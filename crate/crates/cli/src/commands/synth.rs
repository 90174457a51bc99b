use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::Args;
use qirat::backend::{ExactScan, SearchBackend};
use qirat::exact::Query;
use qirat::store::{save_index, IdMap};
use qirat::synth::{ClusteredMixture, ClusteredSpec};

use super::QueryRecord;

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output embedding file; queries and qrels are written next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50_000)]
    pub count: usize,
    #[arg(long, default_value_t = 384)]
    pub dim: usize,
    #[arg(long, default_value_t = 100)]
    pub queries: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Depth of the exact ranking written as qrels.
    #[arg(long, default_value_t = 100)]
    pub qrels_k: usize,
}

pub fn queries_path(index: &Path) -> PathBuf {
    index.with_extension("queries.jsonl")
}

pub fn qrels_path(index: &Path) -> PathBuf {
    index.with_extension("qrels.tsv")
}

pub fn run(args: SynthArgs) -> Result<()> {
    anyhow::ensure!(args.count > 0 && args.dim > 0, "count and dim must be positive");
    let mix = ClusteredMixture::new(ClusteredSpec::topical(args.dim, args.seed));
    let matrix = Arc::new(mix.sample(args.count, 0));
    let ids = IdMap::new((0..args.count).map(|i| format!("p{i:06}")).collect())?;
    save_index(&args.out, &matrix, &ids)?;

    let qm = mix.sample(args.queries, 1);
    let exact = ExactScan::new(Arc::clone(&matrix));
    let mut queries = String::new();
    let mut qrels = String::new();
    for (i, v) in qm.rows().enumerate() {
        let id = format!("q{i:03}");
        let rec = QueryRecord {
            id: id.clone(),
            text: None,
            vector: Some(v.to_vec()),
        };
        queries.push_str(&serde_json::to_string(&rec)?);
        queries.push('\n');
        for h in exact.search(&Query::new(v)?, args.qrels_k)? {
            let _ = writeln!(qrels, "{id}\t{}", ids.get(h.row).unwrap_or_default());
        }
    }
    let qp = queries_path(&args.out);
    let rp = qrels_path(&args.out);
    std::fs::write(&qp, queries).with_context(|| format!("writing {}", qp.display()))?;
    std::fs::write(&rp, qrels).with_context(|| format!("writing {}", rp.display()))?;
    println!(
        "wrote {} x {} corpus to {}, {} queries to {}, qrels to {}",
        args.count,
        args.dim,
        args.out.display(),
        args.queries,
        qp.display(),
        rp.display()
    );
    Ok(())
}
