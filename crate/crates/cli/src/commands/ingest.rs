use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use qirat::format::Dtype;
use qirat::store::{ingest_corpus, read_passages, PassageRecord};

use crate::engine::passages_path;
use crate::opts::EmbedderOpts;

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// JSON-lines passages: `{"id": ..., "text": ..., "lang"?: ...}`.
    #[arg(long, env = "QIRAT_PASSAGES")]
    pub passages: PathBuf,
    /// Output embedding file; `.ids` and `.passages.jsonl` are written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Store half-precision values.
    #[arg(long)]
    pub fp16: bool,
    #[command(flatten)]
    pub embedder: EmbedderOpts,
}

pub fn run(args: IngestArgs) -> Result<()> {
    let passages = read_passages(&args.passages).with_context(|| format!("reading {}", args.passages.display()))?;
    let embedder = args.embedder.build()?;
    let dtype = if args.fp16 { Dtype::F16 } else { Dtype::F32 };
    let (matrix, _) = ingest_corpus(&passages, embedder.as_ref(), dtype, &args.out)?;
    write_passages(&passages_path(&args.out), &passages)?;
    println!(
        "wrote {} passages x {} dims to {}",
        matrix.count(),
        matrix.dim(),
        args.out.display()
    );
    Ok(())
}

fn write_passages(path: &std::path::Path, passages: &[PassageRecord]) -> Result<()> {
    let mut out = String::new();
    for p in passages {
        out.push_str(&serde_json::to_string(p)?);
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}
