//! Subcommand definitions and dispatch.

mod bench;
mod bpe;
mod ingest;
mod loss;
mod params;
mod search;
mod serve;
mod surgery;
mod synth;

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

pub use bench::BenchArgs;
pub use bpe::BpeCommand;
pub use ingest::IngestArgs;
pub use loss::LossCommand;
pub use params::ParamsArgs;
pub use search::SearchArgs;
pub use serve::ServeArgs;
pub use surgery::SurgeryCommand;
pub use synth::SynthArgs;

#[derive(Debug, Parser)]
#[command(name = "qirat", version, about = "Dense passage retrieval on the CPU")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Embed a JSON-lines corpus into an index.
    Ingest(IngestArgs),
    /// Write a seeded synthetic index, query set and qrels.
    Synth(SynthArgs),
    /// Run one query against an index.
    Search(SearchArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Compare search backends for speed and recall.
    Bench(BenchArgs),
    /// Trim or extend an embedding table and its tokenizer.
    #[command(subcommand)]
    Surgery(SurgeryCommand),
    /// Byte-pair-encoding tokenizer tools.
    #[command(subcommand)]
    Bpe(BpeCommand),
    /// Contrastive-loss tools.
    #[command(subcommand)]
    Loss(LossCommand),
    /// Parameter counts of encoder shapes.
    Params(ParamsArgs),
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => ingest::run(a),
        Command::Synth(a) => synth::run(a),
        Command::Search(a) => search::run(a),
        Command::Serve(a) => serve::run(a),
        Command::Bench(a) => bench::run(a),
        Command::Surgery(c) => surgery::run(c),
        Command::Bpe(c) => bpe::run(c),
        Command::Loss(c) => loss::run(c),
        Command::Params(a) => params::run(a),
    }
}

/// One line of a query file: an id and either text or a vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f32>>,
}

pub fn read_queries(path: &Path) -> Result<Vec<QueryRecord>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: QueryRecord =
            serde_json::from_str(&line).with_context(|| format!("{}:{}: bad query record", path.display(), n + 1))?;
        if rec.text.is_none() && rec.vector.is_none() {
            anyhow::bail!("{}:{}: query {:?} has neither text nor vector", path.display(), n + 1, rec.id);
        }
        out.push(rec);
    }
    Ok(out)
}
