//! Argument groups shared by several subcommands. Every flag can also be
//! set through a `QIRAT_*` environment variable.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use qirat::embedder::{CommandEmbedder, Embedder, PrecomputedEmbedder, StubEmbedder};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Exact,
    Sq,
    Pq,
    Hnsw,
}

impl BackendKind {
    pub const ALL: [BackendKind; 4] = [Self::Exact, Self::Sq, Self::Pq, Self::Hnsw];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::Sq => "sq",
            Self::Pq => "pq",
            Self::Hnsw => "hnsw",
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmbedderKind {
    /// Seeded hashing stub.
    Stub,
    /// Vectors looked up by text in a JSON-lines file.
    Precomputed,
    /// External program: text on stdin, JSON array on stdout.
    Command,
}

#[derive(Debug, Clone, Args)]
pub struct EmbedderOpts {
    #[arg(long, value_enum, default_value = "stub", env = "QIRAT_EMBEDDER")]
    pub embedder: EmbedderKind,
    /// Output dimension of the embedder.
    #[arg(long, default_value_t = 384, env = "QIRAT_EMBED_DIM")]
    pub embed_dim: usize,
    /// Seed of the stub embedder.
    #[arg(long, default_value_t = 0, env = "QIRAT_EMBED_SEED")]
    pub embed_seed: u64,
    /// JSON-lines file of `{"text": ..., "vector": [...]}` for `precomputed`.
    #[arg(long, env = "QIRAT_EMBED_FILE")]
    pub embed_file: Option<PathBuf>,
    /// Program and arguments for `command`, split on whitespace.
    #[arg(long, env = "QIRAT_EMBED_CMD")]
    pub embed_cmd: Option<String>,
}

impl EmbedderOpts {
    pub fn stub(dim: usize, seed: u64) -> Self {
        Self {
            embedder: EmbedderKind::Stub,
            embed_dim: dim,
            embed_seed: seed,
            embed_file: None,
            embed_cmd: None,
        }
    }

    pub fn build(&self) -> Result<Arc<dyn Embedder>> {
        if self.embed_dim == 0 {
            bail!("--embed-dim must be positive");
        }
        Ok(match self.embedder {
            EmbedderKind::Stub => Arc::new(StubEmbedder::new(self.embed_dim, self.embed_seed)),
            EmbedderKind::Precomputed => {
                let path = self.embed_file.as_ref().context("--embed-file is required with --embedder precomputed")?;
                let e = PrecomputedEmbedder::from_jsonl(path)
                    .with_context(|| format!("reading precomputed vectors from {}", path.display()))?;
                Arc::new(e)
            }
            EmbedderKind::Command => {
                let cmd = self.embed_cmd.as_deref().context("--embed-cmd is required with --embedder command")?;
                let mut parts = cmd.split_whitespace().map(String::from);
                let program = parts.next().context("--embed-cmd is empty")?;
                Arc::new(CommandEmbedder::new(program, parts.collect(), self.embed_dim))
            }
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct IndexOpts {
    /// Embedding file written by `ingest` or `synth`.
    #[arg(long, env = "QIRAT_INDEX")]
    pub index: PathBuf,
    /// Exact-search worker threads.
    #[arg(long, default_value_t = 1, env = "QIRAT_WORKERS")]
    pub workers: usize,
    /// Reuse or write approximate-index files next to the index.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set, env = "QIRAT_CACHE")]
    pub cache: bool,
}
