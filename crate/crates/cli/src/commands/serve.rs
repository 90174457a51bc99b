use std::net::SocketAddr;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::Args;
use log::info;

use crate::engine::{Engine, EngineOptions};
use crate::opts::{BackendKind, EmbedderOpts, IndexOpts};
use crate::server::{serve, AppState};

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub index: IndexOpts,
    #[arg(long, default_value = "127.0.0.1:8080", env = "QIRAT_BIND")]
    pub bind: SocketAddr,
    /// Backends to load, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [BackendKind::Exact], env = "QIRAT_BACKENDS")]
    pub backends: Vec<BackendKind>,
    /// Backend used when a request names none.
    #[arg(long, value_enum, default_value = "exact", env = "QIRAT_BACKEND")]
    pub backend: BackendKind,
    #[arg(long, default_value_t = 10, env = "QIRAT_TOPK")]
    pub topk: usize,
    #[command(flatten)]
    pub embedder: EmbedderOpts,
}

pub fn run(args: ServeArgs) -> Result<()> {
    let mut backends: Vec<BackendKind> = args.backends.clone();
    if !backends.contains(&args.backend) {
        backends.push(args.backend);
    }
    let options = EngineOptions {
        workers: args.index.workers,
        backends,
        cache: args.index.cache,
        ..EngineOptions::default()
    };
    let engine = Engine::open(&args.index.index, &options, Some(args.embedder.build()?))?;
    let state = Arc::new(AppState::new(engine, args.topk, args.backend)?);

    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(args.bind)
            .await
            .with_context(|| format!("binding {}", args.bind))?;
        let addr = listener.local_addr()?;
        info!("listening on http://{addr}");
        println!("listening on http://{addr}");
        serve(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
            info!("shutting down");
        })
        .await?;
        Ok(())
    })
}
