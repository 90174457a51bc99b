//! HTTP API.
//!
//! | Method | Path      | Body / reply                                            |
//! |--------|-----------|---------------------------------------------------------|
//! | POST   | `/search` | `{query, topk?, backend?}` → `{hits, latency_ms, backend, workers}` |
//! | GET    | `/health` | `{status, count, dim, backends}`                        |
//! | GET    | `/stats`  | per-backend query counts and mean latency, worker counters |
//!
//! `query` is either a string (embedded server-side) or an array of
//! numbers. Every error reply is a JSON object `{"error": message}`.

use std::collections::BTreeMap;
use std::future::Future;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::engine::{Engine, Hit, QueryInput};
use crate::opts::BackendKind;

pub struct AppState {
    engine: Engine,
    default_topk: usize,
    default_backend: BackendKind,
    stats: Mutex<BTreeMap<BackendKind, Counter>>,
}

#[derive(Debug, Default, Clone, Copy)]
struct Counter {
    queries: u64,
    total_ms: f64,
}

impl AppState {
    pub fn new(engine: Engine, default_topk: usize, default_backend: BackendKind) -> anyhow::Result<Self> {
        if default_topk == 0 {
            anyhow::bail!("default topk must be at least 1");
        }
        engine.backend(default_backend)?;
        Ok(Self {
            engine,
            default_topk,
            default_backend,
            stats: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchRequest {
    pub query: QueryInput,
    #[serde(default)]
    pub topk: Option<usize>,
    #[serde(default)]
    pub backend: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SearchResponse {
    pub hits: Vec<Hit>,
    pub latency_ms: f64,
    pub backend: String,
    pub workers: usize,
}

pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/search", post(search))
        .route("/health", get(health))
        .route("/stats", get(stats))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "no such endpoint") })
        .method_not_allowed_fallback(|| async { ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method not allowed") })
        .with_state(state)
}

async fn search(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<SearchResponse>, ApiError> {
    let req: SearchRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))?;
    let kind = match req.backend.as_deref() {
        None => state.default_backend,
        Some(name) => name
            .parse::<BackendKind>()
            .map_err(|_| ApiError::bad_request(format!("unknown backend {name:?}")))?,
    };
    let topk = req.topk.unwrap_or(state.default_topk);
    if topk == 0 {
        return Err(ApiError::bad_request("topk must be at least 1"));
    }
    state
        .engine
        .backend(kind)
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    if let QueryInput::Text(t) = &req.query {
        if t.trim().is_empty() {
            return Err(ApiError::bad_request("query text is empty"));
        }
    }

    let worker_state = Arc::clone(&state);
    let outcome = tokio::task::spawn_blocking(move || {
        let start = Instant::now();
        let query = worker_state.engine.query(&req.query)?;
        let hits = worker_state.engine.search(&query, topk, kind)?;
        Ok::<_, anyhow::Error>((hits, start.elapsed().as_secs_f64() * 1e3))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("search task failed: {e}")))?;
    let (hits, latency_ms) = outcome.map_err(|e| ApiError::bad_request(format!("{e:#}")))?;

    let mut stats = state.stats.lock().expect("stats lock");
    let c = stats.entry(kind).or_default();
    c.queries += 1;
    c.total_ms += latency_ms;
    drop(stats);

    Ok(Json(SearchResponse {
        hits,
        latency_ms,
        backend: kind.to_string(),
        workers: state.engine.workers(),
    }))
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let e = &state.engine;
    Json(json!({
        "status": "ok",
        "count": e.count(),
        "dim": e.dim(),
        "backends": e.backend_kinds().iter().map(|k| k.as_str()).collect::<Vec<_>>(),
        "default_backend": state.default_backend.as_str(),
        "workers": e.workers(),
    }))
}

async fn stats(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let counters = state.stats.lock().expect("stats lock").clone();
    let backends: serde_json::Map<String, serde_json::Value> = state
        .engine
        .backend_kinds()
        .into_iter()
        .map(|k| {
            let c = counters.get(&k).copied().unwrap_or_default();
            let mean = if c.queries == 0 { 0.0 } else { c.total_ms / c.queries as f64 };
            (
                k.to_string(),
                json!({ "queries": c.queries, "mean_latency_ms": mean }),
            )
        })
        .collect();
    let workers: Vec<serde_json::Value> = state
        .engine
        .exact_pool()
        .map(|p| {
            p.pool()
                .stats()
                .into_iter()
                .map(|w| json!({ "start": w.range.start, "end": w.range.end, "queries": w.queries, "rows_scored": w.rows_scored }))
                .collect()
        })
        .unwrap_or_default();
    Json(json!({ "backends": backends, "workers": workers }))
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
