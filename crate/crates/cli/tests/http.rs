use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use qirat::embedder::{Embedder, StubEmbedder};
use qirat::exact::Query;
use qirat::store::{embed_corpus, IdMap, PassageRecord};
use qirat::format::Dtype;
use qirat::synth::{ClusteredMixture, ClusteredSpec};
use qirat_cli::engine::{Engine, EngineOptions};
use qirat_cli::opts::BackendKind;
use qirat_cli::server::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

const DIM: usize = 32;

fn passages() -> Vec<PassageRecord> {
    [
        ("d1", "the river floods every spring"),
        ("d2", "mountain goats climb steep cliffs"),
        ("d3", "bread rises slowly in a warm kitchen"),
        ("d4", "the market opens before sunrise"),
        ("d5", "old libraries keep handwritten maps"),
    ]
    .iter()
    .map(|(id, text)| PassageRecord {
        id: id.to_string(),
        text: text.to_string(),
        lang: None,
    })
    .collect()
}

fn text_app(backends: Vec<BackendKind>) -> axum::Router {
    let embedder: Arc<dyn Embedder> = Arc::new(StubEmbedder::new(DIM, 3));
    let ps = passages();
    let (matrix, ids) = embed_corpus(&ps, embedder.as_ref(), Dtype::F32).unwrap();
    let texts = ps.iter().map(|p| p.text.clone()).collect();
    let options = EngineOptions {
        workers: 2,
        backends,
        ..EngineOptions::default()
    };
    let engine = Engine::from_parts(matrix, ids, Some(texts), Some(embedder), &options).unwrap();
    router(Arc::new(AppState::new(engine, 3, BackendKind::Exact).unwrap()))
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or_else(|e| panic!("non-JSON body ({e}): {bytes:?}"));
    (status, value)
}

#[tokio::test]
async fn health_reports_index_shape() {
    let app = text_app(vec![BackendKind::Exact, BackendKind::Sq]);
    let (status, body) = call(&app, "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["count"], 5);
    assert_eq!(body["dim"], DIM);
    assert_eq!(body["backends"], json!(["exact", "sq"]));
}

#[tokio::test]
async fn passage_text_finds_itself() {
    let app = text_app(vec![BackendKind::Exact]);
    for p in passages() {
        let (status, body) = call(&app, "POST", "/search", Some(json!({ "query": p.text }).to_string())).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        assert_eq!(body["hits"][0]["id"], p.id.as_str());
        assert_eq!(body["hits"][0]["text"], p.text.as_str());
        assert!((body["hits"][0]["score"].as_f64().unwrap() - 1.0).abs() < 1e-5);
        assert_eq!(body["hits"].as_array().unwrap().len(), 3);
        assert_eq!(body["backend"], "exact");
        assert_eq!(body["workers"], 2);
        assert!(body["latency_ms"].as_f64().unwrap() >= 0.0);
    }
}

#[tokio::test]
async fn malformed_requests_get_json_errors() {
    let app = text_app(vec![BackendKind::Exact]);
    let cases = [
        ("POST", "/search", Some("{not json".to_string()), StatusCode::BAD_REQUEST),
        ("POST", "/search", Some(json!({}).to_string()), StatusCode::BAD_REQUEST),
        ("POST", "/search", Some(json!({"query": "x", "topk": 0}).to_string()), StatusCode::BAD_REQUEST),
        ("POST", "/search", Some(json!({"query": "x", "backend": "faiss"}).to_string()), StatusCode::BAD_REQUEST),
        ("POST", "/search", Some(json!({"query": "x", "backend": "pq"}).to_string()), StatusCode::BAD_REQUEST),
        ("POST", "/search", Some(json!({"query": "   "}).to_string()), StatusCode::BAD_REQUEST),
        ("POST", "/search", Some(json!({"query": [1.0, 2.0]}).to_string()), StatusCode::BAD_REQUEST),
        ("POST", "/search", Some(json!({"query": vec![0.0; DIM]}).to_string()), StatusCode::BAD_REQUEST),
        ("GET", "/search", None, StatusCode::METHOD_NOT_ALLOWED),
        ("GET", "/nope", None, StatusCode::NOT_FOUND),
    ];
    for (method, uri, body, want) in cases {
        let (status, value) = call(&app, method, uri, body.clone()).await;
        assert_eq!(status, want, "{method} {uri} {body:?}");
        assert!(value["error"].is_string(), "{value}");
    }
}

#[tokio::test]
async fn stats_count_queries_per_backend() {
    let app = text_app(vec![BackendKind::Exact, BackendKind::Sq]);
    for backend in ["exact", "exact", "sq"] {
        let body = json!({ "query": "market sunrise", "backend": backend }).to_string();
        assert_eq!(call(&app, "POST", "/search", Some(body)).await.0, StatusCode::OK);
    }
    let (status, stats) = call(&app, "GET", "/stats", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(stats["backends"]["exact"]["queries"], 2);
    assert_eq!(stats["backends"]["sq"]["queries"], 1);
    let workers = stats["workers"].as_array().unwrap();
    assert_eq!(workers.len(), 2);
    assert_eq!(workers[0]["start"], 0);
    assert_eq!(workers[1]["end"], 5);
    assert!(workers.iter().all(|w| w["queries"] == 2));
}

#[tokio::test]
async fn vector_search_on_50k_matches_oracle() {
    let mix = ClusteredMixture::new(ClusteredSpec::topical(384, 11));
    let matrix = mix.sample(50_000, 0);
    let ids = IdMap::new((0..50_000).map(|i| format!("p{i}")).collect()).unwrap();
    let q = mix.sample(1, 1);
    let qv = q.row(0).to_vec();

    // Independent oracle: sequential dot products in row order.
    let query = Query::new(&qv).unwrap();
    let mut scored: Vec<(usize, f32)> = matrix
        .rows()
        .enumerate()
        .map(|(i, r)| (i, r.iter().zip(query.vector()).fold(0.0f32, |a, (x, y)| a + x * y)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let options = EngineOptions {
        workers: 4,
        ..EngineOptions::default()
    };
    let engine = Engine::from_parts(matrix, ids, None, None, &options).unwrap();
    let app = router(Arc::new(AppState::new(engine, 10, BackendKind::Exact).unwrap()));
    let body = json!({ "query": qv, "topk": 5, "backend": "exact" }).to_string();
    let (status, reply) = call(&app, "POST", "/search", Some(body)).await;
    assert_eq!(status, StatusCode::OK);
    let hits = reply["hits"].as_array().unwrap();
    assert_eq!(hits.len(), 5);
    assert!(reply["latency_ms"].is_number());
    assert_eq!(reply["workers"], 4);
    let mut prev = f64::INFINITY;
    for (h, (row, score)) in hits.iter().zip(&scored) {
        assert_eq!(h["id"], format!("p{row}"));
        let s = h["score"].as_f64().unwrap();
        assert_eq!(s as f32, *score);
        assert!(s <= prev);
        prev = s;
        assert!(h.get("text").is_none());
    }
}

#[tokio::test]
async fn text_query_without_embedder_is_an_error() {
    let m = ClusteredMixture::new(ClusteredSpec::new(8, 2, 0)).sample(10, 0);
    let ids = IdMap::new((0..10).map(|i| i.to_string()).collect()).unwrap();
    let engine = Engine::from_parts(m, ids, None, None, &EngineOptions::default()).unwrap();
    let app = router(Arc::new(AppState::new(engine, 3, BackendKind::Exact).unwrap()));
    let (status, body) = call(&app, "POST", "/search", Some(json!({"query": "hi"}).to_string())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("embedder"));
}
