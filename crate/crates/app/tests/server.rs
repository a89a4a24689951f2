use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use hashtag_privacy::advisor::PrivacyMetric;
use hashtag_privacy::corpus::{generate_synthetic, SynthConfig};
use hashtag_privacy::embedding::EmbeddingParams;
use hashtag_privacy::forest::ForestParams;
use hashtag_privacy::service::{Bundle, ModelInfo, PredictResponse, RecommendRequest};
use hashtag_privacy_app::server::{router, AppState};
use tower::ServiceExt;

fn bundle(n_trees: usize) -> Bundle {
    let data = generate_synthetic(&SynthConfig {
        n_locations: 6,
        posts_per_location: 40,
        n_noise_hashtags: 20,
        n_users: 8,
        ..SynthConfig::default()
    })
    .unwrap();
    let forest = ForestParams {
        n_trees,
        seed: 3,
        ..ForestParams::default()
    };
    let emb = EmbeddingParams {
        dim: 8,
        ..EmbeddingParams::default()
    };
    Bundle::train(&data.corpus, data.taxonomy, &forest, &emb).unwrap().0
}

fn setup(n_trees: usize) -> (tempfile::TempDir, Arc<AppState>, Router) {
    let dir = tempfile::tempdir().unwrap();
    let b = bundle(n_trees);
    b.save(dir.path()).unwrap();
    let state = AppState::new(dir.path().to_path_buf(), b);
    let app = router(state.clone());
    (dir, state, app)
}

async fn call(app: &Router, method: &str, uri: &str, body: &str) -> (StatusCode, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn recommend_request(max_obfuscated: Option<usize>) -> RecommendRequest {
    RecommendRequest {
        hashtags: vec!["l001s0".into(), "l001s3".into(), "l004s1".into()],
        true_location: "L001".into(),
        alpha: 1.0,
        metric: PrivacyMetric::Inaccuracy,
        max_obfuscated,
    }
}

#[tokio::test]
async fn predict_returns_topk() {
    let (_dir, _state, app) = setup(10);
    let (status, body) = call(&app, "POST", "/predict", r#"{"hashtags":["l003s0","l003s1"]}"#).await;
    assert_eq!(status, StatusCode::OK);
    let resp: PredictResponse = serde_json::from_str(&body).unwrap();
    assert_eq!(resp.topk[0].location, "L003");
    assert_eq!(resp.topk[0].name, "Location 3");
    let total: f64 = resp.topk.iter().map(|t| t.prob).sum();
    assert!(total <= 1.0 + 1e-12);
    assert!(resp.posterior_entropy >= 0.0);
}

#[tokio::test]
async fn recommend_matches_library_bytes() {
    let (_dir, state, app) = setup(10);
    for bound in [None, Some(1), Some(2)] {
        let req = recommend_request(bound);
        let (status, body) = call(&app, "POST", "/recommend", &serde_json::to_string(&req).unwrap()).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        let expected = serde_json::to_string(&state.snapshot().recommend(&req).unwrap()).unwrap();
        assert_eq!(body, expected);
    }
}

#[tokio::test]
async fn bad_requests_are_rejected() {
    let (_dir, _state, app) = setup(5);
    let cases = [
        ("/recommend", r#"{"hashtags":["l001s0"],"true_location":"nowhere"}"#, "unknown location"),
        ("/recommend", r#"{"hashtags":["zzz"],"true_location":"L001"}"#, "unknown hashtags"),
        ("/recommend", r#"{"hashtags":[],"true_location":"L001"}"#, "no hashtags"),
        ("/recommend", r#"{"hashtags":["l001s0"],"true_location":"L001","alpha":2}"#, "alpha"),
        ("/recommend", r#"{"hashtags":["l001s0"],"true_location":"L001","metric":"cosine"}"#, "invalid request"),
        ("/predict", r#"not json"#, "invalid request"),
    ];
    for (uri, body, needle) in cases {
        let (status, text) = call(&app, "POST", uri, body).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
        let err: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(err["error"].as_str().unwrap().contains(needle), "{text}");
    }
    let (status, _) = call(&app, "GET", "/nope", "").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn model_info_and_reload() {
    let (dir, state, app) = setup(5);
    let (status, body) = call(&app, "GET", "/model/info", "").await;
    assert_eq!(status, StatusCode::OK);
    let info: ModelInfo = serde_json::from_str(&body).unwrap();
    assert_eq!(info.n_trees, 5);
    assert_eq!(info.classes, 6);
    assert_eq!(info.locations.len(), 6);
    assert_eq!(info.vocab_size, state.snapshot().model.vocab_dimension());

    let before = state.snapshot();
    bundle(7).save(dir.path()).unwrap();
    let (status, _) = call(&app, "POST", "/admin/reload", "").await;
    assert_eq!(status, StatusCode::OK);
    let (_, body) = call(&app, "GET", "/model/info", "").await;
    let info: ModelInfo = serde_json::from_str(&body).unwrap();
    assert_eq!(info.n_trees, 7);
    // A snapshot taken before the swap is untouched.
    assert_eq!(before.model.n_trees(), 5);

    // A broken bundle leaves the served snapshot in place.
    std::fs::write(dir.path().join("model.json"), "{").unwrap();
    let (status, _) = call(&app, "POST", "/admin/reload", "").await;
    assert_eq!(status, StatusCode::INTERNAL_SERVER_ERROR);
    assert_eq!(state.snapshot().model.n_trees(), 7);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn requests_survive_concurrent_reload() {
    let (dir, _state, app) = setup(5);
    bundle(5).save(dir.path()).unwrap();
    let body = serde_json::to_string(&recommend_request(Some(2))).unwrap();
    let mut tasks = Vec::new();
    for i in 0..24 {
        let app = app.clone();
        let body = body.clone();
        tasks.push(tokio::spawn(async move {
            if i % 6 == 0 {
                call(&app, "POST", "/admin/reload", "").await
            } else {
                call(&app, "POST", "/recommend", &body).await
            }
        }));
    }
    let mut bodies = Vec::new();
    for (i, t) in tasks.into_iter().enumerate() {
        let (status, text) = t.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        if i % 6 != 0 {
            bodies.push(text);
        }
    }
    // Same bundle on disk, so every answer is identical.
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
}
