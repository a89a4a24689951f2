//! HTTP front end over a [`Bundle`] snapshot.

use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use hashtag_privacy::service::{Bundle, PredictRequest, RecommendRequest, ServiceError};
use serde::Serialize;

/// Parses a `/recommend` body and serializes the answer. The `advise`
/// command goes through here too, so both emit the same bytes.
pub fn recommend_json(bundle: &Bundle, body: &[u8]) -> Result<String, ServiceError> {
    let req: RecommendRequest =
        serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(format!("invalid request: {e}")))?;
    let resp = bundle.recommend(&req)?;
    Ok(serde_json::to_string(&resp).expect("response is plain data"))
}

pub fn predict_json(bundle: &Bundle, body: &[u8]) -> Result<String, ServiceError> {
    let req: PredictRequest =
        serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(format!("invalid request: {e}")))?;
    let resp = bundle.predict(&req)?;
    Ok(serde_json::to_string(&resp).expect("response is plain data"))
}

pub struct AppState {
    bundle_dir: PathBuf,
    snapshot: RwLock<Arc<Bundle>>,
}

impl AppState {
    pub fn new(bundle_dir: PathBuf, bundle: Bundle) -> Arc<Self> {
        Arc::new(AppState {
            bundle_dir,
            snapshot: RwLock::new(Arc::new(bundle)),
        })
    }

    pub fn snapshot(&self) -> Arc<Bundle> {
        self.snapshot.read().expect("lock poisoned").clone()
    }

    fn swap(&self, bundle: Bundle) {
        *self.snapshot.write().expect("lock poisoned") = Arc::new(bundle);
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn error_response(status: StatusCode, message: String) -> Response {
    let body = serde_json::to_string(&ErrorBody { error: message }).expect("plain data");
    json_response(status, body)
}

fn service_result(result: Result<String, ServiceError>) -> Response {
    match result {
        Ok(body) => json_response(StatusCode::OK, body),
        Err(ServiceError::BadRequest(msg)) => error_response(StatusCode::UNPROCESSABLE_ENTITY, msg),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

/// Runs `f` on the blocking pool against the current snapshot. Requests in
/// flight keep the snapshot they started with across a reload.
async fn with_snapshot<F>(state: Arc<AppState>, f: F) -> Response
where
    F: FnOnce(&Bundle) -> Result<String, ServiceError> + Send + 'static,
{
    let bundle = state.snapshot();
    match tokio::task::spawn_blocking(move || f(&bundle)).await {
        Ok(result) => service_result(result),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn predict(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    with_snapshot(state, move |b| predict_json(b, &body)).await
}

async fn recommend(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    with_snapshot(state, move |b| recommend_json(b, &body)).await
}

async fn model_info(State(state): State<Arc<AppState>>) -> Response {
    let info = state.snapshot().info();
    json_response(StatusCode::OK, serde_json::to_string(&info).expect("plain data"))
}

async fn reload(State(state): State<Arc<AppState>>) -> Response {
    let dir = state.bundle_dir.clone();
    match tokio::task::spawn_blocking(move || Bundle::load(&dir)).await {
        Ok(Ok(bundle)) => {
            let info = bundle.info();
            state.swap(bundle);
            json_response(StatusCode::OK, serde_json::to_string(&info).expect("plain data"))
        }
        // A failed reload keeps serving the old snapshot.
        Ok(Err(e)) => error_response(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/predict", post(predict))
        .route("/recommend", post(recommend))
        .route("/model/info", get(model_info))
        .route("/admin/reload", post(reload))
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, bind: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind)
        .await
        .map_err(|e| anyhow::anyhow!("cannot bind {bind}: {e}"))?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
