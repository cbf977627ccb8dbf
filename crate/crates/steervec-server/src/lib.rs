//! HTTP/JSON service over the steervec operations.
//!
//! Routes:
//!
//! | method | path                      | body in            | body out              |
//! |--------|---------------------------|--------------------|-----------------------|
//! | GET    | `/healthz`                |                    | `{"status":"ok"}`     |
//! | POST   | `/v1/solve`               | `SolveRequest`     | `SolveResponse`       |
//! | POST   | `/v1/bench`               | `BenchConfig`      | `GapSummary`          |
//! | POST   | `/v1/check`               | `CheckOptions`     | `[PropertyResult]`    |
//! | POST   | `/v1/sessions`            | `SessionConfig`    | `{"session_id":id}`   |
//! | POST   | `/v1/sessions/{id}/step`  | raw protocol line  | raw protocol line     |
//! | DELETE | `/v1/sessions/{id}`       |                    | `SessionSummary`      |
//!
//! The step route passes lines through the same engine the stdio session
//! mode uses, so responses are byte-identical to a local run, and malformed
//! requests come back as in-band error lines with status 200. Errors from
//! the other routes are `{"error": message}` with 400 for rejected input
//! and 500 for internal failures.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde_json::json;

use steervec_core::api::{self, SolveRequest, SolveResponse};
use steervec_core::bench::{run_bench, BenchConfig, GapSummary};
use steervec_core::check::{run_checks, CheckOptions, PropertyResult};
use steervec_core::session::{handle_line, SessionConfig, SessionState, SessionSummary};
use steervec_core::Error as CoreError;

#[derive(Clone, Default)]
pub struct AppState {
    inner: Arc<Shared>,
}

#[derive(Default)]
struct Shared {
    sessions: Mutex<HashMap<String, SessionState>>,
    next_id: AtomicU64,
}

struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn unknown_session(id: &str) -> Self {
        ApiError { status: StatusCode::NOT_FOUND, message: format!("unknown session: {id}") }
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let status = match &e {
            CoreError::Config(_)
            | CoreError::Parse(_)
            | CoreError::Protocol(_)
            | CoreError::Dimension(_)
            | CoreError::NonFinite
            | CoreError::DegenerateInput(_)
            | CoreError::InsufficientDimension { .. } => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError { status, message: e.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

fn join_err(e: tokio::task::JoinError) -> ApiError {
    ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        message: format!("worker task failed: {e}"),
    }
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn solve(Json(req): Json<SolveRequest>) -> Result<Json<SolveResponse>, ApiError> {
    let out = tokio::task::spawn_blocking(move || api::solve(&req)).await.map_err(join_err)??;
    Ok(Json(out))
}

async fn bench(Json(config): Json<BenchConfig>) -> Result<Json<GapSummary>, ApiError> {
    let out = tokio::task::spawn_blocking(move || run_bench(&config)).await.map_err(join_err)??;
    Ok(Json(out))
}

async fn check(Json(opts): Json<CheckOptions>) -> Result<Json<Vec<PropertyResult>>, ApiError> {
    let out = tokio::task::spawn_blocking(move || run_checks(&opts)).await.map_err(join_err)?;
    Ok(Json(out))
}

async fn open_session(
    State(app): State<AppState>,
    Json(config): Json<SessionConfig>,
) -> Result<(StatusCode, Json<serde_json::Value>), ApiError> {
    let session = SessionState::open(config)?;
    let id = format!("s{}", app.inner.next_id.fetch_add(1, Ordering::Relaxed));
    app.inner.sessions.lock().unwrap().insert(id.clone(), session);
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id }))))
}

async fn step_session(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: String,
) -> Result<String, ApiError> {
    tokio::task::spawn_blocking(move || {
        let mut sessions = app.inner.sessions.lock().unwrap();
        match sessions.get_mut(&id) {
            Some(session) => Ok(handle_line(session, body.trim())),
            None => Err(ApiError::unknown_session(&id)),
        }
    })
    .await
    .map_err(join_err)?
}

async fn close_session(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<SessionSummary>, ApiError> {
    let session = app
        .inner
        .sessions
        .lock()
        .unwrap()
        .remove(&id)
        .ok_or_else(|| ApiError::unknown_session(&id))?;
    Ok(Json(session.close()))
}

pub fn router() -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/solve", post(solve))
        .route("/v1/bench", post(bench))
        .route("/v1/check", post(check))
        .route("/v1/sessions", post(open_session))
        .route("/v1/sessions/{id}/step", post(step_session))
        .route("/v1/sessions/{id}", delete(close_session))
        .with_state(AppState::default())
}

/// Binds `addr` and serves until ctrl-c. Prints the bound address (useful
/// with port 0) before accepting connections.
pub async fn serve(addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    println!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router())
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// `serve` wrapped in its own runtime, for callers that are not async.
pub fn serve_blocking(addr: SocketAddr) -> std::io::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(serve(addr))
}
