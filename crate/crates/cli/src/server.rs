//! JSON over HTTP for a single debug session.
//!
//! Mutations take the write lock, so they are serialized; reads take the
//! read lock and always see a state between two mutations.

use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use cril_core::machine::Direction;
use cril_core::session::{DebugSession, ProgramView, RunRequest, SessionError, StepRequest};

type Shared = Arc<RwLock<DebugSession>>;

pub struct ApiError(StatusCode, serde_json::Value);

impl ApiError {
    fn bad_request(message: impl Into<String>) -> ApiError {
        let message = message.into();
        ApiError(
            StatusCode::BAD_REQUEST,
            json!({ "reason": "bad-request", "message": message }),
        )
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> ApiError {
        let status = if e.is_conflict() {
            StatusCode::CONFLICT
        } else {
            StatusCode::BAD_REQUEST
        };
        ApiError(status, e.to_json())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

fn ok<T: Serialize>(v: T) -> ApiResult {
    Ok(Json(v).into_response())
}

/// An empty body means `T::default()`.
fn body<T: DeserializeOwned + Default>(bytes: &Bytes) -> Result<T, ApiError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

#[derive(Debug, Default, Deserialize)]
struct VersionGuard {
    expected_version: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
struct ScrubRequest {
    position: Option<usize>,
    expected_version: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct DirQuery {
    dir: Option<String>,
}

#[derive(Debug, Deserialize)]
struct FormatQuery {
    format: Option<String>,
}

pub fn router(session: DebugSession) -> Router {
    let shared: Shared = Arc::new(RwLock::new(session));
    Router::new()
        .route("/", get(index))
        .route("/api/program", get(program))
        .route("/api/state", get(state))
        .route("/api/dag", get(dag))
        .route("/api/transitions", get(transitions))
        .route("/api/history", get(history))
        .route("/api/trace", get(trace))
        .route("/api/step", post(step))
        .route("/api/run", post(run))
        .route("/api/reset", post(reset))
        .route("/api/scrub", post(scrub))
        .with_state(shared)
}

pub async fn serve(session: DebugSession, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("cril: serving on http://{}", listener.local_addr()?);
    axum::serve(listener, router(session))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn index() -> &'static str {
    "cril debug service\n\
     GET  /api/program /api/state /api/dag[?format=dot] /api/transitions[?dir=forward|backward|both] /api/history /api/trace\n\
     POST /api/step /api/run /api/reset /api/scrub\n"
}

async fn program(State(s): State<Shared>) -> ApiResult {
    let s = s.read().unwrap();
    ok(ProgramView::new(s.lts()))
}

async fn state(State(s): State<Shared>) -> ApiResult {
    ok(s.read().unwrap().state_view())
}

async fn dag(State(s): State<Shared>, Query(q): Query<FormatQuery>) -> ApiResult {
    let s = s.read().unwrap();
    match q.format.as_deref() {
        None | Some("json") => ok(s.dag_view()),
        Some("dot") => {
            let dot = s.current().dag.to_dot(s.program());
            Ok(([(header::CONTENT_TYPE, "text/vnd.graphviz; charset=utf-8")], dot).into_response())
        }
        Some(other) => Err(ApiError::bad_request(format!(
            "unknown format {other:?}, expected json or dot"
        ))),
    }
}

async fn transitions(State(s): State<Shared>, Query(q): Query<DirQuery>) -> ApiResult {
    let dir = match q.dir.as_deref() {
        None | Some("both") => None,
        Some(d) => Some(Direction::parse(d).ok_or_else(|| ApiError::bad_request(format!("unknown direction {d:?}")))?),
    };
    ok(s.read().unwrap().transitions(dir))
}

async fn history(State(s): State<Shared>) -> ApiResult {
    ok(s.read().unwrap().history_view())
}

async fn trace(State(s): State<Shared>) -> ApiResult {
    ok(s.read().unwrap().trace())
}

async fn step(State(s): State<Shared>, bytes: Bytes) -> ApiResult {
    let req: StepRequest = body(&bytes)?;
    let resp = s.write().unwrap().step(&req)?;
    ok(resp)
}

async fn run(State(s): State<Shared>, bytes: Bytes) -> ApiResult {
    let req: RunRequest = body(&bytes)?;
    let resp = s.write().unwrap().run(&req)?;
    ok(resp)
}

async fn reset(State(s): State<Shared>, bytes: Bytes) -> ApiResult {
    let req: VersionGuard = body(&bytes)?;
    let resp = s.write().unwrap().reset(req.expected_version)?;
    ok(resp)
}

async fn scrub(State(s): State<Shared>, bytes: Bytes) -> ApiResult {
    let req: ScrubRequest = body(&bytes)?;
    let position = req
        .position
        .ok_or_else(|| ApiError::bad_request("scrub needs a position"))?;
    let resp = s.write().unwrap().scrub(position, req.expected_version)?;
    ok(resp)
}
