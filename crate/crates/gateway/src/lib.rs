//! HTTP gateway for mission sessions.
//!
//! | method | path                        | action                          |
//! |--------|-----------------------------|---------------------------------|
//! | POST   | `/sessions`                 | create from a config document   |
//! | GET    | `/sessions/{id}`            | state snapshot                  |
//! | POST   | `/sessions/{id}/message`    | supervisor input `{text}`       |
//! | POST   | `/sessions/{id}/approve`    | approve the current plans       |
//! | POST   | `/sessions/{id}/step`       | advance up to `{count}` steps   |
//! | GET    | `/sessions/{id}/events`     | server-sent event stream        |
//! | GET    | `/sessions/{id}/transcript` | JSON-lines transcript           |
//!
//! Errors are `{"code": ..., "message": ...}` documents with stable codes.

mod sse;
pub mod state;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parley_core::envgraph::render_flowchart;
use parley_core::mission::{SessionStore, DATA_DIR_ENV};
use parley_core::{MissionError, Session, SessionConfig, SessionEvent, SessionPhase};
use serde::Deserialize;
use serde_json::{json, Value};

pub use state::{replay, AppState, Operation, SessionSlot};

pub const BIND_ENV: &str = "PARLEY_BIND";
pub const DEFAULT_BIND: &str = "127.0.0.1:8787";

/// Messages included in the snapshot's transcript tail.
const TRANSCRIPT_TAIL: usize = 20;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    line: Option<usize>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            line: None,
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session {id}"))
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<MissionError> for ApiError {
    fn from(err: MissionError) -> Self {
        let status = match &err {
            MissionError::WrongPhase { .. } => StatusCode::CONFLICT,
            MissionError::Config(_) | MissionError::Dialogue(_) => StatusCode::BAD_REQUEST,
            MissionError::Provider(_) => StatusCode::BAD_GATEWAY,
            MissionError::Sim(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let line = match &err {
            MissionError::Config(c) => c.line(),
            _ => None,
        };
        Self {
            status,
            code: err.code(),
            message: err.to_string(),
            line,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "code": self.code, "message": self.message });
        if let Some(line) = self.line {
            body["line"] = json!(line);
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(handle_create))
        .route("/sessions/{id}", get(handle_snapshot))
        .route("/sessions/{id}/message", post(handle_supervisor_input))
        .route("/sessions/{id}/approve", post(handle_approve))
        .route("/sessions/{id}/step", post(handle_step))
        .route("/sessions/{id}/events", get(sse::stream_events))
        .route("/sessions/{id}/transcript", get(handle_transcript))
        .with_state(state)
}

/// Binds and serves until ctrl-c.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "gateway listening");
    serve_until(listener, state, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}

/// Serves on an already bound listener until `shutdown` resolves.
pub async fn serve_until(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

/// State built from `PARLEY_DATA_DIR`, with stored sessions loaded.
pub fn state_from_env() -> Arc<AppState> {
    let store = SessionStore::from_env();
    if store.is_none() {
        tracing::info!("{DATA_DIR_ENV} not set; sessions are kept in memory only");
    }
    let state = AppState::new(store);
    match state.load_stored() {
        Ok(n) if n > 0 => tracing::info!(sessions = n, "restored stored sessions"),
        Ok(_) => {}
        Err(e) => tracing::error!(error = %e, "could not load stored sessions"),
    }
    Arc::new(state)
}

fn lookup(state: &AppState, id: &str) -> ApiResult<Arc<SessionSlot>> {
    state.get(id).ok_or_else(|| ApiError::not_found(id))
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes, allow_empty: bool) -> ApiResult<Option<T>> {
    if allow_empty && body.iter().all(u8::is_ascii_whitespace) {
        return Ok(None);
    }
    serde_json::from_slice(body)
        .map(Some)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_body", e.to_string()))
}

pub fn snapshot(session: &Session) -> Value {
    let messages = session.transcript().messages();
    let tail = &messages[messages.len().saturating_sub(TRANSCRIPT_TAIL)..];
    json!({
        "id": session.id(),
        "phase": session.phase(),
        "roster": session.roster(),
        "positions": session.positions(),
        "rounds_used": session.rounds_used(),
        "auto_approve": session.auto_approve(),
        "flowchart": render_flowchart(session.graph()),
        "graph": session.graph(),
        "transcript_length": messages.len(),
        "transcript_tail": tail,
        "plan": session.plan(),
        "validation": session.validation(),
        "event_count": session.events().len(),
    })
}

fn phase_doc(session: &Session) -> Value {
    json!({ "id": session.id(), "phase": session.phase() })
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

async fn handle_create(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let config: SessionConfig = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_config", e.to_string()))?;
    let slot = blocking(move || state.create(config).map_err(ApiError::from)).await?;
    let inner = slot.lock();
    let s = &inner.session;
    let doc = json!({
        "id": s.id(),
        "phase": s.phase(),
        "roster": s.roster(),
        "flowchart": render_flowchart(s.graph()),
    });
    Ok((StatusCode::CREATED, Json(doc)).into_response())
}

async fn handle_snapshot(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let slot = lookup(&state, &id)?;
    let inner = slot.lock();
    Ok(Json(snapshot(&inner.session)))
}

#[derive(Deserialize)]
struct TextBody {
    text: String,
}

async fn handle_supervisor_input(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let slot = lookup(&state, &id)?;
    let TextBody { text } = parse_body(&body, false)?.expect("body required");
    if text.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "empty_text", "text is empty"));
    }
    blocking(move || {
        let mut guard = state.guard(&slot);
        let op = match guard.session().phase() {
            SessionPhase::Setup => Operation::SubmitTask { text },
            _ => Operation::Feedback { text },
        };
        guard.apply(op)?;
        Ok(Json(phase_doc(guard.session())))
    })
    .await
}

async fn handle_approve(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<Value>> {
    let slot = lookup(&state, &id)?;
    blocking(move || {
        let mut guard = state.guard(&slot);
        guard.apply(Operation::Approve)?;
        let s = guard.session();
        Ok(Json(json!({
            "id": s.id(),
            "phase": s.phase(),
            "validation": s.validation(),
        })))
    })
    .await
}

#[derive(Deserialize)]
struct StepBody {
    #[serde(default = "one")]
    count: u32,
}

fn one() -> u32 {
    1
}

/// Runs up to `count` steps: one agent turn in Discussion, one simulator
/// tick in Executing, or an approval when the session auto-approves. Stops
/// early when the session reaches AwaitingApproval or a terminal phase, or
/// when the provider fails.
pub fn run_steps(guard: &mut state::SessionGuard<'_>, count: u32) -> Result<Vec<SessionEvent>, MissionError> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let phase = guard.session().phase();
    if !state::steppable(phase, guard.session().auto_approve()) {
        return Err(MissionError::WrongPhase {
            operation: "step",
            phase,
        });
    }
    let start = guard.session().events().len();
    for _ in 0..count {
        let op = match guard.session().phase() {
            SessionPhase::Discussion => Operation::Advance,
            SessionPhase::Executing => Operation::StepExecution,
            SessionPhase::AwaitingApproval if guard.session().auto_approve() => Operation::Approve,
            _ => break,
        };
        let before = guard.session().phase();
        match guard.apply(op) {
            Ok(_) => {}
            // the failure is recorded as an error event
            Err(MissionError::Provider(_)) => break,
            Err(e) => return Err(e),
        }
        let after = guard.session().phase();
        if after != before
            && matches!(
                after,
                SessionPhase::AwaitingApproval | SessionPhase::Completed | SessionPhase::Aborted
            )
        {
            break;
        }
    }
    Ok(guard.session().events()[start..].to_vec())
}

async fn handle_step(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let slot = lookup(&state, &id)?;
    let count = parse_body::<StepBody>(&body, true)?.map_or(1, |b| b.count);
    blocking(move || {
        let mut guard = state.guard(&slot);
        let events = run_steps(&mut guard, count)?;
        Ok(Json(json!({
            "id": guard.session().id(),
            "phase": guard.session().phase(),
            "events": events,
        })))
    })
    .await
}

async fn handle_transcript(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let slot = lookup(&state, &id)?;
    let inner = slot.lock();
    let mut out = String::new();
    for m in inner.session.transcript().messages() {
        out.push_str(&serde_json::to_string(m).map_err(|e| ApiError::internal(e.to_string()))?);
        out.push('\n');
    }
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], out).into_response())
}

pub(crate) fn last_event_id(headers: &HeaderMap) -> ApiResult<Option<u64>> {
    match headers.get("last-event-id") {
        None => Ok(None),
        Some(v) => {
            let s = v.to_str().unwrap_or("").trim();
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| {
                ApiError::new(
                    StatusCode::BAD_REQUEST,
                    "invalid_last_event_id",
                    format!("Last-Event-ID {s:?} is not a sequence number"),
                )
            })
        }
    }
}
