//! HTTP routes and the server-push event stream.

use std::collections::{HashMap, VecDeque};
use std::convert::Infallible;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event as SseEvent, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use costudy_core::config::{Mode, SessionConfig};
use costudy_core::event::{EventPayload, SessionEvent};
use costudy_core::rng::short_digest;
use costudy_core::scheduler::AssetManifest;
use costudy_core::session::{Session, SessionError};
use futures::Stream;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::broadcast;
use tower_http::services::ServeDir;

use crate::config::ServerConfig;
use crate::persist;
use crate::worker::{Clock, SessionHandle, WorkerSettings};
use crate::{ServerError, PROTOCOL_VERSION};

const MAX_BODY_BYTES: usize = 16 * 1024 * 1024;

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    config: ServerConfig,
    session_defaults: SessionConfig,
    default_transcript: Option<String>,
    manifest: Option<AssetManifest>,
    clock: Clock,
    sessions: Mutex<HashMap<String, SessionHandle>>,
    counter: AtomicU64,
}

impl AppState {
    /// Loads session defaults, the default transcript and the asset manifest.
    pub fn from_config(config: ServerConfig, clock: Clock) -> Result<Self, ServerError> {
        let session_defaults = config.session_defaults()?;
        Self::new(config, session_defaults, clock)
    }

    pub fn new(
        config: ServerConfig,
        session_defaults: SessionConfig,
        clock: Clock,
    ) -> Result<Self, ServerError> {
        config.validate()?;
        session_defaults.validate()?;
        let default_transcript = config.default_transcript()?;
        if let Some(text) = &default_transcript {
            costudy_core::parse_transcript(text)?;
        }
        let manifest = config.manifest(&session_defaults)?;
        std::fs::create_dir_all(&config.log_dir)
            .map_err(|e| ServerError::Config(format!("{}: {e}", config.log_dir.display())))?;
        Ok(Self {
            inner: Arc::new(Inner {
                config,
                session_defaults,
                default_transcript,
                manifest,
                clock,
                sessions: Mutex::new(HashMap::new()),
                counter: AtomicU64::new(0),
            }),
        })
    }

    pub fn config(&self) -> &ServerConfig {
        &self.inner.config
    }

    fn handle(&self, id: &str) -> Option<SessionHandle> {
        self.inner
            .sessions
            .lock()
            .expect("session map poisoned")
            .get(id)
            .cloned()
    }

    fn next_id(&self, seed: u64) -> String {
        let n = self.inner.counter.fetch_add(1, Ordering::SeqCst);
        let nanos = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or_default();
        format!("s-{}", short_digest(format!("{seed}:{n}:{nanos}").as_bytes(), 16))
    }

    /// Closes every live session, flushing its log.
    pub async fn shutdown(&self) {
        let handles: Vec<SessionHandle> = self
            .inner
            .sessions
            .lock()
            .expect("session map poisoned")
            .drain()
            .map(|(_, h)| h)
            .collect();
        for handle in handles {
            let _ = handle.close().await;
        }
    }
}

pub fn router(state: AppState) -> Router {
    let assets = ServeDir::new(&state.config().assets_dir);
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/events", post(post_event))
        .route("/sessions/{id}/stream", get(stream))
        .route("/sessions/{id}/log", get(get_log))
        .route("/manifest", get(get_manifest))
        .nest_service("/assets", assets)
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    BadRequest { message: String, field: Option<String> },
    Internal(String),
}

impl ApiError {
    fn bad(message: impl Into<String>) -> Self {
        let message = message.into();
        let field = field_of(&message);
        ApiError::BadRequest { message, field }
    }
}

/// Pulls the field name out of messages like "missing field `text`".
fn field_of(message: &str) -> Option<String> {
    let start = message.find("field `")? + "field `".len();
    let len = message[start..].find('`')?;
    Some(message[start..start + len].to_string())
}

impl From<SessionError> for ApiError {
    fn from(err: SessionError) -> Self {
        match err {
            SessionError::Invalid { field, message } => ApiError::BadRequest {
                message: format!("{field}: {message}"),
                field: Some(field.to_string()),
            },
            SessionError::UnknownAgent(_) => ApiError::BadRequest {
                message: err.to_string(),
                field: Some("agent_id".into()),
            },
            other => ApiError::bad(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::NotFound(what) => (StatusCode::NOT_FOUND, json!({ "error": what })),
            ApiError::BadRequest { message, field } => {
                let mut body = json!({ "error": message });
                if let Some(field) = field {
                    body["field"] = Value::String(field);
                }
                (StatusCode::BAD_REQUEST, body)
            }
            ApiError::Internal(message) => (StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": message })),
        };
        (status, Json(body)).into_response()
    }
}

fn not_found(id: &str) -> ApiError {
    ApiError::NotFound(format!("no session `{id}`"))
}

fn gone() -> ApiError {
    ApiError::Internal("session worker stopped".into())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    transcript: Option<String>,
    seed: Option<u64>,
    mode: Option<Mode>,
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let request: CreateRequest = if body.iter().all(u8::is_ascii_whitespace) {
        CreateRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::bad(e.to_string()))?
    };
    let mut config = state.inner.session_defaults.clone();
    if let Some(seed) = request.seed {
        config.seed = seed;
    }
    if let Some(mode) = request.mode {
        config.mode = mode;
    }
    let transcript = match request
        .transcript
        .or_else(|| state.inner.default_transcript.clone())
    {
        Some(t) => t,
        None => {
            return Err(ApiError::BadRequest {
                message: "transcript: required (no server default configured)".into(),
                field: Some("transcript".into()),
            })
        }
    };
    let id = state.next_id(config.seed);
    // the http backend builds a blocking client, which must not live on the runtime
    let session_id = id.clone();
    let session = tokio::task::spawn_blocking(move || {
        Session::create(config, &transcript).map(|s| s.with_id(session_id))
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))??;
    let settings = WorkerSettings {
        tick: Duration::from_millis(state.config().tick_ms),
        persist_interval: Duration::from_millis(state.config().persist_interval_ms),
        log_dir: state.config().log_dir.clone(),
    };
    let handle = SessionHandle::spawn(
        session,
        state.inner.clock.clone(),
        settings,
        state.config().stream_buffer,
    )
    .map_err(|e| ApiError::Internal(e.to_string()))?;
    state
        .inner
        .sessions
        .lock()
        .expect("session map poisoned")
        .insert(id.clone(), handle);
    tracing::info!(session = %id, "session created");
    let body = json!({ "session_id": id, "protocol_version": PROTOCOL_VERSION });
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let handle = state.handle(&id).ok_or_else(|| not_found(&id))?;
    let snapshot = handle.snapshot().await.map_err(|_| gone())?;
    let mut body = serde_json::to_value(snapshot).map_err(|e| ApiError::Internal(e.to_string()))?;
    body["protocol_version"] = json!(PROTOCOL_VERSION);
    Ok(Json(body))
}

async fn delete_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<StatusCode, ApiError> {
    let handle = state
        .inner
        .sessions
        .lock()
        .expect("session map poisoned")
        .remove(&id)
        .ok_or_else(|| not_found(&id))?;
    handle
        .close()
        .await
        .map_err(|_| gone())?
        .map_err(|e| ApiError::Internal(format!("cannot persist log: {e}")))?;
    Ok(StatusCode::NO_CONTENT)
}

async fn post_event(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let handle = state.handle(&id).ok_or_else(|| not_found(&id))?;
    let value: Value =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad(format!("body is not JSON: {e}")))?;
    let payload = EventPayload::from_wire(value).map_err(|e| ApiError::bad(e.to_string()))?;
    let seq = handle.ingest(payload).await.map_err(|_| gone())??;
    Ok(Json(json!({ "seq": seq })))
}

async fn get_log(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let bytes = match state.handle(&id) {
        Some(handle) => {
            let events = handle.events_after(0).await.map_err(|_| gone())?;
            let mut out = Vec::new();
            costudy_core::event::write_jsonl(&events, &mut out)
                .map_err(|e| ApiError::Internal(e.to_string()))?;
            out
        }
        None if persist::is_valid_session_id(&id) => {
            persist::load_bytes(&state.config().log_dir, &id).map_err(|_| not_found(&id))?
        }
        None => return Err(not_found(&id)),
    };
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], bytes).into_response())
}

async fn get_manifest(State(state): State<AppState>) -> Result<Json<AssetManifest>, ApiError> {
    state
        .inner
        .manifest
        .clone()
        .map(Json)
        .ok_or_else(|| ApiError::NotFound("no asset manifest configured".into()))
}

#[derive(Debug, Default, Deserialize)]
struct StreamQuery {
    from_seq: Option<u64>,
}

/// Wire form of one event: the log record plus the protocol version.
pub fn wire_event(event: &SessionEvent) -> Value {
    let mut value = event.to_value();
    value["protocol_version"] = json!(PROTOCOL_VERSION);
    value
}

fn event_frame(event: &SessionEvent) -> SseEvent {
    SseEvent::default()
        .event(event.kind())
        .id(event.seq.to_string())
        .data(wire_event(event).to_string())
}

fn heartbeat_frame() -> SseEvent {
    SseEvent::default()
        .event("hb")
        .data(json!({ "protocol_version": PROTOCOL_VERSION }).to_string())
}

struct StreamState {
    backlog: VecDeque<SessionEvent>,
    live: broadcast::Receiver<Arc<SessionEvent>>,
    last: u64,
    heartbeat: tokio::time::Interval,
}

async fn stream(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<StreamQuery>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<SseEvent, Infallible>>>, ApiError> {
    let handle = state.handle(&id).ok_or_else(|| not_found(&id))?;
    let resume = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok());
    let from = query.from_seq.or(resume).unwrap_or(0);
    // subscribe before reading the backlog so nothing falls in between
    let live = handle.subscribe();
    let backlog = handle.events_after(from).await.map_err(|_| gone())?;
    drop(handle);
    let period = Duration::from_millis(state.config().heartbeat_ms);
    let heartbeat = tokio::time::interval_at(tokio::time::Instant::now() + period, period);
    let initial = StreamState {
        backlog: backlog.into(),
        live,
        last: from,
        heartbeat,
    };
    let frames = futures::stream::unfold(initial, |mut st| async move {
        while let Some(event) = st.backlog.pop_front() {
            if event.seq > st.last {
                st.last = event.seq;
                return Some((Ok(event_frame(&event)), st));
            }
        }
        loop {
            tokio::select! {
                received = st.live.recv() => match received {
                    Ok(event) if event.seq <= st.last => continue,
                    Ok(event) => {
                        st.last = event.seq;
                        return Some((Ok(event_frame(&event)), st));
                    }
                    // slow subscriber or closed session: the client resumes by seq
                    Err(_) => return None,
                },
                _ = st.heartbeat.tick() => return Some((Ok(heartbeat_frame()), st)),
            }
        }
    });
    Ok(Sse::new(frames))
}
