//! HTTP routes, shared state and the session runner.

use std::collections::HashMap;
use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{HeaderMap, StatusCode, header};
use axum::middleware::{self, Next};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use futures::Stream;
use ooc_core::backend::{ChatBackend, PriceTable, estimate_cost};
use ooc_core::clock::{Clock, SystemClock};
use ooc_core::dataset::{ImageTextPair, Label};
use ooc_core::debate::{
    AgentRole, AgentSpec, DEFAULT_MODEL, DEFAULT_ROUNDS, DebateConfig, DebateRuntime, DebateStrategy, SessionResult,
    TRANSCRIPT_SCHEMA_VERSION, TranscriptFile, run_session,
};
use ooc_core::evidence::{EvidencePipeline, TextSearch};
use ooc_core::image::ImageRef;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Value, json};
use thiserror::Error;
use tracing::{info, warn};

use crate::events::{EventKind, EventLog, LogError, SessionEvent};
use crate::hub::{DEFAULT_HUMAN_TIMEOUT, SessionHub, TurnError};
use crate::store::{SessionMeta, Store, StoreError};
use crate::study::{AnswerInput, Insight, Study, StudyError, StudyItem, parse_answer};

pub const RESTART_MESSAGE: &str = "service restarted before the session finished";

/// Backends and providers sessions run against.
#[derive(Clone)]
pub struct Engines {
    pub backend: Arc<dyn ChatBackend>,
    pub evidence: Option<EvidencePipeline>,
    pub text_search: Option<Arc<dyn TextSearch>>,
    pub clock: Arc<dyn Clock>,
}

impl Engines {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Self {
            backend,
            evidence: None,
            text_search: None,
            clock: Arc::new(SystemClock),
        }
    }

    pub fn with_evidence(mut self, pipeline: EvidencePipeline) -> Self {
        self.evidence = Some(pipeline);
        self
    }

    pub fn with_text_search(mut self, provider: Arc<dyn TextSearch>) -> Self {
        self.text_search = Some(provider);
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Persistence root; `None` keeps everything in memory.
    pub state_dir: Option<PathBuf>,
    /// Static bearer token. `None` disables the check.
    pub token: Option<String>,
    pub human_timeout: Duration,
    pub default_model: String,
    pub prices: Option<PriceTable>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            state_dir: None,
            token: None,
            human_timeout: DEFAULT_HUMAN_TIMEOUT,
            default_model: DEFAULT_MODEL.to_string(),
            prices: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Log(#[from] LogError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Retrieving,
    Debating,
    AwaitingHuman,
    Done,
    Failed,
}

pub fn status_of(events: &[SessionEvent]) -> SessionStatus {
    match events.last().map(|e| e.kind) {
        None => SessionStatus::Retrieving,
        Some(EventKind::Verdict) => SessionStatus::Done,
        Some(EventKind::Error) => SessionStatus::Failed,
        Some(EventKind::AwaitingHuman) => SessionStatus::AwaitingHuman,
        Some(_) => SessionStatus::Debating,
    }
}

pub struct SessionHandle {
    pub meta: SessionMeta,
    pub log: Arc<EventLog>,
    /// Absent for sessions reloaded from disk.
    hub: Option<Arc<SessionHub>>,
}

pub struct AppState {
    pub config: ServiceConfig,
    pub engines: Engines,
    http: reqwest::Client,
    store: Option<Store>,
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
    studies: RwLock<HashMap<String, Arc<Mutex<Study>>>>,
}

impl AppState {
    /// Builds the state, reloading sessions and studies from the state
    /// directory. Sessions that were still running are closed with an
    /// error event.
    pub fn open(config: ServiceConfig, engines: Engines) -> Result<Arc<Self>, ServiceError> {
        let store = config.state_dir.clone().map(Store::new);
        let mut sessions = HashMap::new();
        let mut studies = HashMap::new();
        if let Some(store) = &store {
            for meta in store.load_sessions()? {
                let log = Arc::new(EventLog::open(&meta.id, &store.events_path(&meta.id))?);
                if !log.is_closed() {
                    log.append(EventKind::Error, json!({ "message": RESTART_MESSAGE, "partial": null }))?;
                }
                sessions.insert(meta.id.clone(), Arc::new(SessionHandle { meta, log, hub: None }));
            }
            for study in store.load_studies()? {
                studies.insert(study.id.clone(), Arc::new(Mutex::new(study)));
            }
            info!(sessions = sessions.len(), studies = studies.len(), root = %store.root().display(), "state loaded");
        }
        Ok(Arc::new(Self {
            config,
            engines,
            http: reqwest::Client::new(),
            store,
            sessions: RwLock::new(sessions),
            studies: RwLock::new(studies),
        }))
    }

    pub fn session(&self, id: &str) -> Option<Arc<SessionHandle>> {
        self.sessions.read().expect("sessions poisoned").get(id).cloned()
    }

    fn study(&self, id: &str) -> Result<Arc<Mutex<Study>>, ApiError> {
        self.studies
            .read()
            .expect("studies poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("unknown study `{id}`")))
    }
}

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error("{0}")]
    BadRequest(String),
    #[error("missing or wrong bearer token")]
    Unauthorized,
    #[error("{0}")]
    NotFound(String),
    #[error("{message}")]
    Conflict { code: &'static str, message: String },
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        ApiError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let message = self.to_string();
        let (status, body) = match self {
            ApiError::Validation { field, .. } => (
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({ "error": "validation", "field": field, "message": message }),
            ),
            ApiError::BadRequest(_) => (
                StatusCode::BAD_REQUEST,
                json!({ "error": "bad_request", "message": message }),
            ),
            ApiError::Unauthorized => (
                StatusCode::UNAUTHORIZED,
                json!({ "error": "unauthorized", "message": message }),
            ),
            ApiError::NotFound(_) => (
                StatusCode::NOT_FOUND,
                json!({ "error": "not_found", "message": message }),
            ),
            ApiError::Conflict { code, .. } => (StatusCode::CONFLICT, json!({ "error": code, "message": message })),
            ApiError::Internal(_) => (
                StatusCode::INTERNAL_SERVER_ERROR,
                json!({ "error": "internal", "message": message }),
            ),
        };
        (status, Json(body)).into_response()
    }
}

impl From<StudyError> for ApiError {
    fn from(e: StudyError) -> Self {
        let message = e.to_string();
        match e {
            StudyError::Invalid { field, message } => ApiError::Validation { field, message },
            StudyError::UnknownItem(_) => ApiError::field("item_id", message),
            StudyError::Order(_) => ApiError::Conflict { code: "order", message },
            StudyError::Duplicate { .. } => ApiError::Conflict {
                code: "duplicate",
                message,
            },
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::Internal(e.to_string())
    }
}

/// Parses a JSON body; syntax errors are 400, shape errors are 422 naming
/// the offending field where serde reports one.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    let value: Value = serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("invalid JSON: {e}")))?;
    serde_json::from_value(value).map_err(|e| {
        let message = e.to_string();
        let field = message.split('`').nth(1).unwrap_or("body").to_string();
        ApiError::Validation { field, message }
    })
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/events", get(stream_events))
        .route("/sessions/{id}/turns", post(post_turn))
        .route("/studies", post(create_study))
        .route("/studies/{id}", get(get_study))
        .route("/studies/{id}/responses", post(post_response).get(list_responses))
        .route("/studies/{id}/reveal", post(reveal))
        .route("/studies/{id}/summary", get(summary))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token))
        .route("/health", get(|| async { "ok" }))
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

async fn require_token(State(state): State<Arc<AppState>>, request: Request, next: Next) -> Response {
    if let Some(token) = &state.config.token {
        let bearer = request
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        // EventSource cannot set headers, so streams may pass ?token=.
        let query = request
            .uri()
            .query()
            .and_then(|q| q.split('&').find_map(|kv| kv.strip_prefix("token=")));
        if bearer != Some(token.as_str()) && query != Some(token.as_str()) {
            return ApiError::Unauthorized.into_response();
        }
    }
    next.run(request).await
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionOptions {
    pub strategy: Option<String>,
    pub rounds: Option<u32>,
    pub agents: Option<usize>,
    pub model: Option<String>,
    pub retrieval: Option<bool>,
    /// Human agent ids. An id naming a roster slot (`agent_b`) replaces
    /// that model agent; any other id joins as an extra debater.
    #[serde(default)]
    pub human_agents: Vec<String>,
    pub max_output_tokens: Option<u32>,
    pub temperature: Option<f32>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub caption: Option<String>,
    pub image_url: Option<String>,
    pub image_base64: Option<String>,
    #[serde(default)]
    pub config: SessionOptions,
}

/// Debate config for a request. Rounds default to 3, or 0 for a single agent.
pub fn session_config(
    opts: &SessionOptions,
    default_model: &str,
    has_evidence: bool,
) -> Result<DebateConfig, ApiError> {
    let strategy: DebateStrategy = match &opts.strategy {
        Some(s) => s.parse().map_err(|m: String| ApiError::field("config.strategy", m))?,
        None => DebateStrategy::AsyncHumanFraming,
    };
    let agents = opts.agents.unwrap_or(2);
    let rounds = opts.rounds.unwrap_or(if agents == 1 { 0 } else { DEFAULT_ROUNDS });
    let retrieval = opts.retrieval.unwrap_or(has_evidence);
    if retrieval && !has_evidence {
        return Err(ApiError::field(
            "config.retrieval",
            "no evidence pipeline is configured",
        ));
    }
    let model = opts.model.as_deref().unwrap_or(default_model);
    let mut config = DebateConfig::new(strategy, agents, model)
        .with_rounds(rounds)
        .with_evidence(retrieval);
    if let Some(t) = opts.max_output_tokens {
        config.max_output_tokens = t;
    }
    if let Some(t) = opts.temperature {
        config.temperature = t;
    }
    for id in &opts.human_agents {
        let id = id.trim();
        if id.is_empty() {
            return Err(ApiError::field("config.human_agents", "agent ids must not be empty"));
        }
        match config.agents.iter_mut().find(|a| a.id == id) {
            Some(slot) if slot.role == AgentRole::Debater => *slot = AgentSpec::human(id),
            Some(_) => {
                return Err(ApiError::field(
                    "config.human_agents",
                    format!("`{id}` is not a debater slot"),
                ));
            }
            None => config.agents.push(AgentSpec::human(id)),
        }
    }
    config
        .validate()
        .map_err(|e| ApiError::field(format!("config.{}", e.field), e.message))?;
    Ok(config)
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let request: CreateSession = parse_body(&body)?;
    let caption = request.caption.as_deref().map(str::trim).unwrap_or_default();
    if caption.is_empty() {
        return Err(ApiError::field("caption", "a caption is required"));
    }
    let config = session_config(
        &request.config,
        &state.config.default_model,
        state.engines.evidence.is_some(),
    )?;
    let image = match (&request.image_url, &request.image_base64) {
        (Some(_), Some(_)) => return Err(ApiError::field("image", "give image_url or image_base64, not both")),
        (None, None) => return Err(ApiError::field("image", "image_url or image_base64 is required")),
        (None, Some(b64)) => {
            let bytes = base64::engine::general_purpose::STANDARD
                .decode(b64.trim())
                .map_err(|e| ApiError::field("image_base64", e.to_string()))?;
            if bytes.is_empty() {
                return Err(ApiError::field("image_base64", "image is empty"));
            }
            ImageRef::from_bytes(bytes)
        }
        (Some(url), None) => ImageRef::fetch_url(&state.http, url)
            .await
            .map_err(|e| ApiError::field("image_url", e.to_string()))?,
    };

    let id = uuid::Uuid::new_v4().simple().to_string();
    let meta = SessionMeta {
        id: id.clone(),
        created_at: state.engines.clock.now(),
        caption: caption.to_string(),
        image,
        config,
    };
    let log = match &state.store {
        Some(store) => {
            store.save_session_meta(&meta)?;
            EventLog::open(&id, &store.events_path(&id)).map_err(|e| ApiError::Internal(e.to_string()))?
        }
        None => EventLog::in_memory(&id),
    };
    let log = Arc::new(log);
    let roster = meta.config.debaters().map(|a| (a.id.clone(), a.kind)).collect();
    let hub = Arc::new(SessionHub::new(log.clone(), roster, state.config.human_timeout));
    let handle = Arc::new(SessionHandle {
        meta,
        log,
        hub: Some(hub.clone()),
    });
    state
        .sessions
        .write()
        .expect("sessions poisoned")
        .insert(id.clone(), handle.clone());
    tokio::spawn(run(state.clone(), handle, hub));
    info!(session = id, "session created");
    Ok((
        StatusCode::CREATED,
        Json(json!({ "id": id, "events_url": format!("/sessions/{id}/events") })),
    )
        .into_response())
}

async fn run(state: Arc<AppState>, handle: Arc<SessionHandle>, hub: Arc<SessionHub>) {
    let meta = &handle.meta;
    let pair = ImageTextPair::new(meta.image.clone(), meta.caption.clone());
    let engines = &state.engines;
    let mut evidence_usage = Vec::new();
    let bundle = match (&engines.evidence, meta.config.evidence_enabled) {
        (Some(pipeline), true) => match pipeline.build(&pair.image, engines.backend.as_ref()).await {
            Ok(built) => {
                hub.emit(
                    EventKind::EvidenceReady,
                    json!({ "enabled": true, "digest": built.bundle.digest(built.cache_hit) }),
                );
                evidence_usage = built.usage;
                Some(built.bundle)
            }
            Err(e) => {
                hub.terminate();
                hub.emit(
                    EventKind::Error,
                    json!({ "message": format!("evidence: {e}"), "partial": null }),
                );
                return;
            }
        },
        _ => {
            hub.emit(EventKind::EvidenceReady, json!({ "enabled": false, "digest": null }));
            None
        }
    };

    let mut rt = DebateRuntime::new(engines.backend.clone())
        .with_clock(engines.clock.clone())
        .with_observer(hub.clone())
        .with_human(hub.clone());
    if let Some(search) = &engines.text_search {
        rt = rt.with_text_search(search.clone());
    }
    let outcome = run_session(&pair, bundle.as_ref(), &meta.config, &rt).await;
    hub.terminate();
    let (result, error) = match outcome {
        Ok(result) => {
            hub.emit(
                EventKind::Verdict,
                serde_json::to_value(&result).expect("result serializes"),
            );
            (result, None)
        }
        Err(e) => {
            let partial = e.partial().cloned();
            hub.emit(
                EventKind::Error,
                json!({ "message": e.to_string(), "partial": partial }),
            );
            match partial {
                Some(p) => (p, Some(e.to_string())),
                None => return,
            }
        }
    };
    if let Some(store) = &state.store {
        let cost_usd = state
            .config
            .prices
            .as_ref()
            .and_then(|p| estimate_cost(result.usage.iter().chain(evidence_usage.iter()), p).ok());
        let file = TranscriptFile {
            schema_version: TRANSCRIPT_SCHEMA_VERSION,
            session_id: meta.id.clone(),
            created_at: meta.created_at,
            image: meta.image.clone(),
            caption: meta.caption.clone(),
            config: meta.config.clone(),
            evidence: bundle,
            result,
            evidence_usage,
            cost_usd,
            error,
        };
        if let Err(e) = file.save(store.transcript_path(&meta.id)) {
            warn!(session = meta.id, "cannot save transcript: {e}");
        }
    }
}

#[derive(Debug, Serialize)]
struct SessionView {
    id: String,
    created_at: chrono::DateTime<chrono::Utc>,
    caption: String,
    image: String,
    config: DebateConfig,
    status: SessionStatus,
    last_seq: u64,
    awaiting: Option<Value>,
    evidence: Option<Value>,
    result: Option<SessionResult>,
    error: Option<String>,
}

fn view(handle: &SessionHandle) -> SessionView {
    let events = handle.log.snapshot();
    let find = |kind: EventKind| events.iter().rev().find(|e| e.kind == kind);
    let status = status_of(&events);
    SessionView {
        id: handle.meta.id.clone(),
        created_at: handle.meta.created_at,
        caption: handle.meta.caption.clone(),
        image: handle.meta.image.locator(),
        config: handle.meta.config.clone(),
        status,
        last_seq: events.last().map_or(0, |e| e.seq),
        awaiting: (status == SessionStatus::AwaitingHuman)
            .then(|| find(EventKind::AwaitingHuman).map(|e| e.payload.clone()))
            .flatten(),
        evidence: find(EventKind::EvidenceReady).map(|e| e.payload.clone()),
        result: find(EventKind::Verdict).and_then(|e| serde_json::from_value(e.payload.clone()).ok()),
        error: find(EventKind::Error).and_then(|e| e.payload.get("message").and_then(Value::as_str).map(String::from)),
    }
}

async fn list_sessions(State(state): State<Arc<AppState>>) -> Json<Value> {
    let sessions = state.sessions.read().expect("sessions poisoned");
    let mut rows: Vec<(chrono::DateTime<chrono::Utc>, Value)> = sessions
        .values()
        .map(|h| {
            let events = h.log.snapshot();
            (
                h.meta.created_at,
                json!({ "id": h.meta.id, "caption": h.meta.caption, "status": status_of(&events) }),
            )
        })
        .collect();
    rows.sort_by_key(|a| a.0);
    Json(Value::Array(rows.into_iter().map(|(_, v)| v).collect()))
}

fn session_or_404(state: &AppState, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
    state
        .session(id)
        .ok_or_else(|| ApiError::NotFound(format!("unknown session `{id}`")))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let handle = session_or_404(&state, &id)?;
    Ok(Json(serde_json::to_value(view(&handle)).expect("view serializes")))
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    after: Option<u64>,
}

/// Ordered events after `after`, then live events until a terminal one.
pub fn event_stream(log: Arc<EventLog>, after: u64) -> impl Stream<Item = SessionEvent> + Send {
    let rx = log.subscribe();
    futures::stream::unfold(
        (log, rx, after, std::collections::VecDeque::<SessionEvent>::new(), false),
        |(log, mut rx, mut cursor, mut buffer, mut done)| async move {
            loop {
                if let Some(event) = buffer.pop_front() {
                    cursor = event.seq;
                    done = event.kind.is_terminal();
                    return Some((event, (log, rx, cursor, buffer, done)));
                }
                if done {
                    return None;
                }
                rx.borrow_and_update();
                let fresh = log.since(cursor);
                if !fresh.is_empty() {
                    buffer.extend(fresh);
                    continue;
                }
                if log.is_closed() || rx.changed().await.is_err() {
                    return None;
                }
            }
        },
    )
}

async fn stream_events(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(query): Query<EventsQuery>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let handle = session_or_404(&state, &id)?;
    let last_event_id = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok());
    let after = last_event_id.or(query.after).unwrap_or(0);
    let stream = futures::StreamExt::map(event_stream(handle.log.clone(), after), |e| {
        Ok(Event::default()
            .id(e.seq.to_string())
            .event(e.kind.name())
            .data(serde_json::to_string(&e).expect("event serializes")))
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TurnRequest {
    agent_id: String,
    text: String,
}

async fn post_turn(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let handle = session_or_404(&state, &id)?;
    let request: TurnRequest = parse_body(&body)?;
    if request.text.trim().is_empty() {
        return Err(ApiError::field("text", "must not be empty"));
    }
    let terminated = || ApiError::Conflict {
        code: "terminated",
        message: format!("session `{id}` has terminated"),
    };
    let hub = handle.hub.as_ref().ok_or_else(terminated)?;
    match hub.submit(&request.agent_id, request.text).await {
        Ok(turn) => Ok((StatusCode::OK, Json(turn)).into_response()),
        Err(TurnError::Terminated) => Err(terminated()),
        Err(e @ TurnError::UnknownAgent(_)) => Err(ApiError::field("agent_id", e.to_string())),
        Err(e @ TurnError::NotHuman(_)) => Err(ApiError::Conflict {
            code: "not_human",
            message: e.to_string(),
        }),
        Err(e @ TurnError::OutOfTurn { .. }) => Err(ApiError::Conflict {
            code: "out_of_turn",
            message: e.to_string(),
        }),
        Err(e @ TurnError::SlotClosed) => Err(ApiError::Conflict {
            code: "slot_closed",
            message: e.to_string(),
        }),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InsightInput {
    verdict: String,
    explanation: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StudyItemInput {
    item_id: Option<String>,
    caption: Option<String>,
    image_url: Option<String>,
    label: Label,
    insight: Option<InsightInput>,
    /// A finished session whose verdict and explanation become the insight.
    session_id: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateStudy {
    items: Vec<StudyItemInput>,
}

async fn create_study(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let request: CreateStudy = parse_body(&body)?;
    let mut items = Vec::with_capacity(request.items.len());
    for (i, input) in request.items.into_iter().enumerate() {
        let field = |name: &str| format!("items[{i}].{name}");
        let (insight, session_caption) = match (input.insight, &input.session_id) {
            (Some(_), Some(_)) => {
                return Err(ApiError::field(
                    field("insight"),
                    "give insight or session_id, not both",
                ));
            }
            (None, None) => return Err(ApiError::field(field("insight"), "insight or session_id is required")),
            (Some(raw), None) => {
                let verdict = parse_answer(&raw.verdict).map_err(|m| ApiError::field(field("insight.verdict"), m))?;
                (
                    Insight {
                        verdict,
                        explanation: raw.explanation,
                    },
                    None,
                )
            }
            (None, Some(session_id)) => {
                let handle = state
                    .session(session_id)
                    .ok_or_else(|| ApiError::field(field("session_id"), format!("unknown session `{session_id}`")))?;
                let result = view(&handle).result.ok_or_else(|| {
                    ApiError::field(field("session_id"), format!("session `{session_id}` has no verdict"))
                })?;
                (
                    Insight {
                        verdict: result.final_verdict,
                        explanation: result.explanation,
                    },
                    Some(handle.meta.caption.clone()),
                )
            }
        };
        items.push(StudyItem {
            item_id: input.item_id.unwrap_or_else(|| format!("item-{}", i + 1)),
            caption: input.caption.or(session_caption).unwrap_or_default(),
            image_url: input.image_url,
            label: input.label,
            insight,
        });
    }
    let id = uuid::Uuid::new_v4().simple().to_string();
    let study = Study::new(&id, items, state.engines.clock.now())?;
    if let Some(store) = &state.store {
        store.save_study(&study)?;
    }
    let count = study.items.len();
    state
        .studies
        .write()
        .expect("studies poisoned")
        .insert(id.clone(), Arc::new(Mutex::new(study)));
    Ok((StatusCode::CREATED, Json(json!({ "id": id, "items": count }))).into_response())
}

async fn get_study(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let study = state.study(&id)?;
    let study = study.lock().expect("study poisoned");
    // Labels and insights stay hidden until revealed.
    let items: Vec<Value> = study
        .items
        .iter()
        .map(|i| json!({ "item_id": i.item_id, "caption": i.caption, "image_url": i.image_url }))
        .collect();
    Ok(Json(
        json!({ "id": study.id, "created_at": study.created_at, "items": items }),
    ))
}

async fn post_response(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let input: AnswerInput = parse_body(&body)?;
    let study = state.study(&id)?;
    let mut study = study.lock().expect("study poisoned");
    let entry = study.answer(input, chrono::Utc::now())?;
    if let Some(store) = &state.store {
        store.append_study_entry(&id, &entry)?;
    }
    Ok((StatusCode::CREATED, Json(entry)).into_response())
}

async fn list_responses(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let study = state.study(&id)?;
    let study = study.lock().expect("study poisoned");
    Ok(Json(study.responses()).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RevealRequest {
    participant_id: String,
    item_id: String,
}

async fn reveal(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let request: RevealRequest = parse_body(&body)?;
    let study = state.study(&id)?;
    let mut study = study.lock().expect("study poisoned");
    let (insight, entry) = study.reveal(&request.participant_id, &request.item_id, chrono::Utc::now())?;
    if let (Some(store), Some(entry)) = (&state.store, &entry) {
        store.append_study_entry(&id, entry)?;
    }
    Ok(Json(json!({ "item_id": request.item_id, "insight": insight })).into_response())
}

#[derive(Debug, Deserialize)]
struct SummaryQuery {
    format: Option<String>,
}

async fn summary(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(query): Query<SummaryQuery>,
) -> Result<Response, ApiError> {
    let study = state.study(&id)?;
    let summary = study.lock().expect("study poisoned").summary();
    match query.format.as_deref() {
        Some("markdown") => Ok((
            [(header::CONTENT_TYPE, "text/markdown; charset=utf-8")],
            summary.to_string(),
        )
            .into_response()),
        None | Some("json") => Ok(Json(summary).into_response()),
        Some(other) => Err(ApiError::field(
            "format",
            format!("unknown format `{other}` (json or markdown)"),
        )),
    }
}
