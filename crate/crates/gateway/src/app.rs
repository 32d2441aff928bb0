//! HTTP API over the pipeline, with a review gate between anonymization and
//! provider dispatch.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use shroud_core::anonymizer::AnonymizeError;
use shroud_core::detection::EntityKey;
use shroud_core::mapping::{new_session_id, MappingError, SessionStore, StoreError};
use shroud_core::pipeline::{Pipeline, PipelineError};
use shroud_core::provider::{AnswerProvider, ProviderTag};
use shroud_core::retrieval::RetrievalError;

use crate::session::{GatewaySession, Phase, SessionEnvelope};

/// Answer backends by tag, plus the one used when a request names none.
#[derive(Clone)]
pub struct Providers {
    default: ProviderTag,
    by_tag: HashMap<ProviderTag, Arc<dyn AnswerProvider>>,
}

impl Providers {
    pub fn new(default: ProviderTag) -> Self {
        Self { default, by_tag: HashMap::new() }
    }

    pub fn with(mut self, tag: ProviderTag, provider: Arc<dyn AnswerProvider>) -> Self {
        self.by_tag.insert(tag, provider);
        self
    }

    pub fn default_tag(&self) -> ProviderTag {
        self.default
    }

    pub fn get(&self, tag: ProviderTag) -> Option<Arc<dyn AnswerProvider>> {
        self.by_tag.get(&tag).cloned()
    }
}

pub struct AppState {
    pub pipeline: Arc<Pipeline>,
    pub store: Arc<SessionStore<GatewaySession>>,
    pub providers: Providers,
    seed: Option<u64>,
    opened: AtomicU64,
}

impl AppState {
    pub fn new(pipeline: Pipeline, providers: Providers, seed: Option<u64>) -> Arc<Self> {
        Arc::new(Self {
            pipeline: Arc::new(pipeline),
            store: Arc::new(SessionStore::new()),
            providers,
            seed,
            opened: AtomicU64::new(0),
        })
    }

    fn session_rng(&self) -> ChaCha8Rng {
        let n = self.opened.fetch_add(1, Ordering::Relaxed);
        match self.seed {
            Some(seed) => ChaCha8Rng::seed_from_u64(seed ^ n.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            None => ChaCha8Rng::from_rng(&mut rand::rng()),
        }
    }
}

/// Error body `{code, message}` with its status.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::warn!(status = self.status.as_u16(), code = self.code, "request failed");
        }
        (self.status, Json(json!({ "code": self.code, "message": self.message }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, "session_not_found", e.to_string()),
            StoreError::Closed(_) => ApiError::new(StatusCode::GONE, "session_closed", e.to_string()),
        }
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let (status, code) = match &e {
            PipelineError::Query(_) => (StatusCode::BAD_REQUEST, "bad_question"),
            PipelineError::Retrieval(RetrievalError::InvalidK) => (StatusCode::BAD_REQUEST, "bad_k"),
            PipelineError::Retrieval(_) => (StatusCode::BAD_GATEWAY, "retrieval_failed"),
            PipelineError::Detection(_) => (StatusCode::BAD_GATEWAY, "detector_unavailable"),
            PipelineError::Provider(_) => (StatusCode::BAD_GATEWAY, "provider_failed"),
            PipelineError::Anonymize(AnonymizeError::LeakGuard { .. }) => (StatusCode::UNPROCESSABLE_ENTITY, "leak_guard"),
            PipelineError::Mapping(MappingError::SessionClosed) => (StatusCode::GONE, "session_closed"),
            PipelineError::Mapping(MappingError::RetryBudgetExhausted { .. } | MappingError::Generator { .. }) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "surrogate_generation_failed")
            }
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

fn wrong_phase(phase: Phase, wanted: &str) -> ApiError {
    let message = match phase {
        Phase::Answered => format!("already answered; send a follow-up query before {wanted}"),
        Phase::Analyzed => format!("no pending query; send one before {wanted}"),
        _ => format!("cannot {wanted} in phase {phase:?}"),
    };
    ApiError::new(StatusCode::CONFLICT, "wrong_phase", message)
}

/// Parses an optional JSON body; an empty body yields the default.
fn optional_body<T: for<'de> Deserialize<'de> + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_body", e.to_string()))
}

fn required_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_body", e.to_string()))
}

/// Runs `f` on the locked session in the blocking pool, so pipeline work
/// never stalls the async workers and each session is handled serially.
async fn with_session<R: Send + 'static>(
    state: &Arc<AppState>,
    id: &str,
    f: impl FnOnce(&AppState, &mut GatewaySession) -> Result<R, ApiError> + Send + 'static,
) -> Result<R, ApiError> {
    let slot: Arc<Mutex<GatewaySession>> = state.store.get(id)?;
    let state = Arc::clone(state);
    tokio::task::spawn_blocking(move || {
        let mut session = slot.lock().unwrap_or_else(|p| p.into_inner());
        if session.phase == Phase::Closed {
            return Err(ApiError::new(StatusCode::GONE, "session_closed", "session is closed"));
        }
        f(&state, &mut session)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

#[derive(Serialize)]
struct Created {
    session_id: String,
}

async fn create_session(State(state): State<Arc<AppState>>) -> (StatusCode, Json<Created>) {
    let id = new_session_id();
    state.store.insert(id.clone(), GatewaySession::new(&id, state.session_rng()));
    tracing::info!(session = %id, "session opened");
    (StatusCode::CREATED, Json(Created { session_id: id }))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionEnvelope>, ApiError> {
    with_session(&state, &id, |_, s| Ok(s.envelope())).await.map(Json)
}

#[derive(Deserialize)]
struct QueryBody {
    question: String,
    k: Option<usize>,
}

async fn query(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SessionEnvelope>, ApiError> {
    let body: QueryBody = required_body(&body)?;
    let envelope = with_session(&state, &id, move |state, s| {
        let prepared = state.pipeline.prepare(&body.question, body.k)?;
        let (mapping, rng) = (&mut s.mapping, &mut s.rng);
        let payload = state.pipeline.bind(&prepared, mapping, rng)?;
        tracing::info!(
            session = %mapping.session_id(),
            entities = prepared.entities.len(),
            chunks = prepared.retrieved.len(),
            "payload ready for review"
        );
        s.prepared = Some(prepared);
        s.payload = Some(payload);
        s.answer = None;
        s.phase = Phase::AwaitingApproval;
        Ok(s.envelope())
    })
    .await?;
    Ok(Json(envelope))
}

#[derive(Deserialize)]
struct RerollBody {
    entity_key: String,
}

async fn reroll(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SessionEnvelope>, ApiError> {
    let body: RerollBody = required_body(&body)?;
    let key: EntityKey = body
        .entity_key
        .parse()
        .map_err(|e: shroud_core::detection::DetectionError| ApiError::new(StatusCode::BAD_REQUEST, "bad_entity_key", e.to_string()))?;
    let envelope = with_session(&state, &id, move |state, s| {
        if s.phase != Phase::AwaitingApproval {
            return Err(wrong_phase(s.phase, "reroll"));
        }
        let prepared = s.prepared.as_ref().expect("awaiting approval implies a prepared query");
        if !prepared.entities.contains(&key) {
            return Err(ApiError::new(StatusCode::NOT_FOUND, "entity_not_found", format!("no entity {key} in the pending query")));
        }
        s.mapping.reroll(&key, &mut s.rng).map_err(PipelineError::from)?;
        s.payload = Some(state.pipeline.anonymize(prepared, &s.mapping)?);
        Ok(s.envelope())
    })
    .await?;
    Ok(Json(envelope))
}

#[derive(Default, Deserialize)]
struct ApproveBody {
    provider: Option<String>,
}

async fn approve(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SessionEnvelope>, ApiError> {
    let body: ApproveBody = optional_body(&body)?;
    let tag = match body.provider {
        Some(p) => p.parse::<ProviderTag>().map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_provider", e))?,
        None => state.providers.default_tag(),
    };
    let provider = state.providers.get(tag).ok_or_else(|| {
        ApiError::new(StatusCode::BAD_REQUEST, "provider_not_configured", format!("provider {tag} is not configured"))
    })?;
    let envelope = with_session(&state, &id, move |state, s| {
        if s.phase != Phase::AwaitingApproval {
            return Err(wrong_phase(s.phase, "approve"));
        }
        let prepared = s.prepared.as_ref().expect("awaiting approval implies a prepared query");
        let payload = s.payload.as_ref().expect("awaiting approval implies a payload");
        let pair = state.pipeline.answer(prepared, payload, &s.mapping, provider.as_ref())?;
        tracing::info!(
            session = %s.mapping.session_id(),
            provider = %tag,
            restorations = pair.restorations.len(),
            unresolved = pair.unresolved.len(),
            "answer restored"
        );
        s.answer = Some(pair);
        s.phase = Phase::Answered;
        Ok(s.envelope())
    })
    .await?;
    Ok(Json(envelope))
}

async fn delete_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    state.store.close(&id)?;
    tracing::info!(session = %id, "session closed");
    Ok(StatusCode::NO_CONTENT)
}

/// What the session store still holds in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreStats {
    pub open_sessions: usize,
    pub retained_mappings: usize,
}

async fn store_stats(State(state): State<Arc<AppState>>) -> Json<StoreStats> {
    let store = Arc::clone(&state.store);
    let stats = tokio::task::spawn_blocking(move || StoreStats {
        open_sessions: store.open_count(),
        retained_mappings: store.retained_mappings(),
    })
    .await
    .expect("stats task panicked");
    Json(stats)
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "documents": state.pipeline.corpus().len() }))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/query", post(query))
        .route("/sessions/{id}/reroll", post(reroll))
        .route("/sessions/{id}/approve", post(approve))
        .route("/debug/store", get(store_stats))
        .with_state(state)
}

/// Closes idle sessions every `every` until the runtime shuts down.
pub fn spawn_purger(store: Arc<SessionStore<GatewaySession>>, ttl: Duration, every: Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(every);
        loop {
            tick.tick().await;
            let store = Arc::clone(&store);
            let closed = tokio::task::spawn_blocking(move || store.purge_idle(ttl)).await.unwrap_or(0);
            if closed > 0 {
                tracing::info!(closed, "idle sessions expired");
            }
        }
    })
}
