//! HTTP boundary for the green-building QA engine.
//!
//! | route | purpose |
//! |---|---|
//! | `POST /api/session` | start a dialogue, returns `{session_id}` |
//! | `POST /api/chat` | one turn: `{session_id, text, file_refs}` -> `{text, artifacts}` |
//! | `POST /api/upload` | multipart files for a session, returns `{stored}` |
//! | `GET /api/artifacts/{id}` | a tool-produced file |
//!
//! Every error body is `{"code": ..., "message": ...}`.

pub mod kb;

use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::multipart::{Field, MultipartError};
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::header::{CACHE_CONTROL, CONTENT_TYPE};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gbqa_core::artifacts::StoreError;
use gbqa_core::orchestrator::{Orchestrator, TurnError, TurnInput};
use gbqa_core::session::{extension_of, sanitize_file_name, SessionStore, ALLOWED_EXTENSIONS};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

/// Most files accepted in one upload request.
pub const MAX_FILES_PER_UPLOAD: usize = 16;

pub struct AppState {
    pub sessions: SessionStore,
    pub orchestrator: Orchestrator,
}

impl AppState {
    pub fn new(sessions: SessionStore, orchestrator: Orchestrator) -> Arc<Self> {
        Arc::new(AppState { sessions, orchestrator })
    }

    fn max_upload_bytes(&self) -> usize {
        self.orchestrator.config().max_upload_bytes
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApiError {
    pub code: &'static str,
    pub message: String,
    #[serde(skip)]
    pub status: StatusCode,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { code, message: message.into(), status }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

/// HTTP status for each turn error.
pub fn status_for(e: &TurnError) -> StatusCode {
    match e {
        TurnError::UnknownSession(_) => StatusCode::NOT_FOUND,
        TurnError::Busy(_) => StatusCode::CONFLICT,
        TurnError::FileNotFound(_) => StatusCode::BAD_REQUEST,
        TurnError::UnsupportedType(_) => StatusCode::UNSUPPORTED_MEDIA_TYPE,
        TurnError::TooLarge { .. } => StatusCode::PAYLOAD_TOO_LARGE,
        TurnError::StorageFailed(_) => StatusCode::INTERNAL_SERVER_ERROR,
        TurnError::Upstream(_)
        | TurnError::ToolValidationFailed { .. }
        | TurnError::UnknownTool(_)
        | TurnError::ToolRoundsExceeded { .. } => StatusCode::BAD_GATEWAY,
    }
}

impl From<TurnError> for ApiError {
    fn from(e: TurnError) -> Self {
        ApiError::new(status_for(&e), e.code(), e.to_string())
    }
}

impl From<gbqa_core::session::SessionError> for ApiError {
    fn from(e: gbqa_core::session::SessionError) -> Self {
        TurnError::from(e).into()
    }
}

impl From<MultipartError> for ApiError {
    fn from(e: MultipartError) -> Self {
        let status = e.status();
        let code = if status == StatusCode::PAYLOAD_TOO_LARGE { "too_large" } else { "bad_request" };
        ApiError::new(status, code, e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Serialize)]
struct SessionCreated {
    session_id: String,
}

async fn create_session(State(state): State<Arc<AppState>>) -> Json<SessionCreated> {
    Json(SessionCreated { session_id: state.sessions.create() })
}

#[derive(Deserialize)]
struct ChatBody {
    session_id: String,
    text: String,
    #[serde(default)]
    file_refs: Vec<String>,
}

#[derive(Serialize)]
pub struct ArtifactLink {
    pub artifact_id: String,
    pub media_type: &'static str,
    pub url: String,
}

#[derive(Serialize)]
struct ChatReply {
    text: String,
    artifacts: Vec<ArtifactLink>,
}

async fn chat(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<ChatReply> {
    let body: ChatBody = serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let mut session = state.sessions.acquire(&body.session_id)?;
    let input = TurnInput { text: body.text, uploads: Vec::new(), file_refs: body.file_refs };
    let response = state.orchestrator.handle_turn(&mut session, input).await?;
    Ok(Json(ChatReply {
        text: response.text,
        artifacts: response
            .artifacts
            .into_iter()
            .map(|a| ArtifactLink { url: format!("/api/artifacts/{}", a.artifact_id), artifact_id: a.artifact_id, media_type: a.media_type })
            .collect(),
    }))
}

#[derive(Deserialize)]
struct UploadQuery {
    session_id: Option<String>,
}

#[derive(Serialize)]
struct Stored {
    stored: Vec<String>,
}

async fn read_capped(mut field: Field<'_>, name: &str, cap: usize) -> Result<Vec<u8>, ApiError> {
    let mut bytes = Vec::new();
    while let Some(chunk) = field.chunk().await? {
        if bytes.len() + chunk.len() > cap {
            return Err(TurnError::TooLarge { name: name.to_string(), limit: cap }.into());
        }
        bytes.extend_from_slice(&chunk);
    }
    Ok(bytes)
}

/// Stores every file part of a multipart body. The session id may come as a
/// query parameter or a `session_id` text part. All files are checked before
/// any is stored, so a rejected request stores nothing.
async fn upload(
    State(state): State<Arc<AppState>>,
    Query(query): Query<UploadQuery>,
    mut multipart: Multipart,
) -> ApiResult<Stored> {
    let cap = state.max_upload_bytes();
    let mut session_id = query.session_id;
    if let Some(id) = &session_id {
        if !state.sessions.contains(id) {
            return Err(TurnError::UnknownSession(id.clone()).into());
        }
    }
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    while let Some(field) = multipart.next_field().await? {
        match field.file_name().map(str::to_string) {
            Some(raw) => {
                let name = sanitize_file_name(&raw)
                    .filter(|n| extension_of(n).is_some_and(|e| ALLOWED_EXTENSIONS.contains(&e.as_str())))
                    .ok_or_else(|| ApiError::from(TurnError::UnsupportedType(raw.clone())))?;
                if files.len() == MAX_FILES_PER_UPLOAD {
                    return Err(ApiError::bad_request(format!("at most {MAX_FILES_PER_UPLOAD} files per request")));
                }
                let bytes = read_capped(field, &name, cap).await?;
                files.push((raw, bytes));
            }
            None if field.name() == Some("session_id") => {
                session_id = Some(field.text().await?.trim().to_string());
            }
            None => {}
        }
    }
    let session_id = session_id.ok_or_else(|| ApiError::bad_request("missing session_id"))?;
    if files.is_empty() {
        return Err(ApiError::bad_request("no files in request"));
    }
    let mut session = state.sessions.acquire(&session_id)?;
    let mut stored = Vec::with_capacity(files.len());
    for (raw, bytes) in &files {
        stored.push(session.store_upload(raw, bytes, cap)?);
    }
    Ok(Json(Stored { stored }))
}

async fn artifact(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    match state.orchestrator.artifacts().read(&id) {
        Ok((bytes, media_type)) => Ok((
            [(CONTENT_TYPE, media_type), (CACHE_CONTROL, "public, max-age=31536000, immutable")],
            bytes,
        )
            .into_response()),
        Err(StoreError::NotFound(_)) => Err(ApiError::new(StatusCode::NOT_FOUND, "artifact_not_found", format!("no artifact `{id}`"))),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_failed", e.to_string())),
    }
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

/// CORS policy for the given origins; `*` allows any origin.
pub fn cors_layer(origins: &[String]) -> CorsLayer {
    let allow = if origins.iter().any(|o| o == "*") {
        AllowOrigin::from(Any)
    } else {
        AllowOrigin::list(origins.iter().filter_map(|o| HeaderValue::from_str(o.trim()).ok()))
    };
    CorsLayer::new()
        .allow_origin(allow)
        .allow_methods([Method::GET, Method::POST, Method::OPTIONS])
        .allow_headers([CONTENT_TYPE])
        .max_age(Duration::from_secs(3600))
}

pub fn router(state: Arc<AppState>, cors_origins: &[String]) -> Router {
    let body_limit = state
        .max_upload_bytes()
        .saturating_mul(MAX_FILES_PER_UPLOAD)
        .saturating_add(1 << 20);
    Router::new()
        .route("/api/session", post(create_session))
        .route("/api/chat", post(chat))
        .route("/api/upload", post(upload))
        .route("/api/artifacts/{id}", get(artifact))
        .route("/api/health", get(health))
        .fallback(fallback)
        .layer(DefaultBodyLimit::max(body_limit))
        .layer(cors_layer(cors_origins))
        .with_state(state)
}

/// Periodically drops idle sessions.
pub fn spawn_eviction(state: Arc<AppState>, every: Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(every);
        loop {
            tick.tick().await;
            state.sessions.evict_expired();
        }
    })
}
