//! HTTP service over a [`SessionStore`].

use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use npcbench::verify::{SessionStore, StoreError, SCHEMA_VERSION};

type Shared = Arc<Mutex<SessionStore>>;

/// Serializes `v` (an object) and stamps it with the schema version.
fn versioned<T: Serialize>(v: T) -> Json<Value> {
    let mut value = serde_json::to_value(v).expect("payload serializes");
    if let Value::Object(m) = &mut value {
        m.insert("schema_version".into(), json!(SCHEMA_VERSION));
    }
    Json(value)
}

pub struct ApiError(StoreError);

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self.0 {
            StoreError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            StoreError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            StoreError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        if status.is_server_error() {
            tracing::error!(error = %self.0, "request failed");
        }
        let body = json!({"schema_version": SCHEMA_VERSION, "error": {"kind": kind, "message": self.0.to_string()}});
        (status, Json(body)).into_response()
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

fn lock(s: &Shared) -> std::sync::MutexGuard<'_, SessionStore> {
    s.lock().unwrap_or_else(|p| p.into_inner())
}

async fn scenes(State(s): State<Shared>) -> ApiResult {
    Ok(versioned(json!({"scenes": lock(&s).scenes()})))
}

async fn bev(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult {
    Ok(versioned(lock(&s).bev(&id)?))
}

#[derive(Debug, Default, Deserialize)]
pub struct StartReferring {
    #[serde(default)]
    pub scene_id: Option<String>,
}

fn scene_or_first(store: &SessionStore, id: Option<String>) -> Result<String, StoreError> {
    match id {
        Some(id) => Ok(id),
        None => store.scenes().first().map(|s| s.scene_id.clone()).ok_or_else(|| StoreError::NotFound("no scenes loaded".into())),
    }
}

async fn referring_start(State(s): State<Shared>, Json(req): Json<StartReferring>) -> ApiResult {
    let mut store = lock(&s);
    let scene = scene_or_first(&store, req.scene_id)?;
    Ok(versioned(store.start_referring(&scene)?))
}

#[derive(Debug, Deserialize)]
pub struct Select {
    pub instance_id: String,
}

async fn referring_select(State(s): State<Shared>, Path(round): Path<String>, Json(req): Json<Select>) -> ApiResult {
    Ok(versioned(lock(&s).select(&round, &req.instance_id)?))
}

async fn round_view(State(s): State<Shared>, Path(round): Path<String>) -> ApiResult {
    Ok(versioned(lock(&s).round_view(&round)?))
}

#[derive(Debug, Deserialize)]
pub struct StartGrounding {
    #[serde(default)]
    pub scene_id: Option<String>,
    pub description: String,
    /// The object the client had in mind, if scoring is wanted.
    #[serde(default)]
    pub expected: Option<String>,
}

async fn grounding_start(State(s): State<Shared>, Json(req): Json<StartGrounding>) -> ApiResult {
    let mut store = lock(&s);
    let scene = scene_or_first(&store, req.scene_id)?;
    Ok(versioned(store.ground(&scene, &req.description, req.expected.as_deref())?))
}

async fn accuracy(State(s): State<Shared>) -> ApiResult {
    let store = lock(&s);
    let (r, g) = (store.referring_accuracy(), store.grounding_accuracy());
    Ok(versioned(json!({
        "referring": {"correct": r.correct, "total": r.total, "accuracy": r.value()},
        "grounding": {"correct": g.correct, "total": g.total, "accuracy": g.value()},
    })))
}

#[derive(Debug, Deserialize)]
pub struct Message {
    pub text: String,
}

async fn dialogue_message(State(s): State<Shared>, Path(ep): Path<String>, Json(req): Json<Message>) -> ApiResult {
    Ok(versioned(lock(&s).message(&ep, &req.text)?))
}

async fn dialogue_transcript(State(s): State<Shared>, Path(ep): Path<String>) -> ApiResult {
    Ok(versioned(lock(&s).transcript(&ep)?))
}

pub fn router(store: SessionStore) -> Router {
    let state: Shared = Arc::new(Mutex::new(store));
    Router::new()
        .route("/scenes", get(scenes))
        .route("/scenes/{id}/bev", get(bev))
        .route("/verify/referring/start", post(referring_start))
        .route("/verify/referring/{round_id}/select", post(referring_select))
        .route("/verify/rounds/{round_id}", get(round_view))
        .route("/verify/grounding/start", post(grounding_start))
        .route("/verify/accuracy", get(accuracy))
        .route("/dialogue/{episode_id}/message", post(dialogue_message))
        .route("/dialogue/{episode_id}", get(dialogue_transcript))
        .with_state(state)
}
