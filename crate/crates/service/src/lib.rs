//! HTTP front end of the grounding loop.
//!
//! Sessions live in memory. Each session has its own async mutex, so turns on
//! one session run one after another while different sessions proceed in
//! parallel; the tag map and tool box are shared read-only. A turn runs on the
//! blocking pool (providers are synchronous) and its events are streamed back
//! to the client as server-sent events.

use std::collections::HashMap;
use std::convert::Infallible;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tagmap_core::evaluation::SceneMesh;
use tagmap_core::grounding::{chat_turn, ChatSession, LlmProvider, ToolBox, TurnEvent};
use tokio::sync::{mpsc, Mutex as AsyncMutex};

type SessionHandle = Arc<AsyncMutex<ChatSession>>;

/// Everything the handlers share.
pub struct AppState {
    toolbox: Arc<ToolBox>,
    provider: Arc<dyn LlmProvider>,
    mesh: Option<Arc<SceneMesh>>,
    max_rounds: usize,
    tags: Vec<String>,
    sessions: Mutex<HashMap<String, SessionHandle>>,
}

impl AppState {
    pub fn new(toolbox: ToolBox, provider: Arc<dyn LlmProvider>, max_rounds: usize) -> Self {
        let tags = toolbox.map().unique_tags();
        Self {
            toolbox: Arc::new(toolbox),
            provider,
            mesh: None,
            max_rounds: max_rounds.max(1),
            tags,
            sessions: Mutex::new(HashMap::new()),
        }
    }

    /// Serves the mesh at `/scene/mesh` for the viewer.
    pub fn with_mesh(mut self, mesh: SceneMesh) -> Self {
        self.mesh = Some(Arc::new(mesh));
        self
    }

    fn session(&self, id: &str) -> Option<SessionHandle> {
        self.sessions.lock().expect("session table lock").get(id).cloned()
    }
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    fn no_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("no session `{id}`"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/message", post(post_message))
        .route("/sessions/{id}/goal", get(get_goal))
        .route("/map/tags", get(map_tags))
        .route("/map/localize", get(map_localize))
        .route("/scene/mesh", get(scene_mesh))
        .with_state(state)
}

/// Serves `router(state)` on `listener` until the task is cancelled.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn create_session(State(state): State<Arc<AppState>>) -> (StatusCode, Json<Value>) {
    let id = uuid::Uuid::new_v4().to_string();
    let session = ChatSession::new(id.clone(), &state.tags);
    state.sessions.lock().expect("session table lock").insert(id.clone(), Arc::new(AsyncMutex::new(session)));
    tracing::info!(session = %id, "session created");
    (StatusCode::CREATED, Json(json!({ "id": id })))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<ChatSession>, ApiError> {
    let handle = state.session(&id).ok_or_else(|| ApiError::no_session(&id))?;
    let session = handle.lock().await;
    Ok(Json(session.clone()))
}

async fn get_goal(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let handle = state.session(&id).ok_or_else(|| ApiError::no_session(&id))?;
    let session = handle.lock().await;
    Ok(Json(json!({ "goal": session.goal })))
}

#[derive(Debug, Deserialize)]
struct MessageBody {
    text: String,
}

/// Stream items: turn events, then a terminal `done` or `error`.
#[derive(Debug, Serialize)]
#[serde(untagged)]
enum StreamItem {
    Event(TurnEvent),
    Done { r#type: &'static str, reply: String },
    Error { r#type: &'static str, message: String, retriable: bool },
}

impl StreamItem {
    fn name(&self) -> &'static str {
        match self {
            StreamItem::Event(TurnEvent::ToolCall { .. }) => "tool_call",
            StreamItem::Event(TurnEvent::ToolResult { .. }) => "tool_result",
            StreamItem::Event(TurnEvent::Goal { .. }) => "goal",
            StreamItem::Event(TurnEvent::Reply { .. }) => "reply",
            StreamItem::Done { .. } => "done",
            StreamItem::Error { .. } => "error",
        }
    }

    fn to_sse(&self) -> Event {
        Event::default().event(self.name()).data(serde_json::to_string(self).expect("stream items serialize"))
    }
}

async fn post_message(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<MessageBody>, axum::extract::rejection::JsonRejection>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let Json(body) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.body_text()))?;
    let text = body.text.trim().to_string();
    if text.is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "message text is empty"));
    }
    let handle = state.session(&id).ok_or_else(|| ApiError::no_session(&id))?;
    // Held until the turn finishes, so turns on one session never overlap.
    let mut session = handle.lock_owned().await;
    let (tx, rx) = mpsc::unbounded_channel::<StreamItem>();
    let worker_state = Arc::clone(&state);
    tokio::task::spawn_blocking(move || {
        let mut forward = |e: &TurnEvent| {
            let _ = tx.send(StreamItem::Event(e.clone()));
        };
        let result = chat_turn(
            &mut session,
            worker_state.provider.as_ref(),
            &worker_state.toolbox,
            &text,
            worker_state.max_rounds,
            &mut forward,
        );
        let last = match result {
            Ok(reply) => StreamItem::Done { r#type: "done", reply },
            Err(e) => {
                tracing::warn!(session = %session.id, error = %e, "turn failed");
                StreamItem::Error { r#type: "error", message: e.to_string(), retriable: e.is_retriable() }
            }
        };
        let _ = tx.send(last);
    });
    let events = stream::unfold(rx, |mut rx| async move {
        let item = rx.recv().await?;
        Some((Ok(item.to_sse()), rx))
    });
    Ok(Sse::new(events))
}

async fn map_tags(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({ "tags": state.tags }))
}

#[derive(Debug, Deserialize)]
struct LocalizeQuery {
    tag: Option<String>,
}

async fn map_localize(State(state): State<Arc<AppState>>, Query(q): Query<LocalizeQuery>) -> Result<Json<Value>, ApiError> {
    let tag = q.tag.filter(|t| !t.trim().is_empty()).ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing `tag`"))?;
    let toolbox = Arc::clone(&state.toolbox);
    let args = json!({ "tag": tag }).to_string();
    let outcome = tokio::task::spawn_blocking(move || toolbox.execute("localize_tag", &args))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(Json(outcome.payload))
}

async fn scene_mesh(State(state): State<Arc<AppState>>) -> Result<Json<Value>, ApiError> {
    let mesh = state.mesh.as_ref().ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no scene mesh loaded"))?;
    let vertices: Vec<[f64; 3]> = mesh.vertices().iter().map(|v| [v.x, v.y, v.z]).collect();
    Ok(Json(json!({ "vertices": vertices, "triangles": mesh.triangles() })))
}
