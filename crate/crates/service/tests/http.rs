use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tagmap_core::evaluation::MeshBuilder;
use tagmap_core::geometry::Aabb;
use tagmap_core::grounding::{ChatMessage, LlmProvider, ProviderError, ScriptedProvider, ToolBox};
use tagmap_core::store::TagMap;
use tagmap_core::LocalizationParams;
use tagmap_service::{router, AppState};
use tower::ServiceExt;

fn lab(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/lab").join(name)
}

fn app_with(provider: Arc<dyn LlmProvider>) -> Router {
    let map = Arc::new(TagMap::load(lab("map.json")).unwrap());
    let toolbox = ToolBox::new(map, LocalizationParams::default());
    let mut mesh = MeshBuilder::new();
    mesh.add_box(&Aabb::from_arrays([0.0; 3], [1.0; 3]).unwrap(), 1.0);
    router(Arc::new(AppState::new(toolbox, provider, 8).with_mesh(mesh.build().unwrap())))
}

fn app() -> Router {
    app_with(Arc::new(ScriptedProvider::load(lab("mock_script.json")).unwrap()))
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, String) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn get_json(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (s, b) = send(app, "GET", uri, None).await;
    (s, serde_json::from_str(&b).unwrap())
}

async fn new_session(app: &Router) -> String {
    let (status, body) = send(app, "POST", "/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED);
    let v: Value = serde_json::from_str(&body).unwrap();
    v["id"].as_str().unwrap().to_string()
}

/// (event name, data) pairs of an SSE body.
fn sse_events(body: &str) -> Vec<(String, Value)> {
    body.split("\n\n")
        .filter(|chunk| !chunk.trim().is_empty())
        .map(|chunk| {
            let mut name = String::new();
            let mut data = String::new();
            for line in chunk.lines() {
                if let Some(v) = line.strip_prefix("event:") {
                    name = v.trim().to_string();
                } else if let Some(v) = line.strip_prefix("data:") {
                    data.push_str(v.trim_start());
                }
            }
            (name, serde_json::from_str(&data).unwrap())
        })
        .collect()
}

#[tokio::test]
async fn health_and_map_endpoints() {
    let app = app();
    let (status, v) = get_json(&app, "/health").await;
    assert_eq!((status, v["status"].as_str()), (StatusCode::OK, Some("ok")));

    let (_, v) = get_json(&app, "/map/tags").await;
    let tags: Vec<&str> = v["tags"].as_array().unwrap().iter().map(|t| t.as_str().unwrap()).collect();
    assert!(tags.contains(&"microwave") && tags.windows(2).all(|w| w[0] < w[1]));

    let (status, v) = get_json(&app, "/map/localize?tag=Microwave").await;
    assert_eq!(status, StatusCode::OK);
    let first = &v["proposals"][0];
    assert!(first["confidence_level"].as_u64().unwrap() >= 1);
    assert_eq!(first["aabb"]["min"].as_array().unwrap().len(), 3);

    let (_, v) = get_json(&app, "/map/localize?tag=unicorn").await;
    assert_eq!(v["proposals"], json!([]));
    assert!(v["note"].is_string());
    let (status, _) = get_json(&app, "/map/localize").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, v) = get_json(&app, "/scene/mesh").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["triangles"].as_array().unwrap().len(), 12);
}

#[tokio::test]
async fn mock_turn_streams_events_and_sets_the_goal() {
    let app = app();
    let id = new_session(&app).await;
    let (_, v) = get_json(&app, &format!("/sessions/{id}/goal")).await;
    assert_eq!(v["goal"], Value::Null);

    let (status, body) =
        send(&app, "POST", &format!("/sessions/{id}/message"), Some(json!({"text": "Please heat up my lunch"}))).await;
    assert_eq!(status, StatusCode::OK);
    let events = sse_events(&body);
    let names: Vec<&str> = events.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["tool_call", "tool_result", "tool_call", "tool_result", "goal", "reply", "done"]);
    assert_eq!(events[0].1["name"], "localize_tag");
    let streamed_goal = events[4].1["goal"].clone();

    let (_, v) = get_json(&app, &format!("/sessions/{id}/goal")).await;
    assert_eq!(v["goal"]["tag"], "microwave");
    assert_eq!(v["goal"], streamed_goal);

    let (_, transcript) = get_json(&app, &format!("/sessions/{id}")).await;
    let roles: Vec<&str> = transcript["messages"].as_array().unwrap().iter().map(|m| m["role"].as_str().unwrap()).collect();
    assert_eq!(roles, ["system", "user", "assistant", "tool", "assistant", "tool", "assistant"]);
}

#[tokio::test]
async fn sessions_are_independent() {
    let app = app();
    let (a, b) = (new_session(&app).await, new_session(&app).await);
    assert_ne!(a, b);
    send(&app, "POST", &format!("/sessions/{a}/message"), Some(json!({"text": "Get me something to read"}))).await;
    let (_, va) = get_json(&app, &format!("/sessions/{a}/goal")).await;
    let (_, vb) = get_json(&app, &format!("/sessions/{b}/goal")).await;
    assert_eq!(va["goal"]["tag"], "magazine");
    assert_eq!(vb["goal"], Value::Null);
}

#[tokio::test]
async fn concurrent_turns_on_one_session_are_serialized() {
    let app = app();
    let id = new_session(&app).await;
    let uri = format!("/sessions/{id}/message");
    let queries = ["Please heat up my lunch", "Get me something to read", "Please take out the trash"];
    let turns = queries.map(|q| {
        let (app, uri) = (app.clone(), uri.clone());
        tokio::spawn(async move { send(&app, "POST", &uri, Some(json!({"text": q}))).await })
    });
    for t in turns {
        let (status, body) = t.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        assert_eq!(sse_events(&body).last().unwrap().0, "done");
    }
    // Each turn is a contiguous block starting with its user message.
    let (_, transcript) = get_json(&app, &format!("/sessions/{id}")).await;
    let messages = transcript["messages"].as_array().unwrap();
    let users: Vec<usize> = messages.iter().enumerate().filter(|(_, m)| m["role"] == "user").map(|(i, _)| i).collect();
    assert_eq!(users.len(), 3);
    for w in users.windows(2) {
        assert_eq!(w[1] - w[0], 6, "turns interleaved");
    }
}

#[tokio::test]
async fn bad_requests() {
    let app = app();
    let (status, _) = send(&app, "POST", "/sessions/nope/message", Some(json!({"text": "hi"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = get_json(&app, "/sessions/nope/goal").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let id = new_session(&app).await;
    let (status, _) = send(&app, "POST", &format!("/sessions/{id}/message"), Some(json!({"text": "   "}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, body) = send(&app, "POST", &format!("/sessions/{id}/message"), Some(json!({"txt": 1}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
}

struct Down;

impl LlmProvider for Down {
    fn complete(&self, _: &[ChatMessage], _: &Value) -> Result<ChatMessage, ProviderError> {
        Err(ProviderError::Unreachable("connection refused".into()))
    }
}

#[tokio::test]
async fn provider_outage_is_reported_as_retriable() {
    let app = app_with(Arc::new(Down));
    let id = new_session(&app).await;
    let (status, body) = send(&app, "POST", &format!("/sessions/{id}/message"), Some(json!({"text": "hi"}))).await;
    assert_eq!(status, StatusCode::OK);
    let events = sse_events(&body);
    assert_eq!(events.len(), 1);
    assert_eq!(events[0].0, "error");
    assert_eq!(events[0].1["retriable"], true);
    let (_, transcript) = get_json(&app, &format!("/sessions/{id}")).await;
    assert_eq!(transcript["messages"].as_array().unwrap().len(), 1);
}
