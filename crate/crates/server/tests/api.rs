use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use futures_util::StreamExt;
use http_body_util::BodyExt;
use mesoscribe_core::session::Config;
use mesoscribe_server::{router, AppState};
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;
use tower::ServiceExt;

fn app() -> Router {
    router(Arc::new(AppState::new(Config::default()).unwrap()))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, v)
}

async fn new_session(app: &Router) -> String {
    let (status, v) = call(app, "POST", "/sessions", Some(json!({"seed": 42}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(v["backend"], "mock");
    v["id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn message_select_apply_and_scene() {
    let app = app();
    let id = new_session(&app).await;
    let base = format!("/sessions/{id}");
    let (s, v) = call(
        &app,
        "POST",
        &format!("{base}/message"),
        Some(json!({"text": "Populate the Au atom uniformly on a rectangle skeleton"})),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["ok"], true);
    call(&app, "POST", &format!("{base}/message"), Some(json!({"text": "Set the elements to 30"}))).await;
    let (_, v) = call(&app, "POST", &format!("{base}/apply-rule"), Some(json!({"rule_id": 1}))).await;
    assert_eq!(v["reports"][0]["placed"], 30);

    let (_, v) = call(
        &app,
        "POST",
        &format!("{base}/message"),
        Some(json!({"text": "Populate HDT at a distance above the rectangle surface"})),
    )
    .await;
    assert_eq!(v["pending_selection"]["candidates"].as_array().unwrap().len(), 2);
    let (s, v) = call(&app, "POST", &format!("{base}/select"), Some(json!({"candidate_index": 1}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["ok"], true, "{v}");

    let (_, scene) = call(&app, "GET", &format!("{base}/scene"), None).await;
    assert_eq!(scene["instances"].as_array().unwrap().len(), 30);
    assert_eq!(scene["rules"][1]["ingredients"][0], "HDT-2");
    let (_, history) = call(&app, "GET", &format!("{base}/history"), None).await;
    assert_eq!(history.as_array().unwrap().len(), 5);
}

#[tokio::test]
async fn errors_are_structured() {
    let app = app();
    let (s, v) = call(&app, "POST", "/sessions/nope/message", Some(json!({"text": "hi"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["kind"], "unknown_session");

    let id = new_session(&app).await;
    let (s, v) = call(&app, "POST", &format!("/sessions/{id}/message"), Some(json!({"txt": "hi"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["kind"], "bad_request");

    let (_, v) = call(&app, "POST", &format!("/sessions/{id}/message"), Some(json!({"text": "hmm"}))).await;
    assert_eq!(v["error"]["kind"], "still_invalid_after_retries");
    let turn = v["turn_index"].clone();
    let (s, v) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/feedback"),
        Some(json!({"turn_index": turn, "corrected_output": "{\"labeling\": 1}"})),
    )
    .await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["kind"], "invalid_correction");
    let (s, v) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/feedback"),
        Some(json!({"turn_index": turn, "corrected_output": "{\"labeling\": true}"})),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["ok"], true);
    let (s, _) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/feedback"),
        Some(json!({"turn_index": 99, "corrected_output": "{}"})),
    )
    .await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (s, v) = call(&app, "POST", "/sessions", Some(json!({"backend": "oracle"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(v["error"]["message"].as_str().unwrap().contains("oracle"));
}

#[tokio::test]
async fn catalog_lists_names() {
    let (s, v) = call(&app(), "GET", "/catalog", None).await;
    assert_eq!(s, StatusCode::OK);
    let skeletons: Vec<&str> = v["skeletons"].as_array().unwrap().iter().map(|x| x.as_str().unwrap()).collect();
    assert!(skeletons.contains(&"box"));
    assert!(v["ingredients"].as_array().unwrap().iter().any(|i| i["name"] == "Albumin"));
}

#[tokio::test]
async fn automatic_run_streams_over_websocket() {
    let state = Arc::new(AppState::new(Config::default()).unwrap());
    let app = router(state);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let served = app.clone();
    tokio::spawn(async move { axum::serve(listener, served).await.unwrap() });

    let id = new_session(&app).await;
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/sessions/{id}/events")).await.unwrap();
    let hello: Value = match ws.next().await.unwrap().unwrap() {
        Message::Text(t) => serde_json::from_str(&t).unwrap(),
        other => panic!("{other:?}"),
    };
    assert_eq!(hello["type"], "connected");
    assert_eq!(hello["turn_count"], 0);

    let (s, v) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/automatic"),
        Some(json!({"description": "Generate a blood plasma model inside a box."})),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let outcomes = v.as_array().unwrap();
    assert_eq!(outcomes.len(), 8);
    let total = outcomes.last().unwrap()["instance_count"].as_u64().unwrap();

    let mut turns = 0;
    let mut streamed = 0;
    while turns < 8 || streamed < total {
        let ev: Value = match ws.next().await.unwrap().unwrap() {
            Message::Text(t) => serde_json::from_str(&t).unwrap(),
            _ => continue,
        };
        match ev["type"].as_str().unwrap() {
            "turn_outcome" => {
                assert_eq!(ev["outcome"]["step"], turns);
                turns += 1;
            }
            "scene_delta" => streamed += ev["instances"].as_array().unwrap().len() as u64,
            other => panic!("unexpected event {other}"),
        }
    }
    assert_eq!((turns, streamed), (8, total));
}
