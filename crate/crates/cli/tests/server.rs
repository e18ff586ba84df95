//! Drives the HTTP + WebSocket API the way the operator console does, without a browser.

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use futures_util::StreamExt;
use handover_cli::server::{router, AppState};
use handover_core::pipeline::PipelineConfig;
use serde_json::{json, Value};
use std::sync::Arc;
use std::time::Duration;
use tokio_tungstenite::tungstenite::Message;
use tower::ServiceExt;

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or_else(Body::empty, |b| Body::from(b.to_string()))).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

/// Center of an object's box in the rendered image.
async fn box_center(app: &Router, scene: &str, object: &str) -> (f64, f64) {
    let (s, r) = call(app, "GET", &format!("/scenes/{scene}/render?images=false"), None).await;
    assert_eq!(s, StatusCode::OK);
    let b = &r["boxes"][object];
    let c = |a: &str, z: &str| (b[a].as_f64().unwrap() + b[z].as_f64().unwrap()) / 2.0;
    (c("x0", "x1"), c("y0", "y1"))
}

async fn new_session(app: &Router, scene: &str) -> String {
    let (s, v) = call(app, "POST", "/sessions", Some(json!({ "scene_id": scene }))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    v["id"].as_str().unwrap().to_string()
}

async fn flashlight_scene(app: &Router) -> String {
    let (s, v) = call(app, "POST", "/scenes", Some(json!({ "fixture": "two-flashlights" }))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["objects"].as_array().unwrap().len(), 2);
    v["id"].as_str().unwrap().to_string()
}

#[tokio::test(flavor = "multi_thread")]
async fn scripted_console_session_streams_events() {
    let state = AppState::new(PipelineConfig::default());
    let app = router(Arc::clone(&state));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let served = router(Arc::clone(&state));
    tokio::spawn(async move { axum::serve(listener, served).await.unwrap() });

    let scene = flashlight_scene(&app).await;
    let id = new_session(&app, &scene).await;
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/sessions/{id}/stream")).await.unwrap();

    // hold the cursor on the red flashlight for a second, in two batches
    let (x, y) = box_center(&app, &scene, "flashlight-0").await;
    for _ in 0..2 {
        let (s, v) = call(&app, "POST", &format!("/sessions/{id}/gaze"), Some(json!({ "cursor": vec![[x, y]; 15] }))).await;
        assert_eq!(s, StatusCode::OK, "{v}");
        let c = v["center"].as_array().unwrap();
        assert!((c[0].as_f64().unwrap() - x).abs() < 1e-6 && (c[1].as_f64().unwrap() - y).abs() < 1e-6, "{v}");
    }
    let (s, parsed) = call(&app, "POST", &format!("/sessions/{id}/command"), Some(json!({ "utterance": "give me the flashlight" }))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(parsed["object_phrase"], "flashlight");

    let (s, pending) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(pending["status"]["state"], "pending");
    assert_eq!(pending["frames"], 30);

    let (s, record) = call(&app, "POST", &format!("/sessions/{id}/run"), None).await;
    assert_eq!(s, StatusCode::OK, "{record}");
    assert_eq!(record["status"]["state"], "executed");
    assert_eq!(record["selection"]["chosen"]["object_id"], "flashlight-0");
    let (_, fetched) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(fetched, record);

    let mut events = Vec::new();
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(30), ws.next()).await.expect("stream stalled").unwrap().unwrap();
        let Message::Text(text) = msg else { continue };
        let v: Value = serde_json::from_str(&text).unwrap();
        let done = v["event"] == "trajectory_end";
        events.push(v);
        if done {
            break;
        }
    }
    let kinds: Vec<&str> = events.iter().map(|e| e["event"].as_str().unwrap()).collect();
    assert_eq!(kinds.iter().filter(|k| **k == "heatmap").count(), 3, "two gaze batches and one run");
    let completed: Vec<&str> = events.iter().filter(|e| e["event"] == "stage_completed").map(|e| e["stage"].as_str().unwrap()).collect();
    for stage in ["render", "gaze", "parse", "selection", "grasp", "motion"] {
        assert!(completed.contains(&stage), "{stage} missing from {completed:?}");
    }
    assert!(kinds.contains(&"grasp_progress"));
    let finished = events.iter().find(|e| e["event"] == "finished").unwrap();
    assert_eq!(finished["status"]["state"], "executed");

    // trajectory samples arrive in time order per phase at the fixed cadence
    for phase in ["approach", "deliver"] {
        let ts: Vec<f64> =
            events.iter().filter(|e| e["event"] == "trajectory" && e["phase"] == phase).map(|e| e["sample"]["t"].as_f64().unwrap()).collect();
        assert!(ts.len() > 2, "{phase}: {}", ts.len());
        assert!(ts.windows(2).all(|w| w[1] > w[0]));
        assert!(ts[..ts.len() - 1].windows(2).all(|w| w[1] - w[0] >= 0.05 - 1e-9));
    }
    let last_phase_t = kinds.iter().rposition(|k| *k == "trajectory").unwrap();
    assert!(last_phase_t > kinds.iter().position(|k| *k == "finished").unwrap());
}

#[tokio::test(flavor = "multi_thread")]
async fn sessions_run_concurrently_and_stay_isolated() {
    let app = router(AppState::new(PipelineConfig::default()));
    let scene = flashlight_scene(&app).await;
    let mut ids = Vec::new();
    for target in ["flashlight-0", "flashlight-1"] {
        let id = new_session(&app, &scene).await;
        let (x, y) = box_center(&app, &scene, target).await;
        call(&app, "POST", &format!("/sessions/{id}/gaze"), Some(json!({ "cursor": vec![[x, y]; 30] }))).await;
        call(&app, "POST", &format!("/sessions/{id}/command"), Some(json!({ "utterance": "give me the flashlight" }))).await;
        ids.push(id);
    }
    let (run0, run1) = (format!("/sessions/{}/run", ids[0]), format!("/sessions/{}/run", ids[1]));
    let (a, b) = tokio::join!(call(&app, "POST", &run0, None), call(&app, "POST", &run1, None));
    assert_eq!(a.1["selection"]["chosen"]["object_id"], "flashlight-0");
    assert_eq!(b.1["selection"]["chosen"]["object_id"], "flashlight-1");
    // a finished session is frozen
    let (s, _) = call(&app, "POST", &format!("/sessions/{}/gaze", ids[0]), Some(json!({ "cursor": [[1.0, 1.0]] }))).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn api_errors() {
    let app = router(AppState::new(PipelineConfig::default()));
    let (s, _) = call(&app, "GET", "/sessions/nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "POST", "/scenes", Some(json!({ "fixture": "teapot" }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "POST", "/sessions", Some(json!({ "scene_id": "missing" }))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let scene = flashlight_scene(&app).await;
    let id = new_session(&app, &scene).await;
    let (s, v) = call(&app, "POST", &format!("/sessions/{id}/run"), None).await;
    assert_eq!(s, StatusCode::CONFLICT, "{v}");
    let (s, v) = call(&app, "POST", &format!("/sessions/{id}/command"), Some(json!({ "utterance": "" }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["error"].is_string());
    // cursor outside the image
    let (s, _) = call(&app, "POST", &format!("/sessions/{id}/gaze"), Some(json!({ "cursor": [[-50.0, 10.0]] }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    // the session stays usable after bad input
    let (s, _) = call(&app, "POST", &format!("/sessions/{id}/command"), Some(json!({ "utterance": "give me the flashlight" }))).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn generated_scene_and_full_render() {
    let app = router(AppState::new(PipelineConfig::default()));
    let (s, v) = call(&app, "POST", "/scenes", Some(json!({ "seed": 4, "objects": 5, "pairs": 1 }))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let id = v["id"].as_str().unwrap();
    let (s, r) = call(&app, "GET", &format!("/scenes/{id}/render"), None).await;
    assert_eq!(s, StatusCode::OK);
    let n = (r["width"].as_u64().unwrap() * r["height"].as_u64().unwrap()) as usize;
    assert_eq!(r["labels"].as_array().unwrap().len(), n);
    assert_eq!(r["depth"].as_array().unwrap().len(), n);
    assert!(!r["part_boxes"].as_object().unwrap().is_empty());
    let (s, scene) = call(&app, "GET", &format!("/scenes/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(scene["objects"].as_array().unwrap().len(), 5);
}
