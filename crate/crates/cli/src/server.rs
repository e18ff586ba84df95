//! HTTP + WebSocket front end for interactive sessions.
//!
//! A session collects gaze frames and a command, then runs the pipeline once.
//! Each session has its own event stream at `/sessions/{id}/stream`.

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use handover_core::gaze::{build_heatmap, gaze_point, GazeFrame};
use handover_core::geometry::PixelBox;
use handover_core::motion::TrajectorySample;
use handover_core::parser::{parse, ParsedCommand};
use handover_core::pipeline::{fixtures, frames_from_cursor, run_pipeline_with, scene_camera, scene_lexicon, PipelineConfig, PipelineEvent, Session};
use handover_core::scene::{default_catalog, generate_scene_with_pairs, render, RenderOutput, Scene};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use tokio::sync::{broadcast, Mutex};

/// Simulated seconds between streamed trajectory samples (20 Hz playback).
pub const TRAJECTORY_CADENCE: f64 = 0.05;
const EVENT_BUFFER: usize = 4096;

struct SceneEntry {
    scene: Scene,
    image: RenderOutput,
}

struct LiveSession {
    scene_id: String,
    config: PipelineConfig,
    frames: Vec<GazeFrame>,
    utterance: Option<String>,
    parsed: Option<ParsedCommand>,
    record: Option<Session>,
    events: broadcast::Sender<String>,
}

pub struct AppState {
    config: PipelineConfig,
    scenes: RwLock<HashMap<String, Arc<SceneEntry>>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<LiveSession>>>>,
    next_session: AtomicU64,
}

impl AppState {
    pub fn new(config: PipelineConfig) -> Arc<AppState> {
        Arc::new(AppState {
            config,
            scenes: RwLock::new(HashMap::new()),
            sessions: RwLock::new(HashMap::new()),
            next_session: AtomicU64::new(1),
        })
    }

    fn scene(&self, id: &str) -> Result<Arc<SceneEntry>, ApiError> {
        self.scenes.read().expect("scene map").get(id).cloned().ok_or_else(|| ApiError::not_found("scene", id))
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<LiveSession>>, ApiError> {
        self.sessions.read().expect("session map").get(id).cloned().ok_or_else(|| ApiError::not_found("session", id))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }

    fn not_found(kind: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("no {kind} {id:?}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/scenes", post(create_scene))
        .route("/scenes/{id}", get(get_scene))
        .route("/scenes/{id}/render", get(get_render))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/gaze", post(post_gaze))
        .route("/sessions/{id}/command", post(post_command))
        .route("/sessions/{id}/run", post(run_session))
        .route("/sessions/{id}/stream", get(stream))
        .with_state(state)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneRequest {
    #[serde(default)]
    pub seed: u64,
    pub objects: Option<usize>,
    #[serde(default)]
    pub pairs: usize,
    /// Load a built-in demo scene instead of generating one.
    pub fixture: Option<String>,
}

#[derive(Debug, Serialize)]
struct ObjectSummary {
    id: String,
    name: String,
    attributes: Vec<String>,
}

fn scene_summary(s: &Scene, image: &RenderOutput) -> Value {
    let objects: Vec<ObjectSummary> = s
        .objects
        .iter()
        .map(|o| ObjectSummary { id: o.id.clone(), name: o.name.clone(), attributes: o.attributes.clone() })
        .collect();
    json!({ "id": s.id, "seed": s.seed, "objects": objects, "width": image.width, "height": image.height })
}

async fn create_scene(State(state): State<Arc<AppState>>, Json(req): Json<SceneRequest>) -> ApiResult<Value> {
    let scene = match &req.fixture {
        Some(name) => fixtures::all()
            .into_iter()
            .find(|f| f.name == name)
            .map(|f| f.scene)
            .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, format!("unknown fixture {name:?}")))?,
        None => generate_scene_with_pairs(req.seed, req.objects.unwrap_or(6), req.pairs, &default_catalog())
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?,
    };
    let entry = tokio::task::spawn_blocking(move || {
        let image = render(&scene, &scene_camera(&scene));
        SceneEntry { scene, image }
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let summary = scene_summary(&entry.scene, &entry.image);
    state.scenes.write().expect("scene map").insert(entry.scene.id.clone(), Arc::new(entry));
    Ok(Json(summary))
}

async fn get_scene(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Scene> {
    Ok(Json(state.scene(&id)?.scene.clone()))
}

#[derive(Debug, Deserialize)]
struct RenderQuery {
    #[serde(default = "yes")]
    images: bool,
}

fn yes() -> bool {
    true
}

#[derive(Serialize)]
struct RenderReply<'a> {
    width: u32,
    height: u32,
    object_ids: &'a [String],
    boxes: &'a BTreeMap<String, PixelBox>,
    /// Per-object part bounding boxes.
    part_boxes: BTreeMap<&'a str, BTreeMap<&'a str, PixelBox>>,
    /// Row-major label image (0 = background, k = object_ids[k-1]).
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<&'a [u16]>,
    /// Row-major depth in metres (0 = background).
    #[serde(skip_serializing_if = "Option::is_none")]
    depth: Option<Vec<f32>>,
}

async fn get_render(State(state): State<Arc<AppState>>, Path(id): Path<String>, Query(q): Query<RenderQuery>) -> Result<Response, ApiError> {
    let entry = state.scene(&id)?;
    let r = &entry.image;
    let part_boxes = r
        .part_masks
        .iter()
        .map(|(obj, parts)| {
            let boxes = parts
                .iter()
                .filter_map(|(name, mask)| {
                    let mut it = mask.coords(r.width);
                    let (x, y) = it.next()?;
                    let b = it.fold(PixelBox::new(x, y, x, y), |b, (x, y)| PixelBox::new(b.x0.min(x), b.y0.min(y), b.x1.max(x), b.y1.max(y)));
                    Some((name.as_str(), b))
                })
                .collect();
            (obj.as_str(), boxes)
        })
        .collect();
    let reply = RenderReply {
        width: r.width,
        height: r.height,
        object_ids: &r.object_ids,
        boxes: &r.boxes,
        part_boxes,
        labels: q.images.then_some(r.labels.as_slice()),
        depth: q.images.then(|| r.depth.iter().map(|d| *d as f32).collect()),
    };
    Ok(Json(reply).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRequest {
    pub scene_id: String,
    /// Overrides for the server's pipeline config.
    pub config: Option<PipelineConfig>,
}

async fn create_session(State(state): State<Arc<AppState>>, Json(req): Json<SessionRequest>) -> ApiResult<Value> {
    state.scene(&req.scene_id)?;
    let config = req.config.unwrap_or_else(|| state.config.clone());
    config.validate().map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e))?;
    let id = format!("session-{}", state.next_session.fetch_add(1, Ordering::Relaxed));
    let (events, _) = broadcast::channel(EVENT_BUFFER);
    let live = LiveSession { scene_id: req.scene_id.clone(), config, frames: Vec::new(), utterance: None, parsed: None, record: None, events };
    state.sessions.write().expect("session map").insert(id.clone(), Arc::new(Mutex::new(live)));
    Ok(Json(json!({ "id": id, "scene_id": req.scene_id })))
}

/// Either tracker frames or raw cursor pixels in image coordinates.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum GazeBatch {
    Frames { frames: Vec<GazeFrame> },
    Cursor { cursor: Vec<(f64, f64)> },
}

fn emit(tx: &broadcast::Sender<String>, value: &impl Serialize) {
    // no subscribers is fine
    let _ = tx.send(serde_json::to_string(value).expect("event serializes"));
}

async fn post_gaze(State(state): State<Arc<AppState>>, Path(id): Path<String>, Json(batch): Json<GazeBatch>) -> ApiResult<Value> {
    let session = state.session(&id)?;
    let mut s = session.lock().await;
    if s.record.is_some() {
        return Err(ApiError::new(StatusCode::CONFLICT, "session already ran"));
    }
    let entry = state.scene(&s.scene_id)?;
    let (w, h) = (entry.image.width, entry.image.height);
    let mut frames = match batch {
        GazeBatch::Frames { frames } => frames,
        GazeBatch::Cursor { cursor } => {
            frames_from_cursor(&cursor, &s.config.gaze, w, h).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?
        }
    };
    // keep timestamps increasing across batches
    let offset = s.frames.last().map_or(0.0, |f| f.t + handover_core::gaze::FRAME_PERIOD);
    if frames.first().is_some_and(|f| f.t < offset) {
        let base = frames[0].t;
        for f in &mut frames {
            f.t += offset - base;
        }
    }
    s.frames.extend(frames);
    let rig = &s.config.gaze;
    let monitor = rig.monitor(w, h);
    let point = gaze_point(&s.frames, &monitor, &rig.head(&monitor), &rig.params).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let center = monitor.to_image(point.0, point.1);
    let sigma = rig.params.sigma_px;
    build_heatmap(center, w, h, sigma).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    emit(&s.events, &PipelineEvent::Heatmap { center, sigma_px: sigma, width: w, height: h });
    Ok(Json(json!({ "frames": s.frames.len(), "center": center, "sigma_px": sigma })))
}

#[derive(Debug, Deserialize)]
pub struct CommandRequest {
    pub utterance: String,
}

async fn post_command(State(state): State<Arc<AppState>>, Path(id): Path<String>, Json(req): Json<CommandRequest>) -> ApiResult<ParsedCommand> {
    let session = state.session(&id)?;
    let mut s = session.lock().await;
    if s.record.is_some() {
        return Err(ApiError::new(StatusCode::CONFLICT, "session already ran"));
    }
    let entry = state.scene(&s.scene_id)?;
    let parsed = parse(&req.utterance, &scene_lexicon(&entry.scene)).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    s.utterance = Some(req.utterance);
    s.parsed = Some(parsed.clone());
    Ok(Json(parsed))
}

#[derive(Serialize)]
#[serde(tag = "event", rename = "trajectory")]
struct TrajectoryEvent<'a> {
    phase: &'a str,
    sample: &'a TrajectorySample,
}

/// Samples spaced at least `cadence` apart in simulated time; the last one is always kept.
pub fn decimate(samples: &[TrajectorySample], cadence: f64) -> Vec<&TrajectorySample> {
    let mut out: Vec<&TrajectorySample> = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let due = out.last().is_none_or(|p| s.t - p.t >= cadence - 1e-9);
        if due || i + 1 == samples.len() {
            out.push(s);
        }
    }
    out
}

async fn run_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Session> {
    let session = state.session(&id)?;
    // held for the whole run: one pipeline per session at a time
    let mut s = session.lock().await;
    if let Some(done) = &s.record {
        return Ok(Json(done.clone()));
    }
    let utterance = s.utterance.clone().ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "no command submitted"))?;
    if s.frames.is_empty() {
        return Err(ApiError::new(StatusCode::CONFLICT, "no gaze frames submitted"));
    }
    let entry = state.scene(&s.scene_id)?;
    let (frames, config, tx) = (s.frames.clone(), s.config.clone(), s.events.clone());
    let record = tokio::task::spawn_blocking(move || {
        let record = run_pipeline_with(&entry.scene, &frames, &utterance, &config, &mut |e| emit(&tx, &e));
        if let Some(m) = &record.motion {
            for (phase, traj) in [("approach", &m.approach), ("deliver", &m.deliver)] {
                for sample in decimate(&traj.samples, TRAJECTORY_CADENCE) {
                    emit(&tx, &TrajectoryEvent { phase, sample });
                }
            }
        }
        emit(&tx, &json!({ "event": "trajectory_end" }));
        record
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    tracing::info!(session = %id, status = ?record.status, "session ran");
    s.record = Some(record.clone());
    Ok(Json(record))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Value> {
    let session = state.session(&id)?;
    let s = session.lock().await;
    Ok(Json(match &s.record {
        Some(r) => serde_json::to_value(r).expect("session serializes"),
        None => json!({
            "id": id,
            "scene_id": s.scene_id,
            "status": { "state": "pending" },
            "frames": s.frames.len(),
            "utterance": s.utterance,
            "parsed": s.parsed,
        }),
    }))
}

async fn stream(State(state): State<Arc<AppState>>, Path(id): Path<String>, ws: WebSocketUpgrade) -> Result<Response, ApiError> {
    let session = state.session(&id)?;
    let rx = session.lock().await.events.subscribe();
    Ok(ws.on_upgrade(move |socket| forward(socket, rx)))
}

async fn forward(mut socket: WebSocket, mut rx: broadcast::Receiver<String>) {
    loop {
        tokio::select! {
            msg = rx.recv() => match msg {
                Ok(text) => {
                    if socket.send(Message::Text(text.into())).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    let note = json!({ "event": "lagged", "dropped": n }).to_string();
                    if socket.send(Message::Text(note.into())).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Closed) => return,
            },
            incoming = socket.recv() => match incoming {
                // clients only listen; anything but a close is ignored
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: f64) -> TrajectorySample {
        TrajectorySample { t, q: [0.0; 6], q_dot: [0.0; 6] }
    }

    #[test]
    fn decimation_keeps_cadence_and_the_end() {
        let samples: Vec<TrajectorySample> = (0..23).map(|k| sample(k as f64 * 0.01)).collect();
        let kept: Vec<f64> = decimate(&samples, 0.05).iter().map(|s| s.t).collect();
        assert_eq!(kept.len(), 6);
        assert!(kept.windows(2).take(4).all(|w| (w[1] - w[0] - 0.05).abs() < 1e-9));
        assert_eq!(*kept.last().unwrap(), 0.22);
        assert!(decimate(&[], 0.05).is_empty());
    }
}
