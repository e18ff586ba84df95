//! End-to-end orchestration: render → heatmap → parse → select → grasp →
//! motion, with session records that replay deterministically.

pub mod eval;
pub mod fixtures;

use crate::gaze::{build_heatmap, gaze_point, simulate_gaze, GazeError, GazeFrame, HeadPose, MonitorPlane, FRAME_PERIOD};
use crate::geometry::{fnv1a, Pose, Vec3};
use crate::grasp::{plan_grasp_with_progress, GraspParams, GraspPlan, GraspProgress};
use crate::motion::{handover_plan, ArmModel, HandoverPlan, Joints, RmpParams};
use crate::parser::{parse, Lexicon, ParsedCommand};
use crate::scene::io::{check_version, FileError};
use crate::scene::{render, CameraModel, RenderOutput, Scene};
use crate::selection::eval::GazeRig;
use crate::selection::{select, DetectorNoise, SelectionResult};
use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion};
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

pub const SESSION_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Render,
    Gaze,
    Parse,
    Selection,
    Grasp,
    Motion,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Render, Stage::Gaze, Stage::Parse, Stage::Selection, Stage::Grasp, Stage::Motion];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Render => "render",
            Stage::Gaze => "gaze",
            Stage::Parse => "parse",
            Stage::Selection => "selection",
            Stage::Grasp => "grasp",
            Stage::Motion => "motion",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum SessionStatus {
    Pending,
    Selected,
    Planned,
    Executed,
    Failed { stage: Stage, reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Viewer geometry and gaze parameters (α, β, σ); noise and frame count
    /// only matter when frames are simulated.
    pub gaze: GazeRig,
    pub detector: DetectorNoise,
    pub grasp: GraspParams,
    pub rmp: RmpParams,
    pub arm: ArmModel,
    /// Delivery pose near the user.
    pub user_pose: Pose,
    pub pregrasp_offset: f64,
    /// Seed for the detector and grasp sampler.
    pub seed: u64,
}

/// Default delivery pose: 30 cm above the table near the user edge, gripper
/// pointing at the user with the jaw horizontal.
pub fn default_user_pose() -> Pose {
    let r = Matrix3::from_columns(&[Vec3::x(), -Vec3::z(), Vec3::y()]);
    Isometry3::from_parts(
        Translation3::new(0.0, 0.05, 0.3),
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r)),
    )
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            gaze: GazeRig::default(),
            detector: DetectorNoise::default(),
            grasp: GraspParams::default(),
            rmp: RmpParams::default(),
            arm: ArmModel::ur5e(),
            user_pose: default_user_pose(),
            pregrasp_offset: 0.08,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.rmp.validate().map_err(|e| e.to_string())?;
        self.arm.validate().map_err(|e| e.to_string())?;
        let g = &self.gaze.params;
        if !(0.0..=1.0).contains(&g.alpha) || !(g.beta > 0.0 && g.beta <= 1.0) || !(g.sigma_px > 0.0) {
            return Err(format!("gaze parameters out of range: {g:?}"));
        }
        if self.grasp.candidates == 0 || self.grasp.cloud_points == 0 {
            return Err("grasp candidate and cloud counts must be positive".into());
        }
        if !(self.pregrasp_offset >= 0.0) {
            return Err("pregrasp offset must be non-negative".into());
        }
        Ok(())
    }
}

/// Everything one run consumed and produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub format_version: u32,
    pub id: String,
    /// Set when re-executed from another session with a different config.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derived_from: Option<String>,
    pub scene: Scene,
    pub config: PipelineConfig,
    pub gaze_frames: Vec<GazeFrame>,
    pub utterance: String,
    pub gaze_point: Option<(f64, f64)>,
    pub parsed: Option<ParsedCommand>,
    pub selection: Option<SelectionResult>,
    pub grasp: Option<GraspPlan>,
    pub motion: Option<HandoverPlan>,
    pub timings: Vec<StageTiming>,
    pub status: SessionStatus,
}

/// Session fields that a replay must reproduce exactly (everything except timings).
#[derive(Serialize)]
struct Outputs<'a> {
    scene: &'a Scene,
    config: &'a PipelineConfig,
    gaze_point: &'a Option<(f64, f64)>,
    parsed: &'a Option<ParsedCommand>,
    selection: &'a Option<SelectionResult>,
    grasp: &'a Option<GraspPlan>,
    motion: &'a Option<HandoverPlan>,
    status: &'a SessionStatus,
}

impl Session {
    pub fn outputs_json(&self) -> String {
        serde_json::to_string(&Outputs {
            scene: &self.scene,
            config: &self.config,
            gaze_point: &self.gaze_point,
            parsed: &self.parsed,
            selection: &self.selection,
            grasp: &self.grasp,
            motion: &self.motion,
            status: &self.status,
        })
        .expect("session outputs serialize")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session serializes")
    }

    pub fn from_json(text: &str) -> Result<Session, FileError> {
        check_version(text, SESSION_FORMAT_VERSION)?;
        Ok(serde_json::from_str(text)?)
    }

    pub fn timing(&self, stage: Stage) -> Option<f64> {
        self.timings.iter().find(|t| t.stage == stage).map(|t| t.seconds)
    }
}

/// Live notifications from a run, for streaming clients.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum PipelineEvent {
    StageStarted { stage: Stage },
    StageCompleted { stage: Stage, seconds: f64 },
    Heatmap { center: (f64, f64), sigma_px: f64, width: u32, height: u32 },
    GraspProgress { progress: GraspProgress },
    Finished { status: SessionStatus },
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    File(#[from] FileError),
}

fn session_id(scene: &Scene, frames: &[GazeFrame], utterance: &str, config: &PipelineConfig) -> String {
    let inputs = serde_json::to_string(&(scene, frames, utterance, config)).expect("inputs serialize");
    format!("{:016x}", fnv1a(inputs.as_bytes()))
}

/// Parser lexicon extended with the scene's object names and synonyms.
pub fn scene_lexicon(scene: &Scene) -> Lexicon {
    Lexicon::default().with_objects(scene.objects.iter().map(|o| (o.name.as_str(), o.synonyms.as_slice())))
}

/// Gaze frames for a viewer looking straight at image pixels (e.g. a mouse
/// cursor standing in for eye tracking): each point goes through the
/// noise-free gaze simulation, one frame per point.
pub fn frames_from_cursor(points: &[(f64, f64)], rig: &GazeRig, width: u32, height: u32) -> Result<Vec<GazeFrame>, GazeError> {
    let monitor = rig.monitor(width, height);
    let head = rig.head(&monitor);
    points
        .iter()
        .enumerate()
        .map(|(k, (x, y))| {
            let mut f = simulate_gaze(monitor.from_image(*x, *y), &monitor, &head, 0.0, 1, 0)?.remove(0);
            f.t = k as f64 * FRAME_PERIOD;
            Ok(f)
        })
        .collect()
}

/// Scene camera used by the pipeline.
pub fn scene_camera(scene: &Scene) -> CameraModel {
    CameraModel::default_for(&scene.table)
}

pub fn run_pipeline(scene: &Scene, frames: &[GazeFrame], utterance: &str, config: &PipelineConfig) -> Session {
    run_pipeline_with(scene, frames, utterance, config, &mut |_| {})
}

struct Run<'a> {
    session: Session,
    events: &'a mut dyn FnMut(PipelineEvent),
}

impl Run<'_> {
    /// Times `f` as `stage`; on error records the failure and returns None.
    fn stage<T, E: std::fmt::Display>(&mut self, stage: Stage, f: impl FnOnce(&mut dyn FnMut(PipelineEvent)) -> Result<T, E>) -> Option<T> {
        (self.events)(PipelineEvent::StageStarted { stage });
        let start = Instant::now();
        let out = f(&mut *self.events);
        let seconds = start.elapsed().as_secs_f64();
        self.session.timings.push(StageTiming { stage, seconds });
        (self.events)(PipelineEvent::StageCompleted { stage, seconds });
        match out {
            Ok(v) => Some(v),
            Err(e) => {
                self.session.status = SessionStatus::Failed { stage, reason: e.to_string() };
                None
            }
        }
    }
}

/// [`run_pipeline`] reporting progress through `events`.
pub fn run_pipeline_with(
    scene: &Scene,
    frames: &[GazeFrame],
    utterance: &str,
    config: &PipelineConfig,
    events: &mut dyn FnMut(PipelineEvent),
) -> Session {
    let session = Session {
        format_version: SESSION_FORMAT_VERSION,
        id: session_id(scene, frames, utterance, config),
        derived_from: None,
        scene: scene.clone(),
        config: config.clone(),
        gaze_frames: frames.to_vec(),
        utterance: utterance.to_string(),
        gaze_point: None,
        parsed: None,
        selection: None,
        grasp: None,
        motion: None,
        timings: Vec::new(),
        status: SessionStatus::Pending,
    };
    let mut run = Run { session, events };
    execute(&mut run, scene, frames, utterance, config);
    let status = run.session.status.clone();
    (run.events)(PipelineEvent::Finished { status });
    run.session
}

fn execute(run: &mut Run<'_>, scene: &Scene, frames: &[GazeFrame], utterance: &str, config: &PipelineConfig) -> Option<()> {
    run.stage(Stage::Render, |_| config.validate())?;
    let camera = scene_camera(scene);
    let image: RenderOutput = run.stage(Stage::Render, |_| {
        scene.validate()?;
        camera.validate()?;
        Ok::<_, crate::scene::SceneError>(render(scene, &camera))
    })?;
    // the config check and the render share the stage; keep one timing entry
    merge_last_timings(&mut run.session);

    let (w, h) = (image.width, image.height);
    let monitor: MonitorPlane = config.gaze.monitor(w, h);
    let head: HeadPose = config.gaze.head(&monitor);
    let heatmap = run.stage(Stage::Gaze, |ev| {
        let (l, m) = gaze_point(frames, &monitor, &head, &config.gaze.params)?;
        let center = monitor.to_image(l, m);
        let hm = build_heatmap(center, w, h, config.gaze.params.sigma_px)?;
        ev(PipelineEvent::Heatmap { center, sigma_px: config.gaze.params.sigma_px, width: w, height: h });
        Ok::<_, crate::gaze::GazeError>(hm)
    })?;
    run.session.gaze_point = Some(heatmap.center);

    let lexicon = scene_lexicon(scene);
    let parsed = run.stage(Stage::Parse, |_| parse(utterance, &lexicon))?;
    run.session.parsed = Some(parsed.clone());

    let selection = run.stage(Stage::Selection, |_| {
        select(
            &heatmap,
            &parsed.object_phrase,
            parsed.part.as_deref(),
            parsed.holder,
            &image,
            scene,
            &config.detector,
            config.seed,
        )
    })?;
    run.session.selection = Some(selection.clone());
    run.session.status = SessionStatus::Selected;

    let plan = run.stage(Stage::Grasp, |ev| {
        plan_grasp_with_progress(&image, &camera, &selection, parsed.holder, scene, &config.grasp, config.seed, &mut |p| {
            ev(PipelineEvent::GraspProgress { progress: p })
        })
    })?;
    let grasp_pose = plan.chosen.pose;
    run.session.grasp = Some(plan);
    run.session.status = SessionStatus::Planned;

    let motion = run.stage(Stage::Motion, |_| {
        handover_plan(&config.arm, &Joints::from(config.arm.home), &grasp_pose, &config.user_pose, config.pregrasp_offset, &config.rmp)
    })?;
    let converged = motion.converged();
    run.session.motion = Some(motion);
    run.session.status = if converged {
        SessionStatus::Executed
    } else {
        SessionStatus::Failed { stage: Stage::Motion, reason: "arm did not converge within the step budget".into() }
    };
    Some(())
}

fn merge_last_timings(session: &mut Session) {
    if let [.., a, b] = session.timings.as_slice() {
        if a.stage == b.stage {
            let seconds = a.seconds + b.seconds;
            session.timings.pop();
            session.timings.last_mut().expect("two entries").seconds = seconds;
        }
    }
}

/// Re-executes a recorded session from its inputs.
pub fn replay(text: &str) -> Result<Session, ReplayError> {
    replay_with(text, None)
}

/// Replay, optionally under a different config; the result is then marked as derived.
pub fn replay_with(text: &str, config: Option<&PipelineConfig>) -> Result<Session, ReplayError> {
    let recorded = Session::from_json(text)?;
    let cfg = config.unwrap_or(&recorded.config);
    let mut session = run_pipeline(&recorded.scene, &recorded.gaze_frames, &recorded.utterance, cfg);
    if config.is_some_and(|c| *c != recorded.config) {
        session.derived_from = Some(recorded.id.clone());
    }
    Ok(session)
}
