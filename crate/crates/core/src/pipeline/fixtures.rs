//! Hand-built demo scenes with a known intended object.

use super::{scene_camera, PipelineConfig};
use crate::gaze::{simulate_gaze, GazeError, GazeFrame};
use crate::scene::catalog::{cup, flashlight, mug, screwdriver};
use crate::scene::{render, resting_pose, ObjectTemplate, Scene, SceneObject, Table};

#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: &'static str,
    pub scene: Scene,
    pub utterance: &'static str,
    /// Object the user means.
    pub target: String,
}

fn place(t: &ObjectTemplate, k: usize, x: f64, y: f64, yaw: f64, color: Option<&str>) -> SceneObject {
    let table = Table::default();
    t.instantiate(format!("{}-{k}", t.name), resting_pose(t, &table, x, y, yaw), color)
}

fn scene(id: &str, objects: Vec<SceneObject>) -> Scene {
    Scene { id: id.into(), seed: 0, table: Table::default(), objects }
}

impl Fixture {
    /// Mean image position of the target's visible pixels.
    pub fn fixation(&self) -> (f64, f64) {
        let r = render(&self.scene, &scene_camera(&self.scene));
        let px = r.object_pixels(&self.target);
        assert!(!px.is_empty(), "fixture target {} not visible", self.target);
        let n = px.len() as f64;
        let (sx, sy) = px.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + *x as f64, b + *y as f64));
        (sx / n, sy / n)
    }

    /// Noisy frames of the viewer fixating the target, per the config's gaze rig.
    pub fn try_gaze_frames(&self, cfg: &PipelineConfig) -> Result<Vec<GazeFrame>, GazeError> {
        let cam = scene_camera(&self.scene);
        let m = cfg.gaze.monitor(cam.width, cam.height);
        let head = cfg.gaze.head(&m);
        let (x, y) = self.fixation();
        simulate_gaze(m.from_image(x, y), &m, &head, cfg.gaze.noise_deg, cfg.gaze.frames, cfg.seed)
    }

    pub fn gaze_frames(&self, cfg: &PipelineConfig) -> Vec<GazeFrame> {
        self.try_gaze_frames(cfg).expect("fixture gaze is on screen")
    }
}

/// A mug among other things; the user asks to hold it by the handle.
pub fn mug_handle() -> Fixture {
    Fixture {
        name: "mug-handle",
        scene: scene(
            "fixture-mug",
            vec![
                place(&mug(), 0, 0.02, 0.0, 0.5, Some("white")),
                place(&screwdriver(), 0, -0.14, -0.1, 1.2, None),
                place(&cup(), 0, 0.15, 0.12, 0.0, Some("blue")),
            ],
        ),
        utterance: "Hand me the mug and I want to hold the handle",
        target: "mug-0".into(),
    }
}

/// Two identical flashlights; only the gaze tells them apart.
pub fn two_flashlights() -> Fixture {
    Fixture {
        name: "two-flashlights",
        scene: scene(
            "fixture-flashlights",
            vec![
                place(&flashlight(), 0, -0.1, 0.02, 0.3, Some("red")),
                place(&flashlight(), 1, 0.11, -0.03, -0.2, Some("blue")),
            ],
        ),
        utterance: "give me the flashlight",
        target: "flashlight-0".into(),
    }
}

pub fn all() -> Vec<Fixture> {
    vec![mug_handle(), two_flashlights()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grasp::projects_into;
    use crate::parser::Holder;
    use crate::pipeline::{replay, replay_with, run_pipeline, SessionStatus, Stage};

    #[test]
    fn fixtures_are_valid_scenes() {
        for f in all() {
            f.scene.validate().unwrap();
            f.scene.object(&f.target).unwrap();
        }
    }

    #[test]
    fn mug_handle_end_to_end() {
        let f = mug_handle();
        let cfg = PipelineConfig::default();
        let s = run_pipeline(&f.scene, &f.gaze_frames(&cfg), f.utterance, &cfg);
        assert_eq!(s.status, SessionStatus::Executed, "{:?}", s.status);
        let parsed = s.parsed.as_ref().unwrap();
        assert_eq!(parsed.object_phrase, "mug");
        assert_eq!(parsed.part.as_deref(), Some("handle"));
        assert_eq!(parsed.holder, Holder::Human);
        let sel = s.selection.as_ref().unwrap();
        assert_eq!(sel.chosen.object_id, f.target);
        // the robot keeps its fingers off the handle
        let plan = s.grasp.as_ref().unwrap();
        let cam = scene_camera(&f.scene);
        let mug = f.scene.object(&f.target).unwrap();
        let handle = mug.part("handle").unwrap();
        for c in &plan.chosen.contacts {
            assert!(projects_into(c, &sel.part_region, &cam));
            assert!(!mug.in_part(handle, c));
        }
        let motion = s.motion.as_ref().unwrap();
        assert!(motion.converged());
        for stage in Stage::ALL {
            assert!(s.timing(stage).is_some(), "{stage:?}");
        }
    }

    #[test]
    fn gaze_picks_the_looked_at_flashlight() {
        let f = two_flashlights();
        let cfg = PipelineConfig::default();
        let s = run_pipeline(&f.scene, &f.gaze_frames(&cfg), f.utterance, &cfg);
        assert_eq!(s.status, SessionStatus::Executed, "{:?}", s.status);
        assert_eq!(s.selection.as_ref().unwrap().chosen.object_id, "flashlight-0");
        // and the other one when the viewer looks there instead
        let other = Fixture { target: "flashlight-1".into(), ..f.clone() };
        let s2 = run_pipeline(&f.scene, &other.gaze_frames(&cfg), f.utterance, &cfg);
        assert_eq!(s2.selection.as_ref().unwrap().chosen.object_id, "flashlight-1");
    }

    #[test]
    fn replay_is_byte_identical() {
        let f = two_flashlights();
        let cfg = PipelineConfig::default();
        let s = run_pipeline(&f.scene, &f.gaze_frames(&cfg), f.utterance, &cfg);
        let again = replay(&s.to_json()).unwrap();
        assert_eq!(again.outputs_json(), s.outputs_json());
        assert_eq!(again.id, s.id);
        assert!(again.derived_from.is_none());

        let tweaked = PipelineConfig { pregrasp_offset: 0.1, ..cfg.clone() };
        let derived = replay_with(&s.to_json(), Some(&tweaked)).unwrap();
        assert_eq!(derived.derived_from.as_deref(), Some(s.id.as_str()));
        assert_ne!(derived.id, s.id);
    }
}
