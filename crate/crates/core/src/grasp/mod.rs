//! Grasp planning: antipodal candidates on the (completed) object or part
//! cloud, ranked by stability when the user stated a preference and by the
//! hand-aware score otherwise.

mod hands;
mod sampler;
mod score;

pub use hands::predict_hands;
pub use sampler::{sample_grasps, CONTACT_TOLERANCE, MIN_CLOUD_POINTS, TABLE_MARGIN};
pub use score::{angle_measure, argmax, cograsp_score, distance_measure, CograspScale, DistanceVariant};

use crate::geometry::{PixelRegion, Point, Pose, Vec3};
use crate::parser::Holder;
use crate::scene::{
    complete_cloud, extract_point_cloud, project, remove_outliers, CameraModel, PointCloud, RenderOutput, Scene,
    SceneError, DEFAULT_OUTLIER_K, DEFAULT_OUTLIER_STD_RATIO,
};
use crate::selection::SelectionResult;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GraspError {
    #[error("cloud has {0} points, need at least {MIN_CLOUD_POINTS}")]
    TooFewPoints(usize),
    #[error("cloud is degenerate (no surface spread)")]
    Degenerate,
    #[error("no feasible grasp")]
    NoGrasp,
    #[error("permitted region contains no object points")]
    PartCloudEmpty,
    #[error("empty point set")]
    EmptyCloud,
    #[error("direction has norm {0}, expected 1")]
    NotUnit(f64),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

/// Parallel-jaw gripper. Frame: origin at the grasp center, x along the jaw
/// axis, z along the approach.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GripperModel {
    pub max_width: f64,
    pub finger_depth: f64,
    pub finger_thickness: f64,
    pub finger_breadth: f64,
    /// Extra opening on each side while approaching (m).
    pub clearance: f64,
    /// How far the fingertips reach past the grasp center (m).
    pub tip_overshoot: f64,
    pub palm_thickness: f64,
    pub palm_breadth: f64,
    pub wrist_radius: f64,
    pub wrist_length: f64,
    /// One closed finger: x is measured outward from the contact face.
    pub contact_cloud_template: Vec<Point>,
}

impl Default for GripperModel {
    fn default() -> Self {
        let (finger_depth, tip, thickness, breadth) = (0.045, 0.004, 0.01, 0.022);
        let mut template = Vec::new();
        for x in [0.0, thickness] {
            for y in [-breadth / 2.0 + 0.002, 0.0, breadth / 2.0 - 0.002] {
                for k in 0..5 {
                    let z = -finger_depth + (finger_depth + tip) * k as f64 / 4.0;
                    template.push(Point::new(x, y, z));
                }
            }
        }
        GripperModel {
            max_width: 0.085,
            finger_depth,
            finger_thickness: thickness,
            finger_breadth: breadth,
            clearance: 0.006,
            tip_overshoot: tip,
            palm_thickness: 0.02,
            palm_breadth: 0.05,
            wrist_radius: 0.035,
            wrist_length: 0.08,
            contact_cloud_template: template,
        }
    }
}

impl GripperModel {
    /// Gripper point cloud (both closed fingers and the palm bar) at a grasp pose.
    pub fn cloud_at(&self, pose: &Pose, width: f64) -> Vec<Point> {
        let half = width / 2.0;
        let mut out = Vec::with_capacity(2 * self.contact_cloud_template.len() + 5);
        for p in &self.contact_cloud_template {
            out.push(pose * Point::new(half + p.x, p.y, p.z));
            out.push(pose * Point::new(-half - p.x, p.y, p.z));
        }
        let palm_z = -self.finger_depth - self.palm_thickness / 2.0;
        for k in 0..5 {
            let x = (half + self.finger_thickness) * (k as f64 / 2.0 - 1.0);
            out.push(pose * Point::new(x, 0.0, palm_z));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspCandidate {
    pub pose: Pose,
    pub width: f64,
    pub approach: Vec3,
    pub stability: f64,
    pub contacts: [Point; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cograsp_score: Option<f64>,
}

impl GraspCandidate {
    pub fn center(&self) -> Point {
        Point::from(self.pose.translation.vector)
    }

    pub fn transformed(&self, t: &Pose) -> GraspCandidate {
        GraspCandidate {
            pose: t * self.pose,
            width: self.width,
            approach: t.rotation * self.approach,
            stability: self.stability,
            contacts: [t * self.contacts[0], t * self.contacts[1]],
            cograsp_score: self.cograsp_score,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandPose {
    pub cloud: Vec<Point>,
    pub approach: Vec3,
    pub anchor: Point,
    pub anchored_part: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraspParams {
    pub candidates: usize,
    pub hands: usize,
    pub cloud_points: usize,
    pub outlier_k: usize,
    pub outlier_std_ratio: f64,
    pub min_stability: f64,
    pub scale: CograspScale,
    pub distance: DistanceVariant,
    pub gripper: GripperModel,
}

impl Default for GraspParams {
    fn default() -> Self {
        GraspParams {
            candidates: 300,
            hands: 8,
            cloud_points: 2000,
            outlier_k: DEFAULT_OUTLIER_K,
            outlier_std_ratio: DEFAULT_OUTLIER_STD_RATIO,
            min_stability: 0.8,
            scale: CograspScale::BoundingDiameter,
            distance: DistanceVariant::default(),
            gripper: GripperModel::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    /// A part preference was stated: candidates restricted to the region, ranked by stability.
    Preference,
    /// No preference: candidates on the whole object, ranked against predicted hands.
    HandAware,
}

/// Chosen grasp plus everything needed to inspect the decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspPlan {
    pub object_id: String,
    pub mode: PlanMode,
    pub region: PixelRegion,
    pub chosen: GraspCandidate,
    pub candidates: Vec<GraspCandidate>,
    pub hands: Vec<HandPose>,
    pub observed_points: usize,
    /// Index of `chosen` in `candidates`.
    pub chosen_index: usize,
    /// Distance-term divisor actually applied (hand-aware mode only).
    pub scale: Option<f64>,
}

/// One scored candidate in a [`GraspDebugDump`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub index: usize,
    pub contacts: [Point; 2],
    pub width: f64,
    pub approach: Vec3,
    pub stability: f64,
    /// (scaled distance term, angle term) per predicted hand.
    pub hand_terms: Vec<(f64, f64)>,
    pub score: f64,
}

/// Machine-readable account of a planning decision, for overlays and regression diffs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspDebugDump {
    pub object_id: String,
    pub mode: PlanMode,
    pub chosen_index: usize,
    pub hand_anchors: Vec<Point>,
    pub candidates: Vec<CandidateRecord>,
}

impl GraspPlan {
    pub fn debug_dump(&self, gripper: &GripperModel, distance: DistanceVariant) -> GraspDebugDump {
        let s2 = self.scale.unwrap_or(1.0).powi(2);
        let candidates = self
            .candidates
            .iter()
            .enumerate()
            .map(|(index, g)| {
                let pc_g = gripper.cloud_at(&g.pose, g.width);
                let hand_terms: Vec<(f64, f64)> = self
                    .hands
                    .iter()
                    .map(|h| {
                        let s_d = distance_measure(&pc_g, &h.cloud, distance).unwrap_or(0.0);
                        (s_d / s2, angle_measure(&g.approach, &h.approach).unwrap_or(0.0))
                    })
                    .collect();
                let score = match self.mode {
                    PlanMode::Preference => g.stability,
                    PlanMode::HandAware => g.cograsp_score.unwrap_or(0.0),
                };
                CandidateRecord { index, contacts: g.contacts, width: g.width, approach: g.approach, stability: g.stability, hand_terms, score }
            })
            .collect();
        GraspDebugDump {
            object_id: self.object_id.clone(),
            mode: self.mode,
            chosen_index: self.chosen_index,
            hand_anchors: self.hands.iter().map(|h| h.anchor).collect(),
            candidates,
        }
    }
}

/// True when the point projects onto a pixel of `region`.
pub fn projects_into(p: &Point, region: &PixelRegion, camera: &CameraModel) -> bool {
    match project(p, camera) {
        Some((u, v, _)) => {
            let (x, y) = (u.round(), v.round());
            x >= 0.0 && y >= 0.0 && x < camera.width as f64 && y < camera.height as f64 && region.contains(x as u32, y as u32)
        }
        None => false,
    }
}

fn bounding_diameter(cloud: &PointCloud) -> f64 {
    let c = cloud.centroid().unwrap_or_else(Point::origin);
    2.0 * cloud.points.iter().map(|p| (p - c).norm()).fold(0.0, f64::max)
}

/// Intermediate milestones of [`plan_grasp_with_progress`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum GraspProgress {
    CloudReady { observed: usize, completed: usize },
    CandidatesSampled { count: usize },
    HandsPredicted { count: usize },
    Scored,
}

/// Best grasp on the selected object for the given holder.
pub fn plan_grasp(
    render: &RenderOutput,
    camera: &CameraModel,
    selection: &SelectionResult,
    holder: Holder,
    scene: &Scene,
    params: &GraspParams,
    seed: u64,
) -> Result<GraspPlan, GraspError> {
    plan_grasp_with_progress(render, camera, selection, holder, scene, params, seed, &mut |_| {})
}

#[allow(clippy::too_many_arguments)]
pub fn plan_grasp_with_progress(
    render: &RenderOutput,
    camera: &CameraModel,
    selection: &SelectionResult,
    holder: Holder,
    scene: &Scene,
    params: &GraspParams,
    seed: u64,
    progress: &mut dyn FnMut(GraspProgress),
) -> Result<GraspPlan, GraspError> {
    let id = selection.chosen.object_id.as_str();
    let object = scene.object(id)?;
    let observed = extract_point_cloud(&selection.chosen.bbox.into(), render, camera, Some(id))?;
    let observed = remove_outliers(&observed, params.outlier_k, params.outlier_std_ratio);
    let completed = complete_cloud(&observed, scene, id, params.cloud_points)?;
    progress(GraspProgress::CloudReady { observed: observed.len(), completed: completed.len() });
    let gripper = &params.gripper;
    let table = scene.table.height;
    let region = selection.part_region;

    let (mode, candidates, hands, pick, scale) = match holder {
        Holder::Robot | Holder::Human => {
            let allowed = |p: &Point| projects_into(p, &region, camera);
            let part = completed.filter_indexed(|i| allowed(&completed.points[i]));
            if part.len() < MIN_CLOUD_POINTS {
                return Err(GraspError::PartCloudEmpty);
            }
            let c = sampler::sample_constrained(&part, &completed, &allowed, gripper, table, params.candidates, seed)?;
            progress(GraspProgress::CandidatesSampled { count: c.len() });
            let stab: Vec<f64> = c.iter().map(|g| if g.stability >= params.min_stability { g.stability } else { f64::NEG_INFINITY }).collect();
            let pick = argmax(&stab).filter(|i| stab[*i].is_finite());
            (PlanMode::Preference, c, Vec::new(), pick, None)
        }
        Holder::None => {
            let c = sample_grasps(&completed, gripper, table, params.candidates, seed)?;
            progress(GraspProgress::CandidatesSampled { count: c.len() });
            let hands = predict_hands(&completed, object, params.hands, seed ^ 0x5eed);
            progress(GraspProgress::HandsPredicted { count: hands.len() });
            let scale = match params.scale {
                CograspScale::Fixed(s) => s,
                CograspScale::BoundingDiameter => bounding_diameter(&completed),
            };
            let scored = cograsp_score(&c, &hands, gripper, scale, params.distance);
            let vals: Vec<f64> = scored.iter().map(|(g, s)| if g.stability >= params.min_stability { *s } else { f64::NEG_INFINITY }).collect();
            let pick = argmax(&vals).filter(|i| vals[*i].is_finite());
            (PlanMode::HandAware, scored.into_iter().map(|(g, _)| g).collect(), hands, pick, Some(scale))
        }
    };
    progress(GraspProgress::Scored);
    let chosen_index = pick.ok_or(GraspError::NoGrasp)?;
    let chosen = candidates[chosen_index].clone();
    Ok(GraspPlan {
        object_id: id.to_string(),
        mode,
        region,
        chosen,
        candidates,
        hands,
        observed_points: observed.len(),
        chosen_index,
        scale,
    })
}
