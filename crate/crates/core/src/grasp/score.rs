use super::{GraspCandidate, GraspError, GripperModel, HandPose};
use crate::geometry::{Point, Vec3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Which pairwise distance the hand-distance term averages.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceVariant {
    #[default]
    Squared,
    Euclidean,
}

/// Divisor (squared) applied to the distance term before it is added to the angle term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CograspScale {
    Fixed(f64),
    /// Bounding-sphere diameter of the object cloud.
    BoundingDiameter,
}

impl Default for CograspScale {
    fn default() -> Self {
        CograspScale::Fixed(1.0)
    }
}

/// Mean pairwise distance between gripper and hand clouds.
pub fn distance_measure(pc_g: &[Point], pc_h: &[Point], variant: DistanceVariant) -> Result<f64, GraspError> {
    if pc_g.is_empty() || pc_h.is_empty() {
        return Err(GraspError::EmptyCloud);
    }
    let mut sum = 0.0;
    for x in pc_g {
        for y in pc_h {
            let d2 = (x - y).norm_squared();
            sum += match variant {
                DistanceVariant::Squared => d2,
                DistanceVariant::Euclidean => d2.sqrt(),
            };
        }
    }
    Ok(sum / (pc_g.len() * pc_h.len()) as f64)
}

const UNIT_TOL: f64 = 1e-9;

/// Negated inner product of the two approach directions.
pub fn angle_measure(a_g: &Vec3, a_h: &Vec3) -> Result<f64, GraspError> {
    for v in [a_g, a_h] {
        if (v.norm() - 1.0).abs() > UNIT_TOL {
            return Err(GraspError::NotUnit(v.norm()));
        }
    }
    Ok((-a_g.dot(a_h)).clamp(-1.0, 1.0))
}

/// Worst-case (minimum over hands) combined score for each grasp. Higher is
/// better. With no hands every grasp scores 0.
pub fn cograsp_score(
    grasps: &[GraspCandidate],
    hands: &[HandPose],
    gripper: &GripperModel,
    scale: f64,
    variant: DistanceVariant,
) -> Vec<(GraspCandidate, f64)> {
    let s2 = scale * scale;
    grasps
        .par_iter()
        .map(|g| {
            let pc_g = gripper.cloud_at(&g.pose, g.width);
            let score = hands
                .iter()
                .map(|h| {
                    let s_d = distance_measure(&pc_g, &h.cloud, variant).unwrap_or(0.0);
                    let s_a = angle_measure(&g.approach, &h.approach).unwrap_or(0.0);
                    s_d / s2 + s_a
                })
                .reduce(f64::min)
                .unwrap_or(0.0);
            let mut g = g.clone();
            g.cograsp_score = Some(score);
            (g, score)
        })
        .collect()
}

/// Index of the highest score, earliest index on ties.
pub fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if best.is_none_or(|b| *s > scores[b]) {
            best = Some(i);
        }
    }
    best
}
