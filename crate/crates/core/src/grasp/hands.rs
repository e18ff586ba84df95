//! Heuristic human-hand predictor: proxy hands anchored on the object's
//! conventional grasping area, approaching from the user's side.

use super::HandPose;
use crate::geometry::{Point, Vec3};
use crate::scene::{PointCloud, SceneObject};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Palm center offset from the anchor along the outward direction (m).
const PALM_OFFSET: f64 = 0.035;
const PALM_RADIUS: f64 = 0.04;
const FINGER_STEP: f64 = 0.006;
/// Direction toward the user (the +y half-space).
const USER_SIDE: Vec3 = Vec3::new(0.0, 1.0, 0.0);

impl HandPose {
    /// 48-point hand proxy: an 18-point palm disk facing the anchor plus five
    /// 6-point finger rays reaching toward it. `approach` points from the hand
    /// toward the anchor.
    pub fn proxy(anchor: Point, approach: Vec3, part: Option<String>) -> HandPose {
        let a = approach.normalize();
        let helper = if a.z.abs() < 0.9 { Vec3::z() } else { Vec3::x() };
        let e1 = helper.cross(&a).normalize();
        let e2 = a.cross(&e1);
        let palm = anchor - a * PALM_OFFSET;
        let mut cloud = vec![palm];
        for (ring, n) in [(0.5, 6), (1.0, 11)] {
            for k in 0..n {
                let t = std::f64::consts::TAU * k as f64 / n as f64;
                cloud.push(palm + (e1 * t.cos() + e2 * t.sin()) * (ring * PALM_RADIUS));
            }
        }
        for s in [-0.03, -0.015, 0.0, 0.015, 0.03] {
            for k in 1..=6 {
                cloud.push(palm + e2 * s + a * (FINGER_STEP * k as f64));
            }
        }
        HandPose { cloud, approach: a, anchor, anchored_part: part }
    }

    pub fn transformed(&self, t: &nalgebra::Isometry3<f64>) -> HandPose {
        HandPose {
            cloud: self.cloud.iter().map(|p| t * p).collect(),
            approach: t.rotation * self.approach,
            anchor: t * self.anchor,
            anchored_part: self.anchored_part.clone(),
        }
    }
}

/// Outward hand direction at a surface point: the normal flattened toward the
/// horizontal and tilted to the user's side.
fn outward(normal: &Vec3) -> Vec3 {
    let flat = Vec3::new(normal.x, normal.y, 0.3 * normal.z);
    let u = flat.try_normalize(1e-9).unwrap_or(USER_SIDE) + USER_SIDE * 0.5;
    u.try_normalize(1e-9).unwrap_or(USER_SIDE)
}

/// Hands on the object's standard grasping part, or near the body centroid
/// when it has none. `cloud` needs normals.
pub fn predict_hands(cloud: &PointCloud, object: &SceneObject, count: usize, seed: u64) -> Vec<HandPose> {
    if cloud.is_empty() || count == 0 {
        return Vec::new();
    }
    let normal = |i: usize| if cloud.has_normals() { cloud.normals[i] } else { USER_SIDE };
    let part = object.standard_part();
    let mut pool: Vec<usize> = match part {
        Some(p) => (0..cloud.len()).filter(|i| object.in_part(p, &cloud.points[*i])).collect(),
        None => Vec::new(),
    };
    let anchored_part = part.filter(|_| !pool.is_empty()).map(|p| p.name.clone());
    if pool.is_empty() {
        // fallback: surface points closest to the centroid
        let c = cloud.centroid().expect("non-empty");
        let mut by_dist: Vec<usize> = (0..cloud.len()).collect();
        by_dist.sort_by(|a, b| (cloud.points[*a] - c).norm().total_cmp(&(cloud.points[*b] - c).norm()).then(a.cmp(b)));
        by_dist.truncate((cloud.len() / 10).max(1));
        pool = by_dist;
    }
    let facing: Vec<usize> = pool.iter().copied().filter(|i| normal(*i).dot(&USER_SIDE) > 0.0).collect();
    if !facing.is_empty() {
        pool = facing;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let i = *pool.choose(&mut rng).expect("pool non-empty");
            HandPose::proxy(cloud.points[i], -outward(&normal(i)), anchored_part.clone())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::pose_xyz_yaw;
    use crate::scene::catalog::{mug, pear};
    use crate::scene::{sample_surface, CloudSource};

    fn cloud_of(o: &SceneObject) -> PointCloud {
        let (points, normals) = sample_surface(o, 1500);
        PointCloud { points, normals, source: CloudSource::Completed }
    }

    #[test]
    fn proxy_has_48_points_and_unit_approach() {
        let h = HandPose::proxy(Point::new(0.1, 0.2, 0.3), Vec3::new(0.0, -2.0, 0.0), None);
        assert_eq!(h.cloud.len(), 48);
        assert!((h.approach.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mug_hands_sit_on_handle() {
        // handle toward the user
        let o = mug().instantiate("mug-0", pose_xyz_yaw(0.0, 0.0, 0.0, std::f64::consts::FRAC_PI_2), None);
        let hands = predict_hands(&cloud_of(&o), &o, 4, 3);
        assert_eq!(hands.len(), 4);
        let handle = o.part("handle").unwrap();
        for h in &hands {
            assert!(o.in_part(handle, &h.anchor));
            assert_eq!(h.anchored_part.as_deref(), Some("handle"));
            assert!(h.approach.z.abs() < 0.5, "roughly horizontal: {:?}", h.approach);
            assert!(h.approach.y < 0.0, "comes from the user side");
        }
    }

    #[test]
    fn pear_falls_back_to_body() {
        let o = pear().instantiate("pear-0", pose_xyz_yaw(0.0, 0.0, 0.0, 0.0), None);
        let cloud = cloud_of(&o);
        let hands = predict_hands(&cloud, &o, 3, 1);
        let c = cloud.centroid().unwrap();
        for h in &hands {
            assert_eq!(h.anchored_part, None);
            assert!((h.anchor - c).norm() < 0.06);
        }
        assert_eq!(hands, predict_hands(&cloud, &o, 3, 1));
    }
}
