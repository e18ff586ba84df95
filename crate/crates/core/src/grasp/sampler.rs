//! Seeded antipodal grasp sampler with box-model collision checks.

use super::{GraspCandidate, GraspError, GripperModel};
use crate::geometry::{Point, Pose, Vec3};
use crate::scene::{covariance, estimate_normals, PointCloud};
use crate::spatial::PointGrid;
use nalgebra::{Isometry3, Matrix3, Rotation3, SymmetricEigen, Translation3, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MIN_CLOUD_POINTS: usize = 20;
/// Max distance between a contact and the jaw line through the first contact (m).
pub const CONTACT_TOLERANCE: f64 = 0.003;
/// Gripper geometry must stay this far above the table top (m).
pub const TABLE_MARGIN: f64 = 0.002;
const APPROACH_ANGLES: usize = 8;
/// Steepest allowed upward approach component (about 15° above horizontal).
const MAX_APPROACH_RISE: f64 = 0.26;
/// Approaches coming from the user's side are not reachable for the robot.
const MAX_USER_SIDE: f64 = 0.5;
const ATTEMPTS_PER_CANDIDATE: usize = 25;
const NORMAL_K: usize = 12;

/// Axis-aligned box in gripper coordinates.
#[derive(Clone, Copy, Debug)]
struct GripperBox {
    lo: Vec3,
    hi: Vec3,
}

impl GripperBox {
    fn contains(&self, q: &Vec3, shrink: f64) -> bool {
        (0..3).all(|i| q[i] > self.lo[i] + shrink && q[i] < self.hi[i] - shrink)
    }

    fn corners(&self) -> impl Iterator<Item = Vec3> + '_ {
        (0..8).map(move |k| {
            Vec3::new(
                if k & 1 == 0 { self.lo.x } else { self.hi.x },
                if k & 2 == 0 { self.lo.y } else { self.hi.y },
                if k & 4 == 0 { self.lo.z } else { self.hi.z },
            )
        })
    }

    fn probes(&self) -> impl Iterator<Item = Vec3> + '_ {
        std::iter::once((self.lo + self.hi) / 2.0).chain(self.corners())
    }
}

impl GripperModel {
    /// Open fingers, palm and wrist for a grasp of the given width.
    fn boxes(&self, width: f64) -> [GripperBox; 4] {
        let inner = width / 2.0 + self.clearance;
        let outer = inner + self.finger_thickness;
        let b = self.finger_breadth / 2.0;
        let (z0, z1) = (-self.finger_depth, self.tip_overshoot);
        let reach = self.max_width / 2.0 + self.clearance + self.finger_thickness;
        let palm_z = -self.finger_depth - self.palm_thickness;
        [
            GripperBox { lo: Vec3::new(inner, -b, z0), hi: Vec3::new(outer, b, z1) },
            GripperBox { lo: Vec3::new(-outer, -b, z0), hi: Vec3::new(-inner, b, z1) },
            GripperBox { lo: Vec3::new(-reach, -self.palm_breadth / 2.0, palm_z), hi: Vec3::new(reach, self.palm_breadth / 2.0, z0) },
            GripperBox {
                lo: Vec3::new(-self.wrist_radius, -self.wrist_radius, palm_z - self.wrist_length),
                hi: Vec3::new(self.wrist_radius, self.wrist_radius, palm_z),
            },
        ]
    }
}

/// Collision model for one planning call.
pub(super) struct Obstacles<'a> {
    cloud: &'a PointCloud,
    grid: PointGrid<'a>,
    table_height: f64,
}

impl<'a> Obstacles<'a> {
    pub(super) fn new(cloud: &'a PointCloud, table_height: f64) -> Self {
        let grid = PointGrid::new(&cloud.points, 0.01);
        Obstacles { cloud, grid, table_height }
    }

    fn collides(&self, gripper: &GripperModel, pose: &Pose, width: f64) -> bool {
        let boxes = gripper.boxes(width);
        // table slab
        if boxes.iter().flat_map(|b| b.corners()).any(|c| (pose * Point::from(c)).z < self.table_height + TABLE_MARGIN) {
            return true;
        }
        // cloud points inside the gripper volume
        let inv = pose.inverse();
        for b in &boxes {
            let (mut lo, mut hi) = (Point::from(Vec3::repeat(f64::INFINITY)), Point::from(Vec3::repeat(f64::NEG_INFINITY)));
            for c in b.corners() {
                let w = pose * Point::from(c);
                lo = lo.inf(&w);
                hi = hi.sup(&w);
            }
            let mut hit = false;
            self.grid.visit_aabb(&lo, &hi, |i| hit = hit || b.contains(&(inv * self.cloud.points[i]).coords, 0.0005));
            if hit {
                return true;
            }
        }
        // gripper parts buried inside the surface
        if self.cloud.has_normals() {
            for c in boxes.iter().flat_map(|b| b.probes()) {
                let w = pose * Point::from(c);
                if let Some((_, i)) = self.grid.nearest_within(&w, 0.02) {
                    if (w - self.cloud.points[i]).dot(&self.cloud.normals[i]) < 0.0 {
                        return true;
                    }
                }
            }
        }
        false
    }
}

/// Gripper pose: origin at the grasp center, x along the jaw axis, z along the approach.
fn grasp_pose(center: &Point, jaw: &Vec3, approach: &Vec3) -> Pose {
    let y = approach.cross(jaw);
    let r = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[*jaw, y, *approach]));
    Isometry3::from_parts(Translation3::from(center.coords), UnitQuaternion::from_rotation_matrix(&r))
}

fn with_normals(cloud: &PointCloud) -> PointCloud {
    if cloud.has_normals() { cloud.clone() } else { estimate_normals(cloud, NORMAL_K, None) }
}

fn check_spread(cloud: &PointCloud) -> Result<(), GraspError> {
    if cloud.len() < MIN_CLOUD_POINTS {
        return Err(GraspError::TooFewPoints(cloud.len()));
    }
    let eig = SymmetricEigen::new(covariance(&cloud.points));
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    // second principal spread below 0.1 mm: a line, not a surface
    if ev[1] < 1e-8 {
        return Err(GraspError::Degenerate);
    }
    Ok(())
}

/// Antipodal candidates with first contacts drawn from `contacts`, opposite
/// contacts and collisions taken from `full`, and both contacts passing `allowed`.
pub(super) fn sample_constrained(
    contacts: &PointCloud,
    full: &PointCloud,
    allowed: &(dyn Fn(&Point) -> bool + Sync),
    gripper: &GripperModel,
    table_height: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<GraspCandidate>, GraspError> {
    if count == 0 {
        return Err(GraspError::NoGrasp);
    }
    check_spread(contacts)?;
    let contacts = with_normals(contacts);
    let full = with_normals(full);
    let obstacles = Obstacles::new(&full, table_height);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let max_inner = gripper.max_width;
    for _ in 0..count * ATTEMPTS_PER_CANDIDATE {
        if out.len() >= count {
            break;
        }
        let i = rng.random_range(0..contacts.len());
        let phase: f64 = rng.random::<f64>() * std::f64::consts::TAU / APPROACH_ANGLES as f64;
        let (p1, n1) = (contacts.points[i], contacts.normals[i]);
        if !allowed(&p1) {
            continue;
        }
        let d = -n1;
        // first exit surface along the inward normal
        let mut best: Option<(f64, usize)> = None;
        let far = p1 + d * max_inner;
        let pad = Vec3::repeat(CONTACT_TOLERANCE);
        obstacles.grid.visit_aabb(&(p1.inf(&far) - pad), &(p1.sup(&far) + pad), |j| {
            let v = full.points[j] - p1;
            let t = v.dot(&d);
            if t < 2.0 * CONTACT_TOLERANCE || t > max_inner {
                return;
            }
            if (v - d * t).norm() > CONTACT_TOLERANCE || full.normals[j].dot(&d) < 0.5 {
                return;
            }
            if best.is_none_or(|(bt, bj)| t < bt || (t == bt && j < bj)) {
                best = Some((t, j));
            }
        });
        let Some((_, j)) = best else { continue };
        let p2 = full.points[j];
        if !allowed(&p2) {
            continue;
        }
        let axis = p2 - p1;
        let width = axis.norm();
        if width > max_inner {
            continue;
        }
        let jaw = axis / width;
        let stability = 0.5 * (n1.dot(&jaw).abs() + full.normals[j].dot(&jaw).abs());
        let center = Point::from((p1.coords + p2.coords) / 2.0);
        let helper = if jaw.z.abs() < 0.9 { Vec3::z() } else { Vec3::x() };
        let e1 = helper.cross(&jaw).normalize();
        let e2 = jaw.cross(&e1);
        for k in 0..APPROACH_ANGLES {
            let theta = phase + std::f64::consts::TAU * k as f64 / APPROACH_ANGLES as f64;
            let approach = e1 * theta.cos() + e2 * theta.sin();
            if approach.z > MAX_APPROACH_RISE || approach.y < -MAX_USER_SIDE {
                continue;
            }
            let pose = grasp_pose(&center, &jaw, &approach);
            if obstacles.collides(gripper, &pose, width) {
                continue;
            }
            out.push(GraspCandidate { pose, width, approach, stability, contacts: [p1, p2], cograsp_score: None });
            if out.len() >= count {
                break;
            }
        }
    }
    if out.is_empty() {
        return Err(GraspError::NoGrasp);
    }
    Ok(out)
}

/// Antipodal candidates on `cloud` (normals estimated when absent).
pub fn sample_grasps(
    cloud: &PointCloud,
    gripper: &GripperModel,
    table_height: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<GraspCandidate>, GraspError> {
    sample_constrained(cloud, cloud, &|_| true, gripper, table_height, count, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::pose_xyz_yaw;
    use crate::scene::catalog::screwdriver;
    use crate::scene::{sample_surface, CloudSource, SceneObject, Shape};

    fn cloud_of(o: &SceneObject, n: usize) -> PointCloud {
        let (points, normals) = sample_surface(o, n);
        PointCloud { points, normals, source: CloudSource::Completed }
    }

    /// Shape resting on the table at z = 0 (primitives are centered on their origin).
    fn solid(shape: Shape, lift: f64) -> SceneObject {
        SceneObject {
            id: "s".into(),
            name: "solid".into(),
            synonyms: vec![],
            attributes: vec![],
            shape,
            pose: pose_xyz_yaw(0.0, 0.0, lift, 0.0),
            parts: vec![],
            mass_class: crate::scene::MassClass::Large,
        }
    }

    #[test]
    fn cylinder_side_grasps() {
        let o = solid(Shape::Cylinder { radius: 0.03, half_height: 0.06 }, 0.06);
        let g = sample_grasps(&cloud_of(&o, 2500), &GripperModel::default(), 0.0, 40, 1).unwrap();
        assert!(!g.is_empty());
        let good: Vec<_> = g.iter().filter(|c| c.stability > 0.95).collect();
        assert!(!good.is_empty());
        for c in good {
            let jaw = c.pose.rotation * Vec3::x();
            assert!(jaw.z.abs() < 0.1, "jaw axis perpendicular to the cylinder axis");
            assert!((c.width - 0.06).abs() < 0.003, "width {}", c.width);
        }
        for c in &g {
            assert!(c.width <= GripperModel::default().max_width);
            assert!((0.0..=1.0).contains(&c.stability));
            assert!((c.approach.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn contacts_lie_on_the_cloud() {
        let o = solid(Shape::Box { half_extents: [0.02, 0.03, 0.04] }, 0.04);
        let cloud = cloud_of(&o, 2000);
        let g = sample_grasps(&cloud, &GripperModel::default(), 0.0, 30, 2).unwrap();
        for c in &g {
            for p in &c.contacts {
                let d = cloud.points.iter().map(|q| (q - p).norm()).fold(f64::INFINITY, f64::min);
                assert!(d <= CONTACT_TOLERANCE);
            }
            // jaw line through both contacts
            let jaw = c.pose.rotation * Vec3::x();
            assert!(((c.contacts[1] - c.contacts[0]).normalize() - jaw).norm() < 1e-9);
        }
    }

    #[test]
    fn oversized_sphere_has_no_grasp() {
        let o = solid(Shape::Sphere { radius: 0.06 }, 0.06);
        assert_eq!(sample_grasps(&cloud_of(&o, 1500), &GripperModel::default(), 0.0, 20, 3), Err(GraspError::NoGrasp));
    }

    #[test]
    fn degenerate_clouds_are_rejected() {
        let line: Vec<Point> = (0..50).map(|i| Point::new(i as f64 * 0.001, 0.0, 0.1)).collect();
        let cloud = PointCloud::new(line, CloudSource::Observed);
        assert_eq!(sample_grasps(&cloud, &GripperModel::default(), 0.0, 5, 1), Err(GraspError::Degenerate));
        let few = PointCloud::new(vec![Point::origin(); 5], CloudSource::Observed);
        assert_eq!(sample_grasps(&few, &GripperModel::default(), 0.0, 5, 1), Err(GraspError::TooFewPoints(5)));
    }

    #[test]
    fn part_cloud_keeps_contacts_in_part() {
        let o = screwdriver().instantiate("sd", pose_xyz_yaw(0.0, 0.0, 0.0, 0.3), None);
        let full = cloud_of(&o, 3000);
        let shaft = o.part("shaft").unwrap();
        let part = full.filter_indexed(|i| o.in_part(shaft, &full.points[i]));
        let g = sample_grasps(&part, &GripperModel::default(), 0.0, 20, 4).unwrap();
        for c in &g {
            for p in &c.contacts {
                assert!(o.in_part(shaft, p));
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let o = solid(Shape::Box { half_extents: [0.02, 0.03, 0.04] }, 0.04);
        let cloud = cloud_of(&o, 1500);
        let a = sample_grasps(&cloud, &GripperModel::default(), 0.0, 15, 9).unwrap();
        assert_eq!(a, sample_grasps(&cloud, &GripperModel::default(), 0.0, 15, 9).unwrap());
    }

    #[test]
    fn grasps_clear_the_table() {
        let o = solid(Shape::Box { half_extents: [0.02, 0.03, 0.02] }, 0.02);
        let g = sample_grasps(&cloud_of(&o, 1500), &GripperModel::default(), 0.0, 30, 5).unwrap();
        let gripper = GripperModel::default();
        for c in &g {
            for b in gripper.boxes(c.width) {
                for k in b.corners() {
                    assert!((c.pose * Point::from(k)).z >= TABLE_MARGIN - 1e-12);
                }
            }
        }
    }
}
