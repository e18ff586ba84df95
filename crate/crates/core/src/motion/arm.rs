//! Serial-arm kinematics on a standard DH table.

use super::{Joints, MotionError};
use crate::geometry::{Point, Pose, Vec3};
use nalgebra::{Isometry3, Matrix6, Translation3, UnitQuaternion};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI, TAU};

/// One revolute joint: `Rz(θ + offset) · Tz(d) · Tx(a) · Rx(α)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DhJoint {
    pub d: f64,
    pub a: f64,
    pub alpha: f64,
    #[serde(default)]
    pub theta_offset: f64,
}

impl DhJoint {
    fn transform(&self, theta: f64) -> Pose {
        let rz = Isometry3::from_parts(Translation3::new(0.0, 0.0, self.d), UnitQuaternion::from_axis_angle(&Vec3::z_axis(), theta + self.theta_offset));
        let rx = Isometry3::from_parts(Translation3::new(self.a, 0.0, 0.0), UnitQuaternion::from_axis_angle(&Vec3::x_axis(), self.alpha));
        rz * rx
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    pub joints: [DhJoint; 6],
    /// Robot base frame in the world.
    pub base: Pose,
    /// Flange to tool center point (the gripper frame).
    pub tool: Pose,
    pub joint_limits: [[f64; 2]; 6],
    /// Per-joint speed bound (rad/s).
    pub velocity_limit: f64,
    /// Tool pose at the zero configuration.
    pub reference_pose: Pose,
    /// Start configuration for plans.
    pub home: [f64; 6],
}

/// Slack when testing a configuration against the limits.
const LIMIT_EPS: f64 = 1e-9;

impl ArmModel {
    /// UR5e-like table, base at the robot-side table edge, 16 cm tool.
    pub fn ur5e() -> ArmModel {
        let joints = [
            DhJoint { d: 0.1625, a: 0.0, alpha: FRAC_PI_2, theta_offset: 0.0 },
            DhJoint { d: 0.0, a: -0.425, alpha: 0.0, theta_offset: 0.0 },
            DhJoint { d: 0.0, a: -0.3922, alpha: 0.0, theta_offset: 0.0 },
            DhJoint { d: 0.1333, a: 0.0, alpha: FRAC_PI_2, theta_offset: 0.0 },
            DhJoint { d: 0.0997, a: 0.0, alpha: -FRAC_PI_2, theta_offset: 0.0 },
            DhJoint { d: 0.0996, a: 0.0, alpha: 0.0, theta_offset: 0.0 },
        ];
        let base = Isometry3::from_parts(Translation3::new(0.0, -0.45, 0.0), UnitQuaternion::from_axis_angle(&Vec3::z_axis(), -FRAC_PI_2));
        let tool = Isometry3::translation(0.0, 0.0, 0.16);
        let mut arm = ArmModel {
            joints,
            base,
            tool,
            joint_limits: [[-TAU, TAU], [-TAU, TAU], [-PI, PI], [-TAU, TAU], [-TAU, TAU], [-TAU, TAU]],
            velocity_limit: PI,
            reference_pose: Pose::identity(),
            home: [0.0, -1.9, 1.9, -1.57, -1.57, 0.0],
        };
        arm.reference_pose = arm.fk_unchecked(&Joints::zeros());
        arm
    }

    pub fn validate(&self) -> Result<(), MotionError> {
        for (i, [lo, hi]) in self.joint_limits.iter().enumerate() {
            if !(lo < hi) {
                return Err(MotionError::InvalidArm(format!("joint {i} limits [{lo}, {hi}]")));
            }
        }
        if !(self.velocity_limit > 0.0) {
            return Err(MotionError::InvalidArm("velocity limit must be positive".into()));
        }
        let zero = self.fk_unchecked(&Joints::zeros());
        if (zero.translation.vector - self.reference_pose.translation.vector).norm() > 1e-9
            || zero.rotation.angle_to(&self.reference_pose.rotation) > 1e-9
        {
            return Err(MotionError::InvalidArm("zero-configuration pose differs from the reference pose".into()));
        }
        self.check_limits(&Joints::from(self.home))
    }

    pub fn check_limits(&self, q: &Joints) -> Result<(), MotionError> {
        for i in 0..6 {
            let [lo, hi] = self.joint_limits[i];
            if !q[i].is_finite() || q[i] < lo - LIMIT_EPS || q[i] > hi + LIMIT_EPS {
                return Err(MotionError::OutOfLimits { joint: i, value: q[i] });
            }
        }
        Ok(())
    }

    /// Frames after the base and after each joint (7 poses, world frame),
    /// the last one without the tool offset.
    fn frames(&self, q: &Joints) -> [Pose; 7] {
        let mut out = [self.base; 7];
        for i in 0..6 {
            out[i + 1] = out[i] * self.joints[i].transform(q[i]);
        }
        out
    }

    fn fk_unchecked(&self, q: &Joints) -> Pose {
        self.frames(q)[6] * self.tool
    }

    /// Tool pose in the world.
    pub fn fk(&self, q: &Joints) -> Result<Pose, MotionError> {
        self.check_limits(q)?;
        Ok(self.fk_unchecked(q))
    }

    /// Geometric Jacobian of the tool point: rows 0..3 linear, 3..6 angular (world frame).
    pub fn jacobian(&self, q: &Joints) -> Matrix6<f64> {
        let f = self.frames(q);
        let tip = (f[6] * self.tool).translation.vector;
        let mut j = Matrix6::zeros();
        for i in 0..6 {
            let z = f[i].rotation * Vec3::z();
            let lin = z.cross(&(tip - f[i].translation.vector));
            j.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
            j.fixed_view_mut::<3, 1>(3, i).copy_from(&z);
        }
        j
    }

    /// Shoulder center (second joint origin) in the world.
    pub fn shoulder(&self) -> Point {
        Point::from((self.base * Isometry3::translation(0.0, 0.0, self.joints[0].d)).translation.vector)
    }

    /// Upper bound on the distance from the shoulder to the tool point.
    pub fn reach(&self) -> f64 {
        let links: f64 = self.joints[1..].iter().map(|j| j.a.abs() + j.d.abs()).sum();
        links + self.tool.translation.vector.norm()
    }
}

/// Numerical rank of `j` (singular values above `tol`).
pub fn jacobian_rank(j: &Matrix6<f64>, tol: f64) -> usize {
    j.singular_values().iter().filter(|s| **s > tol).count()
}
