//! Arm motion: kinematics, an attractor motion policy pulled back to joint
//! space, and the two-phase grasp/handover plan.

mod arm;
mod rmp;

pub use arm::{jacobian_rank, ArmModel, DhJoint};
pub use rmp::{
    attractor, handover_plan, integrate, pose_to_task, potential, pull, soft_normalize, task_energy, task_error, GripperEvent, GripperEventKind,
    HandoverPlan, PullResult,
};

use nalgebra::{Vector6, U6};
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

pub type Joints = Vector6<f64>;
pub type Task = Vector6<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum MotionError {
    #[error("joint {joint} value {value} outside its limits")]
    OutOfLimits { joint: usize, value: f64 },
    #[error("target is {distance:.3} m from the shoulder, beyond the {reach:.3} m reach")]
    Unreachable { distance: f64, reach: f64 },
    #[error("invalid arm model: {0}")]
    InvalidArm(String),
    #[error("invalid motion parameters: {0}")]
    InvalidParams(String),
}

/// Task-space state: position and rotation vector, with their rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskState {
    pub x: Task,
    pub x_dot: Task,
}

/// Optional upward push on the tool as it nears the table plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRepulsor {
    pub height: f64,
    /// Acceleration at 1 m distance; grows as 1/distance.
    pub gain: f64,
    /// Ignored beyond this height above the table (m).
    pub range: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RmpParams {
    pub kappa: f64,
    pub omega: f64,
    /// Soft-normalization length (m).
    pub soft_norm_c: f64,
    pub dt: f64,
    pub max_steps: usize,
    pub pos_tol: f64,
    pub vel_tol: f64,
    /// Orientation tolerance for convergence (rad).
    pub rot_tol: f64,
    pub repulsor: Option<TableRepulsor>,
}

impl Default for RmpParams {
    fn default() -> Self {
        RmpParams {
            kappa: 40.0,
            omega: 12.0,
            soft_norm_c: 1.0,
            dt: 0.01,
            max_steps: 1500,
            pos_tol: 0.005,
            vel_tol: 0.02,
            rot_tol: 0.05,
            repulsor: None,
        }
    }
}

impl RmpParams {
    pub fn validate(&self) -> Result<(), MotionError> {
        let positive = [
            ("kappa", self.kappa),
            ("omega", self.omega),
            ("soft_norm_c", self.soft_norm_c),
            ("dt", self.dt),
            ("pos_tol", self.pos_tol),
            ("vel_tol", self.vel_tol),
            ("rot_tol", self.rot_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MotionError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_steps == 0 {
            return Err(MotionError::InvalidParams("max_steps must be at least 1".into()));
        }
        Ok(())
    }

    /// Damping ratio of the policy linearized at the goal.
    pub fn damping_ratio(&self) -> f64 {
        self.omega / (2.0 * (self.kappa / self.soft_norm_c).sqrt())
    }

    /// Below 0.5 the approach overshoots visibly.
    pub fn strongly_underdamped(&self) -> bool {
        self.damping_ratio() < 0.5
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub q: [f64; 6],
    pub q_dot: [f64; 6],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointTrajectory {
    pub samples: Vec<TrajectorySample>,
    pub converged: bool,
    /// Final position and orientation error to the target.
    pub position_error: f64,
    pub orientation_error: f64,
}

impl JointTrajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last_q(&self) -> Option<Joints> {
        self.samples.last().map(|s| Joints::from(s.q))
    }

    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }
}

#[derive(Serialize)]
struct TrajectoryHeader<'a> {
    format: &'static str,
    samples: usize,
    converged: bool,
    params: &'a RmpParams,
}

/// Newline-delimited trajectory: one header object, then one `[t, q.., q_dot..]` row per sample.
pub fn write_trajectory<W: Write>(mut out: W, traj: &JointTrajectory, params: &RmpParams) -> std::io::Result<()> {
    let header = TrajectoryHeader { format: "joint-trajectory/1", samples: traj.len(), converged: traj.converged, params };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for s in &traj.samples {
        let row: Vec<f64> = std::iter::once(s.t).chain(s.q).chain(s.q_dot).collect();
        writeln!(out, "{}", serde_json::to_string(&row)?)?;
    }
    Ok(())
}

/// Rows written by [`write_trajectory`], header skipped.
pub fn read_trajectory_rows(text: &str) -> Result<Vec<TrajectorySample>, String> {
    text.lines()
        .skip(1)
        .enumerate()
        .map(|(i, line)| {
            let row: Vec<f64> = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 2))?;
            if row.len() != 13 {
                return Err(format!("line {}: expected 13 values, got {}", i + 2, row.len()));
            }
            let v = nalgebra::OVector::<f64, U6>::from_row_slice(&row[1..7]);
            let w = nalgebra::OVector::<f64, U6>::from_row_slice(&row[7..13]);
            Ok(TrajectorySample { t: row[0], q: v.into(), q_dot: w.into() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_params_are_well_damped() {
        let p = RmpParams::default();
        p.validate().unwrap();
        assert!(!p.strongly_underdamped());
        let stiff = RmpParams { soft_norm_c: 0.05, ..p.clone() };
        assert!(stiff.strongly_underdamped());
        assert!(RmpParams { dt: 0.0, ..p }.validate().is_err());
    }

    #[test]
    fn trajectory_file_round_trip() {
        let traj = JointTrajectory {
            samples: vec![
                TrajectorySample { t: 0.0, q: [0.1, 0.2, 0.3, 0.4, 0.5, 0.6], q_dot: [0.0; 6] },
                TrajectorySample { t: 0.01, q: [0.1, 0.2, 0.3, 0.4, 0.5, 0.61], q_dot: [0.0, 0.0, 0.0, 0.0, 0.0, 1.0] },
            ],
            converged: true,
            position_error: 0.001,
            orientation_error: 0.0,
        };
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &traj, &RmpParams::default()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(read_trajectory_rows(&text).unwrap(), traj.samples);
        assert!(read_trajectory_rows("{}\n[1, 2]").unwrap_err().starts_with("line 2"));
    }
}
