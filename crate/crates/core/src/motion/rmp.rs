//! Attractor policy, metric pullback and the fixed-step integrator.

use super::{ArmModel, JointTrajectory, Joints, MotionError, RmpParams, Task, TaskState, TrajectorySample};
use crate::geometry::{rotation_error, Point, Pose, Vec3};
use nalgebra::{Isometry3, Matrix6, UnitQuaternion};
use serde::{Deserialize, Serialize};

/// Singular values below this are dropped by the pseudo-inverse.
const PINV_CUTOFF: f64 = 1e-9;
/// Singular values below this get damped inversion, fading to none at the threshold.
const DAMPING_ONSET: f64 = 0.05;
const MAX_DAMPING: f64 = 0.05;
/// Step for the Jacobian time-derivative estimate.
const JDOT_STEP: f64 = 1e-6;

/// Position followed by the rotation vector.
pub fn pose_to_task(p: &Pose) -> Task {
    let v = p.translation.vector;
    let r = p.rotation.scaled_axis();
    Task::new(v.x, v.y, v.z, r.x, r.y, r.z)
}

/// `x_g − x` with the orientation part taken as the world-frame rotation vector
/// from `x` to `x_g` (rotation vectors do not subtract).
pub fn task_error(x: &Task, x_g: &Task) -> Task {
    let rot = |t: &Task| UnitQuaternion::from_scaled_axis(Vec3::new(t[3], t[4], t[5]));
    let dp = Vec3::new(x_g[0] - x[0], x_g[1] - x[1], x_g[2] - x[2]);
    let dr = rotation_error(&rot(x), &rot(x_g));
    Task::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

/// Soft normalization `e / (|e| + c)`: points along `e`, norm below 1.
pub fn soft_normalize(e: &Task, c: f64) -> Task {
    e / (e.norm() + c)
}

/// Potential whose gradient magnitude is `r / (r + c)`.
pub fn potential(r: f64, c: f64) -> f64 {
    r - c * (1.0 + r / c).ln()
}

/// Kinetic plus scaled potential energy of the task state.
pub fn task_energy(error: &Task, x_dot: &Task, params: &RmpParams) -> f64 {
    0.5 * x_dot.norm_squared() + params.kappa * potential(error.norm(), params.soft_norm_c)
}

/// Task acceleration `κ·s(x, x_g) − Ω·ẋ`.
pub fn attractor(state: &TaskState, x_g: &Task, params: &RmpParams) -> Task {
    soft_normalize(&task_error(&state.x, x_g), params.soft_norm_c) * params.kappa - state.x_dot * params.omega
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PullResult {
    pub q_ddot: Joints,
    pub a_q: Matrix6<f64>,
    /// Some direction was near-singular (damped or cut off).
    pub singular: bool,
}

/// Joint acceleration and metric for the task policy `(f, A)` through `J`.
/// Pseudo-inverse by SVD; singular values under 0.05 are inverted
/// with a damping that fades out at the onset, so well-conditioned Jacobians
/// get the exact pseudo-inverse.
pub fn pull(f: &Task, a: &Matrix6<f64>, j: &Matrix6<f64>) -> PullResult {
    let a_q = j.transpose() * a * j;
    // weighted least squares: with A = LLᵀ, solve (LᵀJ) q̈ = Lᵀf
    let l = a.cholesky().map(|c| c.l()).unwrap_or_else(Matrix6::identity);
    let jw = l.transpose() * j;
    let fw = l.transpose() * f;
    let svd = jw.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut singular = false;
    let inv = svd.singular_values.map(|sigma| {
        if sigma <= PINV_CUTOFF {
            singular = true;
            0.0
        } else if sigma < DAMPING_ONSET {
            singular = true;
            let lambda2 = MAX_DAMPING * MAX_DAMPING * (1.0 - (sigma / DAMPING_ONSET).powi(2));
            sigma / (sigma * sigma + lambda2)
        } else {
            1.0 / sigma
        }
    });
    let q_ddot = v_t.transpose() * Matrix6::from_diagonal(&inv) * u.transpose() * fw;
    PullResult { q_ddot, a_q, singular }
}

fn reachable(arm: &ArmModel, target: &Pose) -> Result<(), MotionError> {
    let distance = (Point::from(target.translation.vector) - arm.shoulder()).norm();
    let reach = arm.reach();
    if distance > reach {
        return Err(MotionError::Unreachable { distance, reach });
    }
    Ok(())
}

/// Runs the attractor from `q0` (at rest) to `target` with semi-implicit Euler steps.
pub fn integrate(arm: &ArmModel, q0: &Joints, target: &Pose, params: &RmpParams) -> Result<JointTrajectory, MotionError> {
    params.validate()?;
    arm.check_limits(q0)?;
    reachable(arm, target)?;
    let x_g = pose_to_task(target);
    let metric = Matrix6::identity();
    let dt = params.dt;
    let mut q = *q0;
    let mut qd = Joints::zeros();
    let mut samples = vec![TrajectorySample { t: 0.0, q: q.into(), q_dot: qd.into() }];
    let mut converged = false;
    let mut e = Task::zeros();
    for step in 0..=params.max_steps {
        let pose = arm.fk(&q)?;
        let x = pose_to_task(&pose);
        e = task_error(&x, &x_g);
        let j = arm.jacobian(&q);
        let xd = j * qd;
        if e.fixed_rows::<3>(0).norm() < params.pos_tol && e.fixed_rows::<3>(3).norm() < params.rot_tol && xd.norm() < params.vel_tol {
            converged = true;
            break;
        }
        if step == params.max_steps {
            break;
        }
        let mut f = attractor(&TaskState { x, x_dot: xd }, &x_g, params);
        if let Some(r) = &params.repulsor {
            let h = pose.translation.vector.z - r.height;
            if h < r.range {
                f[2] += r.gain / h.max(1e-3);
            }
        }
        // curvature term: the policy is on ẍ = J q̈ + J̇ q̇
        let jdot_qd = if qd.norm() > 0.0 {
            let ahead = q + qd * JDOT_STEP;
            (arm.jacobian(&ahead) - j) / JDOT_STEP * qd
        } else {
            Task::zeros()
        };
        let qdd = pull(&(f - jdot_qd), &metric, &j).q_ddot;
        qd += qdd * dt;
        let peak = qd.amax();
        if peak > arm.velocity_limit {
            qd *= arm.velocity_limit / peak;
        }
        q += qd * dt;
        for i in 0..6 {
            let [lo, hi] = arm.joint_limits[i];
            if q[i] <= lo || q[i] >= hi {
                q[i] = q[i].clamp(lo, hi);
                qd[i] = 0.0;
            }
        }
        samples.push(TrajectorySample { t: (step + 1) as f64 * dt, q: q.into(), q_dot: qd.into() });
    }
    Ok(JointTrajectory {
        samples,
        converged,
        position_error: e.fixed_rows::<3>(0).norm(),
        orientation_error: e.fixed_rows::<3>(3).norm(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripperEventKind {
    Open,
    Close,
    Release,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GripperEvent {
    pub t: f64,
    pub kind: GripperEventKind,
}

/// Approach (through the pre-grasp pose) then delivery to the user pose.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandoverPlan {
    pub approach: JointTrajectory,
    pub deliver: JointTrajectory,
    pub events: Vec<GripperEvent>,
}

impl HandoverPlan {
    pub fn converged(&self) -> bool {
        self.approach.converged && self.deliver.converged
    }

    /// Both phases as one trajectory on a common clock.
    pub fn concatenated(&self) -> Vec<TrajectorySample> {
        let mut out = self.approach.samples.clone();
        out.extend(self.deliver.samples.iter().skip(1).copied());
        out
    }
}

/// Appends `next` to `acc`, shifting its clock and dropping its duplicated first sample.
fn chain(acc: &mut JointTrajectory, next: JointTrajectory) {
    let t0 = acc.samples.last().map_or(0.0, |s| s.t);
    acc.samples.extend(next.samples.into_iter().skip(1).map(|s| TrajectorySample { t: s.t + t0, ..s }));
    acc.converged = next.converged;
    acc.position_error = next.position_error;
    acc.orientation_error = next.orientation_error;
}

pub fn handover_plan(
    arm: &ArmModel,
    q0: &Joints,
    grasp: &Pose,
    user: &Pose,
    pregrasp_offset: f64,
    params: &RmpParams,
) -> Result<HandoverPlan, MotionError> {
    reachable(arm, grasp)?;
    reachable(arm, user)?;
    let approach = if pregrasp_offset > 0.0 {
        let pre = grasp * Isometry3::translation(0.0, 0.0, -pregrasp_offset);
        let mut first = integrate(arm, q0, &pre, params)?;
        let at_pre = first.last_q().expect("trajectory has a start sample");
        let second = integrate(arm, &at_pre, grasp, params)?;
        let both = first.converged && second.converged;
        chain(&mut first, second);
        first.converged = both;
        first
    } else {
        integrate(arm, q0, grasp, params)?
    };
    let at_grasp = approach.last_q().expect("trajectory has a start sample");
    let deliver_local = integrate(arm, &at_grasp, user, params)?;
    let t_close = approach.samples.last().map_or(0.0, |s| s.t);
    let mut deliver = JointTrajectory { samples: vec![*approach.samples.last().expect("non-empty")], ..deliver_local.clone() };
    chain(&mut deliver, deliver_local);
    let t_release = deliver.samples.last().map_or(t_close, |s| s.t);
    Ok(HandoverPlan {
        approach,
        deliver,
        events: vec![
            GripperEvent { t: 0.0, kind: GripperEventKind::Open },
            GripperEvent { t: t_close, kind: GripperEventKind::Close },
            GripperEvent { t: t_release, kind: GripperEventKind::Release },
        ],
    })
}
