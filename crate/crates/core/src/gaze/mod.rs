//! Gaze geometry: ensemble direction, monitor intersection, EMA smoothing and
//! the focal heatmap, plus a seeded gaze generator.

mod heatmap;
pub mod log;
mod simulate;

pub use heatmap::{build_heatmap, Heatmap, DEFAULT_SIGMA_PX};
pub use simulate::{sample_vmf, simulate_gaze, FRAME_PERIOD};

use crate::geometry::{Point, Vec3};
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_ALPHA: f64 = 0.3;
pub const DEFAULT_BETA: f64 = 0.3;
/// Monitor pixel pitch (m/px) of the default desk monitor.
pub const DEFAULT_PIXEL_PITCH: f64 = 0.0008;
/// Eye-to-screen distance (m) of the default desk setup.
pub const DEFAULT_VIEWING_DISTANCE: f64 = 0.6;

#[derive(Debug, Error, PartialEq)]
pub enum GazeError {
    #[error("degenerate ensemble direction (inputs cancel)")]
    DegenerateDirection,
    #[error("input direction is not unit length (|v| = {0})")]
    NotUnit(f64),
    #[error("alpha must lie in [0, 1], got {0}")]
    AlphaRange(f64),
    #[error("beta must lie in (0, 1], got {0}")]
    BetaRange(f64),
    #[error("gaze ray does not intersect the monitor plane")]
    NoIntersection,
    #[error("monitor plane is behind the viewer (sigma = {0})")]
    BehindViewer(f64),
    #[error("head pose is not calibrated")]
    Uncalibrated,
    #[error("empty gaze stream")]
    EmptyStream,
    #[error("sigma must be positive, got {0}")]
    Sigma(f64),
    #[error("target ({0}, {1}) lies outside the monitor")]
    TargetOutside(f64, f64),
    #[error("frame count must be ≥1")]
    NoFrames,
    #[error("heatmap has no mass inside the image")]
    EmptyHeatmap,
    #[error("invalid monitor: {0}")]
    InvalidMonitor(String),
}

/// Monitor plane: pixel (λ, μ) sits at `origin + λ·v1 + μ·v2`, with the
/// origin at the bottom-left corner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorPlane {
    pub origin: Point,
    pub v1: Vec3,
    pub v2: Vec3,
    pub width_px: u32,
    pub height_px: u32,
}

impl MonitorPlane {
    /// Upright monitor in the z = 0 plane showing a `width × height` image 1:1.
    pub fn desk(width_px: u32, height_px: u32, pitch: f64) -> Self {
        MonitorPlane {
            origin: Point::origin(),
            v1: Vec3::new(pitch, 0.0, 0.0),
            v2: Vec3::new(0.0, pitch, 0.0),
            width_px,
            height_px,
        }
    }

    pub fn validate(&self) -> Result<(), GazeError> {
        if self.v1.norm() == 0.0 || self.v2.norm() == 0.0 {
            return Err(GazeError::InvalidMonitor("basis vectors must be non-zero".into()));
        }
        if self.v1.dot(&self.v2).abs() > 1e-9 {
            return Err(GazeError::InvalidMonitor("basis vectors must be orthogonal".into()));
        }
        if self.width_px == 0 || self.height_px == 0 {
            return Err(GazeError::InvalidMonitor("monitor must have pixels".into()));
        }
        Ok(())
    }

    pub fn point_at(&self, lambda: f64, mu: f64) -> Point {
        self.origin + self.v1 * lambda + self.v2 * mu
    }

    pub fn contains(&self, lambda: f64, mu: f64) -> bool {
        (0.0..self.width_px as f64).contains(&lambda) && (0.0..self.height_px as f64).contains(&mu)
    }

    /// Monitor pixel (bottom-left origin) to image pixel (top-left origin).
    pub fn to_image(&self, lambda: f64, mu: f64) -> (f64, f64) {
        (lambda, (self.height_px as f64 - 1.0) - mu)
    }

    pub fn from_image(&self, x: f64, y: f64) -> (f64, f64) {
        (x, (self.height_px as f64 - 1.0) - y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadPose {
    pub position: Point,
    pub calibrated: bool,
}

impl HeadPose {
    /// Calibrated head centered in front of `monitor` at `distance` metres.
    pub fn centered(monitor: &MonitorPlane, distance: f64) -> Self {
        let center = monitor.point_at(monitor.width_px as f64 / 2.0, monitor.height_px as f64 / 2.0);
        let normal = monitor.v1.cross(&monitor.v2).normalize();
        HeadPose { position: center + normal * distance, calibrated: true }
    }
}

/// Head and eye directions observed in one camera frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GazeFrame {
    pub t: f64,
    pub v_h: Vec3,
    pub v_g: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GazeParams {
    pub alpha: f64,
    pub beta: f64,
    pub sigma_px: f64,
}

impl Default for GazeParams {
    fn default() -> Self {
        GazeParams { alpha: DEFAULT_ALPHA, beta: DEFAULT_BETA, sigma_px: DEFAULT_SIGMA_PX }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intersection {
    pub lambda: f64,
    pub mu: f64,
    pub sigma: f64,
}

fn check_unit(v: &Vec3) -> Result<(), GazeError> {
    let n = v.norm();
    if (n - 1.0).abs() > 1e-9 {
        return Err(GazeError::NotUnit(n));
    }
    Ok(())
}

pub fn ensemble_direction(v_h: &Vec3, v_g: &Vec3, alpha: f64) -> Result<Vec3, GazeError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(GazeError::AlphaRange(alpha));
    }
    check_unit(v_h)?;
    check_unit(v_g)?;
    if alpha == 1.0 {
        return Ok(*v_h);
    }
    if alpha == 0.0 {
        return Ok(*v_g);
    }
    let mix = v_h * alpha + v_g * (1.0 - alpha);
    mix.try_normalize(1e-12).ok_or(GazeError::DegenerateDirection)
}

/// Solves `B_m + λ·V_m1 + μ·V_m2 = B_u + σ·V_u`.
pub fn intersect_monitor(monitor: &MonitorPlane, head: &HeadPose, v_u: &Vec3) -> Result<Intersection, GazeError> {
    if !head.calibrated {
        return Err(GazeError::Uncalibrated);
    }
    let a = Matrix3::from_columns(&[monitor.v1, monitor.v2, -v_u]);
    let rhs = head.position - monitor.origin;
    // parallel rays make the system singular relative to the basis scale
    let scale = monitor.v1.norm() * monitor.v2.norm() * v_u.norm();
    if a.determinant().abs() <= 1e-12 * scale {
        return Err(GazeError::NoIntersection);
    }
    let x = a.lu().solve(&rhs).ok_or(GazeError::NoIntersection)?;
    if x[2] <= 0.0 {
        return Err(GazeError::BehindViewer(x[2]));
    }
    Ok(Intersection { lambda: x[0], mu: x[1], sigma: x[2] })
}

/// Incremental exponential moving average; the first sample seeds the state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ema {
    pub beta: f64,
    pub state: Option<(f64, f64)>,
}

impl Ema {
    pub fn new(beta: f64) -> Result<Self, GazeError> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(GazeError::BetaRange(beta));
        }
        Ok(Ema { beta, state: None })
    }

    pub fn push(&mut self, p: (f64, f64)) -> (f64, f64) {
        let next = match self.state {
            None => p,
            Some((x, y)) => (self.beta * p.0 + (1.0 - self.beta) * x, self.beta * p.1 + (1.0 - self.beta) * y),
        };
        self.state = Some(next);
        next
    }
}

pub fn ema_stream(points: &[(f64, f64)], beta: f64) -> Result<(f64, f64), GazeError> {
    let mut ema = Ema::new(beta)?;
    let mut last = None;
    for p in points {
        last = Some(ema.push(*p));
    }
    last.ok_or(GazeError::EmptyStream)
}

/// Full per-stream path: ensemble each frame, intersect, smooth. Returns the
/// smoothed monitor point (λ, μ).
pub fn gaze_point(
    frames: &[GazeFrame],
    monitor: &MonitorPlane,
    head: &HeadPose,
    params: &GazeParams,
) -> Result<(f64, f64), GazeError> {
    let mut ema = Ema::new(params.beta)?;
    let mut last = None;
    for f in frames {
        let v_u = ensemble_direction(&f.v_h, &f.v_g, params.alpha)?;
        let hit = intersect_monitor(monitor, head, &v_u)?;
        last = Some(ema.push((hit.lambda, hit.mu)));
    }
    last.ok_or(GazeError::EmptyStream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn ensemble_fixtures() {
        let d = Vec3::new(0.0, 0.0, -1.0);
        assert_eq!(ensemble_direction(&d, &d, 0.3).unwrap(), d);
        let h = Vec3::x();
        let g = Vec3::y();
        assert_eq!(ensemble_direction(&h, &g, 0.0).unwrap(), g);
        assert_eq!(ensemble_direction(&h, &g, 1.0).unwrap(), h);
        let half = ensemble_direction(&h, &g, 0.5).unwrap();
        assert_relative_eq!(half, Vec3::new(1.0, 1.0, 0.0) / 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(ensemble_direction(&h, &-h, 0.5), Err(GazeError::DegenerateDirection));
        assert!(matches!(ensemble_direction(&(h * 2.0), &g, 0.5), Err(GazeError::NotUnit(_))));
    }

    #[test]
    fn perpendicular_gaze_hits_expected_pixel() {
        let p = 0.0003;
        let monitor = MonitorPlane::desk(1920, 1080, p);
        let head = HeadPose { position: Point::new(0.15, 0.12, 0.6), calibrated: true };
        let hit = intersect_monitor(&monitor, &head, &Vec3::new(0.0, 0.0, -1.0)).unwrap();
        assert_relative_eq!(hit.lambda, 500.0, epsilon = 1e-9);
        assert_relative_eq!(hit.mu, 400.0, epsilon = 1e-9);
        assert_relative_eq!(hit.sigma, 0.6, epsilon = 1e-12);
        assert_eq!(intersect_monitor(&monitor, &head, &Vec3::y()), Err(GazeError::NoIntersection));
        assert!(matches!(intersect_monitor(&monitor, &head, &Vec3::z()), Err(GazeError::BehindViewer(_))));
        let loose = HeadPose { calibrated: false, ..head };
        assert_eq!(intersect_monitor(&monitor, &loose, &-Vec3::z()), Err(GazeError::Uncalibrated));
    }

    #[test]
    fn ema_fixtures() {
        assert_eq!(ema_stream(&[(320.0, 240.0); 5], 0.42).unwrap(), (320.0, 240.0));
        assert_eq!(ema_stream(&[(1.0, 2.0), (7.0, 9.0)], 1.0).unwrap(), (7.0, 9.0));
        assert_eq!(ema_stream(&[(0.0, 0.0), (10.0, 0.0)], 0.5).unwrap(), (5.0, 0.0));
        assert_eq!(ema_stream(&[], 0.5), Err(GazeError::EmptyStream));
        assert_eq!(ema_stream(&[(0.0, 0.0)], 0.0), Err(GazeError::BetaRange(0.0)));
    }

    #[test]
    fn image_mapping_flips_vertical_axis() {
        let m = MonitorPlane::desk(640, 480, DEFAULT_PIXEL_PITCH);
        assert_eq!(m.to_image(10.0, 0.0), (10.0, 479.0));
        assert_eq!(m.from_image(10.0, 479.0), (10.0, 0.0));
    }

    fn unit(v: (f64, f64, f64)) -> Option<Vec3> {
        Vec3::new(v.0, v.1, v.2).try_normalize(1e-3)
    }

    proptest! {
        #[test]
        fn ensemble_is_unit_and_scale_invariant(
            a in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
            b in (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
            alpha in 0.01f64..0.99,
            k in 0.1f64..10.0,
        ) {
            let (Some(h), Some(g)) = (unit(a), unit(b)) else { return Ok(()) };
            prop_assume!((h * alpha + g * (1.0 - alpha)).norm() > 1e-6);
            let u = ensemble_direction(&h, &g, alpha).unwrap();
            prop_assert!((u.norm() - 1.0).abs() < 1e-12);
            let scaled = (h * (k * alpha) + g * (k * (1.0 - alpha))).normalize();
            prop_assert!((scaled - u).norm() < 1e-12);
        }

        #[test]
        fn ema_is_shift_equivariant(
            pts in prop::collection::vec((-500.0f64..500.0, -500.0f64..500.0), 1..40),
            beta in 0.01f64..=1.0,
            c in (-100.0f64..100.0, -100.0f64..100.0),
        ) {
            let base = ema_stream(&pts, beta).unwrap();
            let shifted: Vec<(f64, f64)> = pts.iter().map(|p| (p.0 + c.0, p.1 + c.1)).collect();
            let s = ema_stream(&shifted, beta).unwrap();
            prop_assert!((s.0 - base.0 - c.0).abs() < 1e-9 && (s.1 - base.1 - c.1).abs() < 1e-9);
        }

        #[test]
        fn intersection_residual_is_tiny(
            ox in -1.0f64..1.0, oy in -1.0f64..1.0, oz in -1.0f64..1.0,
            yaw in -3.0f64..3.0, pitch in -1.0f64..1.0,
            pitch_m in 0.0001f64..0.002,
            hx in -0.3f64..0.3, hy in -0.3f64..0.3, dist in 0.3f64..1.0,
            tx in 0.0f64..1.0, ty in 0.0f64..1.0,
        ) {
            let r = nalgebra::Rotation3::from_euler_angles(pitch, 0.0, yaw);
            let monitor = MonitorPlane {
                origin: Point::new(ox, oy, oz),
                v1: r * Vec3::new(pitch_m, 0.0, 0.0),
                v2: r * Vec3::new(0.0, pitch_m, 0.0),
                width_px: 1000,
                height_px: 800,
            };
            let normal = monitor.v1.cross(&monitor.v2).normalize();
            let head = HeadPose { position: monitor.point_at(500.0, 400.0) + r * Vec3::new(hx, hy, 0.0) + normal * dist, calibrated: true };
            let target = monitor.point_at(tx * 1000.0, ty * 800.0);
            let v = (target - head.position).normalize();
            let hit = intersect_monitor(&monitor, &head, &v).unwrap();
            let residual = (monitor.point_at(hit.lambda, hit.mu) - (head.position + v * hit.sigma)).norm();
            prop_assert!(residual < 1e-9);
        }
    }
}
