use super::{SceneError, Table};
use crate::geometry::{Point, Pose, Vec3};
use nalgebra::{Matrix3, Rotation3, Translation3, UnitQuaternion};
use serde::{Deserialize, Serialize};

/// Pinhole camera. The camera frame follows the x-right, y-down, z-forward
/// convention and `pose` maps camera coordinates to world coordinates.
/// Pixel centers sit at integer coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub pose: Pose,
}

impl CameraModel {
    pub const DEFAULT_WIDTH: u32 = 640;
    pub const DEFAULT_HEIGHT: u32 = 480;
    pub const DEFAULT_FOCAL: f64 = 615.0;

    /// Camera at `eye` looking at `target` with world +z as up.
    pub fn look_at(eye: Point, target: Point, fx: f64, fy: f64, width: u32, height: u32) -> Self {
        let z = (target - eye).normalize();
        let down = -Vec3::z();
        let y = (down - z * down.dot(&z)).try_normalize(1e-9).unwrap_or_else(Vec3::y);
        let x = y.cross(&z);
        let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]));
        CameraModel {
            fx,
            fy,
            cx: (width as f64) / 2.0,
            cy: (height as f64) / 2.0,
            width,
            height,
            pose: Pose::from_parts(Translation3::from(eye.coords), UnitQuaternion::from_rotation_matrix(&rot)),
        }
    }

    /// Default desk camera: robot side of the table, elevated, looking at the table center.
    pub fn default_for(table: &Table) -> Self {
        Self::look_at(
            Point::new(0.0, -0.50, table.height + 0.60),
            Point::new(0.0, 0.0, table.height),
            Self::DEFAULT_FOCAL,
            Self::DEFAULT_FOCAL,
            Self::DEFAULT_WIDTH,
            Self::DEFAULT_HEIGHT,
        )
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: &str| Err(SceneError::InvalidCamera(m.to_string()));
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return bad("focal lengths must be positive");
        }
        if self.width == 0 || self.height == 0 {
            return bad("image must be non-empty");
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return bad("principal point outside the image");
        }
        Ok(())
    }

    pub fn position(&self) -> Point {
        Point::from(self.pose.translation.vector)
    }

    /// World-frame ray direction through pixel (u, v), scaled so the ray
    /// parameter equals camera-frame depth.
    pub fn ray_direction(&self, u: f64, v: f64) -> Vec3 {
        self.pose.rotation * Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Back-projects pixel (u, v) at camera-frame depth `depth` to a world point.
pub fn deproject(u: f64, v: f64, depth: f64, camera: &CameraModel) -> Result<Point, SceneError> {
    if !(depth > 0.0) {
        return Err(SceneError::NonPositiveDepth(depth));
    }
    let local = Point::new((u - camera.cx) / camera.fx * depth, (v - camera.cy) / camera.fy * depth, depth);
    Ok(camera.pose.transform_point(&local))
}

/// Projects a world point to (u, v, depth); `None` behind the camera.
pub fn project(p: &Point, camera: &CameraModel) -> Option<(f64, f64, f64)> {
    let c = camera.pose.inverse_transform_point(p);
    if c.z <= 0.0 {
        return None;
    }
    Some((camera.fx * c.x / c.z + camera.cx, camera.fy * c.y / c.z + camera.cy, c.z))
}
