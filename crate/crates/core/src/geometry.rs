//! Analytic primitives, rigid transforms and pixel-space regions shared by
//! every stage of the pipeline.

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub type Point = Point3<f64>;
pub type Vec3 = Vector3<f64>;
pub type Pose = Isometry3<f64>;

/// Builds a pose from a position and a yaw about world z.
pub fn pose_xyz_yaw(x: f64, y: f64, z: f64, yaw: f64) -> Pose {
    Isometry3::from_parts(
        Translation3::new(x, y, z),
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
    )
}

/// Pose whose local z axis is mapped onto `axis` (used for cylinders lying down).
pub fn pose_with_z_along(position: Vec3, axis: Vec3) -> Pose {
    let rot = UnitQuaternion::rotation_between(&Vector3::z(), &axis)
        .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI));
    Isometry3::from_parts(Translation3::from(position), rot)
}

/// Solid primitive expressed in its own frame, centered at the origin.
/// Cylinders have their axis along local z.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    Box { half_extents: [f64; 3] },
    Cylinder { radius: f64, half_height: f64 },
    Sphere { radius: f64 },
}

/// A ray/primitive hit in the primitive's frame.
#[derive(Clone, Copy, Debug)]
pub struct Hit {
    pub t: f64,
    pub normal: Vec3,
}

impl Primitive {
    pub fn is_valid(&self) -> bool {
        match *self {
            Primitive::Box { half_extents } => half_extents.iter().all(|h| *h > 0.0 && h.is_finite()),
            Primitive::Cylinder { radius, half_height } => {
                radius > 0.0 && half_height > 0.0 && radius.is_finite() && half_height.is_finite()
            }
            Primitive::Sphere { radius } => radius > 0.0 && radius.is_finite(),
        }
    }

    /// Half extents of the local axis-aligned bounding box.
    pub fn half_extents(&self) -> Vec3 {
        match *self {
            Primitive::Box { half_extents } => Vec3::from(half_extents),
            Primitive::Cylinder { radius, half_height } => Vec3::new(radius, radius, half_height),
            Primitive::Sphere { radius } => Vec3::repeat(radius),
        }
    }

    pub fn bounding_radius(&self) -> f64 {
        self.half_extents().norm()
    }

    pub fn surface_area(&self) -> f64 {
        use std::f64::consts::PI;
        match *self {
            Primitive::Box { half_extents: [a, b, c] } => 8.0 * (a * b + b * c + a * c),
            Primitive::Cylinder { radius, half_height } => {
                2.0 * PI * radius * (2.0 * half_height) + 2.0 * PI * radius * radius
            }
            Primitive::Sphere { radius } => 4.0 * PI * radius * radius,
        }
    }

    /// Signed distance from `p` (local frame) to the surface; negative inside.
    pub fn sdf(&self, p: &Point) -> f64 {
        match *self {
            Primitive::Box { half_extents } => {
                let q = Vec3::new(
                    p.x.abs() - half_extents[0],
                    p.y.abs() - half_extents[1],
                    p.z.abs() - half_extents[2],
                );
                let outside = Vec3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0)).norm();
                outside + q.x.max(q.y).max(q.z).min(0.0)
            }
            Primitive::Cylinder { radius, half_height } => {
                let dr = (p.x * p.x + p.y * p.y).sqrt() - radius;
                let dz = p.z.abs() - half_height;
                let outside = (dr.max(0.0).powi(2) + dz.max(0.0).powi(2)).sqrt();
                outside + dr.max(dz).min(0.0)
            }
            Primitive::Sphere { radius } => p.coords.norm() - radius,
        }
    }

    /// Outward surface normal at (or near) the surface point `p`.
    pub fn normal_at(&self, p: &Point) -> Vec3 {
        match *self {
            Primitive::Box { half_extents } => {
                let d = [
                    (p.x.abs() - half_extents[0]).abs(),
                    (p.y.abs() - half_extents[1]).abs(),
                    (p.z.abs() - half_extents[2]).abs(),
                ];
                let axis = (0..3).min_by(|a, b| d[*a].total_cmp(&d[*b])).unwrap_or(2);
                let mut n = Vec3::zeros();
                n[axis] = p[axis].signum();
                n
            }
            Primitive::Cylinder { radius, half_height } => {
                let r = (p.x * p.x + p.y * p.y).sqrt();
                if (p.z.abs() - half_height).abs() < (r - radius).abs() || r < 1e-12 {
                    Vec3::new(0.0, 0.0, p.z.signum())
                } else {
                    Vec3::new(p.x / r, p.y / r, 0.0)
                }
            }
            Primitive::Sphere { .. } => p.coords.try_normalize(1e-15).unwrap_or_else(Vec3::z),
        }
    }

    /// First intersection with `t > 0` of the ray `origin + t·dir`.
    /// `dir` need not be normalized; `t` is in units of `dir`.
    pub fn ray_hit(&self, origin: &Point, dir: &Vec3) -> Option<Hit> {
        const EPS: f64 = 1e-12;
        match *self {
            Primitive::Sphere { radius } => {
                let a = dir.norm_squared();
                let b = origin.coords.dot(dir);
                let c = origin.coords.norm_squared() - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t = [(-b - sq) / a, (-b + sq) / a].into_iter().find(|t| *t > EPS)?;
                let p = origin + dir * t;
                Some(Hit { t, normal: p.coords / radius })
            }
            Primitive::Box { half_extents } => {
                let mut t_near = f64::NEG_INFINITY;
                let mut t_far = f64::INFINITY;
                let mut near_axis = 0;
                for i in 0..3 {
                    let h = half_extents[i];
                    if dir[i].abs() < 1e-300 {
                        if origin[i].abs() > h {
                            return None;
                        }
                        continue;
                    }
                    let t1 = (-h - origin[i]) / dir[i];
                    let t2 = (h - origin[i]) / dir[i];
                    let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
                    if lo > t_near {
                        t_near = lo;
                        near_axis = i;
                    }
                    t_far = t_far.min(hi);
                }
                if t_near > t_far || t_far <= EPS {
                    return None;
                }
                if t_near > EPS {
                    let mut n = Vec3::zeros();
                    n[near_axis] = -dir[near_axis].signum();
                    Some(Hit { t: t_near, normal: n })
                } else {
                    // origin inside: report the exit
                    let p = origin + dir * t_far;
                    Some(Hit { t: t_far, normal: self.normal_at(&p) })
                }
            }
            Primitive::Cylinder { radius, half_height } => {
                let mut best: Option<Hit> = None;
                let mut consider = |t: f64, n: Vec3| {
                    if t > EPS && best.is_none_or(|b| t < b.t) {
                        best = Some(Hit { t, normal: n });
                    }
                };
                let a = dir.x * dir.x + dir.y * dir.y;
                if a > 1e-300 {
                    let b = origin.x * dir.x + origin.y * dir.y;
                    let c = origin.x * origin.x + origin.y * origin.y - radius * radius;
                    let disc = b * b - a * c;
                    if disc >= 0.0 {
                        let sq = disc.sqrt();
                        for t in [(-b - sq) / a, (-b + sq) / a] {
                            let z = origin.z + t * dir.z;
                            if z.abs() <= half_height {
                                let p = origin + dir * t;
                                consider(t, Vec3::new(p.x / radius, p.y / radius, 0.0));
                            }
                        }
                    }
                }
                if dir.z.abs() > 1e-300 {
                    for cap in [-half_height, half_height] {
                        let t = (cap - origin.z) / dir.z;
                        let x = origin.x + t * dir.x;
                        let y = origin.y + t * dir.y;
                        if x * x + y * y <= radius * radius {
                            consider(t, Vec3::new(0.0, 0.0, cap.signum()));
                        }
                    }
                }
                best
            }
        }
    }

    /// Maps three numbers in [0,1) to a point and outward normal distributed
    /// uniformly (by area) over the surface.
    pub fn surface_point(&self, s: f64, u: f64, v: f64) -> (Point, Vec3) {
        use std::f64::consts::PI;
        match *self {
            Primitive::Sphere { radius } => {
                let z = 1.0 - 2.0 * u;
                let r = (1.0 - z * z).max(0.0).sqrt();
                let phi = 2.0 * PI * v;
                let n = Vec3::new(r * phi.cos(), r * phi.sin(), z);
                (Point::from(n * radius), n)
            }
            Primitive::Box { half_extents: [a, b, c] } => {
                // face pairs by area: (yz: x faces), (xz: y faces), (xy: z faces)
                let areas = [b * c, a * c, a * b];
                let total: f64 = areas.iter().sum();
                let mut pick = s * total * 2.0;
                let mut face = 5;
                for f in 0..6 {
                    let area = areas[f / 2];
                    if pick < area {
                        face = f;
                        break;
                    }
                    pick -= area;
                }
                let sign = if face % 2 == 0 { 1.0 } else { -1.0 };
                let (p, n) = match face / 2 {
                    0 => (Point::new(sign * a, (2.0 * u - 1.0) * b, (2.0 * v - 1.0) * c), Vec3::x() * sign),
                    1 => (Point::new((2.0 * u - 1.0) * a, sign * b, (2.0 * v - 1.0) * c), Vec3::y() * sign),
                    _ => (Point::new((2.0 * u - 1.0) * a, (2.0 * v - 1.0) * b, sign * c), Vec3::z() * sign),
                };
                (p, n)
            }
            Primitive::Cylinder { radius, half_height } => {
                let side = 2.0 * PI * radius * 2.0 * half_height;
                let cap = PI * radius * radius;
                let pick = s * (side + 2.0 * cap);
                if pick < side {
                    let phi = 2.0 * PI * u;
                    let n = Vec3::new(phi.cos(), phi.sin(), 0.0);
                    (Point::new(radius * n.x, radius * n.y, (2.0 * v - 1.0) * half_height), n)
                } else {
                    let sign = if pick < side + cap { 1.0 } else { -1.0 };
                    let r = radius * u.sqrt();
                    let phi = 2.0 * PI * v;
                    (
                        Point::new(r * phi.cos(), r * phi.sin(), sign * half_height),
                        Vec3::new(0.0, 0.0, sign),
                    )
                }
            }
        }
    }
}

/// A primitive placed inside an object frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacedPrimitive {
    pub primitive: Primitive,
    pub pose: Pose,
}

impl PlacedPrimitive {
    pub fn new(primitive: Primitive, pose: Pose) -> Self {
        Self { primitive, pose }
    }

    pub fn at(primitive: Primitive, x: f64, y: f64, z: f64) -> Self {
        Self::new(primitive, pose_xyz_yaw(x, y, z, 0.0))
    }
}

/// Radical-inverse (Halton) sequence value for index `i` in `base`.
pub fn halton(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let inv = 1.0 / base as f64;
    while i > 0 {
        f *= inv;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Stable 64-bit FNV-1a hash, used to derive seeds from identifiers.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Inclusive pixel-space axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelBox {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        debug_assert!(x0 <= x1 && y0 <= y1);
        Self { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> u32 {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0 + 1
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) as f64 / 2.0, (self.y0 + self.y1) as f64 / 2.0)
    }

    pub fn intersect(&self, other: &PixelBox) -> Option<PixelBox> {
        let x0 = self.x0.max(other.x0);
        let y0 = self.y0.max(other.y0);
        let x1 = self.x1.min(other.x1);
        let y1 = self.y1.min(other.y1);
        (x0 <= x1 && y0 <= y1).then_some(PixelBox { x0, y0, x1, y1 })
    }

    pub fn overlap_area(&self, other: &PixelBox) -> u64 {
        self.intersect(other).map_or(0, |b| b.area())
    }

    /// Grows the box by `margin` pixels, clipped to a `width × height` image.
    pub fn dilate(&self, margin: u32, width: u32, height: u32) -> PixelBox {
        PixelBox {
            x0: self.x0.saturating_sub(margin),
            y0: self.y0.saturating_sub(margin),
            x1: (self.x1 + margin).min(width - 1),
            y1: (self.y1 + margin).min(height - 1),
        }
    }

    /// Euclidean distance from a continuous pixel position to the box (0 inside).
    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        let dx = (self.x0 as f64 - x).max(0.0).max(x - self.x1 as f64);
        let dy = (self.y0 as f64 - y).max(0.0).max(y - self.y1 as f64);
        (dx * dx + dy * dy).sqrt()
    }

    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (self.y0..=self.y1).flat_map(move |y| (self.x0..=self.x1).map(move |x| (x, y)))
    }

    /// Tight box over a set of pixels, `None` when empty.
    pub fn bounding<I: IntoIterator<Item = (u32, u32)>>(pixels: I) -> Option<PixelBox> {
        let mut it = pixels.into_iter();
        let (x, y) = it.next()?;
        let mut b = PixelBox { x0: x, y0: y, x1: x, y1: y };
        for (x, y) in it {
            b.x0 = b.x0.min(x);
            b.y0 = b.y0.min(y);
            b.x1 = b.x1.max(x);
            b.y1 = b.y1.max(y);
        }
        Some(b)
    }
}

/// Pixel region used to constrain grasping: a box, or a box with a
/// rectangular hole cut out of it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PixelRegion {
    Box { bounds: PixelBox },
    BoxMinusBox { outer: PixelBox, hole: PixelBox },
}

impl PixelRegion {
    pub fn bounds(&self) -> PixelBox {
        match self {
            PixelRegion::Box { bounds } => *bounds,
            PixelRegion::BoxMinusBox { outer, .. } => *outer,
        }
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        match self {
            PixelRegion::Box { bounds } => bounds.contains(x, y),
            PixelRegion::BoxMinusBox { outer, hole } => outer.contains(x, y) && !hole.contains(x, y),
        }
    }

    pub fn area(&self) -> u64 {
        match self {
            PixelRegion::Box { bounds } => bounds.area(),
            PixelRegion::BoxMinusBox { outer, hole } => outer.area() - outer.overlap_area(hole),
        }
    }

    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let b = self.bounds();
        (b.y0..=b.y1)
            .flat_map(move |y| (b.x0..=b.x1).map(move |x| (x, y)))
            .filter(move |(x, y)| self.contains(*x, *y))
    }
}

impl From<PixelBox> for PixelRegion {
    fn from(bounds: PixelBox) -> Self {
        PixelRegion::Box { bounds }
    }
}

/// Rotation vector (axis·angle, |angle| ≤ π) of the rotation taking `from` to `to`,
/// expressed in the world frame.
pub fn rotation_error(from: &UnitQuaternion<f64>, to: &UnitQuaternion<f64>) -> Vec3 {
    (to * from.inverse()).scaled_axis()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sphere_ray_hits_front_surface() {
        let s = Primitive::Sphere { radius: 0.5 };
        let hit = s.ray_hit(&Point::new(0.0, 0.0, -1.0), &Vec3::z()).unwrap();
        assert_relative_eq!(hit.t, 0.5, epsilon = 1e-12);
        assert_relative_eq!(hit.normal, -Vec3::z(), epsilon = 1e-12);
    }

    #[test]
    fn box_ray_from_side() {
        let b = Primitive::Box { half_extents: [0.1, 0.2, 0.3] };
        let hit = b.ray_hit(&Point::new(-1.0, 0.05, 0.0), &Vec3::new(2.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!(hit.t, 0.45, epsilon = 1e-12);
        assert_eq!(hit.normal, -Vec3::x());
        assert!(b.ray_hit(&Point::new(-1.0, 0.5, 0.0), &Vec3::x()).is_none());
    }

    #[test]
    fn cylinder_side_and_cap() {
        let c = Primitive::Cylinder { radius: 0.03, half_height: 0.05 };
        let side = c.ray_hit(&Point::new(1.0, 0.0, 0.0), &-Vec3::x()).unwrap();
        assert_relative_eq!(side.t, 0.97, epsilon = 1e-12);
        let cap = c.ray_hit(&Point::new(0.01, 0.0, 1.0), &-Vec3::z()).unwrap();
        assert_relative_eq!(cap.t, 0.95, epsilon = 1e-12);
        assert_eq!(cap.normal, Vec3::z());
    }

    #[test]
    fn surface_samples_lie_on_surface() {
        let prims = [
            Primitive::Box { half_extents: [0.1, 0.02, 0.05] },
            Primitive::Cylinder { radius: 0.03, half_height: 0.07 },
            Primitive::Sphere { radius: 0.04 },
        ];
        for prim in prims {
            for i in 1..500u64 {
                let (p, n) = prim.surface_point(halton(i, 2), halton(i, 3), halton(i, 5));
                assert!(prim.sdf(&p).abs() < 1e-12, "{prim:?} {p:?}");
                assert_relative_eq!(n.norm(), 1.0, epsilon = 1e-12);
                assert!(prim.sdf(&(p + n * 1e-4)) > 0.0);
            }
        }
    }

    #[test]
    fn pixel_box_algebra() {
        let a = PixelBox::new(0, 0, 9, 9);
        let b = PixelBox::new(5, 5, 14, 14);
        assert_eq!(a.intersect(&b), Some(PixelBox::new(5, 5, 9, 9)));
        assert_eq!(a.overlap_area(&b), 25);
        let r = PixelRegion::BoxMinusBox { outer: a, hole: b };
        assert_eq!(r.area(), 75);
        assert_eq!(r.pixels().count(), 75);
        assert_eq!(a.distance_to(12.0, 13.0), 5.0);
    }
}
