//! Synthetic tabletop world: object model, scene generation, ray-cast
//! rendering and point-cloud extraction.

mod camera;
pub mod catalog;
mod cloud;
mod generate;
pub mod io;
mod render;

pub use camera::{deproject, project, CameraModel};
pub use catalog::{ObjectTemplate, default_catalog};
pub use cloud::{
    complete_cloud, covariance, estimate_normals, extract_point_cloud, remove_outliers, sample_surface, CloudSource,
    PointCloud,
    DEFAULT_OUTLIER_K, DEFAULT_OUTLIER_STD_RATIO,
};
pub use generate::{
    generate_pair_scene, generate_scene, generate_scene_with_pairs, resting_pose, surface_gap, PairPlacement,
    TABLE_CLEARANCE,
};
pub use render::{render, PixelMask, RenderOutput};

use crate::geometry::{Point, PlacedPrimitive, Pose, Primitive, Vec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("object_count must be ≥1")]
    EmptyRequest,
    #[error("catalog is empty")]
    EmptyCatalog,
    #[error("scene overflow: could not place {placed} of {requested} objects")]
    Overflow { placed: usize, requested: usize },
    #[error("unknown object id {0:?}")]
    UnknownObject(String),
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("sample count must be ≥1")]
    NoSamples,
    #[error("region exceeds image bounds")]
    RegionOutOfBounds,
}

/// Table slab; the top surface is at `z = height`, centered on the world origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub width: f64,
    pub depth: f64,
    pub height: f64,
}

impl Default for Table {
    fn default() -> Self {
        Table { width: 0.5, depth: 0.5, height: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassClass {
    Small,
    Medium,
    Large,
}

impl MassClass {
    pub const SMALL_MAX: f64 = 0.015;
    pub const MEDIUM_MAX: f64 = 0.06;

    /// Class from the largest footprint extent in metres.
    pub fn from_width(width: f64) -> MassClass {
        if width < Self::SMALL_MAX {
            MassClass::Small
        } else if width <= Self::MEDIUM_MAX {
            MassClass::Medium
        } else {
            MassClass::Large
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Box { half_extents: [f64; 3] },
    Cylinder { radius: f64, half_height: f64 },
    Sphere { radius: f64 },
    Composite { primitives: Vec<PlacedPrimitive> },
}

impl Shape {
    /// Primitives in the object frame.
    pub fn primitives(&self) -> Vec<PlacedPrimitive> {
        let at_origin = |p| vec![PlacedPrimitive::new(p, Pose::identity())];
        match self {
            Shape::Box { half_extents } => at_origin(Primitive::Box { half_extents: *half_extents }),
            Shape::Cylinder { radius, half_height } => {
                at_origin(Primitive::Cylinder { radius: *radius, half_height: *half_height })
            }
            Shape::Sphere { radius } => at_origin(Primitive::Sphere { radius: *radius }),
            Shape::Composite { primitives } => primitives.clone(),
        }
    }
}

/// Keeps points `p` (object frame) with `normal · p ≥ offset`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    pub normal: [f64; 3],
    pub offset: f64,
}

impl HalfSpace {
    pub fn keeps(&self, p: &Point) -> bool {
        Vec3::from(self.normal).dot(&p.coords) >= self.offset
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectPart {
    pub name: String,
    pub primitives: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<HalfSpace>,
    pub standard_grasp: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: String,
    pub name: String,
    pub synonyms: Vec<String>,
    #[serde(default)]
    pub attributes: Vec<String>,
    pub shape: Shape,
    pub pose: Pose,
    pub parts: Vec<ObjectPart>,
    pub mass_class: MassClass,
}

/// A primitive with its pose resolved in the world frame.
#[derive(Clone, Copy, Debug)]
pub struct WorldPrimitive {
    pub primitive: Primitive,
    pub pose: Pose,
}

impl WorldPrimitive {
    pub fn sdf(&self, p: &Point) -> f64 {
        self.primitive.sdf(&self.pose.inverse_transform_point(p))
    }

    pub fn bounding_sphere(&self) -> (Point, f64) {
        (Point::from(self.pose.translation.vector), self.primitive.bounding_radius())
    }

    /// World axis-aligned half extents.
    pub fn aabb_half_extents(&self) -> Vec3 {
        aabb_half_extents(&self.primitive, &self.pose)
    }
}

fn aabb_half_extents(primitive: &Primitive, pose: &Pose) -> Vec3 {
    let r = pose.rotation.to_rotation_matrix();
    let m = r.matrix();
    match *primitive {
        Primitive::Sphere { radius } => Vec3::repeat(radius),
        Primitive::Box { half_extents } => {
            let h = Vec3::from(half_extents);
            Vec3::from_fn(|i, _| (0..3).map(|j| m[(i, j)].abs() * h[j]).sum())
        }
        Primitive::Cylinder { radius, half_height } => {
            let axis = m.column(2);
            Vec3::from_fn(|i, _| half_height * axis[i].abs() + radius * (1.0 - axis[i] * axis[i]).max(0.0).sqrt())
        }
    }
}

/// Object-frame axis-aligned bounds (min, max) of a shape.
pub fn shape_bounds(shape: &Shape) -> (Point, Point) {
    let mut lo = Point::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut hi = -lo;
    for pp in shape.primitives() {
        let h = aabb_half_extents(&pp.primitive, &pp.pose);
        let c = pp.pose.translation.vector;
        for i in 0..3 {
            lo[i] = lo[i].min(c[i] - h[i]);
            hi[i] = hi[i].max(c[i] + h[i]);
        }
    }
    (lo, hi)
}

impl SceneObject {
    pub fn world_primitives(&self) -> Vec<WorldPrimitive> {
        self.shape
            .primitives()
            .into_iter()
            .map(|pp| WorldPrimitive { primitive: pp.primitive, pose: self.pose * pp.pose })
            .collect()
    }

    /// Signed distance to the union of the object's primitives.
    pub fn sdf(&self, p: &Point) -> f64 {
        self.world_primitives().iter().map(|w| w.sdf(p)).fold(f64::INFINITY, f64::min)
    }

    pub fn part(&self, name: &str) -> Option<&ObjectPart> {
        self.parts.iter().find(|p| p.name == name)
    }

    pub fn standard_part(&self) -> Option<&ObjectPart> {
        self.parts.iter().find(|p| p.standard_grasp)
    }

    /// Largest horizontal extent of the shape in the object frame.
    pub fn footprint_width(&self) -> f64 {
        let (lo, hi) = shape_bounds(&self.shape);
        (hi.x - lo.x).max(hi.y - lo.y)
    }

    /// Whether the world point `p` (on or near the surface) belongs to `part`:
    /// its closest primitive is in the part and it passes the part clip.
    pub fn in_part(&self, part: &ObjectPart, p: &Point) -> bool {
        let prims = self.shape.primitives();
        let local = self.pose.inverse_transform_point(p);
        let closest = prims
            .iter()
            .enumerate()
            .map(|(i, pp)| (i, pp.primitive.sdf(&pp.pose.inverse_transform_point(&local)).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i);
        match closest {
            Some(i) => part.primitives.contains(&i) && part.clip.is_none_or(|c| c.keeps(&local)),
            None => false,
        }
    }

    /// Footprint rectangle corners (world xy), counter-clockwise.
    pub fn footprint(&self) -> [[f64; 2]; 4] {
        let (lo, hi) = shape_bounds(&self.shape);
        let corners = [[lo.x, lo.y], [hi.x, lo.y], [hi.x, hi.y], [lo.x, hi.y]];
        corners.map(|[x, y]| {
            let w = self.pose.transform_point(&Point::new(x, y, 0.0));
            [w.x, w.y]
        })
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: String| Err(SceneError::Invalid(format!("object {:?}: {m}", self.id)));
        if self.name.trim().is_empty() {
            return bad("name is empty".into());
        }
        let prims = self.shape.primitives();
        if prims.is_empty() {
            return bad("composite shape has no primitives".into());
        }
        if let Some(p) = prims.iter().find(|p| !p.primitive.is_valid()) {
            return bad(format!("degenerate primitive {:?}", p.primitive));
        }
        for part in &self.parts {
            if part.primitives.is_empty() || part.primitives.iter().any(|i| *i >= prims.len()) {
                return bad(format!("part {:?} has an empty or out-of-range selector", part.name));
            }
        }
        if self.parts.iter().filter(|p| p.standard_grasp).count() > 1 {
            return bad("more than one standard grasp part".into());
        }
        if MassClass::from_width(self.footprint_width()) != self.mass_class {
            return bad(format!("mass class {:?} inconsistent with width {:.4}", self.mass_class, self.footprint_width()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub id: String,
    pub seed: u64,
    pub table: Table,
    pub objects: Vec<SceneObject>,
}

impl Scene {
    pub fn object(&self, id: &str) -> Result<&SceneObject, SceneError> {
        self.objects.iter().find(|o| o.id == id).ok_or_else(|| SceneError::UnknownObject(id.to_string()))
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let hw = self.table.width / 2.0 + 1e-9;
        let hd = self.table.depth / 2.0 + 1e-9;
        for (i, o) in self.objects.iter().enumerate() {
            o.validate()?;
            if self.objects[..i].iter().any(|other| other.id == o.id) {
                return Err(SceneError::Invalid(format!("duplicate object id {:?}", o.id)));
            }
            if o.footprint().iter().any(|[x, y]| x.abs() > hw || y.abs() > hd) {
                return Err(SceneError::Invalid(format!("object {:?} leaves the table", o.id)));
            }
            for other in &self.objects[..i] {
                if !generate::footprints_separated(&o.footprint(), &other.footprint(), 0.0) {
                    return Err(SceneError::Invalid(format!("objects {:?} and {:?} overlap", other.id, o.id)));
                }
            }
        }
        Ok(())
    }
}
