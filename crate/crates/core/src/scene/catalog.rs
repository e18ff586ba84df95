//! Household object templates built from primitive composites. Object frames
//! have their origin at the table contact point with +z up.

use super::{HalfSpace, MassClass, ObjectPart, SceneObject, Shape};
use crate::geometry::{pose_with_z_along, pose_xyz_yaw, PlacedPrimitive, Pose, Primitive, Vec3};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectTemplate {
    pub name: String,
    pub synonyms: Vec<String>,
    pub colors: Vec<String>,
    pub shape: Shape,
    pub parts: Vec<ObjectPart>,
}

impl ObjectTemplate {
    pub fn instantiate(&self, id: impl Into<String>, pose: Pose, color: Option<&str>) -> SceneObject {
        let mut obj = SceneObject {
            id: id.into(),
            name: self.name.clone(),
            synonyms: self.synonyms.clone(),
            attributes: color.map(|c| vec![c.to_string()]).unwrap_or_default(),
            shape: self.shape.clone(),
            pose,
            parts: self.parts.clone(),
            mass_class: MassClass::Small,
        };
        obj.mass_class = MassClass::from_width(obj.footprint_width());
        obj
    }

    pub fn mass_class(&self) -> MassClass {
        self.instantiate("probe", Pose::identity(), None).mass_class
    }
}

fn upright(r: f64, hh: f64, x: f64, y: f64, z: f64) -> PlacedPrimitive {
    PlacedPrimitive::at(Primitive::Cylinder { radius: r, half_height: hh }, x, y, z)
}

fn lying(r: f64, hh: f64, x: f64, y: f64, z: f64, yaw: f64) -> PlacedPrimitive {
    PlacedPrimitive::new(
        Primitive::Cylinder { radius: r, half_height: hh },
        pose_with_z_along(Vec3::new(x, y, z), Vec3::new(yaw.cos(), yaw.sin(), 0.0)),
    )
}

fn cuboid(hx: f64, hy: f64, hz: f64, x: f64, y: f64, z: f64, yaw: f64) -> PlacedPrimitive {
    PlacedPrimitive::new(Primitive::Box { half_extents: [hx, hy, hz] }, pose_xyz_yaw(x, y, z, yaw))
}

fn ball(r: f64, x: f64, y: f64, z: f64) -> PlacedPrimitive {
    PlacedPrimitive::at(Primitive::Sphere { radius: r }, x, y, z)
}

fn part(name: &str, primitives: &[usize], standard_grasp: bool) -> ObjectPart {
    ObjectPart { name: name.into(), primitives: primitives.to_vec(), clip: None, standard_grasp }
}

fn clipped(name: &str, primitives: &[usize], normal: [f64; 3], offset: f64) -> ObjectPart {
    ObjectPart { name: name.into(), primitives: primitives.to_vec(), clip: Some(HalfSpace { normal, offset }), standard_grasp: false }
}

fn template(name: &str, synonyms: &[&str], colors: &[&str], primitives: Vec<PlacedPrimitive>, parts: Vec<ObjectPart>) -> ObjectTemplate {
    ObjectTemplate {
        name: name.into(),
        synonyms: synonyms.iter().map(|s| s.to_string()).collect(),
        colors: colors.iter().map(|s| s.to_string()).collect(),
        shape: Shape::Composite { primitives },
        parts,
    }
}

pub fn bowl() -> ObjectTemplate {
    let mut prims = vec![upright(0.074, 0.005, 0.0, 0.0, 0.005)];
    for k in 0..8 {
        let a = k as f64 * FRAC_PI_4;
        prims.push(cuboid(0.031, 0.003, 0.025, 0.072 * a.cos(), 0.072 * a.sin(), 0.035, a + std::f64::consts::FRAC_PI_2));
    }
    let walls: Vec<usize> = (1..=8).collect();
    template(
        "bowl",
        &[],
        &["red", "white", "green"],
        prims,
        vec![clipped("rim", &walls, [0.0, 0.0, 1.0], 0.045), part("base", &[0], false), part("side", &walls, false)],
    )
}

pub fn cup() -> ObjectTemplate {
    template(
        "cup",
        &[],
        &["blue", "yellow", "white"],
        vec![upright(0.035, 0.045, 0.0, 0.0, 0.045)],
        vec![
            clipped("rim", &[0], [0.0, 0.0, 1.0], 0.075),
            ObjectPart { standard_grasp: true, ..clipped("body", &[0], [0.0, 0.0, -1.0], -0.075) },
        ],
    )
}

pub fn flashlight() -> ObjectTemplate {
    template(
        "flashlight",
        &["torch"],
        &["red", "blue", "black", "yellow"],
        vec![lying(0.016, 0.06, -0.025, 0.0, 0.022, 0.0), lying(0.022, 0.03, 0.065, 0.0, 0.022, 0.0)],
        vec![part("body", &[0], true), part("head", &[1], false)],
    )
}

pub fn banana() -> ObjectTemplate {
    let bend = 20f64.to_radians();
    template(
        "banana",
        &[],
        &["yellow"],
        vec![
            lying(0.018, 0.035, -0.058, 0.012, 0.018, -bend),
            lying(0.018, 0.035, 0.0, 0.0, 0.018, 0.0),
            lying(0.018, 0.035, 0.058, 0.012, 0.018, bend),
        ],
        vec![
            clipped("stem", &[0], [-1.0, 0.0, 0.0], 0.07),
            clipped("tip", &[2], [1.0, 0.0, 0.0], 0.07),
            part("middle", &[1], true),
        ],
    )
}

pub fn drill() -> ObjectTemplate {
    template(
        "drill",
        &["power drill"],
        &["black", "yellow", "red"],
        vec![
            cuboid(0.04, 0.035, 0.015, 0.0, 0.0, 0.015, 0.0),
            cuboid(0.018, 0.015, 0.05, 0.0, 0.0, 0.08, 0.0),
            cuboid(0.075, 0.025, 0.025, 0.035, 0.0, 0.155, 0.0),
            lying(0.012, 0.02, 0.13, 0.0, 0.155, 0.0),
        ],
        vec![part("handle", &[1], true), part("battery", &[0], false), part("body", &[2], false), part("chuck", &[3], false)],
    )
}

pub fn mug() -> ObjectTemplate {
    template(
        "mug",
        &["coffee mug"],
        &["red", "blue", "white", "black"],
        vec![
            upright(0.04, 0.05, 0.0, 0.0, 0.05),
            cuboid(0.012, 0.006, 0.005, 0.051, 0.0, 0.080, 0.0),
            cuboid(0.012, 0.006, 0.005, 0.051, 0.0, 0.022, 0.0),
            cuboid(0.005, 0.006, 0.034, 0.063, 0.0, 0.051, 0.0),
        ],
        vec![part("handle", &[1, 2, 3], true), clipped("rim", &[0], [0.0, 0.0, 1.0], 0.085), part("body", &[0], false)],
    )
}

pub fn chef_can() -> ObjectTemplate {
    template(
        "chef can",
        &["coffee can", "master chef can"],
        &["blue"],
        vec![upright(0.038, 0.05, 0.0, 0.0, 0.05)],
        vec![clipped("lid", &[0], [0.0, 0.0, 1.0], 0.085), clipped("side", &[0], [0.0, 0.0, -1.0], -0.085)],
    )
}

pub fn screwdriver() -> ObjectTemplate {
    template(
        "screwdriver",
        &[],
        &["red", "yellow", "black"],
        vec![lying(0.014, 0.05, -0.05, 0.0, 0.014, 0.0), lying(0.004, 0.05, 0.05, 0.0, 0.014, 0.0)],
        vec![part("handle", &[0], true), part("shaft", &[1], false), clipped("tip", &[1], [1.0, 0.0, 0.0], 0.08)],
    )
}

pub fn scissors() -> ObjectTemplate {
    template(
        "scissors",
        &[],
        &["red", "black", "blue"],
        vec![
            cuboid(0.045, 0.009, 0.005, 0.045, 0.0, 0.005, 0.0),
            cuboid(0.02, 0.015, 0.005, -0.02, 0.018, 0.005, 0.0),
            cuboid(0.02, 0.015, 0.005, -0.02, -0.018, 0.005, 0.0),
        ],
        vec![part("blade", &[0], false), part("handle", &[1, 2], true)],
    )
}

pub fn fish_can() -> ObjectTemplate {
    template(
        "fish can",
        &["tuna can", "tuna"],
        &["silver"],
        vec![upright(0.04, 0.017, 0.0, 0.0, 0.017)],
        vec![clipped("lid", &[0], [0.0, 0.0, 1.0], 0.028), clipped("side", &[0], [0.0, 0.0, -1.0], -0.028)],
    )
}

pub fn pear() -> ObjectTemplate {
    template(
        "pear",
        &[],
        &["green", "yellow"],
        vec![ball(0.032, 0.0, 0.0, 0.032), ball(0.021, 0.0, 0.0, 0.072), upright(0.003, 0.008, 0.0, 0.0, 0.099)],
        vec![part("stem", &[2], false)],
    )
}

pub fn strawberry() -> ObjectTemplate {
    template(
        "strawberry",
        &[],
        &["red"],
        vec![ball(0.016, 0.0, 0.0, 0.016), upright(0.01, 0.002, 0.0, 0.0, 0.033)],
        vec![],
    )
}

fn clamp(name: &str, scale: f64) -> ObjectTemplate {
    let s = scale;
    template(
        name,
        &["clamp"],
        &["black", "orange"],
        vec![
            cuboid(0.015 * s, 0.01 * s, 0.01 * s, 0.01 * s, 0.0, 0.01 * s, 0.0),
            cuboid(0.012 * s, 0.006 * s, 0.008 * s, -0.015 * s, 0.0, 0.008 * s, 0.0),
        ],
        vec![part("handle", &[1], true), part("jaw", &[0], false)],
    )
}

pub fn small_clamp() -> ObjectTemplate {
    clamp("small clamp", 1.0)
}

pub fn medium_clamp() -> ObjectTemplate {
    clamp("medium clamp", 1.4)
}

pub fn large_clamp() -> ObjectTemplate {
    clamp("large clamp", 1.8)
}

/// Small-class fixture kept outside the default catalog.
pub fn eraser() -> ObjectTemplate {
    template("eraser", &[], &["pink", "white"], vec![cuboid(0.007, 0.004, 0.003, 0.0, 0.0, 0.003, 0.0)], vec![])
}

/// The fifteen household templates.
pub fn default_catalog() -> Vec<ObjectTemplate> {
    vec![
        bowl(),
        cup(),
        flashlight(),
        banana(),
        drill(),
        mug(),
        chef_can(),
        screwdriver(),
        scissors(),
        fish_can(),
        pear(),
        strawberry(),
        small_clamp(),
        medium_clamp(),
        large_clamp(),
    ]
}

pub fn by_name(name: &str) -> Option<ObjectTemplate> {
    default_catalog().into_iter().chain([eraser()]).find(|t| t.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    #[test]
    fn every_template_is_valid() {
        let all: Vec<ObjectTemplate> = default_catalog().into_iter().chain([eraser()]).collect();
        assert_eq!(all.len(), 16);
        for t in &all {
            let obj = t.instantiate("x", Pose::identity(), None);
            obj.validate().unwrap();
            let (lo, _) = super::super::shape_bounds(&obj.shape);
            assert!(lo.z.abs() < 1e-9, "{} does not rest on the table: {}", t.name, lo.z);
        }
    }

    #[test]
    fn size_classes() {
        assert_eq!(eraser().mass_class(), MassClass::Small);
        assert_eq!(small_clamp().mass_class(), MassClass::Medium);
        assert_eq!(strawberry().mass_class(), MassClass::Medium);
        assert_eq!(flashlight().mass_class(), MassClass::Large);
        assert_eq!(mug().mass_class(), MassClass::Large);
    }

    #[test]
    fn mug_handle_membership() {
        let mug = mug().instantiate("m", pose_xyz_yaw(0.1, 0.0, 0.0, 0.5), None);
        let handle = mug.part("handle").unwrap();
        let outer = mug.pose.transform_point(&Point::new(0.068, 0.0, 0.05));
        let body = mug.pose.transform_point(&Point::new(-0.04, 0.0, 0.05));
        assert!(mug.in_part(handle, &outer));
        assert!(!mug.in_part(handle, &body));
        let rim = mug.part("rim").unwrap();
        assert!(mug.in_part(rim, &mug.pose.transform_point(&Point::new(-0.04, 0.0, 0.095))));
        assert!(!mug.in_part(rim, &body));
    }
}
