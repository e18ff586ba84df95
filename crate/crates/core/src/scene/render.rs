use super::{CameraModel, Scene, SceneObject};
use crate::geometry::{PixelBox, Point, Pose, Primitive};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Sorted row-major pixel indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelMask {
    pub pixels: Vec<u32>,
}

impl PixelMask {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn coords(&self, width: u32) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.pixels.iter().map(move |i| (i % width, i / width))
    }

    pub fn contains(&self, index: u32) -> bool {
        self.pixels.binary_search(&index).is_ok()
    }
}

/// Label, depth and ground-truth region images for one (scene, camera) pair.
/// Label 0 is background; label `k` is `object_ids[k - 1]`. Background depth is 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderOutput {
    pub width: u32,
    pub height: u32,
    pub object_ids: Vec<String>,
    pub labels: Vec<u16>,
    pub depth: Vec<f64>,
    pub boxes: BTreeMap<String, PixelBox>,
    pub part_masks: BTreeMap<String, BTreeMap<String, PixelMask>>,
}

impl RenderOutput {
    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn label_at(&self, x: u32, y: u32) -> Option<&str> {
        match self.labels[self.index(x, y)] {
            0 => None,
            k => Some(self.object_ids[k as usize - 1].as_str()),
        }
    }

    pub fn label_of(&self, object_id: &str) -> Option<u16> {
        self.object_ids.iter().position(|id| id == object_id).map(|i| i as u16 + 1)
    }

    pub fn depth_at(&self, x: u32, y: u32) -> Option<f64> {
        let d = self.depth[self.index(x, y)];
        (d > 0.0).then_some(d)
    }

    /// Pixels carrying `object_id`'s label.
    pub fn object_pixels(&self, object_id: &str) -> Vec<(u32, u32)> {
        let Some(label) = self.label_of(object_id) else { return Vec::new() };
        let Some(b) = self.boxes.get(object_id) else { return Vec::new() };
        b.pixels().filter(|(x, y)| self.labels[self.index(*x, *y)] == label).collect()
    }

    pub fn part_mask(&self, object_id: &str, part: &str) -> Option<&PixelMask> {
        self.part_masks.get(object_id)?.get(part)
    }
}

struct ObjectTracer {
    center: Point,
    radius: f64,
    prims: Vec<(Primitive, Pose)>,
}

impl ObjectTracer {
    fn new(obj: &SceneObject) -> Self {
        let prims: Vec<(Primitive, Pose)> =
            obj.world_primitives().into_iter().map(|w| (w.primitive, w.pose)).collect();
        let center = Point::from(
            prims.iter().map(|(_, p)| p.translation.vector).sum::<nalgebra::Vector3<f64>>() / prims.len() as f64,
        );
        let radius = prims
            .iter()
            .map(|(prim, p)| (Point::from(p.translation.vector) - center).norm() + prim.bounding_radius())
            .fold(0.0, f64::max);
        ObjectTracer { center, radius, prims }
    }

    fn may_hit(&self, origin: &Point, dir: &nalgebra::Vector3<f64>) -> bool {
        let oc = origin - self.center;
        let a = dir.norm_squared();
        let b = oc.dot(dir);
        let c = oc.norm_squared() - self.radius * self.radius;
        b * b - a * c >= 0.0 && (b <= 0.0 || c <= 0.0)
    }

    fn trace(&self, origin: &Point, dir: &nalgebra::Vector3<f64>) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (i, (prim, pose)) in self.prims.iter().enumerate() {
            let o = pose.inverse_transform_point(origin);
            let d = pose.inverse_transform_vector(dir);
            if let Some(hit) = prim.ray_hit(&o, &d) {
                if best.is_none_or(|(t, _)| hit.t < t) {
                    best = Some((hit.t, i));
                }
            }
        }
        best
    }
}

/// Ray-casts the scene through every pixel center.
pub fn render(scene: &Scene, camera: &CameraModel) -> RenderOutput {
    let tracers: Vec<ObjectTracer> = scene.objects.iter().map(ObjectTracer::new).collect();
    let origin = camera.position();
    let (w, h) = (camera.width, camera.height);
    let rows: Vec<Vec<(u16, f64, u16)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let dir = camera.ray_direction(x as f64, y as f64);
                    let mut best: (u16, f64, u16) = (0, f64::INFINITY, 0);
                    for (k, tracer) in tracers.iter().enumerate() {
                        if !tracer.may_hit(&origin, &dir) {
                            continue;
                        }
                        if let Some((t, prim)) = tracer.trace(&origin, &dir) {
                            if t < best.1 {
                                best = (k as u16 + 1, t, prim as u16);
                            }
                        }
                    }
                    if best.0 == 0 {
                        (0, 0.0, 0)
                    } else {
                        best
                    }
                })
                .collect()
        })
        .collect();

    let n = camera.pixel_count();
    let mut labels = Vec::with_capacity(n);
    let mut depth = Vec::with_capacity(n);
    let mut prim_hit = Vec::with_capacity(n);
    for row in rows {
        for (l, d, p) in row {
            labels.push(l);
            depth.push(d);
            prim_hit.push(p);
        }
    }

    let mut boxes = BTreeMap::new();
    let mut part_masks: BTreeMap<String, BTreeMap<String, PixelMask>> = BTreeMap::new();
    for (k, obj) in scene.objects.iter().enumerate() {
        let label = k as u16 + 1;
        let pixels = (0..n).filter(|i| labels[*i] == label);
        let Some(b) = PixelBox::bounding(pixels.clone().map(|i| ((i % w as usize) as u32, (i / w as usize) as u32)))
        else {
            continue;
        };
        boxes.insert(obj.id.clone(), b);
        let mut masks: BTreeMap<String, PixelMask> =
            obj.parts.iter().map(|p| (p.name.clone(), PixelMask::default())).collect();
        if !obj.parts.is_empty() {
            for i in b.pixels().map(|(x, y)| y as usize * w as usize + x as usize) {
                if labels[i] != label {
                    continue;
                }
                let (x, y) = (i % w as usize, i / w as usize);
                let hit = origin + camera.ray_direction(x as f64, y as f64) * depth[i];
                let local = obj.pose.inverse_transform_point(&hit);
                for part in &obj.parts {
                    if part.primitives.contains(&(prim_hit[i] as usize)) && part.clip.is_none_or(|c| c.keeps(&local)) {
                        if let Some(m) = masks.get_mut(&part.name) {
                            m.pixels.push(i as u32);
                        }
                    }
                }
            }
        }
        part_masks.insert(obj.id.clone(), masks);
    }

    RenderOutput {
        width: w,
        height: h,
        object_ids: scene.objects.iter().map(|o| o.id.clone()).collect(),
        labels,
        depth,
        boxes,
        part_masks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::pose_xyz_yaw;
    use crate::scene::{MassClass, Shape, Table};

    pub(crate) fn sphere_scene(radius: f64, center: Point) -> Scene {
        Scene {
            id: "s".into(),
            seed: 0,
            table: Table { width: 10.0, depth: 10.0, height: -10.0 },
            objects: vec![SceneObject {
                id: "ball".into(),
                name: "ball".into(),
                synonyms: vec![],
                attributes: vec![],
                shape: Shape::Sphere { radius },
                pose: pose_xyz_yaw(center.x, center.y, center.z, 0.0),
                parts: vec![],
                mass_class: MassClass::Large,
            }],
        }
    }

    fn axis_camera() -> CameraModel {
        CameraModel { fx: 500.0, fy: 500.0, cx: 320.0, cy: 240.0, width: 640, height: 480, pose: Pose::identity() }
    }

    #[test]
    fn sphere_on_axis_oracle() {
        let scene = sphere_scene(0.5, Point::new(0.0, 0.0, 1.0));
        let out = render(&scene, &axis_camera());
        let b = out.boxes["ball"];
        // silhouette half-angle: sin θ = r / D; vertically it overflows the image
        let tan = 0.5f64 / (1.0f64 - 0.25).sqrt();
        let expected_half = (500.0 * tan).floor() as u32;
        assert_eq!((b.x0, b.x1), (320 - expected_half, 320 + expected_half));
        assert_eq!((b.y0, b.y1), (0, 479));
        let small = render(&sphere_scene(0.2, Point::new(0.0, 0.0, 1.0)), &axis_camera());
        assert_eq!(small.boxes["ball"].center(), (320.0, 240.0));
        let min = out.depth.iter().copied().filter(|d| *d > 0.0).fold(f64::INFINITY, f64::min);
        assert!((min - 0.5).abs() < 1e-12);
        assert_eq!(out.depth_at(320, 240), Some(0.5));
    }

    #[test]
    fn empty_scene_is_background() {
        let mut scene = sphere_scene(0.5, Point::new(0.0, 0.0, 1.0));
        scene.objects.clear();
        let out = render(&scene, &axis_camera());
        assert!(out.labels.iter().all(|l| *l == 0));
        assert!(out.boxes.is_empty());
    }

    #[test]
    fn occluded_object_has_no_box() {
        let mut scene = sphere_scene(0.5, Point::new(0.0, 0.0, 1.0));
        let mut hidden = scene.objects[0].clone();
        hidden.id = "hidden".into();
        hidden.shape = Shape::Sphere { radius: 0.1 };
        hidden.pose = pose_xyz_yaw(0.0, 0.0, 3.0, 0.0);
        scene.objects.push(hidden);
        let out = render(&scene, &axis_camera());
        assert!(out.boxes.contains_key("ball"));
        assert!(!out.boxes.contains_key("hidden"));
    }
}
