use super::catalog::ObjectTemplate;
use super::cloud::sample_surface;
use super::{shape_bounds, Scene, SceneError, SceneObject, Table};
use crate::geometry::{pose_xyz_yaw, Point, Pose};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Minimum footprint separation between placed objects (m).
pub const TABLE_CLEARANCE: f64 = 0.01;
const ATTEMPTS_PER_OBJECT: usize = 300;
const RESTARTS: usize = 25;
const GAP_SAMPLES: usize = 4000;

/// Separating-axis test on two convex footprint quads: true when some edge
/// normal separates them by at least `margin`.
pub(crate) fn footprints_separated(a: &[[f64; 2]; 4], b: &[[f64; 2]; 4], margin: f64) -> bool {
    let axes = [a, b].into_iter().flat_map(|quad| {
        (0..2).map(move |i| {
            let (p, q) = (quad[i], quad[i + 1]);
            let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
            let len = (dx * dx + dy * dy).sqrt().max(1e-15);
            [-dy / len, dx / len]
        })
    });
    for axis in axes {
        let proj = |quad: &[[f64; 2]; 4]| {
            quad.iter().map(|p| p[0] * axis[0] + p[1] * axis[1]).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        let (alo, ahi) = proj(a);
        let (blo, bhi) = proj(b);
        if ahi + margin <= blo || bhi + margin <= alo {
            return true;
        }
    }
    false
}

fn on_table(obj: &SceneObject, table: &Table) -> bool {
    obj.footprint().iter().all(|[x, y]| x.abs() <= table.width / 2.0 && y.abs() <= table.depth / 2.0)
}

/// Pose that rests `template` on the table with its footprint centered at (x, y).
pub fn resting_pose(template: &ObjectTemplate, table: &Table, x: f64, y: f64, yaw: f64) -> Pose {
    let (lo, hi) = shape_bounds(&template.shape);
    // place the footprint center at (x, y)
    let c = nalgebra::Vector2::new((lo.x + hi.x) / 2.0, (lo.y + hi.y) / 2.0);
    let r = nalgebra::Rotation2::new(yaw) * c;
    pose_xyz_yaw(x - r.x, y - r.y, table.height - lo.z, yaw)
}

fn try_place(
    rng: &mut ChaCha8Rng,
    template: &ObjectTemplate,
    id: String,
    color: Option<&str>,
    table: &Table,
    placed: &[SceneObject],
) -> Option<SceneObject> {
    for _ in 0..ATTEMPTS_PER_OBJECT {
        let x = rng.random_range(-table.width / 2.0..table.width / 2.0);
        let y = rng.random_range(-table.depth / 2.0..table.depth / 2.0);
        let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let obj = template.instantiate(id.clone(), resting_pose(template, table, x, y, yaw), color);
        if on_table(&obj, table)
            && placed.iter().all(|o| footprints_separated(&o.footprint(), &obj.footprint(), TABLE_CLEARANCE))
        {
            return Some(obj);
        }
    }
    None
}

fn object_id(name: &str, k: usize) -> String {
    format!("{}-{k}", name.replace(' ', "_"))
}

/// Random non-overlapping scene. Templates are drawn without replacement while
/// the catalog lasts.
pub fn generate_scene(seed: u64, object_count: usize, catalog: &[ObjectTemplate]) -> Result<Scene, SceneError> {
    generate_scene_with_pairs(seed, object_count, 0, catalog)
}

/// Like [`generate_scene`] but the first `pairs` templates are each placed
/// twice with the same color, producing identical-object pairs.
pub fn generate_scene_with_pairs(
    seed: u64,
    object_count: usize,
    pairs: usize,
    catalog: &[ObjectTemplate],
) -> Result<Scene, SceneError> {
    if object_count == 0 {
        return Err(SceneError::EmptyRequest);
    }
    if catalog.is_empty() {
        return Err(SceneError::EmptyCatalog);
    }
    if 2 * pairs > object_count {
        return Err(SceneError::Invalid(format!("{pairs} pairs do not fit in {object_count} objects")));
    }
    let table = Table::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0;
    for _ in 0..RESTARTS {
        let mut order: Vec<&ObjectTemplate> = catalog.iter().collect();
        order.shuffle(&mut rng);
        let distinct = object_count - pairs;
        let mut picks: Vec<(&ObjectTemplate, Option<String>)> = Vec::with_capacity(object_count);
        for k in 0..distinct {
            let t = if k < order.len() { order[k] } else { *order.choose(&mut rng).expect("catalog non-empty") };
            let color = t.colors.choose(&mut rng).cloned();
            picks.push((t, color.clone()));
            if k < pairs {
                picks.push((t, color));
            }
        }
        let mut placed: Vec<SceneObject> = Vec::with_capacity(object_count);
        for (k, (t, color)) in picks.iter().enumerate() {
            match try_place(&mut rng, t, object_id(&t.name, k), color.as_deref(), &table, &placed) {
                Some(o) => placed.push(o),
                None => break,
            }
        }
        best = best.max(placed.len());
        if placed.len() == object_count {
            return Ok(Scene { id: format!("scene-{seed}"), seed, table, objects: placed });
        }
    }
    Err(SceneError::Overflow { placed: best, requested: object_count })
}

/// Identical pair placed side by side, separated across the long axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairPlacement {
    pub requested_gap: f64,
    pub measured_gap: f64,
    pub yaw: f64,
}

/// Two copies of `template` with parallel random yaw whose footprints are
/// `gap` apart perpendicular to the long axis. The surface gap is measured by
/// closest-point search over dense surface samples.
pub fn generate_pair_scene(
    seed: u64,
    template: &ObjectTemplate,
    gap: f64,
) -> Result<(Scene, PairPlacement), SceneError> {
    let table = Table::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let color = template.colors.first().map(String::as_str);
    let (lo, hi) = shape_bounds(&template.shape);
    let (ex, ey) = (hi.x - lo.x, hi.y - lo.y);
    // offset along the local axis perpendicular to the long one
    let (local_dir, across) = if ex >= ey { ((0.0, 1.0), ey) } else { ((1.0, 0.0), ex) };
    let d = nalgebra::Rotation2::new(yaw) * nalgebra::Vector2::new(local_dir.0, local_dir.1);
    let half = (across + gap) / 2.0;
    let jitter = (rng.random_range(-0.03..0.03), rng.random_range(-0.03..0.03));
    let mut objects = Vec::new();
    for (k, s) in [(0, -1.0), (1, 1.0)] {
        let (x, y) = (jitter.0 + s * half * d.x, jitter.1 + s * half * d.y);
        objects.push(template.instantiate(object_id(&template.name, k), resting_pose(template, &table, x, y, yaw), color));
    }
    if objects.iter().any(|o| !on_table(o, &table)) {
        return Err(SceneError::Overflow { placed: 0, requested: 2 });
    }
    let measured_gap = surface_gap(&objects[0], &objects[1]);
    let scene = Scene { id: format!("pair-{}-{seed}", template.name.replace(' ', "_")), seed, table, objects };
    Ok((scene, PairPlacement { requested_gap: gap, measured_gap, yaw }))
}

/// Approximate closest distance between two object surfaces.
pub fn surface_gap(a: &SceneObject, b: &SceneObject) -> f64 {
    let one_way = |from: &SceneObject, to: &SceneObject| {
        let (pts, _) = sample_surface(from, GAP_SAMPLES);
        pts.iter().map(|p: &Point| to.sdf(p)).fold(f64::INFINITY, f64::min)
    };
    one_way(a, b).min(one_way(b, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::catalog::{default_catalog, flashlight};

    #[test]
    fn deterministic_and_valid() {
        let cat = default_catalog();
        let a = generate_scene(7, 9, &cat).unwrap();
        let b = generate_scene(7, 9, &cat).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.objects.len(), 9);
        a.validate().unwrap();
        for (i, o) in a.objects.iter().enumerate() {
            for p in &a.objects[..i] {
                assert!(surface_gap(o, p) > 0.0);
            }
        }
    }

    #[test]
    fn zero_count_rejected() {
        let err = generate_scene(7, 0, &default_catalog()).unwrap_err();
        assert_eq!(err.to_string(), "object_count must be ≥1");
    }

    #[test]
    fn overflow_reported() {
        let err = generate_scene(1, 60, &default_catalog()).unwrap_err();
        assert!(matches!(err, SceneError::Overflow { requested: 60, .. }));
    }

    #[test]
    fn pairs_are_identical() {
        let s = generate_scene_with_pairs(11, 9, 3, &default_catalog()).unwrap();
        s.validate().unwrap();
        let mut names: Vec<&str> = s.objects.iter().map(|o| o.name.as_str()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 6);
    }

    #[test]
    fn pair_gap_matches_request() {
        let (scene, placement) = generate_pair_scene(3, &flashlight(), 0.04).unwrap();
        scene.validate().unwrap();
        assert!((placement.measured_gap - 0.04).abs() < 5e-4, "{placement:?}");
    }

    #[test]
    fn separated_axis_test() {
        let a = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let b = [[1.5, 0.0], [2.5, 0.0], [2.5, 1.0], [1.5, 1.0]];
        assert!(footprints_separated(&a, &b, 0.4));
        assert!(!footprints_separated(&a, &b, 0.6));
    }
}
