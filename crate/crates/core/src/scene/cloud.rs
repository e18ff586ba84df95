use super::{deproject, CameraModel, RenderOutput, Scene, SceneError, SceneObject};
use crate::geometry::{halton, PixelRegion, Point, Vec3};
use crate::spatial::PointGrid;
use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

pub const DEFAULT_OUTLIER_K: usize = 8;
pub const DEFAULT_OUTLIER_STD_RATIO: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloudSource {
    Observed,
    Completed,
}

/// World-frame point set. `normals` is either empty or parallel to `points`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Point>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub normals: Vec<Vec3>,
    pub source: CloudSource,
}

impl PointCloud {
    pub fn new(points: Vec<Point>, source: CloudSource) -> Self {
        PointCloud { points, normals: Vec::new(), source }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn has_normals(&self) -> bool {
        !self.points.is_empty() && self.normals.len() == self.points.len()
    }

    pub fn centroid(&self) -> Option<Point> {
        if self.points.is_empty() {
            return None;
        }
        let sum: Vec3 = self.points.iter().map(|p| p.coords).sum();
        Some(Point::from(sum / self.points.len() as f64))
    }

    /// Keeps the points whose index satisfies `keep`.
    pub fn filter_indexed(&self, mut keep: impl FnMut(usize) -> bool) -> PointCloud {
        let idx: Vec<usize> = (0..self.points.len()).filter(|i| keep(*i)).collect();
        PointCloud {
            points: idx.iter().map(|i| self.points[*i]).collect(),
            normals: if self.has_normals() { idx.iter().map(|i| self.normals[*i]).collect() } else { Vec::new() },
            source: self.source,
        }
    }

    /// Typical neighbour spacing for a surface sampled with these points.
    pub fn spacing_hint(&self) -> f64 {
        let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
        for p in &self.points {
            lo = lo.inf(&p.coords);
            hi = hi.sup(&p.coords);
        }
        let extent = (hi - lo).max();
        if !extent.is_finite() || extent <= 0.0 {
            return 1e-3;
        }
        (extent / (self.points.len() as f64).sqrt()).max(1e-5)
    }
}

/// One observed point per region pixel with valid depth, optionally restricted
/// to pixels labeled `target`.
pub fn extract_point_cloud(
    region: &PixelRegion,
    render: &RenderOutput,
    camera: &CameraModel,
    target: Option<&str>,
) -> Result<PointCloud, SceneError> {
    let b = region.bounds();
    if b.x1 >= render.width || b.y1 >= render.height {
        return Err(SceneError::RegionOutOfBounds);
    }
    let label = match target {
        Some(id) => match render.label_of(id) {
            Some(l) => Some(l),
            None => return Ok(PointCloud::new(Vec::new(), CloudSource::Observed)),
        },
        None => None,
    };
    let mut points = Vec::new();
    for (x, y) in region.pixels() {
        let i = render.index(x, y);
        let l = render.labels[i];
        if l == 0 || label.is_some_and(|t| t != l) {
            continue;
        }
        if let Some(d) = render.depth_at(x, y) {
            points.push(deproject(x as f64, y as f64, d, camera)?);
        }
    }
    Ok(PointCloud::new(points, CloudSource::Observed))
}

/// Statistical outlier removal on mean k-nearest-neighbour distance.
pub fn remove_outliers(cloud: &PointCloud, k: usize, std_ratio: f64) -> PointCloud {
    let n = cloud.points.len();
    if k == 0 || n < k + 1 {
        return cloud.clone();
    }
    let grid = PointGrid::new(&cloud.points, 2.0 * cloud.spacing_hint());
    let mean_dist: Vec<f64> = (0..n)
        .map(|i| {
            let nn = grid.knn(&cloud.points[i], k, Some(i));
            nn.iter().map(|(d2, _)| d2.sqrt()).sum::<f64>() / nn.len() as f64
        })
        .collect();
    let mu = mean_dist.iter().sum::<f64>() / n as f64;
    let var = mean_dist.iter().map(|d| (d - mu).powi(2)).sum::<f64>() / n as f64;
    let limit = mu + std_ratio * var.sqrt();
    cloud.filter_indexed(|i| mean_dist[i] <= limit)
}

/// PCA normals from `k` neighbours, oriented toward `viewpoint` when given and
/// away from the centroid otherwise.
pub fn estimate_normals(cloud: &PointCloud, k: usize, viewpoint: Option<Point>) -> PointCloud {
    let mut out = cloud.clone();
    let Some(centroid) = cloud.centroid() else { return out };
    let grid = PointGrid::new(&cloud.points, 2.0 * cloud.spacing_hint());
    out.normals = cloud
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let nn = grid.knn(p, k.max(3), Some(i));
            let mean = nn.iter().fold(p.coords, |acc, (_, j)| acc + cloud.points[*j].coords) / (nn.len() + 1) as f64;
            let mut cov = (p.coords - mean) * (p.coords - mean).transpose();
            for (_, j) in &nn {
                let d = cloud.points[*j].coords - mean;
                cov += d * d.transpose();
            }
            let eig = SymmetricEigen::new(cov);
            let imin = eig.eigenvalues.imin();
            let mut n: Vec3 = eig.eigenvectors.column(imin).into_owned();
            let toward = match viewpoint {
                Some(v) => v - p,
                None => p - centroid,
            };
            if n.dot(&toward) < 0.0 {
                n = -n;
            }
            n
        })
        .collect();
    out
}

/// Oracle completion: quasi-random, area-uniform samples of the object's
/// union surface with analytic normals. The observed cloud is not consulted.
pub fn complete_cloud(
    _observed: &PointCloud,
    scene: &Scene,
    object_id: &str,
    samples: usize,
) -> Result<PointCloud, SceneError> {
    let object = scene.object(object_id)?;
    if samples == 0 {
        return Err(SceneError::NoSamples);
    }
    let (points, normals) = sample_surface(object, samples);
    Ok(PointCloud { points, normals, source: CloudSource::Completed })
}

/// Up to `samples` Halton-sequence points on the union surface of `object`
/// (points buried inside another primitive are skipped), with outward normals.
pub fn sample_surface(object: &SceneObject, samples: usize) -> (Vec<Point>, Vec<Vec3>) {
    let prims = object.world_primitives();
    let areas: Vec<f64> = prims.iter().map(|p| p.primitive.surface_area()).collect();
    let total: f64 = areas.iter().sum();
    let mut points = Vec::with_capacity(samples);
    let mut normals = Vec::with_capacity(samples);
    let max_draws = 64 * samples as u64 + 1000;
    let mut i = 0u64;
    while points.len() < samples && i < max_draws {
        i += 1;
        let mut pick = halton(i, 2) * total;
        let mut which = prims.len() - 1;
        for (j, a) in areas.iter().enumerate() {
            if pick < *a {
                which = j;
                break;
            }
            pick -= a;
        }
        let wp = &prims[which];
        let (lp, ln) = wp.primitive.surface_point(halton(i, 7), halton(i, 3), halton(i, 5));
        let p = wp.pose.transform_point(&lp);
        if prims.iter().enumerate().any(|(j, other)| j != which && other.sdf(&p) <= 1e-9) {
            continue;
        }
        points.push(p);
        normals.push(wp.pose.transform_vector(&ln));
    }
    (points, normals)
}

/// 3×3 covariance of a point set about its centroid.
pub fn covariance(points: &[Point]) -> Matrix3<f64> {
    let n = points.len().max(1) as f64;
    let mean: Vec3 = points.iter().map(|p| p.coords).sum::<Vec3>() / n;
    points.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p.coords - mean;
        acc + d * d.transpose()
    }) / n
}
