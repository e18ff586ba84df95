//! Uniform voxel grid over a point set for nearest-neighbour queries.

use crate::geometry::Point;

const MAX_CELLS: usize = 1 << 21;

pub struct PointGrid<'a> {
    points: &'a [Point],
    origin: Point,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<u32>,
    order: Vec<u32>,
}

impl<'a> PointGrid<'a> {
    /// Builds a grid with roughly `cell` sized voxels (grown if the extent
    /// would need too many cells).
    pub fn new(points: &'a [Point], cell: f64) -> Self {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            for i in 0..3 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        if points.is_empty() {
            lo = Point::origin();
            hi = Point::origin();
        }
        let mut cell = if cell > 0.0 { cell } else { 1e-3 };
        let dims = loop {
            let d = [0, 1, 2].map(|i| ((hi[i] - lo[i]) / cell).floor() as usize + 1);
            if d[0] * d[1] * d[2] <= MAX_CELLS {
                break d;
            }
            cell *= 2.0;
        };
        let mut grid = PointGrid {
            points,
            origin: lo,
            cell,
            dims,
            starts: vec![0; dims[0] * dims[1] * dims[2] + 1],
            order: vec![0; points.len()],
        };
        let keys: Vec<usize> = points.iter().map(|p| grid.key(grid.coords(p))).collect();
        for k in &keys {
            grid.starts[k + 1] += 1;
        }
        for i in 1..grid.starts.len() {
            grid.starts[i] += grid.starts[i - 1];
        }
        let mut fill = grid.starts.clone();
        for (i, k) in keys.iter().enumerate() {
            grid.order[fill[*k] as usize] = i as u32;
            fill[*k] += 1;
        }
        grid
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn coords(&self, p: &Point) -> [i64; 3] {
        [0, 1, 2].map(|i| ((p[i] - self.origin[i]) / self.cell).floor() as i64)
    }

    fn key(&self, c: [i64; 3]) -> usize {
        let c = [0, 1, 2].map(|i| c[i].clamp(0, self.dims[i] as i64 - 1) as usize);
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    fn cell_points(&self, c: [i64; 3]) -> &[u32] {
        for i in 0..3 {
            if c[i] < 0 || c[i] >= self.dims[i] as i64 {
                return &[];
            }
        }
        let k = self.key(c);
        &self.order[self.starts[k] as usize..self.starts[k + 1] as usize]
    }

    fn visit_ring(&self, center: [i64; 3], r: i64, mut f: impl FnMut(usize)) {
        for dz in -r..=r {
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                        continue;
                    }
                    for &i in self.cell_points([center[0] + dx, center[1] + dy, center[2] + dz]) {
                        f(i as usize);
                    }
                }
            }
        }
    }

    fn max_ring(&self) -> i64 {
        *self.dims.iter().max().unwrap_or(&1) as i64 + 1
    }

    /// `k` nearest points as (squared distance, index), ascending, excluding `skip`.
    pub fn knn(&self, q: &Point, k: usize, skip: Option<usize>) -> Vec<(f64, usize)> {
        let mut found: Vec<(f64, usize)> = Vec::with_capacity(4 * k);
        if k == 0 {
            return found;
        }
        // clamp the query into the grid so rings start from a real cell
        let raw = self.coords(q);
        let center = [0, 1, 2].map(|i| raw[i].clamp(0, self.dims[i] as i64 - 1));
        let outside = [0, 1, 2]
            .map(|i| (raw[i] - center[i]).abs())
            .into_iter()
            .max()
            .unwrap_or(0);
        for r in 0..=self.max_ring() {
            self.visit_ring(center, r, |i| {
                if Some(i) != skip {
                    found.push(((self.points[i] - q).norm_squared(), i));
                }
            });
            if found.len() >= k {
                found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                found.truncate(k);
                let reach = (r - outside).max(0) as f64 * self.cell;
                if found[k - 1].0 <= reach * reach {
                    break;
                }
            }
        }
        found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        found.truncate(k);
        found
    }

    pub fn nearest(&self, q: &Point) -> Option<(f64, usize)> {
        self.knn(q, 1, None).into_iter().next().map(|(d2, i)| (d2.sqrt(), i))
    }

    /// Nearest point no farther than `radius`, as (distance, index).
    pub fn nearest_within(&self, q: &Point, radius: f64) -> Option<(f64, usize)> {
        let r = nalgebra::Vector3::repeat(radius);
        let mut best: Option<(f64, usize)> = None;
        self.visit_aabb(&(q - r), &(q + r), |i| {
            let d2 = (self.points[i] - q).norm_squared();
            if d2 <= radius * radius && best.is_none_or(|(b, j)| d2 < b || (d2 == b && i < j)) {
                best = Some((d2, i));
            }
        });
        best.map(|(d2, i)| (d2.sqrt(), i))
    }

    /// Calls `f` for every point in the cells overlapping the box `[lo, hi]`
    /// (a superset of the points inside it).
    pub fn visit_aabb(&self, lo: &Point, hi: &Point, mut f: impl FnMut(usize)) {
        let (a, b) = (self.coords(lo), self.coords(hi));
        for z in a[2].max(0)..=b[2].min(self.dims[2] as i64 - 1) {
            for y in a[1].max(0)..=b[1].min(self.dims[1] as i64 - 1) {
                for x in a[0].max(0)..=b[0].min(self.dims[0] as i64 - 1) {
                    for &i in self.cell_points([x, y, z]) {
                        f(i as usize);
                    }
                }
            }
        }
    }

    /// Indices of all points within `radius` of `q`.
    pub fn within(&self, q: &Point, radius: f64) -> Vec<usize> {
        let lo = self.coords(&(q - nalgebra::Vector3::repeat(radius)));
        let hi = self.coords(&(q + nalgebra::Vector3::repeat(radius)));
        let r2 = radius * radius;
        let mut out = Vec::new();
        for z in lo[2].max(0)..=hi[2].min(self.dims[2] as i64 - 1) {
            for y in lo[1].max(0)..=hi[1].min(self.dims[1] as i64 - 1) {
                for x in lo[0].max(0)..=hi[0].min(self.dims[0] as i64 - 1) {
                    for &i in self.cell_points([x, y, z]) {
                        if (self.points[i as usize] - q).norm_squared() <= r2 {
                            out.push(i as usize);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}
