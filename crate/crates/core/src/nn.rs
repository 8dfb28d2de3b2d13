//! Nearest-neighbor kernels shared by losses and metrics.
//!
//! Queries are exact O(N*M) scans up to [`GRID_THRESHOLD`] target points and
//! grid-bucketed beyond. Both paths compute squared distances with the same
//! expression and take plain minima, so they agree bit-for-bit; the grid is
//! only a candidate filter. Per-query work is data-parallel (see
//! [`crate::parallel`]); result vectors keep query order.

use crate::geometry::vec3::{dist_sq, Point3};
use crate::parallel;

/// Target count above which queries go through the grid index.
pub const GRID_THRESHOLD: usize = 4096;

/// Forces one of the two query paths; `Auto` switches on [`GRID_THRESHOLD`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NnStrategy {
    Auto,
    Exact,
    Grid,
}

/// Index and squared distance of the nearest target for each query point.
/// Ties break toward the lowest target index.
pub fn nearest(queries: &[Point3], targets: &[Point3]) -> Vec<(usize, f64)> {
    nearest_with(queries, targets, NnStrategy::Auto)
}

pub fn nearest_with(
    queries: &[Point3],
    targets: &[Point3],
    strategy: NnStrategy,
) -> Vec<(usize, f64)> {
    assert!(!targets.is_empty(), "nearest: empty target set");
    let use_grid = match strategy {
        NnStrategy::Auto => targets.len() > GRID_THRESHOLD,
        NnStrategy::Exact => false,
        NnStrategy::Grid => true,
    };
    if use_grid {
        let grid = GridIndex::build(targets);
        parallel::map_slice(queries, |q| grid.nearest(*q))
    } else {
        parallel::map_slice(queries, |q| nearest_exact(*q, targets))
    }
}

/// Sequential variant of [`nearest`], exposed for the parallel-vs-seq bench.
pub fn nearest_seq(queries: &[Point3], targets: &[Point3]) -> Vec<(usize, f64)> {
    assert!(!targets.is_empty(), "nearest_seq: empty target set");
    if targets.len() > GRID_THRESHOLD {
        let grid = GridIndex::build(targets);
        parallel::map_slice_seq(queries, |q| grid.nearest(*q))
    } else {
        parallel::map_slice_seq(queries, |q| nearest_exact(*q, targets))
    }
}

fn nearest_exact(q: Point3, targets: &[Point3]) -> (usize, f64) {
    let mut best = 0usize;
    let mut best_d2 = f64::INFINITY;
    for (j, t) in targets.iter().enumerate() {
        let d2 = dist_sq(q, *t);
        if d2 < best_d2 {
            best_d2 = d2;
            best = j;
        }
    }
    (best, best_d2)
}

/// Indices of the `k` nearest neighbors of each point within `points`,
/// excluding the point itself. Neighbor lists are sorted by distance,
/// ties toward the lowest index.
pub fn knn(points: &[Point3], k: usize) -> Vec<Vec<usize>> {
    assert!(k >= 1 && k < points.len(), "knn: need 1 <= k < N");
    parallel::map_range(points.len(), |i| knn_of(points, i, k))
}

/// Sequential variant of [`knn`] for the bench suite.
pub fn knn_seq(points: &[Point3], k: usize) -> Vec<Vec<usize>> {
    assert!(k >= 1 && k < points.len(), "knn_seq: need 1 <= k < N");
    parallel::map_range_seq(points.len(), |i| knn_of(points, i, k))
}

fn knn_of(points: &[Point3], i: usize, k: usize) -> Vec<usize> {
    // insertion into a k-slot list; N is desk scale so the scan is exact
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for (j, p) in points.iter().enumerate() {
        if j == i {
            continue;
        }
        let d2 = dist_sq(points[i], *p);
        let pos = best.partition_point(|&(d, idx)| d < d2 || (d == d2 && idx < j));
        if pos < k {
            best.insert(pos, (d2, j));
            best.truncate(k);
        }
    }
    best.into_iter().map(|(_, j)| j).collect()
}

/// Uniform-grid bucket index over a fixed target set.
pub struct GridIndex<'a> {
    targets: &'a [Point3],
    origin: Point3,
    edge: f64,
    dims: [usize; 3],
    cells: Vec<Vec<u32>>,
}

impl<'a> GridIndex<'a> {
    pub fn build(targets: &'a [Point3]) -> Self {
        assert!(!targets.is_empty());
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in targets {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let extent: Vec<f64> = (0..3).map(|a| (hi[a] - lo[a]).max(1e-12)).collect();
        let volume: f64 = extent.iter().product();
        // aim for ~2 points per occupied cell
        let edge = (volume / (targets.len() as f64 / 2.0)).cbrt().max(1e-12);
        let dims = [
            ((extent[0] / edge).ceil() as usize + 1).min(256),
            ((extent[1] / edge).ceil() as usize + 1).min(256),
            ((extent[2] / edge).ceil() as usize + 1).min(256),
        ];
        let mut cells = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        let origin = lo;
        for (j, p) in targets.iter().enumerate() {
            let c = cell_of(*p, origin, edge, dims);
            cells[flat(c.map(|v| v as usize), dims)].push(j as u32);
        }
        Self {
            targets,
            origin,
            edge,
            dims,
            cells,
        }
    }

    /// Nearest target to `q`: expanding Chebyshev rings around the query
    /// cell. After scanning rings 0..=r, any unscanned point lies at least
    /// r*edge away, so the search stops once best_d2 <= (r*edge)^2.
    pub fn nearest(&self, q: Point3) -> (usize, f64) {
        let c = cell_of(q, self.origin, self.edge, self.dims);
        let max_ring = self.dims.iter().max().copied().unwrap_or(1);
        let mut best = usize::MAX;
        let mut best_d2 = f64::INFINITY;
        for r in 0..=max_ring {
            self.scan_ring(c, r, |j| {
                let d2 = dist_sq(q, self.targets[j]);
                if d2 < best_d2 || (d2 == best_d2 && j < best) {
                    best_d2 = d2;
                    best = j;
                }
            });
            let bound = r as f64 * self.edge;
            if best < usize::MAX && best_d2 <= bound * bound {
                break;
            }
        }
        (best, best_d2)
    }

    fn scan_ring(&self, center: [isize; 3], r: usize, mut visit: impl FnMut(usize)) {
        let r = r as isize;
        let lo = [center[0] - r, center[1] - r, center[2] - r];
        let hi = [center[0] + r, center[1] + r, center[2] + r];
        for x in lo[0]..=hi[0] {
            if x < 0 || x >= self.dims[0] as isize {
                continue;
            }
            for y in lo[1]..=hi[1] {
                if y < 0 || y >= self.dims[1] as isize {
                    continue;
                }
                for z in lo[2]..=hi[2] {
                    if z < 0 || z >= self.dims[2] as isize {
                        continue;
                    }
                    // ring shell only: skip interior cells already scanned
                    let on_shell = (x - center[0]).abs() == r
                        || (y - center[1]).abs() == r
                        || (z - center[2]).abs() == r;
                    if !on_shell {
                        continue;
                    }
                    let cell =
                        &self.cells[flat([x as usize, y as usize, z as usize].map(|v| v), self.dims)];
                    for &j in cell {
                        visit(j as usize);
                    }
                }
            }
        }
    }
}

fn cell_of(p: Point3, origin: Point3, edge: f64, dims: [usize; 3]) -> [isize; 3] {
    let mut c = [0isize; 3];
    for a in 0..3 {
        let raw = ((p[a] - origin[a]) / edge).floor() as isize;
        c[a] = raw.clamp(0, dims[a] as isize - 1);
    }
    c
}

fn flat(c: [usize; 3], dims: [usize; 3]) -> usize {
    (c[0] * dims[1] + c[1]) * dims[2] + c[2]
}
