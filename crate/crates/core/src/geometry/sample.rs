use super::cloud::{KeypointSet, PointCloud};
use super::rng::Rng;
use super::vec3;
use super::GeometryError;

/// Farthest-point-sampling output: the selected points and their indices
/// into the source cloud, in selection order.
#[derive(Debug, Clone)]
pub struct FpsResult {
    pub keypoints: KeypointSet,
    pub indices: Vec<usize>,
}

/// Greedy max-min selection of `k` points, starting from a seeded uniform
/// index. Ties in the max-min step break toward the lowest index.
pub fn fps(pc: &PointCloud, k: usize, seed: u64) -> Result<FpsResult, GeometryError> {
    let mut rng = Rng::seed_from_u64(seed);
    let start = rng.index(pc.len());
    fps_from(pc, k, start)
}

/// [`fps`] with an explicit start index.
pub fn fps_from(pc: &PointCloud, k: usize, start: usize) -> Result<FpsResult, GeometryError> {
    let n = pc.len();
    if k < 1 || k > n {
        return Err(GeometryError::KTooLarge { k, n });
    }
    assert!(start < n, "start index out of range");

    let mut indices = Vec::with_capacity(k);
    indices.push(start);
    // min squared distance from each point to the selected set
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut last = start;
    while indices.len() < k {
        let last_p = pc.points[last];
        let mut best = 0usize;
        let mut best_d2 = f64::NEG_INFINITY;
        for i in 0..n {
            let d2 = vec3::dist_sq(pc.points[i], last_p);
            if d2 < min_d2[i] {
                min_d2[i] = d2;
            }
            if min_d2[i] > best_d2 {
                best_d2 = min_d2[i];
                best = i;
            }
        }
        indices.push(best);
        last = best;
    }
    let keypoints = KeypointSet {
        keypoints: indices.iter().map(|&i| pc.points[i]).collect(),
    };
    Ok(FpsResult { keypoints, indices })
}

/// Uniform subsample of `n` points without replacement, deterministic
/// under `seed`. `n == N` returns a permutation of the input.
pub fn subsample(pc: &PointCloud, n: usize, seed: u64) -> Result<PointCloud, GeometryError> {
    let total = pc.len();
    if n > total {
        return Err(GeometryError::NTooLarge {
            requested: n,
            n: total,
        });
    }
    let mut rng = Rng::seed_from_u64(seed);
    // partial Fisher-Yates: after i swaps, the first i slots are a uniform
    // draw without replacement
    let mut idx: Vec<usize> = (0..total).collect();
    for i in 0..n {
        let j = i + rng.index(total - i);
        idx.swap(i, j);
    }
    Ok(PointCloud {
        points: idx[..n].iter().map(|&i| pc.points[i]).collect(),
    })
}
