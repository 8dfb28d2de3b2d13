//! Differentiable soft projection of keypoints onto a surface cloud:
//! a softmin over Euclidean distances weights the surface points, so the
//! temperature interpolates between nearest-neighbor projection (tau -> 0)
//! and the surface centroid (tau -> inf).

use crate::geometry::{KeypointSet, PointCloud};

use super::graph::ModelGraph;
use super::params::ParamStore;
use super::tape::NodeId;
use super::tensor::Tensor;

/// Guards sqrt at coincident points; negligible against any real distance.
const DIST_EPS: f64 = 1e-24;

/// Builds the soft projection on the graph. `keypoints` is d x 3 (tape),
/// `surface` is N x 3 (tape; may be a constant leaf). Returns d x 3.
pub fn soft_project_graph(
    g: &mut ModelGraph,
    keypoints: NodeId,
    surface: NodeId,
    tau: f64,
) -> NodeId {
    assert!(tau > 0.0, "soft projection needs tau > 0");
    let n = g.tape.value(surface).rows;
    let d = g.tape.value(keypoints).rows;

    // pairwise squared distances: |k|^2 + |s|^2 - 2 k.s
    let k_sq = g.tape.mul(keypoints, keypoints);
    let k_norm = g.tape.sum_cols(k_sq); // d x 1
    let k_broad = g.tape.broadcast_col(k_norm, n); // d x N
    let s_sq = g.tape.mul(surface, surface);
    let s_norm = g.tape.sum_cols(s_sq); // N x 1
    let s_norm_t = g.tape.transpose(s_norm); // 1 x N
    let s_broad = g.tape.broadcast_row(s_norm_t, d); // d x N
    let surface_t = g.tape.transpose(surface);
    let cross = g.tape.matmul(keypoints, surface_t); // d x N
    let cross_neg = g.tape.scale(cross, -2.0);
    let sums = g.tape.add(k_broad, s_broad);
    let dist_sq = g.tape.add(sums, cross_neg);
    // cancellation can leave tiny negatives; clip before the sqrt
    let dist_sq_pos = g.tape.relu(dist_sq);
    let dist_sq_safe = g.tape.add_scalar(dist_sq_pos, DIST_EPS);
    let dist = g.tape.sqrt(dist_sq_safe);

    // softmin via row softmax of -d/tau
    let logits = g.tape.scale(dist, -1.0 / tau);
    let weights = g.tape.softmax_rows(logits);
    g.tape.matmul(weights, surface)
}

/// Plain soft projection of a keypoint set onto a surface cloud.
pub fn soft_project(
    keypoints: &KeypointSet,
    surface: &PointCloud,
    tau: f64,
    store: &ParamStore,
) -> KeypointSet {
    let mut g = ModelGraph::new(store);
    let k = g.constant(Tensor::from_points(&keypoints.keypoints));
    let s = g.constant(Tensor::from_points(&surface.points));
    let out = soft_project_graph(&mut g, k, s, tau);
    KeypointSet {
        keypoints: g.tape.value(out).to_points(),
    }
}
