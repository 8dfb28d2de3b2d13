//! Training loss terms and the weighted total.
//!
//! These are the plain (non-differentiable) evaluations used by metrics,
//! logging, and tests; the training loop builds the same quantities on the
//! reverse-mode tape (`model::loss_graph`) and the two are cross-checked.
//! All reductions run in fixed index order so values are bit-reproducible.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::vec3::{self, Point3};
use crate::geometry::{KeypointSet, PointCloud};
use crate::nn;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("asymmetric Chamfer requires beta > alpha > 0 (got alpha={alpha}, beta={beta})")]
    BadWeights { alpha: f64, beta: f64 },
    #[error("repulsion needs N > k_nn (N={n}, k_nn={k})")]
    TooFewPoints { n: usize, k: usize },
    #[error("keypoint sets differ in size: {a} vs {b}")]
    SizeMismatch { a: usize, b: usize },
}

/// Direction of the FPS anchor Chamfer term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FpsLossDirection {
    /// Mean of both one-way terms.
    Symmetric,
    KeypointsToAnchors,
    AnchorsToKeypoints,
}

/// Loss weights and schedule knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// FPS anchor term weight.
    pub lambda_fps: f64,
    /// Diffusion reconstruction term weight.
    pub lambda_diff: f64,
    /// Keypoint Chamfer term weight.
    pub lambda_chamfer: f64,
    /// Deformation consistency term weight.
    pub lambda_mse: f64,
    /// Precision weight of the asymmetric Chamfer.
    pub alpha: f64,
    /// Coverage weight of the asymmetric Chamfer; must exceed alpha.
    pub beta: f64,
    /// Repulsion strength.
    pub rho: f64,
    /// Repulsion margin in normalized units.
    pub margin: f64,
    /// Repulsion neighbor count.
    pub k_nn: usize,
    /// Steps over which the KL weight ramps from 0 to 1.
    pub t_warmup: usize,
    /// Fraction of epochs forming the initial phase with pinned weights.
    pub n_init_fraction: f64,
    /// Number of FPS anchors for the anchor loss.
    pub fps_anchor_count: usize,
    pub fps_direction: FpsLossDirection,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_fps: 1.0,
            lambda_diff: 3.0,
            lambda_chamfer: 1.0,
            lambda_mse: 1.0,
            alpha: 0.5,
            beta: 1.0,
            rho: 0.1,
            margin: 0.05,
            k_nn: 4,
            t_warmup: 1000,
            n_init_fraction: 0.1,
            fps_anchor_count: 20,
            fps_direction: FpsLossDirection::Symmetric,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.beta > self.alpha && self.alpha > 0.0) {
            return Err(LossError::BadWeights {
                alpha: self.alpha,
                beta: self.beta,
            });
        }
        Ok(())
    }
}

/// Raw term values, the effective weights they were combined with, and the
/// weighted total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub fps: f64,
    pub diff: f64,
    pub chamfer: f64,
    pub mse: f64,
    pub kl: f64,
    /// Effective lambdas in term order (fps, diff, chamfer, mse, kl).
    pub lambdas: [f64; 5],
    pub total: f64,
}

impl LossBreakdown {
    pub fn terms(&self) -> [f64; 5] {
        [self.fps, self.diff, self.chamfer, self.mse, self.kl]
    }
}

/// One-way Chamfer: mean over `a` of the squared distance to its nearest
/// point in `b`. Zero iff `a` is a subset of `b` as a set.
pub fn chamfer_oneway(a: &PointCloud, b: &PointCloud) -> Result<f64, LossError> {
    if a.is_empty() || b.is_empty() {
        return Err(LossError::EmptyCloud);
    }
    Ok(chamfer_oneway_points(&a.points, &b.points))
}

pub(crate) fn chamfer_oneway_points(a: &[Point3], b: &[Point3]) -> f64 {
    let nearest = nn::nearest(a, b);
    let sum: f64 = nearest.iter().map(|&(_, d2)| d2).sum();
    sum / a.len() as f64
}

/// Asymmetric Chamfer: `alpha * d(pred->target) + beta * d(target->pred)`
/// with `beta > alpha` so missing regions cost more than stray points.
pub fn chamfer_asym(
    pred: &PointCloud,
    target: &PointCloud,
    alpha: f64,
    beta: f64,
) -> Result<f64, LossError> {
    if !(beta > alpha && alpha > 0.0) {
        return Err(LossError::BadWeights { alpha, beta });
    }
    Ok(alpha * chamfer_oneway(pred, target)? + beta * chamfer_oneway(target, pred)?)
}

/// Hinge repulsion: mean over all (point, k-neighbor) pairs of
/// `max(0, margin - distance)`.
pub fn repulsion(pred: &PointCloud, k_nn: usize, margin: f64) -> Result<f64, LossError> {
    let n = pred.len();
    if k_nn < 1 || n <= k_nn {
        return Err(LossError::TooFewPoints { n, k: k_nn });
    }
    assert!(margin > 0.0, "repulsion margin must be positive");
    let neighbors = nn::knn(&pred.points, k_nn);
    let mut sum = 0.0;
    for (i, nbrs) in neighbors.iter().enumerate() {
        for &j in nbrs {
            let d = vec3::dist(pred.points[i], pred.points[j]);
            sum += (margin - d).max(0.0);
        }
    }
    Ok(sum / (n * k_nn) as f64)
}

/// Noise-dependent attenuation of the repulsion term:
/// `sigma_data / (sigma + sigma_data)`, in (0, 1].
pub fn gamma_weight(sigma: f64, sigma_data: f64) -> f64 {
    assert!(sigma >= 0.0 && sigma_data > 0.0);
    sigma_data / (sigma + sigma_data)
}

/// One-way Chamfer from keypoints onto the input surface.
pub fn keypoint_chamfer(keypoints: &KeypointSet, surface: &PointCloud) -> Result<f64, LossError> {
    chamfer_oneway(&keypoints.as_cloud(), surface)
}

/// Chamfer between predicted keypoints and FPS anchors. The anchor set may
/// be larger than the keypoint set.
pub fn fps_anchor_loss(
    keypoints: &KeypointSet,
    anchors: &KeypointSet,
    direction: FpsLossDirection,
) -> Result<f64, LossError> {
    let k = keypoints.as_cloud();
    let a = anchors.as_cloud();
    Ok(match direction {
        FpsLossDirection::Symmetric => {
            0.5 * (chamfer_oneway(&k, &a)? + chamfer_oneway(&a, &k)?)
        }
        FpsLossDirection::KeypointsToAnchors => chamfer_oneway(&k, &a)?,
        FpsLossDirection::AnchorsToKeypoints => chamfer_oneway(&a, &k)?,
    })
}

/// Order-sensitive mean squared error between transformed original
/// keypoints and keypoints of the deformed shape.
pub fn deformation_consistency(
    transformed: &KeypointSet,
    deformed: &KeypointSet,
) -> Result<f64, LossError> {
    if transformed.len() != deformed.len() {
        return Err(LossError::SizeMismatch {
            a: transformed.len(),
            b: deformed.len(),
        });
    }
    let sum: f64 = transformed
        .keypoints
        .iter()
        .zip(&deformed.keypoints)
        .map(|(a, b)| vec3::dist_sq(*a, *b))
        .sum();
    Ok(sum / transformed.len() as f64)
}

/// KL divergence of a diagonal Gaussian `N(mu, sigma^2)` from the unit
/// Gaussian: `0.5 * sum(mu^2 + sigma^2 - log sigma^2 - 1)`.
pub fn kl_divergence(mu: &[f64], log_var: &[f64]) -> f64 {
    assert_eq!(mu.len(), log_var.len());
    let mut sum = 0.0;
    for (m, lv) in mu.iter().zip(log_var) {
        sum += m * m + lv.exp() - lv - 1.0;
    }
    0.5 * sum
}

/// Linear KL warm-up: `min(1, t / t_warmup)`.
pub fn kl_warmup(step: usize, t_warmup: usize) -> f64 {
    assert!(t_warmup > 0);
    (step as f64 / t_warmup as f64).min(1.0)
}

/// Raw term values fed to [`total_loss`].
#[derive(Debug, Clone, Copy, Default)]
pub struct LossTerms {
    pub fps: f64,
    pub diff: f64,
    pub chamfer: f64,
    pub mse: f64,
    pub kl: f64,
}

/// Weights in effect at `(step, epoch)`: the first four are pinned to
/// (1, 3, 1, 1) during the initial `n_init_fraction * total_epochs`
/// epochs, then follow the configuration; the KL weight always follows
/// the warm-up ramp.
pub fn effective_lambdas(
    weights: &LossWeights,
    step: usize,
    epoch: usize,
    total_epochs: usize,
) -> [f64; 5] {
    let n_init = (weights.n_init_fraction * total_epochs as f64).ceil() as usize;
    if epoch < n_init {
        [1.0, 3.0, 1.0, 1.0, kl_warmup(step, weights.t_warmup)]
    } else {
        [
            weights.lambda_fps,
            weights.lambda_diff,
            weights.lambda_chamfer,
            weights.lambda_mse,
            kl_warmup(step, weights.t_warmup),
        ]
    }
}

/// Combines terms into the breakdown under [`effective_lambdas`].
pub fn total_loss(
    terms: &LossTerms,
    weights: &LossWeights,
    step: usize,
    epoch: usize,
    total_epochs: usize,
) -> LossBreakdown {
    let lambdas = effective_lambdas(weights, step, epoch, total_epochs);
    let total = lambdas[0] * terms.fps
        + lambdas[1] * terms.diff
        + lambdas[2] * terms.chamfer
        + lambdas[3] * terms.mse
        + lambdas[4] * terms.kl;
    LossBreakdown {
        fps: terms.fps,
        diff: terms.diff,
        chamfer: terms.chamfer,
        mse: terms.mse,
        kl: terms.kl,
        lambdas,
        total,
    }
}
