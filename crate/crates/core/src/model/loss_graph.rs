//! Differentiable loss terms built on the tape, and the full per-sample
//! training objective. Primal values agree with the plain evaluations in
//! [`crate::losses`]; the pairing is cross-checked in tests.

use crate::deform::DeformationChain;
use crate::edm::{self, EdmConfig};
use crate::geometry::vec3::Point3;
use crate::geometry::{KeypointSet, PointCloud};
use crate::losses::{FpsLossDirection, LossWeights};
use crate::nn;

use super::denoiser::denoiser_graph;
use super::encoder::{encode_graph, EncodeNodes};
use super::graph::ModelGraph;
use super::latent::{assemble_latent_graph, reparameterize_graph};
use super::softproj::soft_project_graph;
use super::tape::NodeId;
use super::tensor::Tensor;
use super::ModelError;

/// Guards sqrt at coincident predicted points.
const DIST_EPS: f64 = 1e-24;

/// One-way Chamfer on the tape: nearest-neighbor indices come from the
/// primal values, then the squared distances are rebuilt differentiably so
/// gradients flow into both clouds through the matched pairs.
pub fn chamfer_oneway_graph(g: &mut ModelGraph, from: NodeId, to: NodeId) -> NodeId {
    let a = g.tape.value(from).to_points();
    let b = g.tape.value(to).to_points();
    let indices: Vec<usize> = nn::nearest(&a, &b).into_iter().map(|(j, _)| j).collect();
    let matched = g.tape.gather_rows(to, &indices);
    let diff = g.tape.sub(from, matched);
    let sq = g.tape.mul(diff, diff);
    let per_point = g.tape.sum_cols(sq);
    g.tape.mean_all(per_point)
}

/// Asymmetric Chamfer `alpha * d(pred->target) + beta * d(target->pred)`.
pub fn chamfer_asym_graph(
    g: &mut ModelGraph,
    pred: NodeId,
    target: NodeId,
    alpha: f64,
    beta: f64,
) -> NodeId {
    let fwd = chamfer_oneway_graph(g, pred, target);
    let bwd = chamfer_oneway_graph(g, target, pred);
    let fw = g.tape.scale(fwd, alpha);
    let bw = g.tape.scale(bwd, beta);
    g.tape.add(fw, bw)
}

/// Hinge repulsion over the k-nearest-neighbor graph of the predicted
/// cloud (neighbors fixed from primal values).
pub fn repulsion_graph(g: &mut ModelGraph, pred: NodeId, k_nn: usize, margin: f64) -> NodeId {
    let points = g.tape.value(pred).to_points();
    let neighbors = nn::knn(&points, k_nn);
    let mut centers = Vec::with_capacity(points.len() * k_nn);
    let mut others = Vec::with_capacity(points.len() * k_nn);
    for (i, nbrs) in neighbors.iter().enumerate() {
        for &j in nbrs {
            centers.push(i);
            others.push(j);
        }
    }
    let ci = g.tape.gather_rows(pred, &centers);
    let cj = g.tape.gather_rows(pred, &others);
    let diff = g.tape.sub(ci, cj);
    let sq = g.tape.mul(diff, diff);
    let d2 = g.tape.sum_cols(sq);
    let d2_safe = g.tape.add_scalar(d2, DIST_EPS);
    let dist = g.tape.sqrt(d2_safe);
    let neg = g.tape.scale(dist, -1.0);
    let gap = g.tape.add_scalar(neg, margin);
    let hinge = g.tape.relu(gap);
    g.tape.mean_all(hinge)
}

/// Order-sensitive consistency MSE between two d x 3 keypoint nodes.
pub fn consistency_graph(g: &mut ModelGraph, transformed: NodeId, deformed: NodeId) -> NodeId {
    let d = g.tape.value(transformed).rows;
    let diff = g.tape.sub(transformed, deformed);
    let sq = g.tape.mul(diff, diff);
    let total = g.tape.sum_all(sq);
    g.tape.scale(total, 1.0 / d as f64)
}

/// KL of the diagonal posterior from the unit Gaussian on the tape.
pub fn kl_graph(g: &mut ModelGraph, mu: NodeId, log_var: NodeId) -> NodeId {
    let mu_sq = g.tape.mul(mu, mu);
    let var = g.tape.exp(log_var);
    let sum_terms = g.tape.add(mu_sq, var);
    let minus_lv = g.tape.sub(sum_terms, log_var);
    let inner = g.tape.add_scalar(minus_lv, -1.0);
    let total = g.tape.sum_all(inner);
    g.tape.scale(total, 0.5)
}

/// FPS anchor Chamfer with the configured direction.
pub fn fps_anchor_graph(
    g: &mut ModelGraph,
    keypoints: NodeId,
    anchors: NodeId,
    direction: FpsLossDirection,
) -> NodeId {
    match direction {
        FpsLossDirection::Symmetric => {
            let ka = chamfer_oneway_graph(g, keypoints, anchors);
            let ak = chamfer_oneway_graph(g, anchors, keypoints);
            let sum = g.tape.add(ka, ak);
            g.tape.scale(sum, 0.5)
        }
        FpsLossDirection::KeypointsToAnchors => chamfer_oneway_graph(g, keypoints, anchors),
        FpsLossDirection::AnchorsToKeypoints => chamfer_oneway_graph(g, anchors, keypoints),
    }
}

/// Everything one training sample contributes, precomputed outside the
/// graph so the build is deterministic.
pub struct SampleInputs<'a> {
    /// Normalized input shape.
    pub original: &'a PointCloud,
    /// Deformed counterpart of `original`.
    pub deformed: &'a PointCloud,
    /// The chain that produced `deformed`, for transforming keypoints.
    pub chain: &'a DeformationChain,
    /// FPS anchors sampled on `original`.
    pub anchors: &'a KeypointSet,
    /// Noise scale for the diffusion term.
    pub sigma: f64,
    /// Unit noise for the diffusion input, one per point.
    pub noise: &'a [Point3],
    /// Unit noise for the auxiliary reparameterization.
    pub reparam_eps: &'a [f64],
    /// Detach the latent before conditioning the denoiser (training
    /// behavior). Disabled by the composed gradient check so finite
    /// differences see the same function the tape differentiates.
    pub stop_latent: bool,
}

/// Tape handles for the five terms and the weighted total.
pub struct SampleLossNodes {
    pub fps: NodeId,
    pub diff: NodeId,
    pub chamfer: NodeId,
    pub mse: NodeId,
    pub kl: NodeId,
    pub total: NodeId,
    pub encoded: EncodeNodes,
}

/// Builds the full training objective for one sample: both encoder passes,
/// the diffusion reconstruction with the stop-gradient on the latent, and
/// the keypoint regularizers, combined with the effective lambdas.
pub fn sample_loss_graph(
    g: &mut ModelGraph,
    inputs: &SampleInputs,
    weights: &LossWeights,
    lambdas: [f64; 5],
    edm_cfg: &EdmConfig,
) -> Result<SampleLossNodes, ModelError> {
    let cfg = g.store().config.clone();
    let enc_orig = encode_graph(g, inputs.original)?;
    let enc_def = encode_graph(g, inputs.deformed)?;

    let surface = g.constant(Tensor::from_points(&inputs.original.points));
    let anchors = g.constant(Tensor::from_points(&inputs.anchors.keypoints));

    // keypoint regularizers
    let fps = fps_anchor_graph(g, enc_orig.keypoints, anchors, weights.fps_direction);
    let chamfer = chamfer_oneway_graph(g, enc_orig.keypoints, surface);

    // transformed original keypoints vs keypoints of the deformed shape
    let matrix = inputs.chain.resolve(inputs.original);
    let matrix_t = {
        let mut flat = Vec::with_capacity(9);
        for c in 0..3 {
            for r in 0..3 {
                flat.push(matrix[r][c]);
            }
        }
        g.constant(Tensor::from_vec(3, 3, flat))
    };
    let transformed = g.tape.matmul(enc_orig.keypoints, matrix_t);
    let mse = consistency_graph(g, transformed, enc_def.keypoints);

    let kl = kl_graph(g, enc_orig.mu, enc_orig.log_var);

    // diffusion reconstruction, conditioned on the detached latent
    let z_aux = reparameterize_graph(g, enc_orig.mu, enc_orig.log_var, inputs.reparam_eps);
    let projected = soft_project_graph(g, enc_orig.keypoints, surface, cfg.soft_tau);
    let latent = assemble_latent_graph(g, projected, z_aux);
    let latent_cond = if inputs.stop_latent {
        g.tape.detach(latent)
    } else {
        latent
    };

    let noisy = PointCloud {
        points: inputs
            .original
            .points
            .iter()
            .zip(inputs.noise)
            .map(|(p, e)| {
                [
                    p[0] + inputs.sigma * e[0],
                    p[1] + inputs.sigma * e[1],
                    p[2] + inputs.sigma * e[2],
                ]
            })
            .collect(),
    };
    let denoised = denoiser_graph(g, &noisy, inputs.sigma, latent_cond, edm_cfg.sigma_data)?;
    let recon = chamfer_asym_graph(g, denoised, surface, weights.alpha, weights.beta);
    let repel = repulsion_graph(g, denoised, weights.k_nn, weights.margin);
    let w_sigma = edm::loss_weight(inputs.sigma, edm_cfg.sigma_data);
    let gamma = crate::losses::gamma_weight(inputs.sigma, edm_cfg.sigma_data);
    let recon_w = g.tape.scale(recon, w_sigma);
    let repel_w = g.tape.scale(repel, weights.rho * gamma);
    let diff = g.tape.add(recon_w, repel_w);

    // weighted total
    let terms = [fps, diff, chamfer, mse, kl];
    let mut total = g.tape.scale(terms[0], lambdas[0]);
    for (term, lambda) in terms.iter().zip(&lambdas).skip(1) {
        let scaled = g.tape.scale(*term, *lambda);
        total = g.tape.add(total, scaled);
    }

    Ok(SampleLossNodes {
        fps,
        diff,
        chamfer,
        mse,
        kl,
        total,
        encoded: enc_orig,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rng;
    use crate::losses;
    use crate::model::params::{ModelConfig, ParamStore};

    fn random_cloud(rng: &mut Rng, n: usize) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| {
                    [
                        rng.uniform(-1.0, 1.0),
                        rng.uniform(-1.0, 1.0),
                        rng.uniform(-1.0, 1.0),
                    ]
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn tape_chamfer_matches_plain() {
        let store = ParamStore::init(&ModelConfig::tiny(), 0);
        let mut rng = Rng::seed_from_u64(1);
        for _ in 0..20 {
            let (na, nb) = (1 + rng.index(12), 1 + rng.index(12));
            let a = random_cloud(&mut rng, na);
            let b = random_cloud(&mut rng, nb);
            let mut g = ModelGraph::new(&store);
            let an = g.constant(Tensor::from_points(&a.points));
            let bn = g.constant(Tensor::from_points(&b.points));
            let loss = chamfer_oneway_graph(&mut g, an, bn);
            let want = losses::chamfer_oneway(&a, &b).unwrap();
            assert!((g.tape.value(loss).scalar_value() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn tape_repulsion_matches_plain() {
        let store = ParamStore::init(&ModelConfig::tiny(), 0);
        let mut rng = Rng::seed_from_u64(2);
        for _ in 0..10 {
            let a = random_cloud(&mut rng, 12);
            let mut g = ModelGraph::new(&store);
            let an = g.constant(Tensor::from_points(&a.points));
            let loss = repulsion_graph(&mut g, an, 3, 0.5);
            let want = losses::repulsion(&a, 3, 0.5).unwrap();
            assert!((g.tape.value(loss).scalar_value() - want).abs() < 1e-9);
        }
    }

    #[test]
    fn tape_kl_matches_plain() {
        let store = ParamStore::init(&ModelConfig::tiny(), 0);
        let mut g = ModelGraph::new(&store);
        let mu = vec![0.3, -1.2, 0.8];
        let lv = vec![0.1, -0.6, 1.3];
        let mu_n = g.constant(Tensor::row(mu.clone()));
        let lv_n = g.constant(Tensor::row(lv.clone()));
        let kl = kl_graph(&mut g, mu_n, lv_n);
        let want = losses::kl_divergence(&mu, &lv);
        assert!((g.tape.value(kl).scalar_value() - want).abs() < 1e-12);
    }

    #[test]
    fn tape_consistency_matches_plain() {
        let store = ParamStore::init(&ModelConfig::tiny(), 0);
        let a = KeypointSet::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
        let b = KeypointSet::new(vec![[1.0, 0.0, 0.0], [1.0, 2.0, 0.0]]).unwrap();
        let mut g = ModelGraph::new(&store);
        let an = g.constant(Tensor::from_points(&a.keypoints));
        let bn = g.constant(Tensor::from_points(&b.keypoints));
        let mse = consistency_graph(&mut g, an, bn);
        let want = losses::deformation_consistency(&a, &b).unwrap();
        assert_eq!(g.tape.value(mse).scalar_value(), want);
    }

    #[test]
    fn stop_gradient_blocks_encoder_through_diff_term() {
        // backward from the diffusion term alone must leave every encoder
        // parameter gradient exactly zero
        let cfg = ModelConfig::tiny();
        let store = ParamStore::init(&cfg, 11);
        let mut rng = Rng::seed_from_u64(0);
        let original = random_cloud(&mut rng, 16);
        let chain = crate::deform::sample_chain(&mut rng, &crate::deform::DeformConfig::default());
        let deformed = chain.apply(&original);
        let anchors = crate::geometry::fps_from(&original, 6, 0).unwrap().keypoints;
        let noise: Vec<Point3> = (0..original.len())
            .map(|_| [rng.normal(), rng.normal(), rng.normal()])
            .collect();
        let eps: Vec<f64> = (0..cfg.latent_aux).map(|_| rng.normal()).collect();
        let weights = LossWeights::default();
        let edm_cfg = EdmConfig::default();

        let mut g = ModelGraph::new(&store);
        let nodes = sample_loss_graph(
            &mut g,
            &SampleInputs {
                original: &original,
                deformed: &deformed,
                chain: &chain,
                anchors: &anchors,
                sigma: 0.4,
                noise: &noise,
                reparam_eps: &eps,
                stop_latent: true,
            },
            &weights,
            [0.0, 1.0, 0.0, 0.0, 0.0],
            &edm_cfg,
        )
        .unwrap();
        let grads = g.tape.backward(nodes.diff);
        let named = g.named_grads(&grads);
        for (name, grad) in &named {
            if name.starts_with("enc.") {
                assert!(
                    grad.data.iter().all(|&v| v == 0.0),
                    "{name} leaked gradient through the stopped latent"
                );
            }
        }
        // denoiser parameters do receive gradient
        let touched = named
            .iter()
            .filter(|(n, g)| n.starts_with("dec.") && g.data.iter().any(|&v| v != 0.0))
            .count();
        assert!(touched > 0, "denoiser got no gradient at all");
    }
}
