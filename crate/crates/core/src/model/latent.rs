//! Latent assembly and the reparameterized auxiliary draw.

use crate::geometry::{KeypointSet, Rng};

use super::graph::ModelGraph;
use super::tape::NodeId;
use super::tensor::Tensor;
use super::ModelError;

/// `z = mu + exp(log_var / 2) * eps` on the graph; `eps` is a fixed draw so
/// gradients flow to `mu` and `log_var` only.
pub fn reparameterize_graph(
    g: &mut ModelGraph,
    mu: NodeId,
    log_var: NodeId,
    eps: &[f64],
) -> NodeId {
    assert_eq!(g.tape.value(mu).len(), eps.len());
    let half = g.tape.scale(log_var, 0.5);
    let std = g.tape.exp(half);
    let eps_leaf = g.constant(Tensor::row(eps.to_vec()));
    let scaled = g.tape.mul(std, eps_leaf);
    g.tape.add(mu, scaled)
}

/// Plain reparameterized sample.
pub fn reparameterize(mu: &[f64], log_var: &[f64], rng: &mut Rng) -> Vec<f64> {
    assert_eq!(mu.len(), log_var.len());
    mu.iter()
        .zip(log_var)
        .map(|(m, lv)| m + (0.5 * lv).exp() * rng.normal())
        .collect()
}

/// Row-major flatten of the keypoints concatenated with the auxiliary
/// latent: `vec(K) (+) z_aux`, length 3d + m. Graph version.
pub fn assemble_latent_graph(g: &mut ModelGraph, keypoints: NodeId, z_aux: NodeId) -> NodeId {
    let (d, three) = g.tape.value(keypoints).shape();
    assert_eq!(three, 3, "keypoints must be d x 3");
    let flat = g.tape.reshape(keypoints, 1, 3 * d);
    g.tape.concat_cols(flat, z_aux)
}

/// Plain latent assembly.
pub fn assemble_latent(keypoints: &KeypointSet, z_aux: &[f64]) -> Vec<f64> {
    let mut z = keypoints.flatten();
    z.extend_from_slice(z_aux);
    z
}

/// Splits a latent back into keypoints and the auxiliary part.
pub fn split_latent(z: &[f64], d: usize) -> Result<(KeypointSet, Vec<f64>), ModelError> {
    if z.len() < 3 * d {
        return Err(ModelError::ShapeMismatch {
            what: format!("latent of length {} cannot hold {d} keypoints", z.len()),
        });
    }
    let keypoints = KeypointSet::from_flat(&z[..3 * d]).map_err(|_| ModelError::ShapeMismatch {
        what: "empty keypoint block".into(),
    })?;
    Ok((keypoints, z[3 * d..].to_vec()))
}
