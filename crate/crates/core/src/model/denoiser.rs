//! Point-wise FiLM-conditioned denoiser behind the EDM preconditioning
//! wrapper: `D(S, sigma, z) = c_skip * S + c_out * F(c_in * S, c_noise, z)`.
//!
//! F embeds the noise level sinusoidally and the latent through small
//! networks, concatenates them into a conditioning vector, applies one
//! cross-attention block from point embeddings to the two conditioning
//! tokens, runs a FiLM-modulated per-point stack, re-broadcasts a pooled
//! global summary, and maps back to per-point 3-D corrections.

use crate::edm::precondition;
use crate::geometry::PointCloud;

use super::graph::{sinusoidal_embedding, ModelGraph};
use super::params::ParamStore;
use super::tape::NodeId;
use super::tensor::Tensor;
use super::ModelError;

/// One FiLM layer: `relu(lin(h) * (1 + scale(g)) + shift(g))` with the
/// conditioning projections broadcast over rows.
fn film_layer(g: &mut ModelGraph, h: NodeId, cond: NodeId, prefix: &str) -> NodeId {
    let lin = g.linear(h, &format!("{prefix}.w"), &format!("{prefix}.b"));
    let rows = g.tape.value(lin).rows;
    let scale = g.linear(cond, &format!("{prefix}.scale.w"), &format!("{prefix}.scale.b"));
    let scale1 = g.tape.add_scalar(scale, 1.0);
    let shift = g.linear(cond, &format!("{prefix}.shift.w"), &format!("{prefix}.shift.b"));
    let scale_b = g.tape.broadcast_row(scale1, rows);
    let shift_b = g.tape.broadcast_row(shift, rows);
    let modulated = g.tape.mul(lin, scale_b);
    let shifted = g.tape.add(modulated, shift_b);
    g.tape.relu(shifted)
}

/// Builds the denoiser on the graph. `latent` is the 1 x (3d+m)
/// conditioning node (detach it beforehand to stop encoder gradients).
pub fn denoiser_graph(
    g: &mut ModelGraph,
    noisy: &PointCloud,
    sigma: f64,
    latent: NodeId,
    sigma_data: f64,
) -> Result<NodeId, ModelError> {
    let cfg = g.store().config.clone();
    let latent_len = g.tape.value(latent).len();
    if latent_len != cfg.latent_len() {
        return Err(ModelError::ShapeMismatch {
            what: format!(
                "latent length {latent_len}, expected {}",
                cfg.latent_len()
            ),
        });
    }
    let coeffs = precondition(sigma, sigma_data).map_err(|e| ModelError::ShapeMismatch {
        what: e.to_string(),
    })?;
    let n = noisy.len();

    let s_leaf = g.constant(Tensor::from_points(&noisy.points));
    let x_in = g.tape.scale(s_leaf, coeffs.c_in);

    // conditioning vectors from the noise level and the latent
    let noise_embed = g.constant(Tensor::row(sinusoidal_embedding(
        coeffs.c_noise,
        cfg.noise_embed_dim,
    )));
    let nh = g.linear_relu(noise_embed, "dec.noise.w1", "dec.noise.b1");
    let noise_vec = g.linear(nh, "dec.noise.w2", "dec.noise.b2");
    let lh = g.linear_relu(latent, "dec.latent.w1", "dec.latent.b1");
    let latent_vec = g.linear(lh, "dec.latent.w2", "dec.latent.b2");
    let cond = g.tape.concat_cols(noise_vec, latent_vec); // 1 x 2D

    // cross-attention from point embeddings to the two conditioning tokens
    let points_embed = g.linear(x_in, "dec.inproj.w", "dec.inproj.b"); // N x D
    let ctx = g.tape.concat_rows(noise_vec, latent_vec); // 2 x D
    let keys = {
        let w = g.param("dec.ctx.key.w");
        g.tape.matmul(ctx, w)
    };
    let values = {
        let w = g.param("dec.ctx.value.w");
        g.tape.matmul(ctx, w)
    };
    let keys_t = g.tape.transpose(keys);
    let raw = g.tape.matmul(points_embed, keys_t); // N x 2
    let scaled = g.tape.scale(raw, 1.0 / (cfg.embed_dim as f64).sqrt());
    let attn = g.tape.softmax_rows(scaled);
    let correction = g.tape.matmul(attn, values); // N x D
    let mut h = g.tape.add(points_embed, correction);

    for i in 0..cfg.film_pre {
        h = film_layer(g, h, cond, &format!("dec.pre{i}"));
    }

    // pooled global summary, re-broadcast and fused with local features
    let summary = g.tape.mean_rows(h); // 1 x D
    let summary_b = g.tape.broadcast_row(summary, n);
    h = g.tape.concat_cols(h, summary_b); // N x 2D

    for i in 0..cfg.film_post {
        h = film_layer(g, h, cond, &format!("dec.post{i}"));
    }
    let residual = g.linear(h, "dec.out.w", "dec.out.b"); // N x 3

    let skip = g.tape.scale(s_leaf, coeffs.c_skip);
    let out = g.tape.scale(residual, coeffs.c_out);
    Ok(g.tape.add(skip, out))
}

/// Plain forward pass of the preconditioned denoiser.
pub fn denoiser_forward(
    noisy: &PointCloud,
    sigma: f64,
    latent: &[f64],
    store: &ParamStore,
    sigma_data: f64,
) -> Result<PointCloud, ModelError> {
    let mut g = ModelGraph::new(store);
    let z = g.constant(Tensor::row(latent.to_vec()));
    let out = denoiser_graph(&mut g, noisy, sigma, z, sigma_data)?;
    Ok(PointCloud {
        points: g.tape.value(out).to_points(),
    })
}

/// [`crate::edm::Denoiser`] implementation backed by the trained weights.
pub struct NeuralDenoiser<'a> {
    pub store: &'a ParamStore,
    pub sigma_data: f64,
}

impl crate::edm::Denoiser for NeuralDenoiser<'_> {
    fn denoise(&self, noisy: &PointCloud, sigma: f64, latent: &[f64]) -> PointCloud {
        denoiser_forward(noisy, sigma, latent, self.store, self.sigma_data)
            .expect("denoiser forward failed")
    }
}
