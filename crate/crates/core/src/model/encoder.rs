//! Cross-attention keypoint encoder with the auxiliary Gaussian head.
//!
//! Per-point features (raw coordinates plus Fourier positional features)
//! pass through a two-layer network into point embeddings; learnable
//! queries attend over all points with a row softmax, and keypoints are
//! the attention-weighted convex combinations of the input coordinates.
//! Pooled attention outputs feed a small head producing the mean and
//! log-variance of the auxiliary latent.

use crate::geometry::{KeypointSet, PointCloud};

use super::graph::{point_features, ModelGraph};
use super::tape::NodeId;
use super::tensor::Tensor;
use super::{ModelError, PoolKind};

/// Per-keypoint attention distributions over input points; every row is a
/// simplex vector.
#[derive(Debug, Clone)]
pub struct AttentionWeights {
    rows: Vec<Vec<f64>>,
}

impl AttentionWeights {
    /// Validates the simplex invariant (entries nonnegative, rows summing
    /// to one within 1e-9).
    pub fn from_tensor(t: &Tensor) -> Result<Self, ModelError> {
        let mut rows = Vec::with_capacity(t.rows);
        for r in 0..t.rows {
            let row: Vec<f64> = (0..t.cols).map(|c| t.get(r, c)).collect();
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&w| !(w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(ModelError::ShapeMismatch {
                    what: format!("attention row {r} is not a simplex (sum {sum})"),
                });
            }
            rows.push(row);
        }
        Ok(Self { rows })
    }

    /// Builds an attention matrix directly (test harnesses use this to
    /// force one-hot or uniform rows).
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let n = rows.first().map_or(0, Vec::len);
        let t = Tensor::from_rows(&rows.iter().map(|r| r.clone()).collect::<Vec<_>>());
        let _ = n;
        Self::from_tensor(&t)
    }

    pub fn keypoint_count(&self) -> usize {
        self.rows.len()
    }

    pub fn point_count(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k]
    }

    /// Recombines keypoints as the weighted sum of input coordinates.
    pub fn combine(&self, pc: &PointCloud) -> KeypointSet {
        assert_eq!(self.point_count(), pc.len());
        let keypoints = self
            .rows
            .iter()
            .map(|row| {
                let mut acc = [0.0; 3];
                for (w, p) in row.iter().zip(&pc.points) {
                    acc[0] += w * p[0];
                    acc[1] += w * p[1];
                    acc[2] += w * p[2];
                }
                acc
            })
            .collect();
        KeypointSet { keypoints }
    }
}

/// Tape handles for the encoder outputs.
pub struct EncodeNodes {
    /// d x 3 keypoints.
    pub keypoints: NodeId,
    /// d x N attention weights.
    pub attention: NodeId,
    /// 1 x m posterior mean.
    pub mu: NodeId,
    /// 1 x m clamped log-variance.
    pub log_var: NodeId,
}

/// Builds the encoder forward pass on the graph.
pub fn encode_graph(g: &mut ModelGraph, pc: &PointCloud) -> Result<EncodeNodes, ModelError> {
    let cfg = g.store().config.clone();
    let n = pc.len();
    if n < cfg.keypoints {
        return Err(ModelError::TooFewPoints {
            n,
            need: cfg.keypoints,
        });
    }

    // features are computed on a centered, max-norm-scaled copy so that
    // deformed (unnormalized) clouds stay inside the scale the Fourier
    // features were built for; keypoints remain convex combinations of the
    // ORIGINAL coordinates, so the simplex/hull contract is unchanged
    let (feature_frame, _, _) = pc
        .normalize()
        .map_err(|e| ModelError::ShapeMismatch { what: e.to_string() })?;
    let features = g.constant(point_features(&feature_frame.points, &g.store().fourier));
    let coords = g.constant(Tensor::from_points(&pc.points));

    let hidden = g.linear_relu(features, "enc.feat.w1", "enc.feat.b1");
    let embed = g.linear(hidden, "enc.feat.w2", "enc.feat.b2");

    let queries = g.param("enc.queries");
    let embed_t = g.tape.transpose(embed);
    let raw_scores = g.tape.matmul(queries, embed_t);
    let scores = g.tape.scale(raw_scores, 1.0 / (cfg.embed_dim as f64).sqrt());
    let attention = g.tape.softmax_rows(scores);
    let keypoints = g.tape.matmul(attention, coords);

    let values = g.linear(embed, "enc.value.w", "enc.value.b");
    let attended = g.tape.matmul(attention, values);
    let pooled = match cfg.pool {
        PoolKind::Mean => g.tape.mean_rows(attended),
        PoolKind::Max => g.tape.max_rows(attended),
    };
    let aux_hidden = g.linear_relu(pooled, "enc.aux.w1", "enc.aux.b1");
    let aux_out = g.linear(aux_hidden, "enc.aux.w2", "enc.aux.b2");
    let m = cfg.latent_aux;
    let mu = g.tape.slice_cols(aux_out, 0, m);
    let log_var_raw = g.tape.slice_cols(aux_out, m, 2 * m);
    let log_var = g.tape.clamp(log_var_raw, cfg.logvar_min, cfg.logvar_max);

    Ok(EncodeNodes {
        keypoints,
        attention,
        mu,
        log_var,
    })
}

/// Plain encoder output (keypoints, validated attention, posterior).
pub struct EncodeResult {
    pub keypoints: KeypointSet,
    pub attention: AttentionWeights,
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
}

/// Runs the encoder forward pass without keeping the tape.
pub fn encode(pc: &PointCloud, store: &super::ParamStore) -> Result<EncodeResult, ModelError> {
    let mut g = ModelGraph::new(store);
    let nodes = encode_graph(&mut g, pc)?;
    let attention = AttentionWeights::from_tensor(g.tape.value(nodes.attention))?;
    Ok(EncodeResult {
        keypoints: KeypointSet {
            keypoints: g.tape.value(nodes.keypoints).to_points(),
        },
        attention,
        mu: g.tape.value(nodes.mu).data.clone(),
        log_var: g.tape.value(nodes.log_var).data.clone(),
    })
}
