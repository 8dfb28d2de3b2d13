//! Named parameter tensors with seeded initialization, plus the model
//! width configuration.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::Rng;

use super::tensor::Tensor;

/// Pooling used to turn per-query attention outputs into the auxiliary
/// descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Mean,
    Max,
}

/// Architecture widths. Defaults are the desk-scale configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Number of keypoints d.
    pub keypoints: usize,
    /// Auxiliary latent width m.
    pub latent_aux: usize,
    /// Hidden width of the per-point feature network.
    pub feature_dim: usize,
    /// Point embedding / attention width D.
    pub embed_dim: usize,
    /// Number of Fourier frequencies F (features are 2F wide).
    pub fourier_count: usize,
    /// Sinusoidal noise-embedding width (even).
    pub noise_embed_dim: usize,
    /// FiLM layers before the global pooling stage.
    pub film_pre: usize,
    /// FiLM layers after pooled features are re-broadcast.
    pub film_post: usize,
    /// Soft projection temperature.
    pub soft_tau: f64,
    pub pool: PoolKind,
    /// log-variance clamp applied before exponentiation.
    pub logvar_min: f64,
    pub logvar_max: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            keypoints: 10,
            latent_aux: 5,
            feature_dim: 64,
            embed_dim: 64,
            fourier_count: 16,
            noise_embed_dim: 16,
            film_pre: 2,
            film_post: 1,
            soft_tau: 0.02,
            pool: PoolKind::Mean,
            logvar_min: -30.0,
            logvar_max: 10.0,
        }
    }
}

impl ModelConfig {
    /// Conditioning latent length 3d + m.
    pub fn latent_len(&self) -> usize {
        3 * self.keypoints + self.latent_aux
    }

    /// A small configuration for gradient checks and fast tests.
    pub fn tiny() -> Self {
        Self {
            keypoints: 4,
            latent_aux: 3,
            feature_dim: 12,
            embed_dim: 12,
            fourier_count: 4,
            noise_embed_dim: 8,
            film_pre: 1,
            film_post: 1,
            ..Default::default()
        }
    }
}

/// Named trainable tensors plus the fixed Fourier frequency matrix.
#[derive(Debug, Clone)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
    /// 3 x fourier_count, fixed at init, never trained.
    pub fourier: Tensor,
    pub config: ModelConfig,
}

impl ParamStore {
    /// Seeded initialization: weights are fan-in-scaled normals, biases
    /// zero, queries unit normals, Fourier frequencies unit normals.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = Rng::seed_from_u64(seed);
        let c = config;
        let mut tensors = BTreeMap::new();

        let feat_in = 3 + 2 * c.fourier_count;
        let cond = 2 * c.embed_dim;
        let mut shapes: Vec<(String, usize, usize)> = [
            // encoder
            ("enc.feat.w1", feat_in, c.feature_dim),
            ("enc.feat.b1", 1, c.feature_dim),
            ("enc.feat.w2", c.feature_dim, c.embed_dim),
            ("enc.feat.b2", 1, c.embed_dim),
            ("enc.queries", c.keypoints, c.embed_dim),
            ("enc.value.w", c.embed_dim, c.embed_dim),
            ("enc.value.b", 1, c.embed_dim),
            ("enc.aux.w1", c.embed_dim, c.embed_dim),
            ("enc.aux.b1", 1, c.embed_dim),
            ("enc.aux.w2", c.embed_dim, 2 * c.latent_aux),
            ("enc.aux.b2", 1, 2 * c.latent_aux),
            // denoiser conditioning
            ("dec.noise.w1", c.noise_embed_dim, c.embed_dim),
            ("dec.noise.b1", 1, c.embed_dim),
            ("dec.noise.w2", c.embed_dim, c.embed_dim),
            ("dec.noise.b2", 1, c.embed_dim),
            ("dec.latent.w1", c.latent_len(), c.embed_dim),
            ("dec.latent.b1", 1, c.embed_dim),
            ("dec.latent.w2", c.embed_dim, c.embed_dim),
            ("dec.latent.b2", 1, c.embed_dim),
            // denoiser point path
            ("dec.inproj.w", 3, c.embed_dim),
            ("dec.inproj.b", 1, c.embed_dim),
            ("dec.ctx.key.w", c.embed_dim, c.embed_dim),
            ("dec.ctx.value.w", c.embed_dim, c.embed_dim),
            ("dec.out.w", c.embed_dim, 3),
            ("dec.out.b", 1, 3),
        ]
        .into_iter()
        .map(|(n, r, cc)| (n.to_string(), r, cc))
        .collect();
        for i in 0..c.film_pre {
            shapes.push((format!("dec.pre{i}.w"), c.embed_dim, c.embed_dim));
            shapes.push((format!("dec.pre{i}.b"), 1, c.embed_dim));
            shapes.push((format!("dec.pre{i}.scale.w"), cond, c.embed_dim));
            shapes.push((format!("dec.pre{i}.scale.b"), 1, c.embed_dim));
            shapes.push((format!("dec.pre{i}.shift.w"), cond, c.embed_dim));
            shapes.push((format!("dec.pre{i}.shift.b"), 1, c.embed_dim));
        }
        for i in 0..c.film_post {
            let in_dim = if i == 0 { 2 * c.embed_dim } else { c.embed_dim };
            shapes.push((format!("dec.post{i}.w"), in_dim, c.embed_dim));
            shapes.push((format!("dec.post{i}.b"), 1, c.embed_dim));
            shapes.push((format!("dec.post{i}.scale.w"), cond, c.embed_dim));
            shapes.push((format!("dec.post{i}.scale.b"), 1, c.embed_dim));
            shapes.push((format!("dec.post{i}.shift.w"), cond, c.embed_dim));
            shapes.push((format!("dec.post{i}.shift.b"), 1, c.embed_dim));
        }

        // draw values in name order so initialization does not depend on
        // the declaration order above
        shapes.sort_by(|a, b| a.0.cmp(&b.0));
        for (name, rows, cols) in shapes {
            let is_bias =
                name.ends_with(".b") || name.ends_with(".b1") || name.ends_with(".b2");
            let t = if is_bias {
                Tensor::zeros(rows, cols)
            } else if name == "enc.queries" {
                // wide query init gives sharp, diverse initial attention, so
                // initial keypoints are spread surface-ish points instead of
                // collapsing onto the centroid
                let data = rng.normal_vec(rows * cols).iter().map(|v| v * 3.0).collect();
                Tensor::from_vec(rows, cols, data)
            } else {
                let scale = 1.0 / (rows as f64).sqrt();
                let data = rng.normal_vec(rows * cols).iter().map(|v| v * scale).collect();
                Tensor::from_vec(rows, cols, data)
            };
            tensors.insert(name, t);
        }

        let fourier = Tensor::from_vec(3, c.fourier_count, rng.normal_vec(3 * c.fourier_count));
        Self {
            tensors,
            fourier,
            config: config.clone(),
        }
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.tensors
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn total_len(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::all_finite) && self.fourier.all_finite()
    }

    /// Zeroes every trainable tensor (the Fourier matrix stays).
    pub fn zero_all(&mut self) {
        for t in self.tensors.values_mut() {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// A same-shape map of zero tensors, for gradient accumulators.
    pub fn zeros_like(&self) -> BTreeMap<String, Tensor> {
        self.tensors
            .iter()
            .map(|(k, v)| (k.clone(), Tensor::zeros(v.rows, v.cols)))
            .collect()
    }
}
