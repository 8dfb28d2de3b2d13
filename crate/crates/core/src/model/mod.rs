//! The toy-scale differentiable model: a reverse-mode tensor tape, Fourier
//! point features, the cross-attention keypoint encoder with its auxiliary
//! Gaussian head, soft projection, latent assembly, and the FiLM-modulated
//! point-wise denoiser, plus finite-difference gradient verification.

pub mod checkpoint;
pub mod denoiser;
pub mod encoder;
pub mod gradcheck;
pub mod graph;
pub mod latent;
pub mod loss_graph;
pub mod params;
pub mod softproj;
pub mod tape;
pub mod tensor;

pub use denoiser::{denoiser_forward, NeuralDenoiser};
pub use encoder::{encode, AttentionWeights, EncodeResult};
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{fourier_encode, ModelGraph};
pub use latent::{assemble_latent, reparameterize, split_latent};
pub use params::{ModelConfig, ParamStore, PoolKind};
pub use softproj::soft_project;
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cloud has {n} points but the encoder needs at least {need}")]
    TooFewPoints { n: usize, need: usize },
    #[error("shape mismatch: {what}")]
    ShapeMismatch { what: String },
    #[error("gradient mismatch (max relative error {max_rel_error:.3e}): {worst:?}")]
    GradMismatch {
        max_rel_error: f64,
        worst: Vec<String>,
    },
}
