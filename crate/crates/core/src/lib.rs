//! Unsupervised 3D keypoint discovery on point clouds, desk scale.
//!
//! The crate bundles everything needed to run the full pipeline end to end
//! on synthetic shape categories:
//!
//! - [`geometry`]: point-cloud containers, normalization, xyz/ply I/O,
//!   farthest point sampling, seeded randomness.
//! - [`deform`]: the differentiable deformation family (stretch, bend,
//!   twist, taper, rotate) with sampling and matrix composition.
//! - [`losses`]: training loss terms (one-way/asymmetric Chamfer,
//!   repulsion, keypoint Chamfer, FPS anchors, deformation MSE, KL) and
//!   the weighted total with schedules.
//! - [`metrics`]: evaluation metrics (symmetric CD, exact EMD, keypoint
//!   correlation, DAS, MMD-CD).
//! - [`edm`]: forward noising, preconditioning, loss weighting, curriculum
//!   noise schedule, sigma ladders, and the deterministic reverse sampler.
//! - [`model`]: a reverse-mode tape, Fourier features, the cross-attention
//!   keypoint encoder, soft projection, and the FiLM-conditioned denoiser.
//! - [`pipeline`]: synthetic dataset generation, the training loop,
//!   keypoint-prior fitting (PCA + KDE), generation, and interpolation.
//!
//! Hot inner loops (nearest-neighbor sweeps, per-sample batch work) run on
//! rayon when the default `parallel` feature is enabled and fall back to
//! sequential iteration otherwise. Reductions keep a fixed summation order
//! in both modes, so results are bit-identical across feature choices and
//! thread counts.

pub mod config;
pub mod deform;
pub mod edm;
pub mod geometry;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod parallel;
pub mod pipeline;

pub use config::Config;
pub use geometry::{KeypointSet, LabeledPointCloud, PointCloud, Rng};
