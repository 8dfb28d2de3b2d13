//! End-to-end pipeline: synthetic data, the training loop, keypoint prior
//! fitting, unconditional generation, and keypoint interpolation.

mod adam;
pub mod check;
pub mod generate;
pub mod prior;
pub mod synth;
pub mod train;

pub use adam::Adam;
pub use generate::{generate, interpolate};
pub use prior::{fit_prior, sample_keypoints, KeypointPrior};
pub use synth::{
    make_shape, make_synthetic_dataset, surface_residual, ShapeParams, SyntheticShape,
    LABEL_BODY, LABEL_COUNT, LABEL_TAIL, LABEL_WING,
};
pub use train::{loss_csv, train, fmt_sig12, PipelineError, TrainOutput};
