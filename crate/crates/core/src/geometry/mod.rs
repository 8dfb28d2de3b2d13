//! Point-cloud containers, normalization, file I/O, seeded randomness,
//! and farthest point sampling.

mod cloud;
mod io;
mod rng;
mod sample;
pub mod vec3;

pub use cloud::{KeypointSet, LabeledPointCloud, PointCloud};
pub use io::{
    parse_pointcloud, parse_xyz, write_ply, write_xyz, CloudFormat, ParsedCloud,
};
pub use rng::Rng;
pub use sample::{fps, fps_from, subsample, FpsResult};

use thiserror::Error;

/// Errors from geometry operations and parsers.
#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("malformed line {row}: {reason}")]
    MalformedLine { row: usize, reason: String },
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("degenerate cloud: all points coincide")]
    DegenerateCloud,
    #[error("k = {k} exceeds point count {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("n = {requested} exceeds point count {n}")]
    NTooLarge { requested: usize, n: usize },
    #[error("label {label} out of range for {count} classes")]
    LabelOutOfRange { label: usize, count: usize },
}
