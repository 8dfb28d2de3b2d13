//! Evaluation metrics: symmetric Chamfer, exact EMD, keypoint correlation,
//! DAS (strict and relaxed), and MMD-CD.

mod assignment;
mod correlation;
mod das;

pub use assignment::solve_assignment;
pub use correlation::{keypoint_correlation, CorrelationInputs};
pub use das::{das, das_mean_over_pairs, Annotation, DasShape};

use thiserror::Error;

use crate::geometry::vec3;
use crate::geometry::PointCloud;
use crate::losses::chamfer_oneway;
use crate::parallel;

/// Largest cloud size the exact EMD solver accepts; callers downsample
/// beyond this rather than silently losing accuracy.
pub const EMD_EXACT_CAP: usize = 1024;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("clouds differ in size: {a} vs {b}")]
    SizeMismatch { a: usize, b: usize },
    #[error("cloud size {n} exceeds the exact EMD cap {cap}; downsample first")]
    TooLargeForExact { n: usize, cap: usize },
    #[error("no labels present")]
    NoLabels,
    #[error("no annotations present")]
    NoAnnotations,
    #[error("empty shape set")]
    EmptySet,
}

/// Symmetric Chamfer distance: mean of the two one-way terms.
pub fn chamfer_symmetric(a: &PointCloud, b: &PointCloud) -> Result<f64, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::EmptyCloud);
    }
    let ab = chamfer_oneway(a, b).expect("nonempty");
    let ba = chamfer_oneway(b, a).expect("nonempty");
    Ok(0.5 * (ab + ba))
}

/// Earth mover's distance between equal-size clouds: the mean Euclidean
/// transport cost under the exact optimal bijection.
pub fn emd(a: &PointCloud, b: &PointCloud) -> Result<f64, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::EmptyCloud);
    }
    if a.len() != b.len() {
        return Err(MetricError::SizeMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    let n = a.len();
    if n > EMD_EXACT_CAP {
        return Err(MetricError::TooLargeForExact {
            n,
            cap: EMD_EXACT_CAP,
        });
    }
    let cost = parallel::map_range(n, |i| {
        b.points
            .iter()
            .map(|q| vec3::dist(a.points[i], *q))
            .collect::<Vec<f64>>()
    });
    let (assignment, total) = solve_assignment(&cost);
    debug_assert_eq!(assignment.len(), n);
    Ok(total / n as f64)
}

/// Minimum matching distance: mean over reference shapes of the smallest
/// symmetric Chamfer distance to any generated shape.
pub fn mmd_cd(generated: &[PointCloud], reference: &[PointCloud]) -> Result<f64, MetricError> {
    if generated.is_empty() || reference.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let mins = parallel::map_slice(reference, |r| {
        generated
            .iter()
            .map(|g| chamfer_symmetric(r, g).expect("nonempty"))
            .fold(f64::INFINITY, f64::min)
    });
    Ok(mins.iter().sum::<f64>() / reference.len() as f64)
}
