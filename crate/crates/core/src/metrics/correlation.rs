//! Keypoint-part correlation: per label, the best keypoint's consistency
//! of association across samples.

use crate::geometry::vec3;
use crate::geometry::{KeypointSet, LabeledPointCloud};

use super::MetricError;

/// Paired per-sample keypoints and labeled clouds; keypoint index k means
/// the same keypoint across all samples.
pub struct CorrelationInputs<'a> {
    pub keypoint_sets: &'a [KeypointSet],
    pub clouds: &'a [LabeledPointCloud],
    /// Euclidean association threshold in normalized units.
    pub threshold: f64,
}

/// For each sample, keypoint i associates with label l when some point
/// carrying l lies within the threshold. Association rates are averaged
/// over samples into M, and the score is the mean over labels of the best
/// keypoint's rate: `(1/L) * sum_l max_i M[i][l]`.
pub fn keypoint_correlation(inputs: &CorrelationInputs) -> Result<f64, MetricError> {
    let samples = inputs.keypoint_sets.len();
    assert_eq!(
        samples,
        inputs.clouds.len(),
        "keypoint sets and clouds must pair up"
    );
    if samples == 0 {
        return Err(MetricError::EmptySet);
    }
    assert!(inputs.threshold > 0.0, "threshold must be positive");
    let label_count = inputs
        .clouds
        .iter()
        .map(|c| c.label_count)
        .max()
        .unwrap_or(0);
    if label_count == 0 {
        return Err(MetricError::NoLabels);
    }
    let d = inputs.keypoint_sets[0].len();
    let t2 = inputs.threshold * inputs.threshold;

    // association rates M[i][l], accumulated in sample order
    let mut rates = vec![vec![0.0f64; label_count]; d];
    for (kps, cloud) in inputs.keypoint_sets.iter().zip(inputs.clouds) {
        assert_eq!(kps.len(), d, "keypoint count must match across samples");
        for (i, kp) in kps.keypoints.iter().enumerate() {
            let mut associated = vec![false; label_count];
            for (p, &l) in cloud.points.iter().zip(&cloud.labels) {
                if !associated[l] && vec3::dist_sq(*kp, *p) <= t2 {
                    associated[l] = true;
                }
            }
            for (l, &hit) in associated.iter().enumerate() {
                if hit {
                    rates[i][l] += 1.0;
                }
            }
        }
    }
    for row in rates.iter_mut() {
        for v in row.iter_mut() {
            *v /= samples as f64;
        }
    }

    let mut score = 0.0;
    for l in 0..label_count {
        let best = (0..d).map(|i| rates[i][l]).fold(0.0f64, f64::max);
        score += best;
    }
    Ok(score / label_count as f64)
}
