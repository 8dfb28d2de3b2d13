//! Keypoint prior for unconditional generation: PCA over flattened
//! training keypoints, a Gaussian KDE in the retained subspace, and the
//! mean auxiliary latent.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::geometry::{KeypointSet, Rng};

use super::train::PipelineError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeypointPrior {
    /// Mean of the flattened keypoint vectors (length 3d).
    pub mean: Vec<f64>,
    /// Retained principal directions, one row per component (q x 3d),
    /// orthonormal.
    pub components: Vec<Vec<f64>>,
    /// Variance along each retained component.
    pub component_variances: Vec<f64>,
    /// Training data projected into the subspace (n x q).
    pub projections: Vec<Vec<f64>>,
    /// Per-component KDE bandwidth (Scott's rule times the configured
    /// scale).
    pub bandwidth: Vec<f64>,
    /// Mean of the posterior means over the training set.
    pub mean_aux: Vec<f64>,
    pub keypoint_count: usize,
    pub total_variance: f64,
}

impl KeypointPrior {
    pub fn subspace_dim(&self) -> usize {
        self.components.len()
    }

    /// Coordinates of a flattened keypoint vector in the retained subspace.
    pub fn project(&self, flat: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|row| {
                row.iter()
                    .zip(flat.iter().zip(&self.mean))
                    .map(|(b, (x, m))| b * (x - m))
                    .sum()
            })
            .collect()
    }

    /// Back from subspace coordinates to a flattened keypoint vector.
    pub fn inverse(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (row, &c) in self.components.iter().zip(coords) {
            for (o, b) in out.iter_mut().zip(row) {
                *o += c * b;
            }
        }
        out
    }
}

/// Fits PCA retaining `retained_variance` of the total variance, then a
/// per-component Gaussian KDE (Scott's rule bandwidth scaled by
/// `bandwidth_scale`). `mean_aux` is stored for latent assembly at
/// generation time.
pub fn fit_prior(
    sets: &[KeypointSet],
    mean_aux: Vec<f64>,
    retained_variance: f64,
    bandwidth_scale: f64,
) -> Result<KeypointPrior, PipelineError> {
    let n = sets.len();
    if n < 2 {
        return Err(PipelineError::TooFewSamples { n });
    }
    let d = sets[0].len();
    let dim = 3 * d;
    let flats: Vec<Vec<f64>> = sets
        .iter()
        .map(|s| {
            assert_eq!(s.len(), d, "keypoint counts must match");
            s.flatten()
        })
        .collect();

    let mut mean = vec![0.0; dim];
    for f in &flats {
        for (m, x) in mean.iter_mut().zip(f) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    // population covariance
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for f in &flats {
        let centered = DVector::from_iterator(dim, f.iter().zip(&mean).map(|(x, m)| x - m));
        cov += &centered * centered.transpose();
    }
    cov /= n as f64;
    let total_variance = cov.trace();

    let eigen = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .partial_cmp(&eigen.eigenvalues[a])
            .unwrap()
    });

    let mut components = Vec::new();
    let mut component_variances = Vec::new();
    if total_variance > 1e-18 {
        let target = retained_variance * total_variance;
        let mut cum = 0.0;
        for &j in &order {
            let lambda = eigen.eigenvalues[j].max(0.0);
            components.push(eigen.eigenvectors.column(j).iter().copied().collect());
            component_variances.push(lambda);
            cum += lambda;
            if cum >= target {
                break;
            }
        }
    }
    let q = components.len();

    let prior_partial = KeypointPrior {
        mean: mean.clone(),
        components,
        component_variances: component_variances.clone(),
        projections: Vec::new(),
        bandwidth: Vec::new(),
        mean_aux,
        keypoint_count: d,
        total_variance,
    };
    let projections: Vec<Vec<f64>> = flats.iter().map(|f| prior_partial.project(f)).collect();

    // Scott's rule per retained dimension
    let scott = (n as f64).powf(-1.0 / (q as f64 + 4.0));
    let bandwidth: Vec<f64> = component_variances
        .iter()
        .map(|v| v.sqrt() * scott * bandwidth_scale)
        .collect();

    Ok(KeypointPrior {
        projections,
        bandwidth,
        ..prior_partial
    })
}

/// One KDE draw mapped back through the inverse projection.
pub fn sample_keypoints(prior: &KeypointPrior, rng: &mut Rng) -> KeypointSet {
    let coords: Vec<f64> = if prior.projections.is_empty() {
        vec![0.0; prior.subspace_dim()]
    } else {
        let pick = rng.index(prior.projections.len());
        prior.projections[pick]
            .iter()
            .zip(&prior.bandwidth)
            .map(|(c, bw)| c + bw * rng.normal())
            .collect()
    };
    let flat = prior.inverse(&coords);
    KeypointSet::from_flat(&flat).expect("prior dimensions are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kp(points: &[[f64; 3]]) -> KeypointSet {
        KeypointSet::new(points.to_vec()).unwrap()
    }

    #[test]
    fn identical_sets_collapse_to_zero_variance() {
        let set = kp(&[[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]]);
        let prior = fit_prior(&[set.clone(), set.clone(), set.clone()], vec![0.0], 0.95, 1.0)
            .unwrap();
        assert_eq!(prior.subspace_dim(), 0);
        let sampled = sample_keypoints(&prior, &mut Rng::seed_from_u64(0));
        for (a, b) in sampled.keypoints.iter().zip(&set.keypoints) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_distinct_sets_span_one_dimension() {
        let a = kp(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let b = kp(&[[0.2, 0.1, 0.0], [1.2, 0.1, 0.0]]);
        let prior = fit_prior(&[a, b], vec![0.0], 0.95, 1.0).unwrap();
        assert_eq!(prior.subspace_dim(), 1);
    }

    #[test]
    fn projection_round_trip_on_subspace() {
        let mut rng = Rng::seed_from_u64(4);
        let sets: Vec<KeypointSet> = (0..12)
            .map(|_| {
                kp(&[
                    [rng.normal(), rng.normal(), rng.normal()],
                    [rng.normal(), rng.normal(), rng.normal()],
                ])
            })
            .collect();
        let prior = fit_prior(&sets, vec![0.0], 0.9, 1.0).unwrap();
        for _ in 0..10 {
            let coords: Vec<f64> = (0..prior.subspace_dim()).map(|_| rng.normal()).collect();
            let back = prior.project(&prior.inverse(&coords));
            for (a, b) in coords.iter().zip(&back) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn reconstruction_error_bounded_by_discarded_variance() {
        let mut rng = Rng::seed_from_u64(7);
        let sets: Vec<KeypointSet> = (0..40)
            .map(|_| {
                kp(&[
                    [rng.normal(), 0.5 * rng.normal(), 0.1 * rng.normal()],
                    [0.2 * rng.normal(), rng.normal(), 0.3 * rng.normal()],
                ])
            })
            .collect();
        let v = 0.8;
        let prior = fit_prior(&sets, vec![0.0], v, 1.0).unwrap();
        let mut mse = 0.0;
        for s in &sets {
            let flat = s.flatten();
            let rec = prior.inverse(&prior.project(&flat));
            mse += flat
                .iter()
                .zip(&rec)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        mse /= sets.len() as f64;
        assert!(
            mse <= (1.0 - v) * prior.total_variance + 1e-9,
            "mse {mse} vs bound {}",
            (1.0 - v) * prior.total_variance
        );
    }

    #[test]
    fn zero_bandwidth_resamples_training_sets() {
        let a = kp(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let b = kp(&[[0.5, 0.5, 0.0], [1.5, 0.5, 0.0]]);
        let prior = fit_prior(&[a.clone(), b.clone()], vec![0.0], 0.999, 0.0).unwrap();
        let sampled = sample_keypoints(&prior, &mut Rng::seed_from_u64(3));
        let matches_one = [&a, &b].iter().any(|s| {
            s.keypoints
                .iter()
                .zip(&sampled.keypoints)
                .all(|(x, y)| (0..3).all(|k| (x[k] - y[k]).abs() < 1e-9))
        });
        assert!(matches_one);
    }

    #[test]
    fn sampled_mean_tracks_training_mean() {
        let mut rng = Rng::seed_from_u64(20);
        let sets: Vec<KeypointSet> = (0..50)
            .map(|_| kp(&[[rng.normal(), rng.normal(), rng.normal()]]))
            .collect();
        let prior = fit_prior(&sets, vec![0.0], 0.95, 1.0).unwrap();
        let n = 1000;
        let mut mean = [0.0f64; 3];
        let mut var = [0.0f64; 3];
        for i in 0..n {
            let mut draw_rng = Rng::derive(42, i as u64, 0);
            let s = sample_keypoints(&prior, &mut draw_rng);
            for k in 0..3 {
                mean[k] += s.keypoints[0][k];
            }
        }
        for k in 0..3 {
            mean[k] /= n as f64;
        }
        // spread of the sampling distribution per coordinate for the s.e.
        for s in &sets {
            for k in 0..3 {
                var[k] += (s.keypoints[0][k] - prior.mean[k]).powi(2);
            }
        }
        for k in 0..3 {
            var[k] /= sets.len() as f64;
            let se = (var[k] / n as f64).sqrt() * 1.5; // KDE widens slightly
            assert!(
                (mean[k] - prior.mean[k]).abs() < 3.0 * se + 1e-3,
                "coord {k}: {} vs {}",
                mean[k],
                prior.mean[k]
            );
        }
    }

    #[test]
    fn single_set_rejected() {
        let a = kp(&[[0.0; 3]]);
        assert!(matches!(
            fit_prior(&[a], vec![], 0.9, 1.0),
            Err(PipelineError::TooFewSamples { .. })
        ));
    }
}
