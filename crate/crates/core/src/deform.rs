//! The differentiable deformation family: stretch, bend, twist, taper,
//! and a small global rotation, composed in that fixed order.
//!
//! Every component is a 3x3 linear map acting on column vectors. The twist
//! angle depends on the mean x-coordinate of the cloud the chain is applied
//! to, so twist matrices are resolved lazily at application time from the
//! intermediate (post stretch+bend) cloud.

use serde::{Deserialize, Serialize};

use crate::geometry::vec3::{self, Point3};
use crate::geometry::{KeypointSet, PointCloud, Rng};

/// Parameter ranges for sampling a deformation chain; each component can be
/// disabled for ablations. Defaults follow the standard family.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeformConfig {
    pub stretch: bool,
    pub bend: bool,
    pub twist: bool,
    pub taper: bool,
    pub rotate: bool,
    pub stretch_max: f64,
    pub bend_max: f64,
    pub twist_max: f64,
    pub taper_max: f64,
    pub rotate_max: f64,
}

impl Default for DeformConfig {
    fn default() -> Self {
        Self {
            stretch: true,
            bend: true,
            twist: true,
            taper: true,
            rotate: true,
            stretch_max: 2.2,
            bend_max: 1.8,
            twist_max: 1.9,
            taper_max: 1.6,
            rotate_max: std::f64::consts::PI / 6.0,
        }
    }
}

/// One deformation component with its sampled parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeformationSpec {
    /// Scaling by `lambda` along unit direction `v`: `I + (lambda-1) v v^T`.
    Stretch { v: Point3, lambda: f64 },
    /// Shear adding `alpha * p[axis_in]` to `p[axis_out]`, `axis_in != axis_out`.
    Bend {
        axis_in: usize,
        axis_out: usize,
        alpha: f64,
    },
    /// Rotation about x by `gamma * mean_x` of the cloud it acts on.
    Twist { gamma: f64 },
    /// Adds `tau * y` to both x and z.
    Taper { tau: f64 },
    /// Global rotation about y by `phi`.
    Rotate { phi: f64 },
}

impl DeformationSpec {
    /// The component's 3x3 matrix. Twist needs the cloud it acts on for its
    /// mean x-coordinate; the other kinds ignore `pc`.
    pub fn matrix(&self, pc: &PointCloud) -> [[f64; 3]; 3] {
        match *self {
            DeformationSpec::Stretch { v, lambda } => {
                let mut m = vec3::IDENTITY;
                for r in 0..3 {
                    for c in 0..3 {
                        m[r][c] += (lambda - 1.0) * v[r] * v[c];
                    }
                }
                m
            }
            DeformationSpec::Bend {
                axis_in,
                axis_out,
                alpha,
            } => {
                let mut m = vec3::IDENTITY;
                m[axis_out][axis_in] += alpha;
                m
            }
            DeformationSpec::Twist { gamma } => {
                let theta = gamma * pc.mean_x();
                let (s, c) = theta.sin_cos();
                [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
            }
            DeformationSpec::Taper { tau } => {
                let mut m = vec3::IDENTITY;
                m[0][1] += tau;
                m[2][1] += tau;
                m
            }
            DeformationSpec::Rotate { phi } => {
                let (s, c) = phi.sin_cos();
                [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            DeformationSpec::Stretch { .. } => "stretch",
            DeformationSpec::Bend { .. } => "bend",
            DeformationSpec::Twist { .. } => "twist",
            DeformationSpec::Taper { .. } => "taper",
            DeformationSpec::Rotate { .. } => "rotate",
        }
    }
}

/// An ordered sequence of deformation components. Application composes
/// matrices right-to-left over the fixed order stretch -> bend -> twist ->
/// taper -> rotate (the sampling order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformationChain {
    pub specs: Vec<DeformationSpec>,
}

impl DeformationChain {
    /// Composed matrix for this chain acting on `pc_context`. The twist
    /// component's angle uses the mean x of the intermediate cloud it acts
    /// on (after the components before it), which makes the composed map a
    /// single linear transform for the given context.
    pub fn resolve(&self, pc_context: &PointCloud) -> [[f64; 3]; 3] {
        let mut composed = vec3::IDENTITY;
        let mut intermediate = pc_context.clone();
        for spec in &self.specs {
            let m = spec.matrix(&intermediate);
            for p in intermediate.points.iter_mut() {
                *p = vec3::mat_apply(&m, *p);
            }
            composed = vec3::mat_mul(&m, &composed);
        }
        composed
    }

    /// Applies the chain to a cloud.
    pub fn apply(&self, pc: &PointCloud) -> PointCloud {
        let m = self.resolve(pc);
        PointCloud {
            points: pc.points.iter().map(|p| vec3::mat_apply(&m, *p)).collect(),
        }
    }

    /// Applies the same linear map the chain applied to `pc_context` to a
    /// keypoint set, preserving keypoint order.
    pub fn apply_to_keypoints(&self, keypoints: &KeypointSet, pc_context: &PointCloud) -> KeypointSet {
        let m = self.resolve(pc_context);
        KeypointSet {
            keypoints: keypoints
                .keypoints
                .iter()
                .map(|p| vec3::mat_apply(&m, *p))
                .collect(),
        }
    }
}

/// Samples one component of each enabled kind with parameters uniform in
/// the configured ranges, in the fixed composition order.
pub fn sample_chain(rng: &mut Rng, cfg: &DeformConfig) -> DeformationChain {
    let mut specs = Vec::with_capacity(5);
    if cfg.stretch {
        let v = rng.unit_vector();
        let lambda = rng.uniform(1.0, cfg.stretch_max);
        specs.push(DeformationSpec::Stretch { v, lambda });
    }
    if cfg.bend {
        // ordered pair uniform over the 6 choices with axis_in != axis_out
        let pair = rng.index(6);
        let (axis_in, axis_out) = [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)][pair];
        let alpha = rng.uniform(-cfg.bend_max, cfg.bend_max);
        specs.push(DeformationSpec::Bend {
            axis_in,
            axis_out,
            alpha,
        });
    }
    if cfg.twist {
        specs.push(DeformationSpec::Twist {
            gamma: rng.uniform(0.0, cfg.twist_max),
        });
    }
    if cfg.taper {
        specs.push(DeformationSpec::Taper {
            tau: rng.uniform(0.0, cfg.taper_max),
        });
    }
    if cfg.rotate {
        specs.push(DeformationSpec::Rotate {
            phi: rng.uniform(-cfg.rotate_max, cfg.rotate_max),
        });
    }
    DeformationChain { specs }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_chain() -> DeformationChain {
        DeformationChain {
            specs: vec![
                DeformationSpec::Stretch {
                    v: [1.0, 0.0, 0.0],
                    lambda: 1.0,
                },
                DeformationSpec::Bend {
                    axis_in: 0,
                    axis_out: 1,
                    alpha: 0.0,
                },
                DeformationSpec::Twist { gamma: 0.0 },
                DeformationSpec::Taper { tau: 0.0 },
                DeformationSpec::Rotate { phi: 0.0 },
            ],
        }
    }

    fn test_cloud() -> PointCloud {
        PointCloud::new(vec![
            [0.3, -0.2, 0.5],
            [-0.7, 0.4, 0.1],
            [0.2, 0.9, -0.3],
            [-0.1, -0.5, -0.6],
        ])
        .unwrap()
    }

    #[test]
    fn params_at_minima_compose_to_identity() {
        let pc = test_cloud();
        let m = identity_chain().resolve(&pc);
        for r in 0..3 {
            for c in 0..3 {
                let want = if r == c { 1.0 } else { 0.0 };
                assert!((m[r][c] - want).abs() < 1e-15);
            }
        }
        assert_eq!(identity_chain().apply(&pc), pc);
    }

    #[test]
    fn sampled_params_stay_in_ranges() {
        let cfg = DeformConfig::default();
        for seed in 0..50 {
            let mut rng = Rng::seed_from_u64(seed);
            let chain = sample_chain(&mut rng, &cfg);
            assert_eq!(chain.specs.len(), 5);
            for spec in &chain.specs {
                match *spec {
                    DeformationSpec::Stretch { v, lambda } => {
                        assert!((vec3::norm(v) - 1.0).abs() < 1e-12);
                        assert!((1.0..=2.2).contains(&lambda));
                    }
                    DeformationSpec::Bend {
                        axis_in, axis_out, alpha,
                    } => {
                        assert_ne!(axis_in, axis_out);
                        assert!(alpha.abs() <= 1.8);
                    }
                    DeformationSpec::Twist { gamma } => assert!((0.0..=1.9).contains(&gamma)),
                    DeformationSpec::Taper { tau } => assert!((0.0..=1.6).contains(&tau)),
                    DeformationSpec::Rotate { phi } => {
                        assert!(phi.abs() <= std::f64::consts::PI / 6.0)
                    }
                }
            }
        }
    }

    #[test]
    fn same_seed_same_chain() {
        let cfg = DeformConfig::default();
        let a = sample_chain(&mut Rng::seed_from_u64(3), &cfg);
        let b = sample_chain(&mut Rng::seed_from_u64(3), &cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn stretch_along_x_is_diagonal() {
        let spec = DeformationSpec::Stretch {
            v: [1.0, 0.0, 0.0],
            lambda: 2.0,
        };
        let m = spec.matrix(&test_cloud());
        assert_eq!(m, [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    }

    #[test]
    fn twist_of_zero_mean_cloud_is_identity() {
        let pc = PointCloud::new(vec![[1.0, 0.2, 0.1], [-1.0, -0.4, 0.3]]).unwrap();
        assert_eq!(pc.mean_x(), 0.0);
        let m = DeformationSpec::Twist { gamma: 1.5 }.matrix(&pc);
        assert_eq!(m, vec3::IDENTITY);
    }

    #[test]
    fn taper_moves_point_as_documented() {
        let m = DeformationSpec::Taper { tau: 0.5 }.matrix(&test_cloud());
        let p = vec3::mat_apply(&m, [1.0, 2.0, 3.0]);
        assert_eq!(p, [2.0, 2.0, 4.0]);
    }

    #[test]
    fn pure_rotation_preserves_pairwise_distances() {
        let pc = test_cloud();
        let chain = DeformationChain {
            specs: vec![DeformationSpec::Rotate {
                phi: std::f64::consts::PI / 6.0,
            }],
        };
        let out = chain.apply(&pc);
        for i in 0..pc.len() {
            for j in 0..pc.len() {
                let before = vec3::dist(pc.points[i], pc.points[j]);
                let after = vec3::dist(out.points[i], out.points[j]);
                assert!((before - after).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn stretch_doubles_x_extent_only() {
        let pc = test_cloud();
        let chain = DeformationChain {
            specs: vec![DeformationSpec::Stretch {
                v: [1.0, 0.0, 0.0],
                lambda: 2.0,
            }],
        };
        let out = chain.apply(&pc);
        let (lo_a, hi_a) = pc.bbox();
        let (lo_b, hi_b) = out.bbox();
        assert!(((hi_b[0] - lo_b[0]) - 2.0 * (hi_a[0] - lo_a[0])).abs() < 1e-12);
        assert!(((hi_b[1] - lo_b[1]) - (hi_a[1] - lo_a[1])).abs() < 1e-12);
        assert!(((hi_b[2] - lo_b[2]) - (hi_a[2] - lo_a[2])).abs() < 1e-12);
    }

    #[test]
    fn rotation_determinant_one_stretch_determinant_lambda() {
        let pc = test_cloud();
        let rot = DeformationSpec::Rotate { phi: 0.31 }.matrix(&pc);
        assert!((vec3::determinant(&rot) - 1.0).abs() < 1e-9);
        let v = Rng::seed_from_u64(8).unit_vector();
        let st = DeformationSpec::Stretch { v, lambda: 1.7 }.matrix(&pc);
        assert!((vec3::determinant(&st) - 1.7).abs() < 1e-9);
    }

    #[test]
    fn keypoints_follow_identical_map() {
        let pc = test_cloud();
        let mut rng = Rng::seed_from_u64(21);
        let chain = sample_chain(&mut rng, &DeformConfig::default());
        let deformed = chain.apply(&pc);
        // a keypoint coincident with an input point stays coincident
        let kp = KeypointSet::new(vec![pc.points[2], pc.centroid()]).unwrap();
        let mapped = chain.apply_to_keypoints(&kp, &pc);
        assert_eq!(mapped.keypoints[0], deformed.points[2]);
        // a linear map commutes with the centroid
        let c = deformed.centroid();
        for a in 0..3 {
            assert!((mapped.keypoints[1][a] - c[a]).abs() < 1e-12);
        }
    }

    #[test]
    fn application_is_pointwise_linear() {
        let pc = test_cloud();
        let mut rng = Rng::seed_from_u64(9);
        let chain = sample_chain(&mut rng, &DeformConfig::default());
        let whole = chain.apply(&pc);
        let m = chain.resolve(&pc);
        for (i, p) in pc.points.iter().enumerate() {
            assert_eq!(whole.points[i], vec3::mat_apply(&m, *p));
        }
    }

    #[test]
    fn chain_json_round_trip() {
        let mut rng = Rng::seed_from_u64(4);
        let chain = sample_chain(&mut rng, &DeformConfig::default());
        let json = serde_json::to_string(&chain).unwrap();
        let back: DeformationChain = serde_json::from_str(&json).unwrap();
        assert_eq!(chain, back);
    }
}
