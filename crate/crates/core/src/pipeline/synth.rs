//! Procedural synthetic shape category: an ellipsoid body with two wing
//! slabs and a tail fin, parameterized by six shape reals. Every shape
//! comes with per-point part labels and canonical surface annotations, so
//! DAS and correlation can be evaluated without external data.

use serde::{Deserialize, Serialize};

use crate::geometry::vec3::{self, Point3};
use crate::geometry::{LabeledPointCloud, Rng};
use crate::metrics::Annotation;

/// Part labels.
pub const LABEL_BODY: usize = 0;
pub const LABEL_WING: usize = 1;
pub const LABEL_TAIL: usize = 2;
pub const LABEL_COUNT: usize = 3;

/// The six shape parameters, sampled per instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    /// Body semi-axis along x.
    pub body_len: f64,
    /// Body semi-axis along y and z.
    pub body_rad: f64,
    /// Wing half-span along z.
    pub wing_span: f64,
    /// Wing extent along x.
    pub wing_chord: f64,
    /// Tail fin height above the body axis.
    pub tail_height: f64,
    /// Wing center offset along x.
    pub wing_pos: f64,
}

impl ShapeParams {
    pub fn sample(rng: &mut Rng) -> Self {
        Self {
            body_len: rng.uniform(0.45, 0.6),
            body_rad: rng.uniform(0.08, 0.14),
            wing_span: rng.uniform(0.35, 0.55),
            wing_chord: rng.uniform(0.12, 0.2),
            tail_height: rng.uniform(0.14, 0.22),
            wing_pos: rng.uniform(-0.1, 0.1),
        }
    }

    fn wing_half_thickness(&self) -> f64 {
        0.012
    }

    fn tail_half_thickness(&self) -> f64 {
        0.012
    }

    fn tail_center_x(&self) -> f64 {
        -self.body_len + 0.5 * self.tail_chord()
    }

    fn tail_chord(&self) -> f64 {
        0.18 * self.body_len + 0.04
    }
}

/// One generated instance: the labeled cloud and its annotations share the
/// normalized frame; `params`, `center`, and `scale` let tests map points
/// back to the canonical frame.
#[derive(Debug, Clone)]
pub struct SyntheticShape {
    pub cloud: LabeledPointCloud,
    pub annotations: Vec<Annotation>,
    pub params: ShapeParams,
    pub center: Point3,
    pub scale: f64,
}

impl SyntheticShape {
    /// Maps a normalized-frame point back to the canonical frame.
    pub fn to_canonical(&self, p: Point3) -> Point3 {
        vec3::add(vec3::scale(p, self.scale), self.center)
    }
}

/// Residual of a canonical-frame point against the union of part surfaces;
/// ~0 for points constructed on a surface. Boxes use their exact distance,
/// the ellipsoid its algebraic residual.
pub fn surface_residual(params: &ShapeParams, p: Point3) -> f64 {
    let body = ((p[0] / params.body_len).powi(2)
        + (p[1] / params.body_rad).powi(2)
        + (p[2] / params.body_rad).powi(2)
        - 1.0)
        .abs();
    let wing = box_surface_distance(
        p,
        [params.wing_pos, 0.0, 0.0],
        [
            0.5 * params.wing_chord,
            params.wing_half_thickness(),
            params.wing_span,
        ],
    );
    let tail = box_surface_distance(
        p,
        [params.tail_center_x(), 0.5 * params.tail_height, 0.0],
        [
            0.5 * params.tail_chord(),
            0.5 * params.tail_height,
            params.tail_half_thickness(),
        ],
    );
    body.min(wing).min(tail)
}

/// |signed distance| to an axis-aligned box surface.
fn box_surface_distance(p: Point3, center: Point3, half: Point3) -> f64 {
    let q = [
        (p[0] - center[0]).abs() - half[0],
        (p[1] - center[1]).abs() - half[1],
        (p[2] - center[2]).abs() - half[2],
    ];
    let outside = (0..3).map(|a| q[a].max(0.0).powi(2)).sum::<f64>().sqrt();
    let inside = q[0].max(q[1]).max(q[2]).min(0.0);
    (outside + inside).abs()
}

fn sample_ellipsoid(params: &ShapeParams, rng: &mut Rng) -> Point3 {
    let u = rng.unit_vector();
    [
        params.body_len * u[0],
        params.body_rad * u[1],
        params.body_rad * u[2],
    ]
}

fn sample_wing(params: &ShapeParams, rng: &mut Rng) -> Point3 {
    // top and bottom faces carry nearly all of the slab's area
    let y = if rng.uniform(0.0, 1.0) < 0.5 {
        params.wing_half_thickness()
    } else {
        -params.wing_half_thickness()
    };
    let x = params.wing_pos + rng.uniform(-0.5, 0.5) * params.wing_chord;
    let z = rng.uniform(-1.0, 1.0) * params.wing_span;
    [x, y, z]
}

fn sample_tail(params: &ShapeParams, rng: &mut Rng) -> Point3 {
    let z = if rng.uniform(0.0, 1.0) < 0.5 {
        params.tail_half_thickness()
    } else {
        -params.tail_half_thickness()
    };
    let x = params.tail_center_x() + rng.uniform(-0.5, 0.5) * params.tail_chord();
    let y = rng.uniform(0.0, 1.0) * params.tail_height;
    [x, y, z]
}

/// Canonical-frame annotations: nose, rear body tip, both wing tips, tail
/// fin top, belly. Semantic id = index.
fn annotations(params: &ShapeParams) -> Vec<Point3> {
    vec![
        [params.body_len, 0.0, 0.0],
        [-params.body_len, 0.0, 0.0],
        [params.wing_pos, params.wing_half_thickness(), -params.wing_span],
        [params.wing_pos, params.wing_half_thickness(), params.wing_span],
        [
            params.tail_center_x(),
            params.tail_height,
            params.tail_half_thickness(),
        ],
        [0.0, -params.body_rad, 0.0],
    ]
}

/// Generates one shape with `n_points` surface samples in the normalized
/// frame (centroid zero, max norm one).
pub fn make_shape(params: &ShapeParams, n_points: usize, rng: &mut Rng) -> SyntheticShape {
    assert!(n_points >= 16, "too few points for a 3-part shape");
    let n_body = (n_points as f64 * 0.55) as usize;
    let n_wing = (n_points as f64 * 0.33) as usize;
    let n_tail = n_points - n_body - n_wing;

    let mut points = Vec::with_capacity(n_points);
    let mut labels = Vec::with_capacity(n_points);
    for _ in 0..n_body {
        points.push(sample_ellipsoid(params, rng));
        labels.push(LABEL_BODY);
    }
    for _ in 0..n_wing {
        points.push(sample_wing(params, rng));
        labels.push(LABEL_WING);
    }
    for _ in 0..n_tail {
        points.push(sample_tail(params, rng));
        labels.push(LABEL_TAIL);
    }

    let raw = crate::geometry::PointCloud { points };
    let (normalized, center, scale) = raw.normalize().expect("synthetic shape is nondegenerate");
    let inv = 1.0 / scale;
    let annotations = annotations(params)
        .into_iter()
        .enumerate()
        .map(|(label, p)| Annotation {
            position: vec3::scale(vec3::sub(p, center), inv),
            label,
        })
        .collect();

    SyntheticShape {
        cloud: LabeledPointCloud::new(normalized.points, labels, LABEL_COUNT)
            .expect("labels in range"),
        annotations,
        params: *params,
        center,
        scale,
    }
}

/// Deterministic dataset of `count` shapes with `n_points` each.
pub fn make_synthetic_dataset(count: usize, n_points: usize, seed: u64) -> Vec<SyntheticShape> {
    assert!(count >= 1);
    (0..count)
        .map(|i| {
            let mut rng = Rng::derive(seed, i as u64, 0x5AD);
            let params = ShapeParams::sample(&mut rng);
            make_shape(&params, n_points, &mut rng)
        })
        .collect()
}
