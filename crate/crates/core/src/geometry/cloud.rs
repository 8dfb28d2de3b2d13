use serde::{Deserialize, Serialize};

use super::vec3::{self, Point3};
use super::GeometryError;

/// An unordered set of N points in normalized model units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::EmptyCloud);
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point3 {
        let mut c = [0.0; 3];
        for p in &self.points {
            c = vec3::add(c, *p);
        }
        vec3::scale(c, 1.0 / self.points.len() as f64)
    }

    /// Mean x-coordinate, used by the twist deformation.
    pub fn mean_x(&self) -> f64 {
        self.points.iter().map(|p| p[0]).sum::<f64>() / self.points.len() as f64
    }

    /// Axis-aligned bounding box as (min, max) corners.
    pub fn bbox(&self) -> (Point3, Point3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo, hi)
    }

    pub fn all_finite(&self) -> bool {
        self.points.iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    /// Centers the cloud on its centroid and scales the farthest point to
    /// unit norm. Returns the normalized cloud together with the original
    /// `(center, scale)` so the transform can be inverted.
    pub fn normalize(&self) -> Result<(PointCloud, Point3, f64), GeometryError> {
        let center = self.centroid();
        let mut scale: f64 = 0.0;
        for p in &self.points {
            scale = scale.max(vec3::norm(vec3::sub(*p, center)));
        }
        if scale <= 0.0 {
            return Err(GeometryError::DegenerateCloud);
        }
        let inv = 1.0 / scale;
        let points = self
            .points
            .iter()
            .map(|p| vec3::scale(vec3::sub(*p, center), inv))
            .collect();
        Ok((PointCloud { points }, center, scale))
    }

    /// Inverse of [`normalize`](Self::normalize): `p * scale + center`.
    pub fn denormalize(&self, center: Point3, scale: f64) -> PointCloud {
        PointCloud {
            points: self
                .points
                .iter()
                .map(|p| vec3::add(vec3::scale(*p, scale), center))
                .collect(),
        }
    }
}

/// An ordered set of d keypoints; index k is the keypoint's identity
/// across shape instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointSet {
    pub keypoints: Vec<Point3>,
}

impl KeypointSet {
    pub fn new(keypoints: Vec<Point3>) -> Result<Self, GeometryError> {
        if keypoints.is_empty() {
            return Err(GeometryError::EmptyCloud);
        }
        Ok(Self { keypoints })
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    pub fn as_cloud(&self) -> PointCloud {
        PointCloud {
            points: self.keypoints.clone(),
        }
    }

    /// Row-major flattening to length 3d, the `vec(K)` half of a latent code.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 * self.keypoints.len());
        for p in &self.keypoints {
            v.extend_from_slice(p);
        }
        v
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn from_flat(flat: &[f64]) -> Result<Self, GeometryError> {
        if flat.is_empty() || flat.len() % 3 != 0 {
            return Err(GeometryError::EmptyCloud);
        }
        Ok(Self {
            keypoints: flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        })
    }
}

/// A point cloud with one part label per point, labels in `[0, label_count)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPointCloud {
    pub points: Vec<Point3>,
    pub labels: Vec<usize>,
    pub label_count: usize,
}

impl LabeledPointCloud {
    pub fn new(
        points: Vec<Point3>,
        labels: Vec<usize>,
        label_count: usize,
    ) -> Result<Self, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::EmptyCloud);
        }
        assert_eq!(points.len(), labels.len(), "label array length must equal N");
        if let Some(&bad) = labels.iter().find(|&&l| l >= label_count) {
            return Err(GeometryError::LabelOutOfRange {
                label: bad,
                count: label_count,
            });
        }
        Ok(Self {
            points,
            labels,
            label_count,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn cloud(&self) -> PointCloud {
        PointCloud {
            points: self.points.clone(),
        }
    }
}
