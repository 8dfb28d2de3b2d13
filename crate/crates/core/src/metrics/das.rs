//! Dual Alignment Score: bidirectional label-propagation accuracy between
//! predicted and annotated keypoints across two shapes.

use serde::{Deserialize, Serialize};

use crate::geometry::vec3::{self, Point3};
use crate::geometry::KeypointSet;

use super::MetricError;

/// A semantically labeled reference keypoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub position: Point3,
    pub label: usize,
}

/// One shape's predicted keypoints (order-aligned across shapes) and its
/// annotated keypoints.
#[derive(Debug, Clone)]
pub struct DasShape {
    pub predicted: KeypointSet,
    pub annotations: Vec<Annotation>,
}

/// Index of the nearest annotation; ties break toward the lowest id.
fn nearest_annotation(p: Point3, annotations: &[Annotation]) -> (usize, f64) {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (i, a) in annotations.iter().enumerate() {
        let d = vec3::dist(p, a.position);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    (best, best_d)
}

/// Whether any annotation within the relaxed window `[d_min, (1+w) d_min]`
/// of `p` carries `label`. `window = 0` is the strict nearest-only rule.
fn label_matches(p: Point3, annotations: &[Annotation], label: usize, window: f64) -> bool {
    let (nearest, d_min) = nearest_annotation(p, annotations);
    if window <= 0.0 {
        return annotations[nearest].label == label;
    }
    let limit = (1.0 + window) * d_min;
    annotations
        .iter()
        .any(|a| a.label == label && vec3::dist(p, a.position) <= limit)
}

/// Accuracy of propagating prediction-assigned labels: each predicted
/// keypoint takes the label of its nearest annotation on the reference,
/// carries it by index to the evaluation shape, and must land nearest (or
/// within the relaxed window of) an annotation with the same label there.
fn acc_pred_to_anno(reference: &DasShape, evaluation: &DasShape, window: f64) -> f64 {
    let d = reference.predicted.len();
    let mut hits = 0usize;
    for k in 0..d {
        let (idx, _) = nearest_annotation(reference.predicted.keypoints[k], &reference.annotations);
        let label = reference.annotations[idx].label;
        if label_matches(
            evaluation.predicted.keypoints[k],
            &evaluation.annotations,
            label,
            window,
        ) {
            hits += 1;
        }
    }
    hits as f64 / d as f64
}

/// Accuracy of propagating annotation-assigned labels: each reference
/// annotation hands its label to its nearest predicted keypoint, the label
/// rides that keypoint index to the evaluation shape, and is checked
/// against the annotations there.
fn acc_anno_to_pred(reference: &DasShape, evaluation: &DasShape, window: f64) -> f64 {
    let mut hits = 0usize;
    for anno in &reference.annotations {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (k, p) in reference.predicted.keypoints.iter().enumerate() {
            let d = vec3::dist(anno.position, *p);
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        if label_matches(
            evaluation.predicted.keypoints[best],
            &evaluation.annotations,
            anno.label,
            window,
        ) {
            hits += 1;
        }
    }
    hits as f64 / reference.annotations.len() as f64
}

/// DAS between a reference and an evaluation shape: the mean of the
/// prediction-assigned and annotation-assigned propagation accuracies.
/// `window > 0` enables the relaxed distance-window variant.
pub fn das(reference: &DasShape, evaluation: &DasShape, window: f64) -> Result<f64, MetricError> {
    if reference.annotations.is_empty() || evaluation.annotations.is_empty() {
        return Err(MetricError::NoAnnotations);
    }
    assert_eq!(
        reference.predicted.len(),
        evaluation.predicted.len(),
        "predicted keypoint count must match across shapes"
    );
    let fwd = acc_pred_to_anno(reference, evaluation, window);
    let rev = acc_anno_to_pred(reference, evaluation, window);
    Ok(0.5 * (fwd + rev))
}

/// Mean DAS over all ordered shape pairs (i as reference, j as evaluation,
/// i != j).
pub fn das_mean_over_pairs(shapes: &[DasShape], window: f64) -> Result<f64, MetricError> {
    if shapes.len() < 2 {
        return Err(MetricError::EmptySet);
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..shapes.len() {
        for j in 0..shapes.len() {
            if i == j {
                continue;
            }
            sum += das(&shapes[i], &shapes[j], window)?;
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(pred: &[[f64; 3]], annos: &[([f64; 3], usize)]) -> DasShape {
        DasShape {
            predicted: KeypointSet::new(pred.to_vec()).unwrap(),
            annotations: annos
                .iter()
                .map(|&(position, label)| Annotation { position, label })
                .collect(),
        }
    }

    #[test]
    fn predictions_equal_annotations_give_one() {
        let annos = [([0.0, 0.0, 0.0], 0), ([1.0, 0.0, 0.0], 1), ([0.0, 1.0, 0.0], 2)];
        let pred: Vec<[f64; 3]> = annos.iter().map(|a| a.0).collect();
        let a = shape(&pred, &annos);
        let b = shape(&pred, &annos);
        assert_eq!(das(&a, &b, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn fully_mismatched_propagation_gives_zero() {
        // predictions sit on label-0 on the reference but on label-1 on the
        // evaluation shape, and vice versa, for both directions
        let reference = shape(
            &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
            &[([0.0, 0.0, 0.0], 0), ([1.0, 0.0, 0.0], 1)],
        );
        let evaluation = shape(
            &[[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
            &[([0.0, 0.0, 0.0], 0), ([1.0, 0.0, 0.0], 1)],
        );
        assert_eq!(das(&reference, &evaluation, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn half_swapped_case_walked_by_hand() {
        // reference: kp0 at anno A (label 0), kp1 at anno B (label 1).
        // evaluation: kp0 and kp1 both at anno B.
        // pred->anno: kp0 carries 0, lands at B (label 1) -> miss;
        //             kp1 carries 1, lands at B -> hit. acc = 1/2.
        // anno->pred: A hands 0 to kp0, kp0 at B on evaluation -> miss;
        //             B hands 1 to kp1 -> hit. acc = 1/2.
        let reference = shape(
            &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
            &[([0.0, 0.0, 0.0], 0), ([1.0, 0.0, 0.0], 1)],
        );
        let evaluation = shape(
            &[[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
            &[([0.0, 0.0, 0.0], 0), ([1.0, 0.0, 0.0], 1)],
        );
        assert_eq!(das(&reference, &evaluation, 0.0).unwrap(), 0.5);
    }

    #[test]
    fn das_is_rigid_invariant() {
        let reference = shape(
            &[[0.1, 0.2, 0.0], [0.9, 0.1, 0.3]],
            &[([0.0, 0.0, 0.0], 0), ([1.0, 0.0, 0.4], 1)],
        );
        let evaluation = shape(
            &[[0.0, 0.3, 0.1], [1.0, 0.0, 0.0]],
            &[([0.0, 0.25, 0.0], 0), ([0.9, 0.0, 0.1], 1)],
        );
        let base = das(&reference, &evaluation, 0.0).unwrap();
        // rotate+translate the evaluation shape as a whole
        let phi: f64 = 0.8;
        let (s, c) = phi.sin_cos();
        let rot = |p: Point3| [c * p[0] + s * p[2] + 3.0, p[1] + 1.0, -s * p[0] + c * p[2]];
        let moved = DasShape {
            predicted: KeypointSet::new(
                evaluation.predicted.keypoints.iter().map(|p| rot(*p)).collect(),
            )
            .unwrap(),
            annotations: evaluation
                .annotations
                .iter()
                .map(|a| Annotation {
                    position: rot(a.position),
                    label: a.label,
                })
                .collect(),
        };
        assert_eq!(das(&reference, &moved, 0.0).unwrap(), base);
    }

    #[test]
    fn relaxed_window_recovers_near_ties() {
        // kp0 carries label 7 to the evaluation shape, where it sits exactly
        // between a label-3 and a label-7 annotation; the strict rule ties to
        // the lowest id (label 3) and misses, while the 10% window also sees
        // the label-7 annotation. kp1's label-3 propagation always hits.
        let reference = shape(
            &[[0.0, 0.0, 0.0], [5.0, 0.0, 0.0]],
            &[([0.0, 0.0, 0.0], 7), ([5.0, 0.0, 0.0], 3)],
        );
        let evaluation = shape(
            &[[0.5, 0.0, 0.0], [5.0, 0.0, 0.0]],
            &[([1.0, 0.0, 0.0], 3), ([0.0, 0.0, 0.0], 7)],
        );
        assert_eq!(das(&reference, &evaluation, 0.0).unwrap(), 0.5);
        assert_eq!(das(&reference, &evaluation, 0.1).unwrap(), 1.0);
    }

    #[test]
    fn missing_annotations_rejected() {
        let a = shape(&[[0.0; 3]], &[([0.0; 3], 0)]);
        let empty = DasShape {
            predicted: KeypointSet::new(vec![[0.0; 3]]).unwrap(),
            annotations: vec![],
        };
        assert!(matches!(das(&a, &empty, 0.0), Err(MetricError::NoAnnotations)));
    }
}
