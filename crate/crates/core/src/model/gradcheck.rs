//! Central-difference verification of tape gradients.

use std::collections::BTreeMap;

use crate::geometry::Rng;

use super::params::ParamStore;
use super::tensor::Tensor;
use super::ModelError;

/// Step used for central differences; 64-bit precision leaves ~5 digits of
/// headroom at this h for O(1) losses.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct WorstCoord {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked_coords: usize,
    /// The most offending coordinates, largest error first (up to 8).
    pub worst: Vec<WorstCoord>,
}

/// Compares `analytic` gradients against central differences of `eval`
/// over every parameter tensor, subsampling to at most `max_per_tensor`
/// coordinates each (seeded). Errors with the worst coordinates when the
/// maximum relative error exceeds `tol`.
pub fn grad_check(
    store: &ParamStore,
    eval: impl Fn(&ParamStore) -> f64,
    analytic: &BTreeMap<String, Tensor>,
    tol: f64,
    max_per_tensor: usize,
    seed: u64,
) -> Result<GradCheckReport, ModelError> {
    let mut rng = Rng::seed_from_u64(seed);
    let mut scratch = store.clone();
    let mut worst: Vec<WorstCoord> = Vec::new();
    let mut max_rel = 0.0f64;
    let mut checked = 0usize;

    let names: Vec<String> = store.names().cloned().collect();
    for name in &names {
        let len = store.get(name).len();
        let coords: Vec<usize> = if len <= max_per_tensor {
            (0..len).collect()
        } else {
            // sampled without replacement via partial shuffle
            let mut idx: Vec<usize> = (0..len).collect();
            for i in 0..max_per_tensor {
                let j = i + rng.index(len - i);
                idx.swap(i, j);
            }
            idx.truncate(max_per_tensor);
            idx
        };
        // tensors absent from the analytic map are unused by the loss and
        // must check out against a zero gradient
        let zero = Tensor::zeros(store.get(name).rows, store.get(name).cols);
        let grad = analytic.get(name).unwrap_or(&zero);
        for &i in &coords {
            let orig = store.get(name).data[i];
            scratch.get_mut(name).data[i] = orig + FD_STEP;
            let up = eval(&scratch);
            scratch.get_mut(name).data[i] = orig - FD_STEP;
            let down = eval(&scratch);
            scratch.get_mut(name).data[i] = orig;

            let numeric = (up - down) / (2.0 * FD_STEP);
            let an = grad.data[i];
            let rel = (numeric - an).abs() / numeric.abs().max(an.abs()).max(1.0);
            checked += 1;
            if rel > max_rel {
                max_rel = rel;
            }
            if rel > tol {
                worst.push(WorstCoord {
                    name: name.clone(),
                    index: i,
                    analytic: an,
                    numeric,
                    rel_error: rel,
                });
            }
        }
    }

    worst.sort_by(|a, b| b.rel_error.partial_cmp(&a.rel_error).unwrap());
    worst.truncate(8);
    let report = GradCheckReport {
        max_rel_error: max_rel,
        checked_coords: checked,
        worst,
    };
    if report.max_rel_error > tol {
        return Err(ModelError::GradMismatch {
            max_rel_error: report.max_rel_error,
            worst: report
                .worst
                .iter()
                .map(|w| format!("{}{{{}}}: tape {:.6e} vs fd {:.6e}", w.name, w.index, w.analytic, w.numeric))
                .collect(),
        });
    }
    Ok(report)
}
