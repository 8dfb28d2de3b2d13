//! Glue between the parameter store and a tape: binds each named parameter
//! to a single leaf per graph so gradients can be read back by name, and
//! provides the shared building blocks (linear layers, Fourier features,
//! the sinusoidal noise embedding).

use std::collections::BTreeMap;

use crate::geometry::vec3::Point3;

use super::params::ParamStore;
use super::tape::{Gradients, NodeId, Tape};
use super::tensor::Tensor;

/// One differentiable computation over a parameter store.
pub struct ModelGraph<'p> {
    pub tape: Tape,
    store: &'p ParamStore,
    bindings: BTreeMap<String, NodeId>,
}

impl<'p> ModelGraph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Self {
            tape: Tape::new(),
            store,
            bindings: BTreeMap::new(),
        }
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }

    /// Leaf bound to a named parameter; repeated calls share one node so
    /// adjoints from all uses accumulate.
    pub fn param(&mut self, name: &str) -> NodeId {
        if let Some(&id) = self.bindings.get(name) {
            return id;
        }
        let id = self.tape.leaf(self.store.get(name).clone());
        self.bindings.insert(name.to_string(), id);
        id
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.tape.leaf(value)
    }

    /// `x * W + b` with the 1xC bias broadcast over rows.
    pub fn linear(&mut self, x: NodeId, weight: &str, bias: &str) -> NodeId {
        let w = self.param(weight);
        let b = self.param(bias);
        let xw = self.tape.matmul(x, w);
        let rows = self.tape.value(xw).rows;
        let bb = self.tape.broadcast_row(b, rows);
        self.tape.add(xw, bb)
    }

    pub fn linear_relu(&mut self, x: NodeId, weight: &str, bias: &str) -> NodeId {
        let lin = self.linear(x, weight, bias);
        self.tape.relu(lin)
    }

    /// Gradients of the seeded scalar with respect to every bound parameter.
    pub fn named_grads(&self, grads: &Gradients) -> BTreeMap<String, Tensor> {
        self.bindings
            .iter()
            .map(|(name, &id)| (name.clone(), grads.wrt(&self.tape, id)))
            .collect()
    }
}

/// Fourier positional features of a single point:
/// `[sin(2 pi x F), cos(2 pi x F)]` for the fixed 3xF frequency matrix.
pub fn fourier_encode(x: Point3, freqs: &Tensor) -> Vec<f64> {
    assert_eq!(freqs.rows, 3, "frequency matrix must be 3xF");
    let f = freqs.cols;
    let mut out = vec![0.0; 2 * f];
    for j in 0..f {
        let phase = 2.0
            * std::f64::consts::PI
            * (x[0] * freqs.get(0, j) + x[1] * freqs.get(1, j) + x[2] * freqs.get(2, j));
        out[j] = phase.sin();
        out[f + j] = phase.cos();
    }
    out
}

/// The per-point encoder input `[xyz, fourier(xyz)]` as an Nx(3+2F) tensor.
pub fn point_features(points: &[Point3], freqs: &Tensor) -> Tensor {
    let width = 3 + 2 * freqs.cols;
    let mut data = Vec::with_capacity(points.len() * width);
    for p in points {
        data.extend_from_slice(p);
        data.extend_from_slice(&fourier_encode(*p, freqs));
    }
    Tensor::from_vec(points.len(), width, data)
}

/// Standard sinusoidal embedding of a scalar (geometric frequencies from 1
/// down to 1/10^4), used for the noise-level input.
pub fn sinusoidal_embedding(value: f64, dim: usize) -> Vec<f64> {
    assert!(dim >= 2 && dim % 2 == 0, "embedding width must be even");
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for j in 0..half {
        let exponent = if half > 1 {
            j as f64 / (half - 1) as f64
        } else {
            0.0
        };
        let freq = (10_000.0f64).powf(-exponent);
        out[j] = (value * freq).sin();
        out[half + j] = (value * freq).cos();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::ModelConfig;

    #[test]
    fn fourier_of_origin_is_zeros_and_ones() {
        let freqs = Tensor::from_vec(3, 2, vec![0.3, -1.2, 0.8, 0.1, 2.0, -0.4]);
        let out = fourier_encode([0.0, 0.0, 0.0], &freqs);
        assert_eq!(out, vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn fourier_is_bounded() {
        let store = ParamStore::init(&ModelConfig::tiny(), 3);
        let out = fourier_encode([10.0, -250.0, 3.17], &store.fourier);
        assert!(out.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn fourier_single_frequency_quarter_period() {
        // f = (1,0,0), x = (0.25, *, *): phase = pi/2
        let freqs = Tensor::from_vec(3, 1, vec![1.0, 0.0, 0.0]);
        let out = fourier_encode([0.25, 7.0, -3.0], &freqs);
        assert!((out[0] - 1.0).abs() < 1e-12);
        assert!(out[1].abs() < 1e-12);
    }

    #[test]
    fn param_leafs_are_shared() {
        let store = ParamStore::init(&ModelConfig::tiny(), 0);
        let mut g = ModelGraph::new(&store);
        let a = g.param("enc.queries");
        let b = g.param("enc.queries");
        assert_eq!(a, b);
    }

    #[test]
    fn sinusoidal_embedding_shape() {
        let e = sinusoidal_embedding(0.0, 8);
        assert_eq!(e.len(), 8);
        assert_eq!(&e[..4], &[0.0; 4]);
        assert_eq!(&e[4..], &[1.0; 4]);
    }
}
