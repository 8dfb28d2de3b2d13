//! Adaptive-moment gradient descent over the named parameter tensors.

use std::collections::BTreeMap;

use crate::model::{ParamStore, Tensor};

pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first_moment: BTreeMap<String, Tensor>,
    second_moment: BTreeMap<String, Tensor>,
    steps: usize,
}

impl Adam {
    pub fn new(learning_rate: f64, store: &ParamStore) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first_moment: store.zeros_like(),
            second_moment: store.zeros_like(),
            steps: 0,
        }
    }

    /// One update from averaged gradients. Tensors are visited in name
    /// order, so updates are deterministic.
    pub fn step(&mut self, store: &mut ParamStore, grads: &BTreeMap<String, Tensor>) {
        self.steps += 1;
        let t = self.steps as f64;
        let bias1 = 1.0 - self.beta1.powf(t);
        let bias2 = 1.0 - self.beta2.powf(t);
        for (name, grad) in grads {
            let m = self
                .first_moment
                .get_mut(name)
                .unwrap_or_else(|| panic!("unknown tensor {name:?}"));
            let v = self.second_moment.get_mut(name).expect("moment exists");
            let param = store.get_mut(name);
            for i in 0..grad.len() {
                let g = grad.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * g;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m.data[i] / bias1;
                let v_hat = v.data[i] / bias2;
                param.data[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let cfg = ModelConfig::tiny();
        let mut store = ParamStore::init(&cfg, 1);
        let before = store.clone();
        let mut adam = Adam::new(0.0, &store);
        let mut grads = store.zeros_like();
        for t in grads.values_mut() {
            t.data.iter_mut().for_each(|v| *v = 1.0);
        }
        adam.step(&mut store, &grads);
        for (name, t) in store.iter() {
            for (a, b) in t.data.iter().zip(&before.get(name).data) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn descends_a_quadratic() {
        // minimize sum w^2 over a single tensor
        let cfg = ModelConfig::tiny();
        let mut store = ParamStore::init(&cfg, 2);
        let mut adam = Adam::new(0.05, &store);
        let start: f64 = store.get("enc.queries").data.iter().map(|v| v * v).sum();
        for _ in 0..200 {
            let mut grads = store.zeros_like();
            let g = grads.get_mut("enc.queries").unwrap();
            for (gi, wi) in g.data.iter_mut().zip(&store.get("enc.queries").data) {
                *gi = 2.0 * wi;
            }
            adam.step(&mut store, &grads);
        }
        let end: f64 = store.get("enc.queries").data.iter().map(|v| v * v).sum();
        assert!(end < 0.01 * start, "start {start} end {end}");
    }
}
