use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor};
use crate::math::{pow, sqrt};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamStore, lr: f64) -> Self {
        let zeros = || params.iter().map(|(_, t)| Tensor::zeros(&t.shape)).collect::<Vec<_>>();
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: zeros(), v: zeros() }
    }

    pub fn first_moment(&self, k: usize) -> &Tensor {
        &self.m[k]
    }

    pub fn second_moment(&self, k: usize) -> &Tensor {
        &self.v[k]
    }

    /// One bias-corrected update; `grads[k]` matches parameter `k`.
    pub fn update(&mut self, params: &mut ParamStore, grads: &[Tensor]) {
        assert_eq!(grads.len(), params.len(), "one gradient per parameter");
        self.step += 1;
        let c1 = 1.0 - pow(self.beta1, self.step as f64);
        let c2 = 1.0 - pow(self.beta2, self.step as f64);
        for (k, id) in params.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let p = params.get_mut(id);
            let g = &grads[k];
            assert_eq!(p.shape, g.shape, "gradient shape for parameter {k}");
            let (m, v) = (&mut self.m[k].data, &mut self.v[k].data);
            for j in 0..p.data.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g.data[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g.data[j] * g.data[j];
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                p.data[j] -= self.lr * mh / (sqrt(vh) + self.eps);
            }
        }
    }
}

pub fn adam_step(params: &mut ParamStore, grads: &[Tensor], state: &mut AdamState) {
    state.update(params, grads);
}
