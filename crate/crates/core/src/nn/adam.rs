use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::nn::store::ParameterStore;
use crate::nn::tensor::Tensor;
use crate::Scalar;

/// Bias-corrected Adam. Moments are allocated lazily per parameter;
/// frozen parameters are skipped entirely.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    #[serde(skip)]
    m: BTreeMap<String, Tensor>,
    #[serde(skip)]
    v: BTreeMap<String, Tensor>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step(&mut self, store: &mut ParameterStore) {
        self.t += 1;
        let b1 = self.beta1 as Scalar;
        let b2 = self.beta2 as Scalar;
        let bc1 = 1.0 - (self.beta1 as Scalar).powi(self.t as i32);
        let bc2 = 1.0 - (self.beta2 as Scalar).powi(self.t as i32);
        let lr = self.lr as Scalar;
        let eps = self.eps as Scalar;

        for (name, value, grad, trainable) in store.update_iter() {
            if !trainable {
                continue;
            }
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(&value.shape));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(&value.shape));
            for j in 0..value.numel() {
                let g = grad.values[j];
                m.values[j] = b1 * m.values[j] + (1.0 - b1) * g;
                v.values[j] = b2 * v.values[j] + (1.0 - b2) * g * g;
                let m_hat = m.values[j] / bc1;
                let v_hat = v.values[j] / bc2;
                value.values[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
