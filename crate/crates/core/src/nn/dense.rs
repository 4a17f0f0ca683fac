use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::init::glorot_uniform;
use crate::nn::store::{GradMap, ParameterStore};
use crate::nn::tensor::{axpy, matvec, matvec_t, outer_acc, Tensor};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    fn apply(self, x: Scalar) -> Scalar {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
        }
    }

    fn grad_from_output(self, y: Scalar) -> Scalar {
        match self {
            Activation::Identity => 1.0,
            // d/dx relu at 0 taken as 0
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Affine layer `y = act(Wx + b)` with parameters `<name>.w`, `<name>.b`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub name: String,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    pub x: Vec<Scalar>,
    pub y: Vec<Scalar>,
}

impl Dense {
    pub fn new(name: &str, in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            name: name.to_string(),
            in_dim,
            out_dim,
            activation,
        }
    }

    pub fn init<R: Rng>(&self, store: &mut ParameterStore, rng: &mut R) {
        store.define(
            &format!("{}.w", self.name),
            glorot_uniform(self.out_dim, self.in_dim, rng),
            true,
        );
        store.define(&format!("{}.b", self.name), Tensor::zeros(&[self.out_dim]), true);
    }

    pub fn forward(&self, store: &ParameterStore, x: &[Scalar]) -> (Vec<Scalar>, DenseCache) {
        let w = store.value(&format!("{}.w", self.name));
        assert_eq!(
            x.len(),
            self.in_dim,
            "dense {}: input [{}] vs expected [{}]",
            self.name,
            x.len(),
            self.in_dim
        );
        let b = store.value(&format!("{}.b", self.name));
        let mut y = matvec(w, x);
        axpy(&mut y, &b.values);
        for v in y.iter_mut() {
            *v = self.activation.apply(*v);
        }
        (
            y.clone(),
            DenseCache {
                x: x.to_vec(),
                y,
            },
        )
    }

    /// Accumulates dW, db; returns dx.
    pub fn backward(
        &self,
        values: &std::collections::BTreeMap<String, Tensor>,
        grads: &mut GradMap,
        cache: &DenseCache,
        dy: &[Scalar],
    ) -> Vec<Scalar> {
        let dpre: Vec<Scalar> = dy
            .iter()
            .zip(&cache.y)
            .map(|(&d, &y)| d * self.activation.grad_from_output(y))
            .collect();
        let w = &values[&format!("{}.w", self.name)];
        let gw = grads.get_mut(&format!("{}.w", self.name)).unwrap();
        outer_acc(gw, &dpre, &cache.x);
        let gb = grads.get_mut(&format!("{}.b", self.name)).unwrap();
        axpy(&mut gb.values, &dpre);
        matvec_t(w, &dpre)
    }
}
