use std::collections::BTreeMap;

use crate::nn::tensor::Tensor;
use crate::Scalar;

pub type GradMap = BTreeMap<String, Tensor>;

/// Named parameters with matching gradient buffers and a trainable flag.
/// Iteration order is sorted by name, so updates are deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParameterStore {
    values: BTreeMap<String, Tensor>,
    grads: GradMap,
    trainable: BTreeMap<String, bool>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn define(&mut self, name: &str, tensor: Tensor, trainable: bool) {
        assert!(
            !self.values.contains_key(name),
            "parameter {name} already defined"
        );
        self.grads.insert(name.to_string(), Tensor::zeros(&tensor.shape));
        self.values.insert(name.to_string(), tensor);
        self.trainable.insert(name.to_string(), trainable);
    }

    pub fn value(&self, name: &str) -> &Tensor {
        self.values
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn value_mut(&mut self, name: &str) -> &mut Tensor {
        self.values
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn grad(&self, name: &str) -> &Tensor {
        self.grads
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.trainable[name]
    }

    pub fn set_trainable(&mut self, name: &str, flag: bool) {
        *self
            .trainable
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}")) = flag;
    }

    pub fn zero_grads(&mut self) {
        for g in self.grads.values_mut() {
            g.fill(0.0);
        }
    }

    pub fn names(&self) -> Vec<String> {
        self.values.keys().cloned().collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.values.contains_key(name)
    }

    /// Borrow values immutably and gradients mutably at the same time;
    /// backward passes read weights while accumulating gradients.
    pub fn split_mut(&mut self) -> (&BTreeMap<String, Tensor>, &mut GradMap) {
        (&self.values, &mut self.grads)
    }

    /// Iterate (name, value, grad, trainable) for the optimizer.
    pub fn update_iter(
        &mut self,
    ) -> impl Iterator<Item = (&String, &mut Tensor, &Tensor, bool)> {
        let grads = &self.grads;
        let trainable = &self.trainable;
        self.values
            .iter_mut()
            .map(move |(name, value)| (name, value, &grads[name], trainable[name]))
    }

    pub fn total_grad_norm(&self) -> Scalar {
        self.grads
            .values()
            .map(|g| g.values.iter().map(|x| x * x).sum::<Scalar>())
            .sum::<Scalar>()
            .sqrt()
    }

    pub fn values_map(&self) -> &BTreeMap<String, Tensor> {
        &self.values
    }
}
