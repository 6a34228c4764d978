use rand::Rng;
use sha2::{Digest, Sha256};

use super::Tensor;

/// A learnable tensor with its gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            value,
            grad,
            trainable: true,
        }
    }

    pub fn uniform(name: impl Into<String>, shape: &[usize], scale: f64, rng: &mut impl Rng) -> Self {
        let mut value = Tensor::zeros(shape);
        for v in value.data_mut() {
            *v = rng.gen_range(-scale..=scale);
        }
        Self::new(name, value)
    }

    pub fn constant(name: impl Into<String>, shape: &[usize], fill: f64) -> Self {
        let mut value = Tensor::zeros(shape);
        value.fill(fill);
        Self::new(name, value)
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Anything that owns an ordered list of parameters.
///
/// The order returned by `parameters` and `parameters_mut` must agree.
pub trait Parameterized {
    fn parameters(&self) -> Vec<&Parameter>;
    fn parameters_mut(&mut self) -> Vec<&mut Parameter>;

    fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    fn set_trainable(&mut self, trainable: bool) {
        for p in self.parameters_mut() {
            p.trainable = trainable;
        }
    }

    fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.value.len()).sum()
    }

    /// SHA-256 over names, shapes and the exact bit patterns of every value.
    fn checksum(&self) -> String {
        checksum(self.parameters())
    }
}

pub fn checksum<'a>(params: impl IntoIterator<Item = &'a Parameter>) -> String {
    let mut hasher = Sha256::new();
    for p in params {
        hasher.update(p.name.as_bytes());
        hasher.update([0u8]);
        for &d in p.value.shape() {
            hasher.update((d as u64).to_le_bytes());
        }
        for &v in p.value.data() {
            hasher.update(v.to_bits().to_le_bytes());
        }
    }
    hex::encode(hasher.finalize())
}

impl Parameterized for Vec<Parameter> {
    fn parameters(&self) -> Vec<&Parameter> {
        self.iter().collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.iter_mut().collect()
    }
}
