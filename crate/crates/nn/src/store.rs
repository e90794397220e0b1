use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{NnError, Result};
use crate::tensor::Tensor;

/// A trainable tensor with its gradient and Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
    pub m1: Tensor,
    pub m2: Tensor,
}

impl Param {
    fn new(value: Tensor) -> Self {
        let shape = value.shape().to_vec();
        Self {
            value,
            grad: Tensor::zeros(&shape),
            m1: Tensor::zeros(&shape),
            m2: Tensor::zeros(&shape),
        }
    }
}

/// Named parameters of one model plus optimizer state.
///
/// Buffers are non-trainable tensors (batch-norm running moments, stored
/// latent codes) that persist alongside parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
    buffers: BTreeMap<String, Tensor>,
    pub step_count: u64,
}

/// Gradients keyed by parameter name, as produced by a backward pass.
pub type ParamGrads = BTreeMap<String, Tensor>;

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) || self.buffers.contains_key(&name) {
            return Err(NnError::DuplicateParam(name));
        }
        self.params.insert(name, Param::new(value));
        Ok(())
    }

    pub fn register_buffer(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) || self.buffers.contains_key(&name) {
            return Err(NnError::DuplicateParam(name));
        }
        self.buffers.insert(name, value);
        Ok(())
    }

    /// Glorot-uniform weight in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn register_glorot<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Result<()> {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let value = Tensor::from_fn(shape, |_| rng.gen_range(-limit..limit));
        self.register(name, value)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn param(&self, name: &str) -> Result<&Param> {
        self.params
            .get(name)
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn param_mut(&mut self, name: &str) -> Result<&mut Param> {
        self.params
            .get_mut(name)
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        self.param(name).map(|p| &p.value)
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor> {
        self.param(name).map(|p| &p.grad)
    }

    pub fn buffer(&self, name: &str) -> Result<&Tensor> {
        self.buffers
            .get(name)
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn set_buffer(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self
            .buffers
            .get_mut(name)
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))?;
        if slot.shape() != value.shape() {
            return Err(NnError::Shape {
                op: "set_buffer",
                lhs: slot.shape().to_vec(),
                rhs: value.shape().to_vec(),
            });
        }
        *slot = value;
        Ok(())
    }

    pub fn params(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.params.iter()
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = (&String, &mut Param)> {
        self.params.iter_mut()
    }

    pub fn buffers(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.buffers.iter()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn param_count_with_prefix(&self, prefix: &str) -> usize {
        self.params
            .iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, p)| p.value.len())
            .sum()
    }

    /// Overwrite every gradient: entries present in `grads` are copied,
    /// all others are zeroed. Names in `grads` unknown to this store are
    /// ignored so one backward pass can feed several stores.
    pub fn set_grads(&mut self, grads: &ParamGrads) -> Result<()> {
        for (name, p) in self.params.iter_mut() {
            match grads.get(name) {
                Some(g) => {
                    if g.shape() != p.value.shape() {
                        return Err(NnError::Shape {
                            op: "set_grads",
                            lhs: p.value.shape().to_vec(),
                            rhs: g.shape().to_vec(),
                        });
                    }
                    p.grad = g.clone();
                }
                None => p.grad.data_mut().iter_mut().for_each(|v| *v = 0.0),
            }
        }
        Ok(())
    }

    /// Apply buffer updates recorded by a training-mode graph.
    pub fn commit_buffers(&mut self, updates: Vec<(String, Tensor)>) -> Result<()> {
        for (name, value) in updates {
            self.set_buffer(&name, value)?;
        }
        Ok(())
    }
}
