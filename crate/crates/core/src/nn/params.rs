use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{NqsError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Named trainable tensors together with their Adam moments.
#[derive(Clone, Debug, Default)]
pub struct ParameterStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    index: HashMap<String, usize>,
    step: u64,
    pub adam: AdamConfig,
}

/// Gradient tensors aligned with a [`ParameterStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(pub Vec<Tensor>);

impl Gradients {
    pub fn zeros_like(store: &ParameterStore) -> Self {
        Gradients(store.values.iter().map(|t| Tensor::zeros(t.shape())).collect())
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.0[id.0]
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.0.iter_mut().for_each(|t| t.scale_assign(s));
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.0.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|t| t.data())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(Tensor::is_finite)
    }
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let id = self.values.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.first.push(Tensor::zeros(value.shape()));
        self.second.push(Tensor::zeros(value.shape()));
        self.values.push(value);
        ParamId(id)
    }

    /// Xavier-uniform `[fan_in x fan_out]` matrix.
    pub fn add_xavier(
        &mut self,
        name: impl Into<String>,
        fan_in: usize,
        fan_out: usize,
        rng: &mut impl Rng,
    ) -> ParamId {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-a..a))
            .collect();
        self.add(name, Tensor::new(vec![fan_in, fan_out], data).unwrap())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn moments(&self, id: ParamId) -> (&Tensor, &Tensor) {
        (&self.first[id.0], &self.second[id.0])
    }

    pub fn n_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_scalars() {
            return Err(NqsError::Dimension(format!(
                "flat parameter vector has {} entries, store holds {}",
                flat.len(),
                self.n_scalars()
            )));
        }
        let mut off = 0;
        for t in &mut self.values {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Replace a parameter's value, keeping its shape.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let id = self
            .id(name)
            .ok_or_else(|| NqsError::Config(format!("unknown parameter {name}")))?
            .0;
        if value.shape() != self.values[id].shape() {
            return Err(NqsError::Dimension(format!(
                "parameter {name}: expected shape {:?}, got {:?}",
                self.values[id].shape(),
                value.shape()
            )));
        }
        self.values[id] = value;
        Ok(())
    }

    /// One Adam update. Non-finite gradients abort the step and leave the
    /// store untouched.
    pub fn adam_step(&mut self, grads: &Gradients, lr: f64) -> Result<()> {
        if grads.0.len() != self.values.len() {
            return Err(NqsError::Dimension(format!(
                "{} gradients for {} parameters",
                grads.0.len(),
                self.values.len()
            )));
        }
        for (i, (g, p)) in grads.0.iter().zip(&self.values).enumerate() {
            if g.shape() != p.shape() {
                return Err(NqsError::Dimension(format!(
                    "gradient for {} has shape {:?}, parameter {:?}",
                    self.names[i],
                    g.shape(),
                    p.shape()
                )));
            }
            if !g.is_finite() {
                let bad = g.data().iter().filter(|v| !v.is_finite()).count();
                return Err(NqsError::NonFinite(format!(
                    "{bad} non-finite gradient entries in {} at step {}",
                    self.names[i], self.step
                )));
            }
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.adam;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for i in 0..self.values.len() {
            let g = grads.0[i].data();
            let m = self.first[i].data_mut();
            for (m, &g) in m.iter_mut().zip(g) {
                *m = beta1 * *m + (1.0 - beta1) * g;
            }
            let v = self.second[i].data_mut();
            for (v, &g) in v.iter_mut().zip(g) {
                *v = beta2 * *v + (1.0 - beta2) * g * g;
            }
            let (m, v) = (self.first[i].data(), self.second[i].data());
            let p = self.values[i].data_mut();
            for ((p, &m), &v) in p.iter_mut().zip(m).zip(v) {
                *p -= lr * (m / bc1) / ((v / bc2).sqrt() + eps);
            }
        }
        Ok(())
    }
}
