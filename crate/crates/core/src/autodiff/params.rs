use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::array::Array;
use super::tape::{Gradients, Tape};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
struct Entry {
    name: String,
    value: Arc<Array>,
    grad: Array,
}

/// Named learnable arrays paired with gradient accumulators, in insertion order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: Vec<Entry>,
    by_name: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Array) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::Invalid(alloc::format!("duplicate parameter `{name}`")));
        }
        let grad = Array::zeros(value.shape());
        self.entries.push(Entry {
            name: name.to_string(),
            value: Arc::new(value),
            grad,
        });
        let id = self.entries.len() - 1;
        self.by_name.insert(name.to_string(), id);
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar coordinates.
    pub fn n_coords(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Array {
        &self.entries[id.0].value
    }

    pub(crate) fn shared(&self, id: ParamId) -> Arc<Array> {
        Arc::clone(&self.entries[id.0].value)
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array {
        Arc::make_mut(&mut self.entries[id.0].value)
    }

    /// Replaces a value; the new array must keep the old shape.
    pub fn set(&mut self, id: ParamId, value: Array) -> Result<()> {
        let e = &mut self.entries[id.0];
        if e.value.shape() != value.shape() {
            return Err(Error::shape("param_set", e.value.shape(), value.shape()));
        }
        e.value = Arc::new(value);
        Ok(())
    }

    pub fn grad(&self, id: ParamId) -> &Array {
        &self.entries[id.0].grad
    }

    pub fn zero_grad(&mut self) {
        for e in &mut self.entries {
            e.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Adds gradients of every parameter leaf recorded on `tape`.
    pub fn accumulate(&mut self, tape: &Tape, grads: &Gradients) {
        for (var, id) in tape.param_nodes() {
            if let Some(g) = grads.get(var) {
                self.entries[id.0].grad.axpy(1.0, g);
            }
        }
    }

    /// Flattened parameter vector in insertion order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.entries
            .iter()
            .flat_map(|e| e.value.data().iter().copied())
            .collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.entries
            .iter()
            .flat_map(|e| e.grad.data().iter().copied())
            .collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        let mut off = 0;
        for e in &mut self.entries {
            let v = Arc::make_mut(&mut e.value);
            let n = v.len();
            v.data_mut().copy_from_slice(&values[off..off + n]);
            off += n;
        }
    }

    /// `value += alpha * direction` over the flattened parameter vector.
    pub fn add_flat(&mut self, alpha: f64, direction: &[f64]) {
        let mut off = 0;
        for e in &mut self.entries {
            let v = Arc::make_mut(&mut e.value);
            let n = v.len();
            for (x, d) in v.data_mut().iter_mut().zip(&direction[off..off + n]) {
                *x += alpha * d;
            }
            off += n;
        }
    }
}

/// Adaptive moment estimation with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Array>,
    v: Vec<Array>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients.
    pub fn step(&mut self, store: &mut ParamStore) {
        if self.m.len() != store.len() {
            self.m = store.entries.iter().map(|e| Array::zeros(e.value.shape())).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::pow(self.beta1, t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, t as f64);
        for (i, e) in store.entries.iter_mut().enumerate() {
            let value = Arc::make_mut(&mut e.value);
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (j, (x, g)) in value.data_mut().iter_mut().zip(e.grad.data()).enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                *x -= self.learning_rate * mhat / (libm::sqrt(vhat) + self.eps);
            }
        }
    }
}
