use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Graph, Result, Tensor, TensorError, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdamOutcome {
    Applied,
    /// A gradient entry was NaN or infinite; nothing was updated.
    SkippedNonFinite,
}

/// Named parameters in insertion order, with Adam moment buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore {
    names: Vec<String>,
    index: HashMap<String, usize>,
    values: Vec<Arc<Tensor>>,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step: u64,
}

impl Default for ParameterStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParameterStore {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            index: HashMap::new(),
            values: Vec::new(),
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            step: 0,
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<usize> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(TensorError::DuplicateName(name));
        }
        let id = self.values.len();
        self.first_moment.push(vec![0.0; value.len()]);
        self.second_moment.push(vec![0.0; value.len()]);
        self.values.push(Arc::new(value));
        self.index.insert(name.clone(), id);
        self.names.push(name);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| TensorError::UnknownName(name.to_string()))
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn get(&self, id: usize) -> &Tensor {
        &self.values[id]
    }

    pub fn get_by_name(&self, name: &str) -> Result<&Tensor> {
        Ok(self.get(self.id(name)?))
    }

    pub fn set(&mut self, id: usize, value: Tensor) -> Result<()> {
        if value.shape() != self.values[id].shape() {
            return Err(TensorError::ShapeMismatch {
                op: "set",
                lhs: self.values[id].shape().to_vec(),
                rhs: value.shape().to_vec(),
            });
        }
        self.values[id] = Arc::new(value);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.values.iter().map(|v| &**v))
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn adam_step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self, id: usize) -> (&[f64], &[f64]) {
        (&self.first_moment[id], &self.second_moment[id])
    }

    pub(crate) fn restore_optimizer(&mut self, step: u64, first: Vec<Vec<f64>>, second: Vec<Vec<f64>>) {
        self.step = step;
        self.first_moment = first;
        self.second_moment = second;
    }

    /// Puts every parameter on `graph` as a leaf, in store order.
    pub fn bind(&self, graph: &mut Graph) -> Vec<Var> {
        self.values.iter().map(|v| graph.param(Arc::clone(v))).collect()
    }

    /// One bias-corrected Adam update. `grads[i]` pairs with parameter `i`.
    pub fn adam_step(&mut self, grads: &[Vec<f64>], cfg: &AdamConfig) -> Result<AdamOutcome> {
        if grads.len() != self.values.len() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                lhs: vec![self.values.len()],
                rhs: vec![grads.len()],
            });
        }
        for (g, v) in grads.iter().zip(&self.values) {
            if g.len() != v.len() {
                return Err(TensorError::ShapeMismatch {
                    op: "adam_step",
                    lhs: v.shape().to_vec(),
                    rhs: vec![g.len()],
                });
            }
        }
        if grads.iter().flatten().any(|g| !g.is_finite()) {
            log::warn!("adam: non-finite gradient, step {} skipped", self.step + 1);
            return Ok(AdamOutcome::SkippedNonFinite);
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for (id, g) in grads.iter().enumerate() {
            let m = &mut self.first_moment[id];
            let s = &mut self.second_moment[id];
            let mut value = (*self.values[id]).clone();
            for (((w, gi), mi), si) in value.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(s.iter_mut()) {
                *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
                *si = cfg.beta2 * *si + (1.0 - cfg.beta2) * gi * gi;
                let mhat = *mi / bc1;
                let shat = *si / bc2;
                *w -= cfg.lr * mhat / (shat.sqrt() + cfg.eps);
            }
            self.values[id] = Arc::new(value);
        }
        Ok(AdamOutcome::Applied)
    }
}
