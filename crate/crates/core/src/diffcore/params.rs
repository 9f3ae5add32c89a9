use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use super::array::DenseArray;
use crate::error::{Result, VdmError};

static NEXT_TAG: AtomicU64 = AtomicU64::new(1);

/// Handle to a parameter inside a [`ParameterStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Named parameter arrays together with gradient slots and Adam moments.
#[derive(Clone, Debug)]
pub struct ParameterStore {
    tag: u64,
    names: Vec<String>,
    values: Vec<DenseArray>,
    grads: Vec<DenseArray>,
    first_moment: Vec<DenseArray>,
    second_moment: Vec<DenseArray>,
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
            tag: NEXT_TAG.fetch_add(1, Ordering::Relaxed),
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            step: 0,
        }
    }

    pub(crate) fn tag(&self) -> u64 {
        self.tag
    }

    /// Registers a parameter with the given initial value.
    pub fn insert(&mut self, name: impl Into<String>, value: DenseArray) -> ParamId {
        let shape = value.shape().to_vec();
        self.names.push(name.into());
        self.values.push(value);
        self.grads.push(DenseArray::zeros(&shape));
        self.first_moment.push(DenseArray::zeros(&shape));
        self.second_moment.push(DenseArray::zeros(&shape));
        ParamId(self.values.len() - 1)
    }

    /// Registers a parameter drawn uniformly from `[-bound, bound]`.
    pub fn insert_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        bound: f64,
        rng: &mut R,
    ) -> ParamId {
        let len = shape.iter().product();
        let data = (0..len).map(|_| rng.random_range(-bound..=bound)).collect();
        let value = DenseArray::new(shape.to_vec(), data).expect("shape matches length");
        self.insert(name, value)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(DenseArray::len).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &DenseArray {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut DenseArray {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &DenseArray {
        &self.grads[id.0]
    }

    pub fn first_moment(&self, id: ParamId) -> &DenseArray {
        &self.first_moment[id.0]
    }

    pub fn second_moment(&self, id: ParamId) -> &DenseArray {
        &self.second_moment[id.0]
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Restores optimizer state; used by checkpoint loading.
    pub fn set_optimizer_state(
        &mut self,
        id: ParamId,
        first: DenseArray,
        second: DenseArray,
    ) -> Result<()> {
        let shape = self.values[id.0].shape();
        if first.shape() != shape || second.shape() != shape {
            return Err(VdmError::Shape {
                op: "set_optimizer_state",
                left: shape.to_vec(),
                right: first.shape().to_vec(),
            });
        }
        self.first_moment[id.0] = first;
        self.second_moment[id.0] = second;
        Ok(())
    }

    pub fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn fill(&mut self, value: f64) {
        for v in &mut self.values {
            v.data_mut().iter_mut().for_each(|x| *x = value);
        }
    }

    /// Adds `grad` into the gradient slot of `id`.
    pub fn accumulate_grad(&mut self, id: ParamId, grad: &DenseArray) -> Result<()> {
        let slot = &mut self.grads[id.0];
        if slot.len() != grad.len() {
            return Err(VdmError::Shape {
                op: "accumulate_grad",
                left: slot.shape().to_vec(),
                right: grad.shape().to_vec(),
            });
        }
        slot.add_assign(grad);
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// One Adam update with bias correction; gradients are zeroed afterwards.
    ///
    /// Nothing is modified when any gradient holds a NaN.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<()> {
        for (name, g) in self.names.iter().zip(&self.grads) {
            if g.data().iter().any(|v| v.is_nan()) {
                return Err(VdmError::NanGradient(name.clone()));
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let bias1 = 1.0 - cfg.beta1.powf(t);
        let bias2 = 1.0 - cfg.beta2.powf(t);
        for i in 0..self.values.len() {
            let g = self.grads[i].data();
            let m = self.first_moment[i].data_mut();
            for (mj, gj) in m.iter_mut().zip(g) {
                *mj = cfg.beta1 * *mj + (1.0 - cfg.beta1) * gj;
            }
            let v = self.second_moment[i].data_mut();
            for (vj, gj) in v.iter_mut().zip(g) {
                *vj = cfg.beta2 * *vj + (1.0 - cfg.beta2) * gj * gj;
            }
            let m = self.first_moment[i].data();
            let v = self.second_moment[i].data();
            let p = self.values[i].data_mut();
            for ((pj, mj), vj) in p.iter_mut().zip(m).zip(v) {
                let m_hat = mj / bias1;
                let v_hat = vj / bias2;
                *pj -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        self.zero_grads();
        Ok(())
    }

    /// Copies parameter values (not optimizer state) from `other`.
    pub fn copy_values_from(&mut self, other: &ParameterStore) -> Result<()> {
        if other.values.len() != self.values.len() {
            return Err(VdmError::Shape {
                op: "copy_values_from",
                left: vec![self.values.len()],
                right: vec![other.values.len()],
            });
        }
        for (dst, src) in self.values.iter_mut().zip(&other.values) {
            if dst.shape() != src.shape() {
                return Err(VdmError::Shape {
                    op: "copy_values_from",
                    left: dst.shape().to_vec(),
                    right: src.shape().to_vec(),
                });
            }
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }
}
