//! Named parameter store with gradient buffers and Adam state.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::tensor::{Shape, Tensor};
use crate::error::{Result, TapemError};

/// Handle into a [`ParamStore`]; stable for the store's lifetime.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub m: Tensor,
    pub v: Tensor,
    pub step: u64,
    /// Row-sparse params (embedding tables) update only touched rows,
    /// each with its own step counter for bias correction.
    pub row_sparse: bool,
    pub row_steps: Vec<u64>,
    pub touched_rows: BTreeSet<usize>,
}

/// All trainable tensors of a model plus their Adam moments.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: HashMap<String, usize>,
}

/// Gradients produced by one backward pass, private to a worker until merged.
#[derive(Default, Debug)]
pub struct GradMap {
    pub(crate) dense: HashMap<usize, Tensor>,
    pub(crate) rows: HashMap<(usize, usize), Vec<f64>>,
}

impl GradMap {
    pub fn is_empty(&self) -> bool {
        self.dense.is_empty() && self.rows.is_empty()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    fn push(&mut self, name: &str, value: Tensor, row_sparse: bool) -> ParamId {
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter {name}"
        );
        let shape = value.shape();
        let rows = match shape {
            Shape::Matrix(r, _) => r,
            Shape::Vector(_) => 0,
        };
        assert!(!row_sparse || rows > 0, "row-sparse params must be matrices");
        let id = self.params.len();
        self.params.push(Param {
            name: name.to_string(),
            value,
            grad: Tensor::zeros(shape),
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            step: 0,
            row_sparse,
            row_steps: vec![0; if row_sparse { rows } else { 0 }],
            touched_rows: BTreeSet::new(),
        });
        self.by_name.insert(name.to_string(), id);
        ParamId(id)
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> ParamId {
        self.push(name, value, false)
    }

    /// Register an embedding-style table whose rows update lazily.
    pub fn add_row_sparse(&mut self, name: &str, value: Tensor) -> ParamId {
        self.push(name, value, true)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    pub fn is_row_sparse(&self, id: ParamId) -> bool {
        self.params[id.0].row_sparse
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.params.len()).map(ParamId)
    }

    pub(crate) fn params(&self) -> &[Param] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    /// Reset every gradient buffer and the touched-row bookkeeping.
    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
            p.touched_rows.clear();
        }
    }

    /// Add a worker's gradients into the shared buffers.
    pub fn accumulate(&mut self, grads: &GradMap) {
        for (&id, g) in &grads.dense {
            let p = &mut self.params[id];
            debug_assert_eq!(p.grad.shape(), g.shape());
            for (dst, src) in p.grad.data_mut().iter_mut().zip(g.data()) {
                *dst += src;
            }
            if p.row_sparse {
                for r in 0..p.value.rows() {
                    p.touched_rows.insert(r);
                }
            }
        }
        for (&(id, row), g) in &grads.rows {
            let p = &mut self.params[id];
            for (dst, src) in p.grad.row_mut(row).iter_mut().zip(g) {
                *dst += src;
            }
            p.touched_rows.insert(row);
        }
    }

    fn adam_update(value: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], step: u64, cfg: &AdamConfig) {
        let bc1 = 1.0 - cfg.beta1.powi(step as i32);
        let bc2 = 1.0 - cfg.beta2.powi(step as i32);
        for i in 0..value.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            value[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }

    /// One Adam step with bias correction over every dense parameter and
    /// every touched row of row-sparse parameters. Gradients are left for
    /// the caller to zero.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<()> {
        for p in &mut self.params {
            if p.row_sparse {
                for &row in &p.touched_rows {
                    if p.grad.row(row).iter().any(|g| !g.is_finite()) {
                        return Err(TapemError::Numeric(format!(
                            "non-finite gradient in parameter {} row {row}",
                            p.name
                        )));
                    }
                    p.row_steps[row] += 1;
                    let step = p.row_steps[row];
                    let cols = p.grad.row(row).len();
                    let off = row * cols;
                    Self::adam_update(
                        &mut p.value.data_mut()[off..off + cols],
                        &p.grad.data()[off..off + cols].to_vec(),
                        &mut p.m.data_mut()[off..off + cols],
                        &mut p.v.data_mut()[off..off + cols],
                        step,
                        cfg,
                    );
                }
            } else {
                if !p.grad.is_finite() {
                    return Err(TapemError::Numeric(format!(
                        "non-finite gradient in parameter {}",
                        p.name
                    )));
                }
                p.step += 1;
                let grad = p.grad.data().to_vec();
                Self::adam_update(
                    p.value.data_mut(),
                    &grad,
                    p.m.data_mut(),
                    p.v.data_mut(),
                    p.step,
                    cfg,
                );
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::vector(vec![1.0, -2.0]));
        store.adam_step(&AdamConfig::default()).unwrap();
        assert_eq!(store.value(id).data(), &[1.0, -2.0]);
        assert_eq!(store.params()[0].step, 1);
        assert_eq!(store.params()[0].m.data(), &[0.0, 0.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut store = ParamStore::new();
        let id = store.add("theta", Tensor::vector(vec![0.0]));
        let mut g = GradMap::default();
        g.dense.insert(0, Tensor::vector(vec![1.0]));
        store.accumulate(&g);
        let cfg = AdamConfig::default();
        store.adam_step(&cfg).unwrap();
        // bias-corrected first step: lr * 1 / (1 + eps)
        let expected = -cfg.learning_rate * 1.0 / (1.0 + cfg.epsilon);
        assert!((store.value(id).data()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut store = ParamStore::new();
        let id = store.add("theta", Tensor::vector(vec![0.5]));
        let cfg = AdamConfig::default();
        let mut last = 0.5;
        for _ in 0..2 {
            store.zero_grads();
            let mut g = GradMap::default();
            g.dense.insert(0, Tensor::vector(vec![2.0]));
            store.accumulate(&g);
            store.adam_step(&cfg).unwrap();
            let now = store.value(id).data()[0];
            assert!(now < last, "parameter should move against the gradient");
            last = now;
        }
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut store = ParamStore::new();
        store.add("bad_param", Tensor::vector(vec![0.0]));
        let mut g = GradMap::default();
        g.dense.insert(0, Tensor::vector(vec![f64::NAN]));
        store.accumulate(&g);
        let err = store.adam_step(&AdamConfig::default()).unwrap_err();
        assert!(err.to_string().contains("bad_param"));
    }

    #[test]
    fn untouched_rows_are_not_updated() {
        let mut store = ParamStore::new();
        let id = store.add_row_sparse(
            "emb",
            Tensor::matrix(3, 2, vec![1.0; 6]).unwrap(),
        );
        let mut g = GradMap::default();
        g.rows.insert((0, 1), vec![1.0, 1.0]);
        store.accumulate(&g);
        store.adam_step(&AdamConfig::default()).unwrap();
        let v = store.value(id);
        assert_eq!(v.row(0), &[1.0, 1.0]);
        assert_ne!(v.row(1), &[1.0, 1.0]);
        assert_eq!(v.row(2), &[1.0, 1.0]);
    }

    #[test]
    fn adam_replay_is_deterministic() {
        let run = || {
            let mut store = ParamStore::new();
            store.add("w", Tensor::vector(vec![0.3, -0.7, 1.1]));
            let cfg = AdamConfig::default();
            for step in 0..5 {
                store.zero_grads();
                let mut g = GradMap::default();
                g.dense.insert(
                    0,
                    Tensor::vector(vec![0.1 * step as f64, -0.2, 0.05 * step as f64]),
                );
                store.accumulate(&g);
                store.adam_step(&cfg).unwrap();
            }
            store.value(ParamId(0)).data().to_vec()
        };
        assert_eq!(run(), run());
    }
}
