//! Minimal reverse-mode differentiation tape over [`Tensor`] nodes.
//!
//! A tape is built per training instance: model code pushes forward
//! operations, then [`Tape::backward`] walks the nodes in reverse and
//! scatters parameter gradients into a private [`GradMap`].

use std::collections::HashMap;

use rand::Rng;

use super::ops;
use super::store::{GradMap, ParamId, ParamStore};
use super::tensor::{Shape, Tensor};
use crate::error::{Result, TapemError};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf { binding: Option<(ParamId, Option<usize>)> },
    Add(usize, usize),
    Sub(usize, usize),
    Hadamard(usize, usize),
    Scale(usize, f64),
    AddConst(usize),
    MatVec(usize, usize),
    Concat(Vec<usize>),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Softmax(usize),
    LogSigmoid(usize),
    Dot(usize, usize),
    StackScalars(Vec<usize>),
    ScaleByIndex { weights: usize, index: usize, vector: usize },
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_cache: HashMap<(usize, Option<usize>), Var>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    /// Value of a 1-element node.
    pub fn scalar_value(&self, var: Var) -> f64 {
        self.nodes[var.0].value.item()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        debug_assert!(value.is_finite(), "non-finite tape value from {op:?}");
        let id = self.nodes.len();
        self.nodes.push(Node { value, op });
        Var(id)
    }

    /// Constant input; receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf { binding: None })
    }

    /// Whole parameter tensor as a leaf; gradient flows back into the store.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.param_cache.get(&(id.0, None)) {
            return v;
        }
        let v = self.push(
            store.value(id).clone(),
            Op::Leaf { binding: Some((id, None)) },
        );
        self.param_cache.insert((id.0, None), v);
        v
    }

    /// Single row of a matrix parameter as a vector leaf.
    pub fn param_row(&mut self, store: &ParamStore, id: ParamId, row: usize) -> Var {
        if let Some(&v) = self.param_cache.get(&(id.0, Some(row))) {
            return v;
        }
        let value = Tensor::vector(store.value(id).row(row).to_vec());
        let v = self.push(value, Op::Leaf { binding: Some((id, Some(row))) });
        self.param_cache.insert((id.0, Some(row)), v);
        v
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = ops::add(&self.nodes[a.0].value, &self.nodes[b.0].value)?;
        Ok(self.push(value, Op::Add(a.0, b.0)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = ops::sub(&self.nodes[a.0].value, &self.nodes[b.0].value)?;
        Ok(self.push(value, Op::Sub(a.0, b.0)))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = ops::hadamard(&self.nodes[a.0].value, &self.nodes[b.0].value)?;
        Ok(self.push(value, Op::Hadamard(a.0, b.0)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = ops::scale(&self.nodes[a.0].value, c);
        self.push(value, Op::Scale(a.0, c))
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let mut value = self.nodes[a.0].value.clone();
        for v in value.data_mut() {
            *v += c;
        }
        self.push(value, Op::AddConst(a.0))
    }

    pub fn matvec(&mut self, m: Var, x: Var) -> Result<Var> {
        let value = ops::matvec(&self.nodes[m.0].value, &self.nodes[x.0].value)?;
        Ok(self.push(value, Op::MatVec(m.0, x.0)))
    }

    /// `w x + b`.
    pub fn affine(&mut self, w: Var, x: Var, b: Var) -> Result<Var> {
        let wx = self.matvec(w, x)?;
        self.add(wx, b)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|v| &self.nodes[v.0].value).collect();
        let value = ops::concat(&tensors)?;
        Ok(self.push(value, Op::Concat(parts.iter().map(|v| v.0).collect())))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = ops::sigmoid_vec(&self.nodes[a.0].value);
        self.push(value, Op::Sigmoid(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = ops::tanh_vec(&self.nodes[a.0].value);
        self.push(value, Op::Tanh(a.0))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = ops::relu_vec(&self.nodes[a.0].value);
        self.push(value, Op::Relu(a.0))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let value = ops::softmax(&self.nodes[a.0].value);
        self.push(value, Op::Softmax(a.0))
    }

    /// Elementwise `log sigmoid`, stable for large magnitudes.
    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        let value = {
            let src = &self.nodes[a.0].value;
            let data = src.data().iter().map(|&x| ops::log_sigmoid(x)).collect();
            match src.shape() {
                Shape::Vector(_) => Tensor::vector(data),
                Shape::Matrix(r, c) => Tensor::matrix(r, c, data).expect("same shape"),
            }
        };
        self.push(value, Op::LogSigmoid(a.0))
    }

    /// Inner product as a 1-element node.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = ops::dot(&self.nodes[a.0].value, &self.nodes[b.0].value)?;
        Ok(self.push(Tensor::scalar(value), Op::Dot(a.0, b.0)))
    }

    /// Gather 1-element nodes into one vector node.
    pub fn stack_scalars(&mut self, parts: &[Var]) -> Result<Var> {
        let mut data = Vec::with_capacity(parts.len());
        for p in parts {
            let t = &self.nodes[p.0].value;
            if t.len() != 1 {
                return Err(TapemError::Shape {
                    op: "stack_scalars".into(),
                    left: t.shape().to_string(),
                    right: "[1]".into(),
                });
            }
            data.push(t.data()[0]);
        }
        Ok(self.push(
            Tensor::vector(data),
            Op::StackScalars(parts.iter().map(|v| v.0).collect()),
        ))
    }

    /// `weights[index] * vector`, differentiable in both operands.
    pub fn scale_by_index(&mut self, weights: Var, index: usize, vector: Var) -> Result<Var> {
        let w = &self.nodes[weights.0].value;
        if index >= w.len() {
            return Err(TapemError::Contract(format!(
                "scale_by_index {index} out of bounds for {}",
                w.shape()
            )));
        }
        let c = w.data()[index];
        let value = ops::scale(&self.nodes[vector.0].value, c);
        Ok(self.push(
            value,
            Op::ScaleByIndex { weights: weights.0, index, vector: vector.0 },
        ))
    }

    /// Mean of equal-length vector nodes.
    pub fn mean(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(TapemError::Contract("mean of zero nodes".into()));
        }
        let mut acc = parts[0];
        for p in &parts[1..] {
            acc = self.add(acc, *p)?;
        }
        Ok(self.scale(acc, 1.0 / parts.len() as f64))
    }

    /// Inverted dropout: masks in training mode, identity otherwise.
    pub fn dropout<R: Rng>(
        &mut self,
        x: Var,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TapemError::Config(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let mask = ops::dropout_mask(self.nodes[x.0].value.len(), rate, rng)?;
        let mask = self.constant(Tensor::vector(mask));
        self.hadamard(x, mask)
    }

    /// Reverse pass from a 1-element loss node. Returns parameter gradients;
    /// gradients of non-parameter leaves are discarded.
    pub fn backward(&self, loss: Var) -> Result<GradMap> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(TapemError::Contract(
                "backward requires a 1-element loss node".into(),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out = GradMap::default();

        for i in (0..=loss.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[i].op {
                Op::Leaf { binding } => {
                    if let Some((pid, row)) = binding {
                        match row {
                            Some(r) => {
                                let slot = out
                                    .rows
                                    .entry((pid.0, *r))
                                    .or_insert_with(|| vec![0.0; g.len()]);
                                for (dst, src) in slot.iter_mut().zip(g.data()) {
                                    *dst += src;
                                }
                            }
                            None => match out.dense.entry(pid.0) {
                                std::collections::hash_map::Entry::Occupied(mut e) => {
                                    for (dst, src) in
                                        e.get_mut().data_mut().iter_mut().zip(g.data())
                                    {
                                        *dst += src;
                                    }
                                }
                                std::collections::hash_map::Entry::Vacant(e) => {
                                    e.insert(g);
                                }
                            },
                        }
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, &g);
                    accumulate(&mut grads, *b, &g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, &g);
                    let neg = ops::scale(&g, -1.0);
                    accumulate(&mut grads, *b, &neg);
                }
                Op::Hadamard(a, b) => {
                    let ga = ops::hadamard(&g, &self.nodes[*b].value)?;
                    let gb = ops::hadamard(&g, &self.nodes[*a].value)?;
                    accumulate(&mut grads, *a, &ga);
                    accumulate(&mut grads, *b, &gb);
                }
                Op::Scale(a, c) => {
                    let ga = ops::scale(&g, *c);
                    accumulate(&mut grads, *a, &ga);
                }
                Op::AddConst(a) => {
                    accumulate(&mut grads, *a, &g);
                }
                Op::MatVec(m, x) => {
                    let gm = ops::outer(&g, &self.nodes[*x].value)?;
                    let gx = ops::matvec_t(&self.nodes[*m].value, &g)?;
                    accumulate(&mut grads, *m, &gm);
                    accumulate(&mut grads, *x, &gx);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let n = self.nodes[*p].value.len();
                        let slice = Tensor::vector(g.data()[off..off + n].to_vec());
                        accumulate(&mut grads, *p, &slice);
                        off += n;
                    }
                }
                Op::Sigmoid(a) => {
                    let out_v = &self.nodes[i].value;
                    let data = g
                        .data()
                        .iter()
                        .zip(out_v.data())
                        .map(|(gi, oi)| gi * oi * (1.0 - oi))
                        .collect();
                    accumulate(&mut grads, *a, &Tensor::vector(data));
                }
                Op::Tanh(a) => {
                    let out_v = &self.nodes[i].value;
                    let data = g
                        .data()
                        .iter()
                        .zip(out_v.data())
                        .map(|(gi, oi)| gi * (1.0 - oi * oi))
                        .collect();
                    accumulate(&mut grads, *a, &Tensor::vector(data));
                }
                Op::Relu(a) => {
                    let inp = &self.nodes[*a].value;
                    let data = g
                        .data()
                        .iter()
                        .zip(inp.data())
                        .map(|(gi, xi)| if *xi > 0.0 { *gi } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *a, &Tensor::vector(data));
                }
                Op::Softmax(a) => {
                    let out_v = &self.nodes[i].value;
                    let inner: f64 = g
                        .data()
                        .iter()
                        .zip(out_v.data())
                        .map(|(gi, oi)| gi * oi)
                        .sum();
                    let data = g
                        .data()
                        .iter()
                        .zip(out_v.data())
                        .map(|(gi, oi)| oi * (gi - inner))
                        .collect();
                    accumulate(&mut grads, *a, &Tensor::vector(data));
                }
                Op::LogSigmoid(a) => {
                    let inp = &self.nodes[*a].value;
                    let data = g
                        .data()
                        .iter()
                        .zip(inp.data())
                        .map(|(gi, xi)| gi * ops::sigmoid(-xi))
                        .collect();
                    accumulate(&mut grads, *a, &Tensor::vector(data));
                }
                Op::Dot(a, b) => {
                    let s = g.data()[0];
                    let ga = ops::scale(&self.nodes[*b].value, s);
                    let gb = ops::scale(&self.nodes[*a].value, s);
                    accumulate(&mut grads, *a, &ga);
                    accumulate(&mut grads, *b, &gb);
                }
                Op::StackScalars(parts) => {
                    for (j, p) in parts.iter().enumerate() {
                        let gp = Tensor::scalar(g.data()[j]);
                        accumulate(&mut grads, *p, &gp);
                    }
                }
                Op::ScaleByIndex { weights, index, vector } => {
                    let w = self.nodes[*weights].value.data()[*index];
                    let gv = ops::scale(&g, w);
                    accumulate(&mut grads, *vector, &gv);
                    let gw_scalar = ops::dot(&g, &self.nodes[*vector].value)?;
                    let mut gw = Tensor::zeros(self.nodes[*weights].value.shape());
                    gw.data_mut()[*index] = gw_scalar;
                    accumulate(&mut grads, *weights, &gw);
                }
            }
        }
        Ok(out)
    }
}

fn accumulate(grads: &mut [Option<Tensor>], target: usize, g: &Tensor) {
    match &mut grads[target] {
        Some(existing) => {
            for (dst, src) in existing.data_mut().iter_mut().zip(g.data()) {
                *dst += src;
            }
        }
        slot @ None => *slot = Some(g.clone()),
    }
}
