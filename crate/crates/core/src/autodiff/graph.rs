//! Reverse-mode tape over [`Tensor`] values.
//!
//! A [`Graph`] records every operation as a node; node ids increase in
//! creation order, so a single backward sweep over the ids in reverse visits
//! each node once in topological order.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;

use super::params::ParamStore;
use super::tensor::{axis_split, matmul_acc, matmul_at_acc, matmul_bt_acc, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Pointwise nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    None,
    Relu,
    LeakyRelu(f64),
    Sigmoid,
    Tanh,
    /// Temporal saliency operator `G(s) = 1 / (1 + exp(s)) + 1`, range (1, 2).
    SaliencyGate,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::None => x,
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu(a) => {
                if x > 0.0 {
                    x
                } else {
                    a * x
                }
            }
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::SaliencyGate => sigmoid(-x) + 1.0,
        }
    }

    /// Derivative given the input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::None => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(a) => {
                if x > 0.0 {
                    1.0
                } else {
                    a
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::SaliencyGate => {
                let s = y - 1.0;
                -s * (1.0 - s)
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulScalar(Var, Var),
    Scale(Var, f64),
    Map(Var, Activation),
    MaskMul(Var, Arc<Vec<f64>>),
    Softmax(Var, usize),
    SumAxis(Var, usize),
    SumAll(Var),
    MaxRows(Var, Vec<usize>),
    Concat(Vec<Var>),
    GatherRows(Var, Arc<Vec<usize>>),
    Reshape(Var),
    WeightedNll {
        probs: Var,
        labels: Arc<Vec<usize>>,
        weights: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    param: Option<String>,
}

/// Gradients of a scalar with respect to named parameters.
pub type GradMap = BTreeMap<String, Tensor>;

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn same_shape(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "{op}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        debug_assert!(value.all_finite(), "non-finite value from {op:?}");
        self.nodes.push(Node {
            value,
            op,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// A constant input.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// A leaf bound to parameter `name`; its gradient is reported by
    /// [`backward`](Self::backward).
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        let t = store
            .get(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter `{name}`")))?
            .clone();
        let v = self.push(t, Op::Leaf);
        self.nodes[v.0].param = Some(name.to_string());
        Ok(v)
    }

    /// `x[.., k] · w[k, n]`, applied over all leading axes.
    pub fn matmul(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xt, wt) = (self.value(x), self.value(w));
        if wt.shape().len() != 2 || xt.cols() != wt.shape()[0] {
            return Err(Error::shape(format!(
                "matmul: x {:?} · w {:?}",
                xt.shape(),
                wt.shape()
            )));
        }
        let (rows, k, n) = (xt.rows(), xt.cols(), wt.shape()[1]);
        let mut out = vec![0.0; rows * n];
        matmul_acc(xt.data(), wt.data(), &mut out, rows, k, n);
        let mut shape = xt.shape().to_vec();
        *shape.last_mut().unwrap() = n;
        Ok(self.push(Tensor::from_parts(shape, out), Op::MatMul(x, w)))
    }

    /// Adds a `[d]` bias to every row of `x[.., d]`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xt, bt) = (self.value(x), self.value(b));
        if bt.numel() != xt.cols() {
            return Err(Error::shape(format!(
                "bias {:?} for input {:?}",
                bt.shape(),
                xt.shape()
            )));
        }
        let c = xt.cols();
        let mut out = xt.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += bt.data()[i % c];
        }
        Ok(self.push(out, Op::AddBias(x, b)))
    }

    /// Shared-MLP layer: `act(x · w + b)` on the last axis.
    pub fn dense(&mut self, x: Var, w: Var, b: Var, act: Activation) -> Result<Var> {
        let y = self.matmul(x, w)?;
        let y = self.add_bias(y, b)?;
        Ok(self.map(y, act))
    }

    /// [`dense`](Self::dense) with weights `<prefix>.w` and bias `<prefix>.b`.
    pub fn dense_named(&mut self, store: &ParamStore, prefix: &str, x: Var, act: Activation) -> Result<Var> {
        let w = self.param(store, &format!("{prefix}.w"))?;
        let b = self.param(store, &format!("{prefix}.b"))?;
        self.dense(x, w, b, act)
    }

    fn binary(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (at, bt) = (self.value(a), self.value(b));
        same_shape(name, at, bt)?;
        let data = at.data().iter().zip(bt.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok(Tensor::from_parts(at.shape().to_vec(), data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    /// Multiplies every entry of `x` by the one-element tensor `s`.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        let sv = self.value(s).item()?;
        let t = self.value(x).map(|v| v * sv);
        Ok(self.push(t, Op::MulScalar(x, s)))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let t = self.value(x).map(|v| v * k);
        self.push(t, Op::Scale(x, k))
    }

    pub fn map(&mut self, x: Var, act: Activation) -> Var {
        if act == Activation::None {
            return x;
        }
        let t = self.value(x).map(|v| act.apply(v));
        self.push(t, Op::Map(x, act))
    }

    /// Elementwise product with a constant mask of the same size.
    pub fn mask_mul(&mut self, x: Var, mask: Vec<f64>) -> Result<Var> {
        let xt = self.value(x);
        if mask.len() != xt.numel() {
            return Err(Error::shape(format!(
                "mask of {} for {:?}",
                mask.len(),
                xt.shape()
            )));
        }
        let data = xt.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let t = Tensor::from_parts(xt.shape().to_vec(), data);
        Ok(self.push(t, Op::MaskMul(x, Arc::new(mask))))
    }

    /// Inverted dropout: zeroes entries with probability `rate` and rescales
    /// survivors by `1 / (1 − rate)`.
    pub fn dropout(&mut self, x: Var, rate: f64, rng: &mut impl Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate {rate} not in [0, 1)")));
        }
        let keep = 1.0 - rate;
        let mask = (0..self.value(x).numel())
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        self.mask_mul(x, mask)
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let xt = self.value(x);
        if axis >= xt.shape().len() {
            return Err(Error::invalid(format!(
                "softmax axis {axis} for shape {:?}",
                xt.shape()
            )));
        }
        let (outer, len, inner) = axis_split(xt.shape(), axis);
        let mut out = xt.clone();
        let d = out.data_mut();
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| o * len * inner + k * inner + i;
                let m = (0..len).map(|k| d[at(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for k in 0..len {
                    let e = (d[at(k)] - m).exp();
                    d[at(k)] = e;
                    sum += e;
                }
                for k in 0..len {
                    d[at(k)] /= sum;
                }
            }
        }
        Ok(self.push(out, Op::Softmax(x, axis)))
    }

    /// Sums out `axis`.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let xt = self.value(x);
        if axis >= xt.shape().len() {
            return Err(Error::invalid(format!("sum axis {axis} for {:?}", xt.shape())));
        }
        let (outer, len, inner) = axis_split(xt.shape(), axis);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..len {
                for i in 0..inner {
                    out[o * inner + i] += xt.data()[o * len * inner + k * inner + i];
                }
            }
        }
        let mut shape = xt.shape().to_vec();
        shape.remove(axis);
        Ok(self.push(Tensor::from_parts(shape, out), Op::SumAxis(x, axis)))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(x))
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.value(x).numel().max(1) as f64;
        let s = self.sum_all(x);
        self.scale(s, 1.0 / n)
    }

    /// Column-wise maximum of `x[N, D]`, giving `[D]`. The gradient goes to the
    /// first row attaining each maximum.
    pub fn max_pool_rows(&mut self, x: Var) -> Result<Var> {
        let xt = self.value(x);
        if xt.shape().len() != 2 || xt.rows() == 0 {
            return Err(Error::invalid(format!(
                "max pooling needs a non-empty [N, D] input, got {:?}",
                xt.shape()
            )));
        }
        let (n, d) = (xt.rows(), xt.cols());
        let mut arg = vec![0usize; d];
        let mut out = xt.row(0).to_vec();
        for r in 1..n {
            for (c, &v) in xt.row(r).iter().enumerate() {
                if v > out[c] {
                    out[c] = v;
                    arg[c] = r;
                }
            }
        }
        Ok(self.push(Tensor::from_parts(vec![d], out), Op::MaxRows(x, arg)))
    }

    /// Concatenates along the last axis; leading shapes must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat of nothing"))?;
        let lead = self.value(*first).shape().split_last().map(|(_, l)| l.to_vec()).unwrap_or_default();
        for &p in parts {
            let s = self.value(p).shape();
            if s.len() != lead.len() + 1 || s[..lead.len()] != lead[..] {
                return Err(Error::shape(format!(
                    "concat: {:?} vs leading {lead:?}",
                    s
                )));
            }
        }
        let rows = self.value(*first).rows();
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; rows * total];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.value(p).data();
            for r in 0..rows {
                out[r * total + off..r * total + off + w].copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            off += w;
        }
        let mut shape = lead;
        shape.push(total);
        Ok(self.push(Tensor::from_parts(shape, out), Op::Concat(parts.to_vec())))
    }

    /// Selects rows of the `[rows, cols]` view of `x`; result is `[idx.len(), cols]`.
    pub fn gather_rows(&mut self, x: Var, idx: Arc<Vec<usize>>) -> Result<Var> {
        let xt = self.value(x);
        let (rows, cols) = (xt.rows(), xt.cols());
        let mut out = Vec::with_capacity(idx.len() * cols);
        for &i in idx.iter() {
            if i >= rows {
                return Err(Error::invalid(format!("gather index {i} >= {rows}")));
            }
            out.extend_from_slice(xt.row(i));
        }
        let t = Tensor::from_parts(vec![idx.len(), cols], out);
        Ok(self.push(t, Op::GatherRows(x, idx)))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape.to_vec())?;
        Ok(self.push(t, Op::Reshape(x)))
    }

    /// `−(1/N) Σ_i w[label_i] · ln p[i, label_i]` for row-stochastic `probs[N, C]`.
    pub fn weighted_nll(&mut self, probs: Var, labels: Arc<Vec<usize>>, weights: Vec<f64>) -> Result<Var> {
        let pt = self.value(probs);
        if pt.rows() != labels.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} prediction rows",
                labels.len(),
                pt.rows()
            )));
        }
        let c = pt.cols();
        if weights.len() != c || labels.iter().any(|&l| l >= c) {
            return Err(Error::invalid("class weights or labels do not match class count"));
        }
        let n = labels.len().max(1) as f64;
        let loss = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| -weights[l] * pt.row(i)[l].max(1e-300).ln())
            .sum::<f64>()
            / n;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::WeightedNll {
                probs,
                labels,
                weights,
            },
        ))
    }

    /// Gradients of every node with respect to the scalar `loss`.
    pub fn node_gradients(&self, loss: Var) -> Result<Vec<Option<Tensor>>> {
        let lt = self.value(loss);
        if lt.numel() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lt.shape().to_vec(), 1.0));
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(grads)
    }

    /// Back-propagates from `loss`; returns one gradient per bound parameter
    /// name (zero for parameters the loss does not reach).
    pub fn backward(&self, loss: Var) -> Result<GradMap> {
        let grads = self.node_gradients(loss)?;
        let mut out = GradMap::new();
        for (id, node) in self.nodes.iter().enumerate() {
            let Some(name) = &node.param else { continue };
            let entry = out
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(node.value.shape().to_vec()));
            if let Some(Some(g)) = grads.get(id) {
                entry.add_assign(g);
            }
        }
        Ok(out)
    }

    fn propagate(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[id];
        let mut acc = |v: Var, delta: Tensor| match &mut grads[v.0] {
            Some(t) => t.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        };
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(x, w) => {
                let (xt, wt) = (self.value(*x), self.value(*w));
                let (rows, k, n) = (xt.rows(), xt.cols(), wt.shape()[1]);
                let mut dx = vec![0.0; rows * k];
                matmul_bt_acc(gd, wt.data(), &mut dx, rows, n, k);
                let mut dw = vec![0.0; k * n];
                matmul_at_acc(xt.data(), gd, &mut dw, rows, k, n);
                acc(*x, Tensor::from_parts(xt.shape().to_vec(), dx));
                acc(*w, Tensor::from_parts(wt.shape().to_vec(), dw));
            }
            Op::AddBias(x, b) => {
                let bt = self.value(*b);
                let c = bt.numel();
                let mut db = vec![0.0; c];
                for (i, v) in gd.iter().enumerate() {
                    db[i % c] += v;
                }
                acc(*x, g.clone());
                acc(*b, Tensor::from_parts(bt.shape().to_vec(), db));
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (at, bt) = (self.value(*a), self.value(*b));
                let da = gd.iter().zip(bt.data()).map(|(g, y)| g * y).collect();
                let db = gd.iter().zip(at.data()).map(|(g, x)| g * x).collect();
                acc(*a, Tensor::from_parts(at.shape().to_vec(), da));
                acc(*b, Tensor::from_parts(bt.shape().to_vec(), db));
            }
            Op::MulScalar(x, s) => {
                let (xt, st) = (self.value(*x), self.value(*s));
                let sv = st.data()[0];
                let ds: f64 = gd.iter().zip(xt.data()).map(|(g, x)| g * x).sum();
                acc(*x, g.map(|v| v * sv));
                acc(*s, Tensor::from_parts(st.shape().to_vec(), vec![ds]));
            }
            Op::Scale(x, k) => acc(*x, g.map(|v| v * k)),
            Op::Map(x, act) => {
                let xt = self.value(*x);
                let yt = &node.value;
                let d = gd
                    .iter()
                    .zip(xt.data().iter().zip(yt.data()))
                    .map(|(g, (&x, &y))| g * act.derivative(x, y))
                    .collect();
                acc(*x, Tensor::from_parts(xt.shape().to_vec(), d));
            }
            Op::MaskMul(x, mask) => {
                let d = gd.iter().zip(mask.iter()).map(|(g, m)| g * m).collect();
                acc(*x, Tensor::from_parts(g.shape().to_vec(), d));
            }
            Op::Softmax(x, axis) => {
                let y = node.value.data();
                let (outer, len, inner) = axis_split(node.value.shape(), *axis);
                let mut dx = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |k: usize| o * len * inner + k * inner + i;
                        let dot: f64 = (0..len).map(|k| gd[at(k)] * y[at(k)]).sum();
                        for k in 0..len {
                            dx[at(k)] = y[at(k)] * (gd[at(k)] - dot);
                        }
                    }
                }
                acc(*x, Tensor::from_parts(node.value.shape().to_vec(), dx));
            }
            Op::SumAxis(x, axis) => {
                let xs = self.value(*x).shape().to_vec();
                let (outer, len, inner) = axis_split(&xs, *axis);
                let mut dx = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    for k in 0..len {
                        for i in 0..inner {
                            dx[o * len * inner + k * inner + i] = gd[o * inner + i];
                        }
                    }
                }
                acc(*x, Tensor::from_parts(xs, dx));
            }
            Op::SumAll(x) => {
                let xs = self.value(*x).shape().to_vec();
                acc(*x, Tensor::full(xs, gd[0]));
            }
            Op::MaxRows(x, arg) => {
                let xt = self.value(*x);
                let d = xt.cols();
                let mut dx = vec![0.0; xt.numel()];
                for (c, &r) in arg.iter().enumerate() {
                    dx[r * d + c] += gd[c];
                }
                acc(*x, Tensor::from_parts(xt.shape().to_vec(), dx));
            }
            Op::Concat(parts) => {
                let total = node.value.cols();
                let rows = node.value.rows();
                let mut off = 0;
                for &p in parts {
                    let pt = self.value(p);
                    let w = pt.cols();
                    let mut dp = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        dp.extend_from_slice(&gd[r * total + off..r * total + off + w]);
                    }
                    acc(p, Tensor::from_parts(pt.shape().to_vec(), dp));
                    off += w;
                }
            }
            Op::GatherRows(x, idx) => {
                let xt = self.value(*x);
                let cols = xt.cols();
                let mut dx = vec![0.0; xt.numel()];
                for (r, &i) in idx.iter().enumerate() {
                    for c in 0..cols {
                        dx[i * cols + c] += gd[r * cols + c];
                    }
                }
                acc(*x, Tensor::from_parts(xt.shape().to_vec(), dx));
            }
            Op::Reshape(x) => {
                let xs = self.value(*x).shape().to_vec();
                acc(*x, Tensor::from_parts(xs, gd.to_vec()));
            }
            Op::WeightedNll {
                probs,
                labels,
                weights,
            } => {
                let pt = self.value(*probs);
                let c = pt.cols();
                let n = labels.len().max(1) as f64;
                let mut dp = vec![0.0; pt.numel()];
                for (i, &l) in labels.iter().enumerate() {
                    let p = pt.row(i)[l].max(1e-300);
                    dp[i * c + l] = -gd[0] * weights[l] / (n * p);
                }
                acc(*probs, Tensor::from_parts(pt.shape().to_vec(), dp));
            }
        }
    }
}
