//! Tape-based reverse-mode automatic differentiation.
//!
//! Every op appends a node whose parents have strictly smaller ids, so a
//! single reverse sweep over the node list visits each node after all of its
//! consumers.

use std::collections::HashMap;

use super::{Tensor, TensorError};
use crate::special;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Constant,
    Param,
    /// a[n,k] · b[m,k]ᵀ → [n,m]
    MatMulT(Var, Var),
    /// a[n,m] + b[m] broadcast over rows
    AddRow(Var, Var),
    /// a[n] repeated across `m` columns → [n,m]
    BroadcastCol(Var, usize),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Relu(Var),
    Exp(Var),
    Ln(Var),
    Sqrt(Var),
    Sigmoid(Var),
    Abs(Var),
    Clamp(Var, f64, f64),
    Digamma(Var),
    LnGamma(Var),
    /// ψ(a) − ψ(b)
    DigammaDiff(Var, Var),
    SoftmaxRows(Var),
    SumAll(Var),
    SumRows(Var),
    /// Row maxima; remembers the first argmax of each row.
    MaxRows(Var, Vec<usize>),
    /// Picks column `idx[i]` from row `i`.
    Gather(Var, Vec<usize>),
    /// ‖a_i − b_j‖² for a[n,d], b[m,d] → [n,m]
    SqDist(Var, Var),
    /// a_i − a_j for a[n] → [n,n]
    PairDiff(Var),
    /// a_i · b_j for a[n], b[m] → [n,m]
    Outer(Var, Var),
    /// w / max(1, uᵀwv / coeff) with u, v held constant.
    SpectralScale {
        w: Var,
        u: Vec<f64>,
        v: Vec<f64>,
        coeff: f64,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param => "param",
            Op::MatMulT(..) => "matmul_t",
            Op::AddRow(..) => "add_row",
            Op::BroadcastCol(..) => "broadcast_col",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Scale(..) => "scale",
            Op::Offset(..) => "offset",
            Op::Relu(..) => "relu",
            Op::Exp(..) => "exp",
            Op::Ln(..) => "ln",
            Op::Sqrt(..) => "sqrt",
            Op::Sigmoid(..) => "sigmoid",
            Op::Abs(..) => "abs",
            Op::Clamp(..) => "clamp",
            Op::Digamma(..) => "digamma",
            Op::LnGamma(..) => "ln_gamma",
            Op::DigammaDiff(..) => "digamma_diff",
            Op::SoftmaxRows(..) => "softmax",
            Op::SumAll(..) => "sum",
            Op::SumRows(..) => "sum_rows",
            Op::MaxRows(..) => "max_rows",
            Op::Gather(..) => "gather",
            Op::SqDist(..) => "sq_dist",
            Op::PairDiff(..) => "pair_diff",
            Op::Outer(..) => "outer",
            Op::SpectralScale { .. } => "spectral_scale",
        }
    }

    fn parents(&self) -> Vec<Var> {
        match self {
            Op::Constant | Op::Param => vec![],
            Op::MatMulT(a, b)
            | Op::AddRow(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::DigammaDiff(a, b)
            | Op::SqDist(a, b)
            | Op::Outer(a, b) => vec![*a, *b],
            Op::BroadcastCol(a, _)
            | Op::Scale(a, _)
            | Op::Offset(a)
            | Op::Relu(a)
            | Op::Exp(a)
            | Op::Ln(a)
            | Op::Sqrt(a)
            | Op::Sigmoid(a)
            | Op::Abs(a)
            | Op::Clamp(a, ..)
            | Op::Digamma(a)
            | Op::LnGamma(a)
            | Op::SoftmaxRows(a)
            | Op::SumAll(a)
            | Op::SumRows(a)
            | Op::MaxRows(a, _)
            | Op::Gather(a, _)
            | Op::PairDiff(a)
            | Op::SpectralScale { w: a, .. } => vec![*a],
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub(crate) op: Op,
    pub(crate) value: Tensor,
}

/// Recorded computation graph.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every parameter leaf of a tape.
#[derive(Debug, Clone)]
pub struct Gradients {
    by_param: HashMap<Var, Tensor>,
}

impl Gradients {
    /// Gradient for a parameter leaf. Parameters off the loss path have
    /// all-zero gradients.
    pub fn wrt(&self, param: Var) -> Option<&Tensor> {
        self.by_param.get(&param)
    }

    pub fn len(&self) -> usize {
        self.by_param.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_param.is_empty()
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(t: &Tensor) -> Result<Tensor, TensorError> {
    if !t.all_finite() {
        return Err(TensorError::NonFinite {
            node: None,
            op: "softmax",
        });
    }
    let (n, m) = (t.rows(), t.cols());
    let mut out = Vec::with_capacity(n * m);
    for i in 0..n {
        let row = t.row(i);
        let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&v| (v - mx).exp()).collect();
        let z: f64 = exps.iter().sum();
        out.extend(exps.into_iter().map(|e| e / z));
    }
    Tensor::new(t.shape().to_vec(), out)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(Op::Param, value)
    }

    /// Leaf that does not.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Constant, value)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::ShapeMismatch {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> TensorError {
        TensorError::ShapeMismatch {
            op,
            left: self.shape(a).to_vec(),
            right: self.shape(b).to_vec(),
        }
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).map(f);
        self.push(op, value)
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var, TensorError> {
        self.same_shape(name, a, b)?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(op, value))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (x, w) = (self.value(a), self.value(b));
        if !x.is_matrix() || !w.is_matrix() || x.cols() != w.cols() {
            return Err(self.mismatch("matmul_t", a, b));
        }
        let (n, k, m) = (x.rows(), x.cols(), w.rows());
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let xr = x.row(i);
            for j in 0..m {
                let wr = w.row(j);
                out[i * m + j] = xr.iter().zip(wr).map(|(p, q)| p * q).sum();
            }
        }
        let _ = k;
        let value = Tensor::matrix(n, m, out)?;
        Ok(self.push(Op::MatMulT(a, b), value))
    }

    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (x, bias) = (self.value(a), self.value(b));
        if !x.is_matrix() || bias.shape() != [x.cols()] {
            return Err(self.mismatch("add_row", a, b));
        }
        let m = x.cols();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v + bias.data()[i % m])
            .collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(Op::AddRow(a, b), value))
    }

    pub fn broadcast_col(&mut self, a: Var, m: usize) -> Result<Var, TensorError> {
        let x = self.value(a);
        if x.shape().len() != 1 {
            return Err(TensorError::BadShape(x.shape().to_vec()));
        }
        let n = x.len();
        let data = x.data().iter().flat_map(|&v| std::iter::repeat_n(v, m)).collect();
        let value = Tensor::matrix(n, m, data)?;
        Ok(self.push(Op::BroadcastCol(a, m), value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("add", a, b, Op::Add(a, b), |p, q| p + q)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("sub", a, b, Op::Sub(a, b), |p, q| p - q)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("mul", a, b, Op::Mul(a, b), |p, q| p * q)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("div", a, b, Op::Div(a, b), |p, q| p / q)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Scale(a, c), |v| v * c)
    }

    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Offset(a), |v| v + c)
    }

    /// `c − a`
    pub fn rsub(&mut self, c: f64, a: Var) -> Var {
        let neg = self.scale(a, -1.0);
        self.offset(neg, c)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |v| if v > 0.0 { v } else { 0.0 })
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, Op::Ln(a), f64::ln)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sqrt(a), f64::sqrt)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), stable_sigmoid)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, Op::Abs(a), f64::abs)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, Op::Clamp(a, lo, hi), |v| v.clamp(lo, hi))
    }

    pub fn digamma(&mut self, a: Var) -> Var {
        self.unary(a, Op::Digamma(a), special::digamma)
    }

    pub fn ln_gamma(&mut self, a: Var) -> Var {
        self.unary(a, Op::LnGamma(a), special::ln_gamma)
    }

    pub fn digamma_diff(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("digamma_diff", a, b, Op::DigammaDiff(a, b), special::digamma_diff)
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var, TensorError> {
        let value = softmax_rows(self.value(a))?;
        Ok(self.push(Op::SoftmaxRows(a), value))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Op::SumAll(a), Tensor::scalar(s))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    pub fn sum_rows(&mut self, a: Var) -> Result<Var, TensorError> {
        let x = self.value(a);
        if !x.is_matrix() {
            return Err(TensorError::BadShape(x.shape().to_vec()));
        }
        let data = (0..x.rows()).map(|i| x.row(i).iter().sum()).collect();
        let value = Tensor::vector(data);
        Ok(self.push(Op::SumRows(a), value))
    }

    pub fn max_rows(&mut self, a: Var) -> Result<Var, TensorError> {
        let x = self.value(a);
        if !x.is_matrix() {
            return Err(TensorError::BadShape(x.shape().to_vec()));
        }
        let mut arg = Vec::with_capacity(x.rows());
        let mut data = Vec::with_capacity(x.rows());
        for i in 0..x.rows() {
            let (j, v) = x
                .row(i)
                .iter()
                .copied()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |best, (j, v)| if v > best.1 { (j, v) } else { best },
                );
            arg.push(j);
            data.push(v);
        }
        let value = Tensor::vector(data);
        Ok(self.push(Op::MaxRows(a, arg), value))
    }

    pub fn gather(&mut self, a: Var, idx: &[usize]) -> Result<Var, TensorError> {
        let x = self.value(a);
        if !x.is_matrix() || idx.len() != x.rows() {
            return Err(TensorError::BadShape(x.shape().to_vec()));
        }
        if let Some(&bad) = idx.iter().find(|&&j| j >= x.cols()) {
            return Err(TensorError::IndexOutOfRange {
                index: bad,
                bound: x.cols(),
            });
        }
        let data = idx.iter().enumerate().map(|(i, &j)| x.at(i, j)).collect();
        let value = Tensor::vector(data);
        Ok(self.push(Op::Gather(a, idx.to_vec()), value))
    }

    pub fn sq_dist(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (x, p) = (self.value(a), self.value(b));
        if !x.is_matrix() || !p.is_matrix() || x.cols() != p.cols() {
            return Err(self.mismatch("sq_dist", a, b));
        }
        let (n, m) = (x.rows(), p.rows());
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            for j in 0..m {
                out.push(x.row(i).iter().zip(p.row(j)).map(|(s, t)| (s - t) * (s - t)).sum());
            }
        }
        let value = Tensor::matrix(n, m, out)?;
        Ok(self.push(Op::SqDist(a, b), value))
    }

    pub fn pair_diff(&mut self, a: Var) -> Result<Var, TensorError> {
        let x = self.value(a);
        if x.shape().len() != 1 {
            return Err(TensorError::BadShape(x.shape().to_vec()));
        }
        let n = x.len();
        let d = x.data();
        let out = (0..n * n).map(|k| d[k / n] - d[k % n]).collect();
        let value = Tensor::matrix(n, n, out)?;
        Ok(self.push(Op::PairDiff(a), value))
    }

    pub fn outer(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape().len() != 1 || y.shape().len() != 1 {
            return Err(self.mismatch("outer", a, b));
        }
        let (n, m) = (x.len(), y.len());
        let out = (0..n * m).map(|k| x.data()[k / m] * y.data()[k % m]).collect();
        let value = Tensor::matrix(n, m, out)?;
        Ok(self.push(Op::Outer(a, b), value))
    }

    /// Divides `w` by `max(1, uᵀwv / coeff)`; `u`, `v` are the singular-vector
    /// estimates and are not differentiated.
    pub fn spectral_scale(&mut self, w: Var, u: &[f64], v: &[f64], coeff: f64) -> Result<Var, TensorError> {
        let x = self.value(w);
        if !x.is_matrix() || u.len() != x.rows() || v.len() != x.cols() {
            return Err(TensorError::BadShape(x.shape().to_vec()));
        }
        let sigma = bilinear(x, u, v);
        let factor = (sigma / coeff).max(1.0);
        let value = x.map(|e| e / factor);
        Ok(self.push(
            Op::SpectralScale {
                w,
                u: u.to_vec(),
                v: v.to_vec(),
                coeff,
            },
            value,
        ))
    }

    /// Reverse sweep from a scalar node.
    pub fn backprop(&self, loss: Var) -> Result<Gradients, TensorError> {
        if loss.0 >= self.nodes.len() {
            return Err(TensorError::UnknownNode(loss.0));
        }
        if !self.value(loss).is_scalar() {
            return Err(TensorError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        for (id, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if node.op.parents().iter().any(|p| p.0 >= id) {
                return Err(TensorError::Cyclic(id));
            }
            if !node.value.all_finite() {
                return Err(TensorError::NonFinite {
                    node: Some(id),
                    op: node.op.name(),
                });
            }
        }

        let mut adj: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Tensor::filled(self.shape(loss), 1.0));

        for id in (0..=loss.0).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &self.nodes[id];
            for (parent, contrib) in self.local_grads(node, &g) {
                match &mut adj[parent.0] {
                    Some(acc) => {
                        for (a, c) in acc.data_mut().iter_mut().zip(contrib.data()) {
                            *a += c;
                        }
                    }
                    slot @ None => *slot = Some(contrib),
                }
            }
            if matches!(node.op, Op::Param) {
                adj[id] = Some(g);
            }
        }

        let by_param = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.op, Op::Param))
            .map(|(id, n)| {
                let g = adj
                    .get_mut(id)
                    .and_then(Option::take)
                    .unwrap_or_else(|| Tensor::zeros(n.value.shape()));
                (Var(id), g)
            })
            .collect();
        Ok(Gradients { by_param })
    }

    /// Vector-Jacobian products of one node into each of its parents.
    fn local_grads(&self, node: &Node, g: &Tensor) -> Vec<(Var, Tensor)> {
        let out = &node.value;
        let zip_map = |x: &Tensor, f: &dyn Fn(f64, f64, f64) -> f64| -> Tensor {
            let data = x
                .data()
                .iter()
                .zip(out.data())
                .zip(g.data())
                .map(|((&xv, &ov), &gv)| f(xv, ov, gv))
                .collect();
            Tensor::new(x.shape().to_vec(), data).expect("shape preserved")
        };
        match &node.op {
            Op::Constant | Op::Param => vec![],
            Op::MatMulT(a, b) => {
                let (x, w) = (self.value(*a), self.value(*b));
                let (n, k, m) = (x.rows(), x.cols(), w.rows());
                let mut gx = vec![0.0; n * k];
                let mut gw = vec![0.0; m * k];
                for i in 0..n {
                    for j in 0..m {
                        let gij = g.data()[i * m + j];
                        if gij == 0.0 {
                            continue;
                        }
                        for t in 0..k {
                            gx[i * k + t] += gij * w.data()[j * k + t];
                            gw[j * k + t] += gij * x.data()[i * k + t];
                        }
                    }
                }
                vec![
                    (*a, Tensor::matrix(n, k, gx).expect("shape")),
                    (*b, Tensor::matrix(m, k, gw).expect("shape")),
                ]
            }
            Op::AddRow(a, b) => {
                let m = out.cols();
                let mut gb = vec![0.0; m];
                for (i, v) in g.data().iter().enumerate() {
                    gb[i % m] += v;
                }
                vec![(*a, g.clone()), (*b, Tensor::vector(gb))]
            }
            Op::BroadcastCol(a, m) => {
                let n = self.value(*a).len();
                let data = (0..n).map(|i| g.data()[i * m..(i + 1) * m].iter().sum()).collect();
                vec![(*a, Tensor::vector(data))]
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|v| -v))],
            Op::Mul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                let ga = elementwise(g, y, |gv, yv| gv * yv);
                let gb = elementwise(g, x, |gv, xv| gv * xv);
                vec![(*a, ga), (*b, gb)]
            }
            Op::Div(a, b) => {
                let y = self.value(*b);
                let ga = elementwise(g, y, |gv, yv| gv / yv);
                let gb_data = g
                    .data()
                    .iter()
                    .zip(out.data())
                    .zip(y.data())
                    .map(|((&gv, &ov), &yv)| -gv * ov / yv)
                    .collect();
                vec![(*a, ga), (*b, Tensor::new(y.shape().to_vec(), gb_data).expect("shape"))]
            }
            Op::Scale(a, c) => vec![(*a, g.map(|v| v * c))],
            Op::Offset(a) => vec![(*a, g.clone())],
            Op::Relu(a) => {
                let x = self.value(*a);
                vec![(*a, zip_map(x, &|xv, _, gv| if xv > 0.0 { gv } else { 0.0 }))]
            }
            Op::Exp(a) => vec![(*a, zip_map(self.value(*a), &|_, ov, gv| gv * ov))],
            Op::Ln(a) => vec![(*a, zip_map(self.value(*a), &|xv, _, gv| gv / xv))],
            Op::Sqrt(a) => vec![(
                *a,
                zip_map(self.value(*a), &|_, ov, gv| if ov > 0.0 { gv * 0.5 / ov } else { 0.0 }),
            )],
            Op::Sigmoid(a) => vec![(*a, zip_map(self.value(*a), &|_, ov, gv| gv * ov * (1.0 - ov)))],
            Op::Abs(a) => vec![(*a, zip_map(self.value(*a), &|xv, _, gv| gv * sign0(xv)))],
            Op::Clamp(a, lo, hi) => vec![(
                *a,
                zip_map(self.value(*a), &|xv, _, gv| {
                    if xv >= *lo && xv <= *hi {
                        gv
                    } else {
                        0.0
                    }
                }),
            )],
            Op::Digamma(a) => vec![(*a, zip_map(self.value(*a), &|xv, _, gv| gv * special::trigamma(xv)))],
            Op::LnGamma(a) => vec![(*a, zip_map(self.value(*a), &|xv, _, gv| gv * special::digamma(xv)))],
            Op::DigammaDiff(a, b) => {
                let ga = zip_map(self.value(*a), &|xv, _, gv| gv * special::trigamma(xv));
                let gb = zip_map(self.value(*b), &|xv, _, gv| -gv * special::trigamma(xv));
                vec![(*a, ga), (*b, gb)]
            }
            Op::SoftmaxRows(a) => {
                let (n, m) = (out.rows(), out.cols());
                let mut data = vec![0.0; n * m];
                for i in 0..n {
                    let p = out.row(i);
                    let gr = &g.data()[i * m..(i + 1) * m];
                    let dot: f64 = p.iter().zip(gr).map(|(pv, gv)| pv * gv).sum();
                    for j in 0..m {
                        data[i * m + j] = p[j] * (gr[j] - dot);
                    }
                }
                vec![(*a, Tensor::new(out.shape().to_vec(), data).expect("shape"))]
            }
            Op::SumAll(a) => {
                let x = self.value(*a);
                vec![(*a, Tensor::filled(x.shape(), g.item()))]
            }
            Op::SumRows(a) => {
                let x = self.value(*a);
                let m = x.cols();
                let data = (0..x.len()).map(|k| g.data()[k / m]).collect();
                vec![(*a, Tensor::new(x.shape().to_vec(), data).expect("shape"))]
            }
            Op::MaxRows(a, arg) | Op::Gather(a, arg) => {
                let x = self.value(*a);
                let m = x.cols();
                let mut data = vec![0.0; x.len()];
                for (i, &j) in arg.iter().enumerate() {
                    data[i * m + j] = g.data()[i];
                }
                vec![(*a, Tensor::new(x.shape().to_vec(), data).expect("shape"))]
            }
            Op::SqDist(a, b) => {
                let (x, p) = (self.value(*a), self.value(*b));
                let (n, m, d) = (x.rows(), p.rows(), x.cols());
                let mut gx = vec![0.0; n * d];
                let mut gp = vec![0.0; m * d];
                for i in 0..n {
                    for j in 0..m {
                        let gij = g.data()[i * m + j];
                        for t in 0..d {
                            let diff = 2.0 * gij * (x.data()[i * d + t] - p.data()[j * d + t]);
                            gx[i * d + t] += diff;
                            gp[j * d + t] -= diff;
                        }
                    }
                }
                vec![
                    (*a, Tensor::matrix(n, d, gx).expect("shape")),
                    (*b, Tensor::matrix(m, d, gp).expect("shape")),
                ]
            }
            Op::PairDiff(a) => {
                let n = self.value(*a).len();
                let mut data = vec![0.0; n];
                for i in 0..n {
                    for j in 0..n {
                        let gij = g.data()[i * n + j];
                        data[i] += gij;
                        data[j] -= gij;
                    }
                }
                vec![(*a, Tensor::vector(data))]
            }
            Op::Outer(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                let (n, m) = (x.len(), y.len());
                let mut gx = vec![0.0; n];
                let mut gy = vec![0.0; m];
                for i in 0..n {
                    for j in 0..m {
                        let gij = g.data()[i * m + j];
                        gx[i] += gij * y.data()[j];
                        gy[j] += gij * x.data()[i];
                    }
                }
                vec![(*a, Tensor::vector(gx)), (*b, Tensor::vector(gy))]
            }
            Op::SpectralScale { w, u, v, coeff } => {
                let x = self.value(*w);
                let sigma = bilinear(x, u, v);
                if sigma / coeff <= 1.0 {
                    return vec![(*w, g.clone())];
                }
                // d/dW [c W / (uᵀWv)] applied to G: (c/σ) G − (c/σ²)⟨G, W⟩ u vᵀ
                let inner: f64 = g.data().iter().zip(x.data()).map(|(a, b)| a * b).sum();
                let (r, c) = (x.rows(), x.cols());
                let data = (0..r * c)
                    .map(|k| coeff / sigma * g.data()[k] - coeff * inner / (sigma * sigma) * u[k / c] * v[k % c])
                    .collect();
                vec![(*w, Tensor::matrix(r, c, data).expect("shape"))]
            }
        }
    }
}

fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("shape")
}

/// uᵀ W v
pub(crate) fn bilinear(w: &Tensor, u: &[f64], v: &[f64]) -> f64 {
    (0..w.rows())
        .map(|i| u[i] * w.row(i).iter().zip(v).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}
