//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every primitive in execution order, so the node list is
//! already topologically sorted and the backward sweep is a single reverse
//! pass. Parameters enter the tape through [`Tape::param`]; frozen parameters
//! are recorded as constants and never receive an adjoint.

use std::collections::HashMap;
use std::sync::Arc;

use super::params::{Gradients, ParamId, ParameterStore};
use super::tensor::{gemm, Tensor};
use super::NumericError;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Axis selector for matrix-valued primitives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Along the row index (stack vertically, normalize down each column).
    Rows,
    /// Along the column index (stack horizontally, normalize across each row).
    Cols,
}

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Abs(Var),
    Softplus(Var),
    ClampMin(Var, f64),
    Softmax(Var, Axis),
    Concat(Vec<Var>, Axis),
    Slice(Var, Axis, usize),
    RowSum(Var),
    Sum(Var),
    MaxPool(Var, Vec<usize>),
    Gather(Var, Vec<usize>),
    Reshape(Var),
    RowNormalize(Var, f64),
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    non_finite: Option<&'static str>,
}

type OpResult = Result<Var, NumericError>;

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> NumericError {
    NumericError::Shape {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
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

    /// First primitive that produced a non-finite value, if any.
    pub fn check_finite(&self) -> Result<(), NumericError> {
        match self.non_finite {
            Some(op) => Err(NumericError::NonFinite { op }),
            None => Ok(()),
        }
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        if self.non_finite.is_none() && !value.all_finite() {
            self.non_finite = Some(op_name(&op));
        }
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Binds a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let value = store.value_arc(id);
        let frozen = store.is_frozen(id);
        let op = if frozen { Op::Constant } else { Op::Param(id) };
        if self.non_finite.is_none() && !value.all_finite() {
            self.non_finite = Some("param");
        }
        self.nodes.push(Node {
            value,
            op,
            needs_grad: !frozen,
        });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> OpResult {
        let out = self.value(a).matmul(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let ng = self.ng(a);
        self.push(out, Op::Transpose(a), ng)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), NumericError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() || ta.cols() != tb.cols() {
            return Err(shape_err(op, ta, tb));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> OpResult {
        self.same_shape("add", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> OpResult {
        self.same_shape("sub", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> OpResult {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    fn row_broadcast(
        &mut self,
        op: &'static str,
        a: Var,
        row: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, NumericError> {
        let (ta, tr) = (self.value(a), self.value(row));
        if tr.rows() != 1 || tr.cols() != ta.cols() {
            return Err(shape_err(op, ta, tr));
        }
        let c = ta.cols();
        let mut out = ta.clone();
        let r = tr.data();
        for chunk in out.data_mut().chunks_mut(c.max(1)) {
            for (x, &y) in chunk.iter_mut().zip(r) {
                *x = f(*x, y);
            }
        }
        Ok(out)
    }

    /// `a + row`, broadcasting a 1×n row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> OpResult {
        let out = self.row_broadcast("add_row", a, row, |x, y| x + y)?;
        let ng = self.ng(a) || self.ng(row);
        Ok(self.push(out, Op::AddRow(a, row), ng))
    }

    /// `a ⊙ row`, broadcasting a 1×n row over every row of `a`.
    pub fn mul_row(&mut self, a: Var, row: Var) -> OpResult {
        let out = self.row_broadcast("mul_row", a, row, |x, y| x * y)?;
        let ng = self.ng(a) || self.ng(row);
        Ok(self.push(out, Op::MulRow(a, row), ng))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x * c);
        let ng = self.ng(a);
        self.push(out, Op::Scale(a, c), ng)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x + c);
        let ng = self.ng(a);
        self.push(out, Op::AddScalar(a), ng)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(a).map(f);
        let ng = self.ng(a);
        self.push(out, op, ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, f64::abs, Op::Abs(a))
    }

    /// `log(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, softplus, Op::Softplus(a))
    }

    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Var {
        self.unary(a, |x| x.max(floor), Op::ClampMin(a, floor))
    }

    /// Softmax along `axis` with max-subtraction.
    pub fn softmax(&mut self, a: Var, axis: Axis) -> Var {
        let t = self.value(a);
        let out = match axis {
            Axis::Cols => softmax_rows(t),
            Axis::Rows => softmax_rows(&t.transpose()).transpose(),
        };
        let out = Tensor::new(t.shape().to_vec(), out.into_data()).expect("same size");
        let ng = self.ng(a);
        self.push(out, Op::Softmax(a, axis), ng)
    }

    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> OpResult {
        assert!(!parts.is_empty(), "concat of zero tensors");
        let first = self.value(parts[0]);
        let out = match axis {
            Axis::Cols => {
                let rows = first.rows();
                let mut total = 0;
                for &p in parts {
                    let t = self.value(p);
                    if t.rows() != rows {
                        return Err(shape_err("concat", first, t));
                    }
                    total += t.cols();
                }
                let mut data = Vec::with_capacity(rows * total);
                for r in 0..rows {
                    for &p in parts {
                        data.extend_from_slice(self.value(p).row(r));
                    }
                }
                Tensor::matrix(rows, total, data)
            }
            Axis::Rows => {
                let cols = first.cols();
                let mut rows = 0;
                let mut data = Vec::new();
                for &p in parts {
                    let t = self.value(p);
                    if t.cols() != cols {
                        return Err(shape_err("concat", first, t));
                    }
                    rows += t.rows();
                    data.extend_from_slice(t.data());
                }
                Tensor::matrix(rows, cols, data)
            }
        };
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(out, Op::Concat(parts.to_vec(), axis), ng))
    }

    /// Half-open slice `[start, end)` along `axis`.
    pub fn slice(&mut self, a: Var, axis: Axis, start: usize, end: usize) -> OpResult {
        let t = self.value(a);
        let (r, c) = (t.rows(), t.cols());
        let limit = if axis == Axis::Rows { r } else { c };
        if start > end || end > limit {
            return Err(NumericError::Slice {
                shape: t.shape().to_vec(),
                start,
                end,
            });
        }
        let out = match axis {
            Axis::Rows => Tensor::matrix(end - start, c, t.data()[start * c..end * c].to_vec()),
            Axis::Cols => {
                let mut data = Vec::with_capacity(r * (end - start));
                for i in 0..r {
                    data.extend_from_slice(&t.row(i)[start..end]);
                }
                Tensor::matrix(r, end - start, data)
            }
        };
        let ng = self.ng(a);
        Ok(self.push(out, Op::Slice(a, axis, start), ng))
    }

    /// Sum across each row, giving an N×1 column.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data: Vec<f64> = (0..t.rows()).map(|i| t.row(i).iter().sum()).collect();
        let out = Tensor::matrix(t.rows(), 1, data);
        let ng = self.ng(a);
        self.push(out, Op::RowSum(a), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let ng = self.ng(a);
        self.push(out, Op::Sum(a), ng)
    }

    /// Column-wise max over the token (row) axis. Ties go to the lowest row.
    pub fn max_pool(&mut self, a: Var) -> OpResult {
        let t = self.value(a);
        if t.rows() == 0 {
            return Err(NumericError::Empty { op: "max_pool" });
        }
        let c = t.cols();
        let mut best = t.row(0).to_vec();
        let mut arg = vec![0usize; c];
        for i in 1..t.rows() {
            for (j, &x) in t.row(i).iter().enumerate() {
                if x > best[j] {
                    best[j] = x;
                    arg[j] = i;
                }
            }
        }
        let out = Tensor::matrix(1, c, best);
        let ng = self.ng(a);
        Ok(self.push(out, Op::MaxPool(a, arg), ng))
    }

    /// Row gather: output row r is `table[indices[r]]`.
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> OpResult {
        let t = self.value(table);
        let c = t.cols();
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            if i >= t.rows() {
                return Err(NumericError::Index {
                    op: "gather",
                    index: i,
                    len: t.rows(),
                });
            }
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor::matrix(indices.len(), c, data);
        let ng = self.ng(table);
        Ok(self.push(out, Op::Gather(table, indices.to_vec()), ng))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> OpResult {
        let out = self.value(a).reshaped(shape)?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::Reshape(a), ng))
    }

    /// Divides each row by `max(row_sum, eps)`.
    pub fn row_normalize(&mut self, a: Var, eps: f64) -> Var {
        let mut out = self.value(a).clone();
        let c = out.cols().max(1);
        for row in out.data_mut().chunks_mut(c) {
            let s: f64 = row.iter().sum();
            let d = s.max(eps);
            for x in row.iter_mut() {
                *x /= d;
            }
        }
        let ng = self.ng(a);
        self.push(out, Op::RowNormalize(a, eps), ng)
    }

    /// Reverse sweep from a scalar node, returning parameter gradients.
    pub fn backward(&self, loss: Var, store: &ParameterStore) -> Result<Gradients, NumericError> {
        self.check_finite()?;
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(NumericError::NotScalar {
                shape: lv.shape().to_vec(),
            });
        }
        let mut adj: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(Tensor::new(lv.shape().to_vec(), vec![1.0]).expect("scalar"));
        let mut grads = Gradients::zeros_like(store);

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            self.propagate(&node.op, &node.value, g, &mut adj, &mut grads);
        }
        Ok(grads)
    }

    /// Adjoint buffer for `v`, zero-filled on first use.
    fn adj_slot<'s>(&self, adj: &'s mut [Option<Tensor>], v: Var) -> &'s mut Tensor {
        adj[v.0].get_or_insert_with(|| Tensor::zeros(self.value(v).shape()))
    }

    fn accumulate(&self, adj: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.ng(v) {
            return;
        }
        match &mut adj[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => {
                let shape = self.value(v).shape().to_vec();
                *slot = Some(Tensor::new(shape, g.into_data()).expect("adjoint size"));
            }
        }
    }

    fn propagate(
        &self,
        op: &Op,
        out: &Tensor,
        g: Tensor,
        adj: &mut [Option<Tensor>],
        grads: &mut Gradients,
    ) {
        match *op {
            Op::Constant => {}
            Op::Param(id) => grads.add(id, &g),
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.ng(a) {
                    // dA += dC · Bᵀ
                    let da = self.adj_slot(adj, a);
                    gemm(m, n, k, g.data(), (n as isize, 1), tb.data(), (1, n as isize), da.data_mut(), 1.0);
                }
                if self.ng(b) {
                    // dB += Aᵀ · dC
                    let db = self.adj_slot(adj, b);
                    gemm(k, m, n, ta.data(), (1, k as isize), g.data(), (n as isize, 1), db.data_mut(), 1.0);
                }
            }
            Op::Transpose(a) => self.accumulate(adj, a, g.transpose()),
            Op::Add(a, b) => {
                if self.ng(b) {
                    self.accumulate(adj, b, g.clone());
                }
                self.accumulate(adj, a, g);
            }
            Op::Sub(a, b) => {
                if self.ng(b) {
                    self.accumulate(adj, b, g.map(|x| -x));
                }
                self.accumulate(adj, a, g);
            }
            Op::Mul(a, b) => {
                if self.ng(a) {
                    self.accumulate(adj, a, g.zip_map(self.value(b), |x, y| x * y));
                }
                if self.ng(b) {
                    self.accumulate(adj, b, g.zip_map(self.value(a), |x, y| x * y));
                }
            }
            Op::AddRow(a, row) => {
                if self.ng(row) {
                    self.accumulate(adj, row, col_sums(&g));
                }
                self.accumulate(adj, a, g);
            }
            Op::MulRow(a, row) => {
                let tr = self.value(row);
                if self.ng(row) {
                    let prod = g.zip_map(self.value(a), |x, y| x * y);
                    self.accumulate(adj, row, col_sums(&prod));
                }
                if self.ng(a) {
                    let c = g.cols().max(1);
                    let mut ga = g;
                    for chunk in ga.data_mut().chunks_mut(c) {
                        for (x, &y) in chunk.iter_mut().zip(tr.data()) {
                            *x *= y;
                        }
                    }
                    self.accumulate(adj, a, ga);
                }
            }
            Op::Scale(a, c) => self.accumulate(adj, a, g.map(|x| x * c)),
            Op::AddScalar(a) => self.accumulate(adj, a, g),
            Op::Sigmoid(a) => self.accumulate(adj, a, g.zip_map(out, |d, y| d * y * (1.0 - y))),
            Op::Tanh(a) => self.accumulate(adj, a, g.zip_map(out, |d, y| d * (1.0 - y * y))),
            Op::Relu(a) => {
                let x = self.value(a);
                self.accumulate(adj, a, g.zip_map(x, |d, x| if x > 0.0 { d } else { 0.0 }))
            }
            Op::Exp(a) => self.accumulate(adj, a, g.zip_map(out, |d, y| d * y)),
            Op::Log(a) => {
                let x = self.value(a);
                self.accumulate(adj, a, g.zip_map(x, |d, x| d / x))
            }
            Op::Abs(a) => {
                let x = self.value(a);
                let f = |d: f64, x: f64| {
                    if x > 0.0 {
                        d
                    } else if x < 0.0 {
                        -d
                    } else {
                        0.0
                    }
                };
                self.accumulate(adj, a, g.zip_map(x, f))
            }
            Op::Softplus(a) => {
                let x = self.value(a);
                self.accumulate(adj, a, g.zip_map(x, |d, x| d * sigmoid(x)))
            }
            Op::ClampMin(a, floor) => {
                let x = self.value(a);
                self.accumulate(adj, a, g.zip_map(x, |d, x| if x >= floor { d } else { 0.0 }))
            }
            Op::Softmax(a, axis) => {
                let ga = match axis {
                    Axis::Cols => softmax_backward_rows(out, &g),
                    Axis::Rows => softmax_backward_rows(&out.transpose(), &g.transpose()).transpose(),
                };
                self.accumulate(adj, a, ga)
            }
            Op::Concat(ref parts, axis) => {
                let mut offset = 0;
                for &p in parts {
                    let tp = self.value(p);
                    let (r, c) = (tp.rows(), tp.cols());
                    if self.ng(p) {
                        let piece = match axis {
                            Axis::Cols => {
                                let mut data = Vec::with_capacity(r * c);
                                for i in 0..r {
                                    data.extend_from_slice(&g.row(i)[offset..offset + c]);
                                }
                                Tensor::matrix(r, c, data)
                            }
                            Axis::Rows => {
                                let gc = g.cols();
                                Tensor::matrix(r, c, g.data()[offset * gc..(offset + r) * gc].to_vec())
                            }
                        };
                        self.accumulate(adj, p, piece);
                    }
                    offset += if axis == Axis::Cols { c } else { r };
                }
            }
            Op::Slice(a, axis, start) => {
                if !self.ng(a) {
                    return;
                }
                let full = self.adj_slot(adj, a);
                let c = full.cols();
                match axis {
                    Axis::Rows => add_into(&mut full.data_mut()[start * c..start * c + g.len()], g.data()),
                    Axis::Cols => {
                        let w = g.cols();
                        for i in 0..g.rows() {
                            add_into(&mut full.data_mut()[i * c + start..i * c + start + w], g.row(i));
                        }
                    }
                }
            }
            Op::RowSum(a) => {
                let ta = self.value(a);
                let (r, c) = (ta.rows(), ta.cols());
                let mut full = Tensor::zeros(&[r, c]);
                for i in 0..r {
                    let gi = g.data()[i];
                    full.data_mut()[i * c..(i + 1) * c].fill(gi);
                }
                self.accumulate(adj, a, full)
            }
            Op::Sum(a) => {
                let ta = self.value(a);
                self.accumulate(adj, a, Tensor::filled(ta.shape(), g.item()))
            }
            Op::MaxPool(a, ref arg) => {
                if !self.ng(a) {
                    return;
                }
                let full = self.adj_slot(adj, a);
                let c = full.cols();
                for (j, &i) in arg.iter().enumerate() {
                    full.data_mut()[i * c + j] += g.data()[j];
                }
            }
            Op::Gather(table, ref indices) => {
                if !self.ng(table) {
                    return;
                }
                let full = self.adj_slot(adj, table);
                let c = full.cols();
                for (r, &i) in indices.iter().enumerate() {
                    add_into(&mut full.data_mut()[i * c..(i + 1) * c], g.row(r));
                }
            }
            Op::Reshape(a) => self.accumulate(adj, a, g),
            Op::RowNormalize(a, eps) => {
                let ta = self.value(a);
                let c = ta.cols().max(1);
                let mut ga = g;
                for (grow, xrow) in ga.data_mut().chunks_mut(c).zip(ta.data().chunks(c)) {
                    let s: f64 = xrow.iter().sum();
                    let d = s.max(eps);
                    let dot = if s > eps {
                        grow.iter().zip(xrow).map(|(g, x)| g * x).sum::<f64>() / (d * d)
                    } else {
                        0.0
                    };
                    for gx in grow.iter_mut() {
                        *gx = *gx / d - dot;
                    }
                }
                self.accumulate(adj, a, ga)
            }
        }
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Constant => "constant",
        Op::Param(_) => "param",
        Op::MatMul(..) => "matmul",
        Op::Transpose(_) => "transpose",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::AddRow(..) => "add_row",
        Op::MulRow(..) => "mul_row",
        Op::Scale(..) => "scale",
        Op::AddScalar(_) => "add_scalar",
        Op::Sigmoid(_) => "sigmoid",
        Op::Tanh(_) => "tanh",
        Op::Relu(_) => "relu",
        Op::Exp(_) => "exp",
        Op::Log(_) => "log",
        Op::Abs(_) => "abs",
        Op::Softplus(_) => "softplus",
        Op::ClampMin(..) => "clamp_min",
        Op::Softmax(..) => "softmax",
        Op::Concat(..) => "concat",
        Op::Slice(..) => "slice",
        Op::RowSum(_) => "row_sum",
        Op::Sum(_) => "sum",
        Op::MaxPool(..) => "max_pool",
        Op::Gather(..) => "gather",
        Op::Reshape(_) => "reshape",
        Op::RowNormalize(..) => "row_normalize",
    }
}

fn softmax_rows(t: &Tensor) -> Tensor {
    let c = t.cols().max(1);
    let mut out = t.clone();
    for row in out.data_mut().chunks_mut(c) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for x in row.iter_mut() {
            *x = (*x - m).exp();
            z += *x;
        }
        for x in row.iter_mut() {
            *x /= z;
        }
    }
    out
}

fn softmax_backward_rows(y: &Tensor, g: &Tensor) -> Tensor {
    let c = y.cols().max(1);
    let mut out = g.clone();
    for (orow, yrow) in out.data_mut().chunks_mut(c).zip(y.data().chunks(c)) {
        let dot: f64 = orow.iter().zip(yrow).map(|(a, b)| a * b).sum();
        for (o, &yv) in orow.iter_mut().zip(yrow) {
            *o = yv * (*o - dot);
        }
    }
    out
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn col_sums(g: &Tensor) -> Tensor {
    let c = g.cols();
    let mut out = vec![0.0; c];
    for i in 0..g.rows() {
        for (o, x) in out.iter_mut().zip(g.row(i)) {
            *o += x;
        }
    }
    Tensor::matrix(1, c, out)
}
