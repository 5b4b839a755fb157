//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! A [`Graph`] is a tape: every operation appends a node holding its value and
//! the ids of its inputs, so node order is a valid topological order and the
//! backward pass is a single reverse sweep.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::NnError;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Handle to a trainable parameter in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named trainable matrices owned by a model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn num_values(&self) -> usize {
        self.values.iter().map(|m| m.data().len()).sum()
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Ln(Var),
    Square(Var),
    Softmax(Var),
    Clamp(Var, f64, f64),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    StackSteps(Vec<Var>),
    Sum(Var),
    Mean(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    by_node: HashMap<usize, Matrix>,
    by_param: Vec<(ParamId, Matrix)>,
}

impl Gradients {
    /// Gradient of a trainable leaf; `None` for detached inputs.
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.by_node.get(&v.0)
    }

    /// Gradients for every parameter bound on the graph, in binding order.
    pub fn params(&self) -> &[(ParamId, Matrix)] {
        &self.by_param
    }

    pub fn param(&self, id: ParamId) -> Option<&Matrix> {
        self.by_param.iter().find(|(p, _)| *p == id).map(|(_, g)| g)
    }
}

/// The tape.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    bound: HashMap<ParamId, Var>,
    bound_order: Vec<ParamId>,
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Scalar value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.shape(), (1, 1));
        m.data()[0]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A detached input; it never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A trainable leaf not backed by a [`ParamStore`].
    pub fn variable(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Binds a stored parameter; repeated binds return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Leaf, true);
        self.bound.insert(id, v);
        self.bound_order.push(id);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ac != br {
            return Err(NnError::Shape(format!("matmul of {ar}x{ac} by {br}x{bc}")));
        }
        let value = self.value(a).matmul(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// Adds a `1 × C` row to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, NnError> {
        let (r, c) = self.shape(x);
        if self.shape(bias) != (1, c) {
            return Err(NnError::Shape(format!(
                "bias {:?} does not broadcast over {r}x{c}",
                self.shape(bias)
            )));
        }
        let b = self.value(bias).data().to_vec();
        let mut value = self.value(x).clone();
        for i in 0..r {
            for (o, bv) in value.row_mut(i).iter_mut().zip(&b) {
                *o += bv;
            }
        }
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(value, Op::AddBias(x, bias), rg))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<(), NnError> {
        if self.shape(a) != self.shape(b) {
            return Err(NnError::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape(a, b, "add")?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape(a, b, "sub")?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape(a, b, "mul")?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).map(|x| x * k);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, k), rg)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).map(|x| x + k);
        let rg = self.rg(a);
        self.push(value, Op::AddScalar(a), rg)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Ln(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for r in 0..value.rows() {
            softmax_in_place(value.row_mut(r));
        }
        let rg = self.rg(a);
        self.push(value, Op::Softmax(a), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let rows = parts.first().map_or(0, |&p| self.shape(p).0);
        if parts.iter().any(|&p| self.shape(p).0 != rows) {
            return Err(NnError::Shape("concat_cols: row counts differ".into()));
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut value = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                value.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, NnError> {
        let (r, c) = self.shape(a);
        if start > end || end > c {
            return Err(NnError::Shape(format!(
                "slice {start}..{end} of {c} columns"
            )));
        }
        let idx: Vec<usize> = (start..end).collect();
        let value = self.value(a).select_cols(&idx);
        debug_assert_eq!(value.rows(), r);
        let rg = self.rg(a);
        Ok(self.push(value, Op::SliceCols(a, start), rg))
    }

    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Result<Var, NnError> {
        let r = self.shape(a).0;
        if idx.iter().any(|&i| i >= r) {
            return Err(NnError::Shape(format!("gather_rows index out of {r} rows")));
        }
        let value = self.value(a).select_rows(&idx);
        let rg = self.rg(a);
        Ok(self.push(value, Op::GatherRows(a, idx), rg))
    }

    /// Interleaves `T` per-step `B × H` nodes into a `(B·T) × H` node with
    /// row `b·T + t` taken from `steps[t]`.
    pub fn stack_steps(&mut self, steps: &[Var]) -> Result<Var, NnError> {
        let t_len = steps.len();
        let (b, h) = steps
            .first()
            .map(|&s| self.shape(s))
            .ok_or_else(|| NnError::Shape("stack_steps of zero steps".into()))?;
        if steps.iter().any(|&s| self.shape(s) != (b, h)) {
            return Err(NnError::Shape("stack_steps: step shapes differ".into()));
        }
        let mut value = Matrix::zeros(b * t_len, h);
        for (t, &s) in steps.iter().enumerate() {
            for bi in 0..b {
                value
                    .row_mut(bi * t_len + t)
                    .copy_from_slice(self.value(s).row(bi));
            }
        }
        let rg = steps.iter().any(|&s| self.rg(s));
        Ok(self.push(value, Op::StackSteps(steps.to_vec()), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::filled(1, 1, self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let value = Matrix::filled(1, 1, self.value(a).mean());
        let rg = self.rg(a);
        self.push(value, Op::Mean(a), rg)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NnError> {
        if self.nodes.is_empty() {
            return Err(NnError::Usage(
                "backward called before any forward operation was recorded".into(),
            ));
        }
        if loss.0 >= self.nodes.len() {
            return Err(NnError::Usage("loss node is not on this tape".into()));
        }
        if self.shape(loss) != (1, 1) {
            return Err(NnError::Usage(format!(
                "loss must be a scalar, got {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads);
        }

        let mut by_node = HashMap::new();
        for (i, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if matches!(node.op, Op::Leaf) && node.requires_grad {
                let (r, c) = node.value.shape();
                let g = grads[i].take().unwrap_or_else(|| Matrix::zeros(r, c));
                by_node.insert(i, g);
            }
        }
        let by_param = self
            .bound_order
            .iter()
            .map(|id| {
                let v = self.bound[id];
                let g = by_node.get(&v.0).cloned().unwrap_or_else(|| {
                    let (r, c) = self.shape(v);
                    Matrix::zeros(r, c)
                });
                (*id, g)
            })
            .collect();
        Ok(Gradients { by_node, by_param })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    self.accumulate(grads, *a, g.matmul_t(self.value(*b)));
                }
                if self.rg(*b) {
                    self.accumulate(grads, *b, self.value(*a).t_matmul(g));
                }
            }
            Op::AddBias(x, bias) => {
                if self.rg(*bias) {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    self.accumulate(grads, *bias, gb);
                }
                self.accumulate(grads, *x, g.clone());
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                if self.rg(*b) {
                    self.accumulate(grads, *b, g.map(|x| -x));
                }
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    self.accumulate(grads, *a, g.zip_map(self.value(*b), |x, y| x * y));
                }
                if self.rg(*b) {
                    self.accumulate(grads, *b, g.zip_map(self.value(*a), |x, y| x * y));
                }
            }
            Op::Scale(a, k) => self.accumulate(grads, *a, g.map(|x| x * k)),
            Op::AddScalar(a) => self.accumulate(grads, *a, g.clone()),
            Op::Relu(a) => {
                let d = g.zip_map(self.value(*a), |gv, x| if x > 0.0 { gv } else { 0.0 });
                self.accumulate(grads, *a, d);
            }
            Op::Sigmoid(a) => {
                self.accumulate(grads, *a, g.zip_map(out, |gv, y| gv * y * (1.0 - y)))
            }
            Op::Tanh(a) => self.accumulate(grads, *a, g.zip_map(out, |gv, y| gv * (1.0 - y * y))),
            Op::Exp(a) => self.accumulate(grads, *a, g.zip_map(out, |gv, y| gv * y)),
            Op::Ln(a) => self.accumulate(grads, *a, g.zip_map(self.value(*a), |gv, x| gv / x)),
            Op::Square(a) => {
                self.accumulate(grads, *a, g.zip_map(self.value(*a), |gv, x| 2.0 * gv * x))
            }
            Op::Clamp(a, lo, hi) => {
                let d = g.zip_map(
                    self.value(*a),
                    |gv, x| {
                        if x >= *lo && x <= *hi {
                            gv
                        } else {
                            0.0
                        }
                    },
                );
                self.accumulate(grads, *a, d);
            }
            Op::Softmax(a) => {
                let mut d = Matrix::zeros(g.rows(), g.cols());
                for r in 0..g.rows() {
                    let y = out.row(r);
                    let gy = g.row(r);
                    let dot: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
                    for ((o, &yv), &gv) in d.row_mut(r).iter_mut().zip(y).zip(gy) {
                        *o = yv * (gv - dot);
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = self.shape(p).1;
                    if self.rg(p) {
                        let idx: Vec<usize> = (off..off + w).collect();
                        self.accumulate(grads, p, g.select_cols(&idx));
                    }
                    off += w;
                }
            }
            Op::SliceCols(a, start) => {
                let (r, c) = self.shape(*a);
                let mut d = Matrix::zeros(r, c);
                for i in 0..r {
                    d.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
                }
                self.accumulate(grads, *a, d);
            }
            Op::GatherRows(a, idx) => {
                let (r, c) = self.shape(*a);
                let mut d = Matrix::zeros(r, c);
                for (k, &src) in idx.iter().enumerate() {
                    for (o, v) in d.row_mut(src).iter_mut().zip(g.row(k)) {
                        *o += v;
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::StackSteps(steps) => {
                let t_len = steps.len();
                for (t, &s) in steps.iter().enumerate() {
                    if !self.rg(s) {
                        continue;
                    }
                    let (b, h) = self.shape(s);
                    let mut d = Matrix::zeros(b, h);
                    for bi in 0..b {
                        d.row_mut(bi).copy_from_slice(g.row(bi * t_len + t));
                    }
                    self.accumulate(grads, s, d);
                }
            }
            Op::Sum(a) => {
                let (r, c) = self.shape(*a);
                self.accumulate(grads, *a, Matrix::filled(r, c, g.data()[0]));
            }
            Op::Mean(a) => {
                let (r, c) = self.shape(*a);
                let n = (r * c).max(1) as f64;
                self.accumulate(grads, *a, Matrix::filled(r, c, g.data()[0] / n));
            }
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}
