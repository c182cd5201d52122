//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every op appends a node holding its forward value; [`Graph::backward`]
//! walks the tape once in reverse. Matrix-style ops view a tensor as
//! `[leading axis, rest]`, and rank-1 tensors as a single row.

use std::collections::HashMap;

use super::tensor::{matmul_nt_kernel, matmul_tn_kernel, Tensor};
use crate::error::{dim_err, Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A differentiable primitive implemented outside the built-in op set.
///
/// `backward` returns one entry per input; `None` means no contribution.
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &'static str;
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>>;
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f32),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Abs(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    MaxRows(Var, Vec<usize>),
    ExpandRows(Var),
    Reshape(Var),
    GatherRows(Var, Vec<usize>),
    Custom(Vec<Var>, Box<dyn CustomOp>),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Recorded forward computation.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every node that requires one.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: HashMap<usize, Vec<usize>>,
}

impl Gradients {
    /// Gradient for `v`; zeros when `v` does not influence the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        match self.grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.shapes.get(&v.0).map(|s| s.as_slice()).unwrap_or(&[])),
        }
    }
}

fn mat_dims(t: &Tensor) -> (usize, usize) {
    t.as_matrix_dims()
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        debug_assert!(value.is_finite(), "non-finite forward value");
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Trainable leaf.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.ng(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::MatMul(a, b), ng))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return dim_err(name, format!("{:?} vs {:?}", ta.shape(), tb.shape()));
        }
        ta.zip_map(tb, f)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "add", |x, y| x + y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "sub", |x, y| x - y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "mul", |x, y| x * y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Mul(a, b), ng))
    }

    fn row_check(&self, a: Var, b: Var, name: &'static str) -> Result<(usize, usize)> {
        let (m, n) = mat_dims(self.value(a));
        if self.value(b).len() != n {
            return dim_err(
                name,
                format!("row vector {:?} against {:?}", self.shape(b), self.shape(a)),
            );
        }
        Ok((m, n))
    }

    /// `a[m,n] + b[n]` broadcast over rows.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (_, n) = self.row_check(a, b, "add_row")?;
        let bd = self.value(b).data().to_vec();
        let ta = self.value(a);
        let mut out = ta.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += bd[i % n.max(1)];
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::AddRow(a, b), ng))
    }

    /// `a[m,n] * b[n]` broadcast over rows.
    pub fn mul_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (_, n) = self.row_check(a, b, "mul_row")?;
        let bd = self.value(b).data().to_vec();
        let mut out = self.value(a).clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v *= bd[i % n.max(1)];
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MulRow(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, s: f32) -> Var {
        let v = self.value(a).scale(s);
        let ng = self.ng(a);
        self.push(v, Op::Scale(a, s), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| 1.0 / (1.0 + (-x).exp()));
        let ng = self.ng(a);
        self.push(v, Op::Sigmoid(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f32::tanh);
        let ng = self.ng(a);
        self.push(v, Op::Tanh(a), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        let ng = self.ng(a);
        self.push(v, Op::Relu(a), ng)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f32::abs);
        let ng = self.ng(a);
        self.push(v, Op::Abs(a), ng)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        let ng = self.ng(a);
        self.push(v, Op::Square(a), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum() as f32);
        let ng = self.ng(a);
        self.push(v, Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            return dim_err("mean", "empty tensor");
        }
        let v = Tensor::scalar((t.sum() / t.len() as f64) as f32);
        let ng = self.ng(a);
        Ok(self.push(v, Op::Mean(a), ng))
    }

    /// Column-wise concatenation of matrices with equal row counts. Rank-1
    /// inputs concatenate into a rank-1 output.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return dim_err("concat_cols", "no inputs");
        }
        let rows = mat_dims(self.value(parts[0])).0;
        let all_vec = parts.iter().all(|&p| self.value(p).rank() == 1);
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = mat_dims(self.value(p));
            if r != rows {
                return dim_err("concat_cols", format!("row count {} vs {}", r, rows));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0f32; rows * total];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let d = self.value(p).data();
            for r in 0..rows {
                out[r * total + off..r * total + off + w].copy_from_slice(&d[r * w..(r + 1) * w]);
            }
            off += w;
        }
        let shape = if all_vec { vec![total] } else { vec![rows, total] };
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(Tensor::new(&shape, out)?, Op::ConcatCols(parts.to_vec()), ng))
    }

    /// Row-wise concatenation; inputs must share trailing dims. Rank-1 inputs
    /// become single rows.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return dim_err("concat_rows", "no inputs");
        }
        let first = self.value(parts[0]);
        let tail: Vec<usize> = if first.rank() <= 1 {
            vec![first.len()]
        } else {
            first.shape()[1..].to_vec()
        };
        let width: usize = tail.iter().product();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            let (r, c) = mat_dims(t);
            let t_tail: Vec<usize> = if t.rank() <= 1 { vec![t.len()] } else { t.shape()[1..].to_vec() };
            if c != width || t_tail != tail {
                return dim_err("concat_rows", format!("{:?} vs tail {:?}", t.shape(), tail));
            }
            rows += r;
            data.extend_from_slice(t.data());
        }
        let mut shape = vec![rows];
        shape.extend(tail);
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(Tensor::new(&shape, data)?, Op::ConcatRows(parts.to_vec()), ng))
    }

    /// Columns `start..end` of a matrix (or elements of a vector).
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = mat_dims(t);
        if start > end || end > c {
            return dim_err("slice_cols", format!("{}..{} of {} columns", start, end, c));
        }
        let w = end - start;
        let mut out = Vec::with_capacity(r * w);
        for i in 0..r {
            out.extend_from_slice(&t.data()[i * c + start..i * c + end]);
        }
        let shape = if t.rank() == 1 { vec![w] } else { vec![r, w] };
        let ng = self.ng(a);
        Ok(self.push(Tensor::new(&shape, out)?, Op::SliceCols(a, start), ng))
    }

    /// Rows `start..end` along the leading axis.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        if t.rank() == 0 {
            return dim_err("slice_rows", "scalar input");
        }
        let (r, c) = mat_dims(t);
        if t.rank() == 1 {
            return dim_err("slice_rows", "use slice_cols on vectors");
        }
        if start > end || end > r {
            return dim_err("slice_rows", format!("{}..{} of {} rows", start, end, r));
        }
        let mut shape = t.shape().to_vec();
        shape[0] = end - start;
        let out = t.data()[start * c..end * c].to_vec();
        let ng = self.ng(a);
        Ok(self.push(Tensor::new(&shape, out)?, Op::SliceRows(a, start), ng))
    }

    /// Column-wise maximum over rows: `[m,n] -> [n]`. Ties resolve to the first row.
    pub fn max_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = mat_dims(t);
        if r == 0 || t.rank() != 2 {
            return dim_err("max_rows", format!("need a non-empty matrix, got {:?}", t.shape()));
        }
        let d = t.data();
        let mut arg = vec![0usize; c];
        let mut out = d[..c].to_vec();
        for i in 1..r {
            for j in 0..c {
                let v = d[i * c + j];
                if v > out[j] {
                    out[j] = v;
                    arg[j] = i;
                }
            }
        }
        let ng = self.ng(a);
        Ok(self.push(Tensor::vector(out), Op::MaxRows(a, arg), ng))
    }

    /// Repeat a vector `[n]` into `[m,n]`.
    pub fn expand_rows(&mut self, a: Var, m: usize) -> Var {
        let t = self.value(a);
        let n = t.len();
        let mut out = Vec::with_capacity(m * n);
        for _ in 0..m {
            out.extend_from_slice(t.data());
        }
        let ng = self.ng(a);
        self.push(
            Tensor::new(&[m, n], out).expect("expand_rows shape"),
            Op::ExpandRows(a),
            ng,
        )
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshape(shape)?;
        let ng = self.ng(a);
        Ok(self.push(t, Op::Reshape(a), ng))
    }

    /// Select rows by index (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = mat_dims(t);
        if t.rank() < 2 {
            return dim_err("gather_rows", "need rank >= 2");
        }
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= r {
                return dim_err("gather_rows", format!("row {} of {}", i, r));
            }
            out.extend_from_slice(&t.data()[i * c..(i + 1) * c]);
        }
        let mut shape = t.shape().to_vec();
        shape[0] = idx.len();
        let ng = self.ng(a);
        Ok(self.push(Tensor::new(&shape, out)?, Op::GatherRows(a, idx.to_vec()), ng))
    }

    /// Record a custom op whose forward value was computed by the caller.
    pub fn custom(&mut self, inputs: &[Var], value: Tensor, op: Box<dyn CustomOp>) -> Var {
        let ng = inputs.iter().any(|&i| self.ng(i));
        self.push(value, Op::Custom(inputs.to_vec(), op), ng)
    }

    /// `x·W + b` for `x[m,k]`, `W[k,n]`, `b[n]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => self.add_row(y, b),
            None => Ok(y),
        }
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut shapes = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if matches!(n.op, Op::Leaf) {
                shapes.insert(i, n.value.shape().to_vec());
            }
        }
        if !self.ng(loss) {
            return Ok(Gradients { grads, shapes });
        }
        grads[loss.0] = Some(Tensor::ones(lt.shape()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(node, &g, &mut grads)?;
        }
        Ok(Gradients { grads, shapes })
    }

    fn accum(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.ng(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.dim(0), ta.dim(1), tb.dim(1));
                if self.ng(*a) {
                    let mut ga = vec![0.0; m * k];
                    matmul_nt_kernel(g.data(), tb.data(), &mut ga, m, k, n);
                    self.accum(grads, *a, Tensor::new(&[m, k], ga)?);
                }
                if self.ng(*b) {
                    let mut gb = vec![0.0; k * n];
                    matmul_tn_kernel(ta.data(), g.data(), &mut gb, m, k, n);
                    self.accum(grads, *b, Tensor::new(&[k, n], gb)?);
                }
            }
            Op::Add(a, b) => {
                self.accum(grads, *a, g.clone());
                self.accum(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accum(grads, *a, g.clone());
                self.accum(grads, *b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                if self.ng(*a) {
                    self.accum(grads, *a, g.zip_map(self.value(*b), |x, y| x * y)?);
                }
                if self.ng(*b) {
                    self.accum(grads, *b, g.zip_map(self.value(*a), |x, y| x * y)?);
                }
            }
            Op::AddRow(a, b) => {
                self.accum(grads, *a, g.clone());
                if self.ng(*b) {
                    let tb = self.value(*b);
                    let n = tb.len();
                    let mut acc = vec![0.0f64; n];
                    for (i, &v) in g.data().iter().enumerate() {
                        acc[i % n] += v as f64;
                    }
                    let gb = Tensor::new(tb.shape(), acc.into_iter().map(|v| v as f32).collect())?;
                    self.accum(grads, *b, gb);
                }
            }
            Op::MulRow(a, b) => {
                let tb = self.value(*b);
                let n = tb.len();
                if self.ng(*a) {
                    let bd = tb.data();
                    let mut ga = g.clone();
                    for (i, v) in ga.data_mut().iter_mut().enumerate() {
                        *v *= bd[i % n];
                    }
                    self.accum(grads, *a, ga);
                }
                if self.ng(*b) {
                    let ad = self.value(*a).data();
                    let mut acc = vec![0.0f64; n];
                    for (i, &v) in g.data().iter().enumerate() {
                        acc[i % n] += v as f64 * ad[i] as f64;
                    }
                    let gb = Tensor::new(tb.shape(), acc.into_iter().map(|v| v as f32).collect())?;
                    self.accum(grads, *b, gb);
                }
            }
            Op::Scale(a, s) => self.accum(grads, *a, g.scale(*s)),
            Op::Sigmoid(a) => self.accum(grads, *a, g.zip_map(y, |g, y| g * y * (1.0 - y))?),
            Op::Tanh(a) => self.accum(grads, *a, g.zip_map(y, |g, y| g * (1.0 - y * y))?),
            Op::Relu(a) => {
                let ga = g.zip_map(self.value(*a), |g, x| if x > 0.0 { g } else { 0.0 })?;
                self.accum(grads, *a, ga)
            }
            Op::Abs(a) => {
                let ga = g.zip_map(self.value(*a), |g, x| {
                    if x > 0.0 {
                        g
                    } else if x < 0.0 {
                        -g
                    } else {
                        0.0
                    }
                })?;
                self.accum(grads, *a, ga)
            }
            Op::Square(a) => {
                let ga = g.zip_map(self.value(*a), |g, x| 2.0 * g * x)?;
                self.accum(grads, *a, ga)
            }
            Op::Sum(a) => {
                let s = self.value(*a).shape().to_vec();
                self.accum(grads, *a, Tensor::full(&s, g.item()))
            }
            Op::Mean(a) => {
                let t = self.value(*a);
                let s = t.shape().to_vec();
                let n = t.len() as f32;
                self.accum(grads, *a, Tensor::full(&s, g.item() / n))
            }
            Op::ConcatCols(parts) => {
                let (rows, total) = mat_dims(y);
                let mut off = 0;
                for p in parts {
                    let tp = self.value(*p);
                    let (_, w) = mat_dims(tp);
                    if self.ng(*p) {
                        let mut out = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            out.extend_from_slice(&g.data()[r * total + off..r * total + off + w]);
                        }
                        self.accum(grads, *p, Tensor::new(tp.shape(), out)?);
                    }
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let tp = self.value(*p);
                    let n = tp.len();
                    if self.ng(*p) {
                        let out = g.data()[off..off + n].to_vec();
                        self.accum(grads, *p, Tensor::new(tp.shape(), out)?);
                    }
                    off += n;
                }
            }
            Op::SliceCols(a, start) => {
                let ta = self.value(*a);
                let (r, c) = mat_dims(ta);
                let (_, w) = mat_dims(y);
                let mut out = vec![0.0f32; r * c];
                for i in 0..r {
                    out[i * c + start..i * c + start + w].copy_from_slice(&g.data()[i * w..(i + 1) * w]);
                }
                self.accum(grads, *a, Tensor::new(ta.shape(), out)?);
            }
            Op::SliceRows(a, start) => {
                let ta = self.value(*a);
                let (_, c) = mat_dims(ta);
                let mut out = vec![0.0f32; ta.len()];
                out[start * c..start * c + g.len()].copy_from_slice(g.data());
                self.accum(grads, *a, Tensor::new(ta.shape(), out)?);
            }
            Op::MaxRows(a, arg) => {
                let ta = self.value(*a);
                let (_, c) = mat_dims(ta);
                let mut out = vec![0.0f32; ta.len()];
                for (j, &i) in arg.iter().enumerate() {
                    out[i * c + j] += g.data()[j];
                }
                self.accum(grads, *a, Tensor::new(ta.shape(), out)?);
            }
            Op::ExpandRows(a) => {
                let ta = self.value(*a);
                let n = ta.len();
                let mut acc = vec![0.0f64; n];
                for (i, &v) in g.data().iter().enumerate() {
                    acc[i % n] += v as f64;
                }
                let ga = Tensor::new(ta.shape(), acc.into_iter().map(|v| v as f32).collect())?;
                self.accum(grads, *a, ga);
            }
            Op::Reshape(a) => {
                let s = self.value(*a).shape().to_vec();
                self.accum(grads, *a, g.clone().reshape(&s)?);
            }
            Op::GatherRows(a, idx) => {
                let ta = self.value(*a);
                let (_, c) = mat_dims(ta);
                let mut out = vec![0.0f32; ta.len()];
                for (k, &i) in idx.iter().enumerate() {
                    for j in 0..c {
                        out[i * c + j] += g.data()[k * c + j];
                    }
                }
                self.accum(grads, *a, Tensor::new(ta.shape(), out)?);
            }
            Op::Custom(inputs, op) => {
                let vals: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
                let gs = op.backward(&vals, y, g);
                if gs.len() != inputs.len() {
                    return Err(Error::InvalidArgument(format!(
                        "custom op {} returned {} gradients for {} inputs",
                        op.name(),
                        gs.len(),
                        inputs.len()
                    )));
                }
                for (v, gi) in inputs.iter().zip(gs) {
                    if let Some(gi) = gi {
                        self.accum(grads, *v, gi);
                    }
                }
            }
        }
        Ok(())
    }
}
