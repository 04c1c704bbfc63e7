//! Reverse-mode automatic differentiation over small dense tensors.
//!
//! A [`Tape`] records every operation in evaluation order. [`Tape::backward`]
//! walks the record once in reverse, propagating adjoints, and accumulates
//! the result into the gradient slots of tracked leaves (inputs and
//! parameters). Repeated calls keep accumulating until [`Tape::zero_grad`].
//!
//! Shapes are rank 0, 1 or 2. Row-wise operations treat a rank-2 tensor as
//! a batch of row vectors.

mod params;
mod tensor;

use std::collections::BTreeMap;

pub use params::{grad_check, grad_check_params, Gradients, ParamId, ParamSet};
pub use tensor::Tensor;

use crate::error::{Error, Result};
use tensor::matmul_raw;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

type CustomBackward = Box<dyn Fn(&[&Tensor], &Tensor, &Tensor) -> Vec<Tensor>>;

enum Op {
    Leaf { tracked: bool, param: Option<ParamId> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRowBias(Var, Var),
    MatMul(Var, Var),
    Concat { inputs: Vec<Var>, axis: usize },
    SliceCols { x: Var, start: usize },
    GatherRows { x: Var, idx: Vec<usize> },
    Sigmoid(Var),
    Tanh(Var),
    LeakyRelu(Var, f64),
    LogSigmoid(Var),
    Softmax { x: Var },
    Sum(Var),
    Mean(Var),
    Dot(Var, Var),
    RowDot(Var, Var),
    L2Norm(Var),
    MulRows(Var, Var),
    MulRowsConst(Var, Vec<f64>),
    Reshape(Var),
    Custom { inputs: Vec<Var>, backward: CustomBackward },
}

pub struct Tape {
    values: Vec<Tensor>,
    ops: Vec<Op>,
    leaf_grads: BTreeMap<usize, Tensor>,
    checked: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn dim_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Dimension {
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

fn log_sigmoid(x: f64) -> f64 {
    x.min(0.0) - (-x.abs()).exp().ln_1p()
}

/// Softmax of each row, treating masked-out entries as absent. A fully
/// masked row yields zeros.
pub fn masked_softmax_rows(t: &Tensor, mask: Option<&[bool]>) -> Tensor {
    let cols = t.cols();
    let mut out = vec![0.0; t.numel()];
    for r in 0..t.rows() {
        let row = t.row(r);
        let keep = |c: usize| mask.is_none_or(|m| m[r * cols + c]);
        let max = (0..cols)
            .filter(|&c| keep(c))
            .map(|c| row[c])
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            continue;
        }
        let mut z = 0.0;
        for c in (0..cols).filter(|&c| keep(c)) {
            let e = (row[c] - max).exp();
            out[r * cols + c] = e;
            z += e;
        }
        for c in 0..cols {
            out[r * cols + c] /= z;
        }
    }
    Tensor::new(t.shape().to_vec(), out).expect("same shape")
}

impl Tape {
    pub fn new() -> Self {
        Self {
            values: Vec::new(),
            ops: Vec::new(),
            leaf_grads: BTreeMap::new(),
            checked: true,
        }
    }

    /// Toggle the non-finite check run on every recorded value.
    pub fn set_checked(&mut self, on: bool) {
        self.checked = on;
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op) -> Result<Var> {
        if self.checked && !value.all_finite() {
            return Err(Error::NonFinite(name));
        }
        self.values.push(value);
        self.ops.push(op);
        Ok(Var(self.values.len() - 1))
    }

    fn leaf(&mut self, t: Tensor, tracked: bool, param: Option<ParamId>) -> Var {
        self.values.push(t);
        self.ops.push(Op::Leaf { tracked, param });
        Var(self.values.len() - 1)
    }

    /// Untracked value: receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t, false, None)
    }

    /// Tracked input whose gradient is readable through [`Tape::grad`].
    pub fn input(&mut self, t: Tensor) -> Var {
        self.leaf(t, true, None)
    }

    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        self.leaf(params.get(id).clone(), true, Some(id))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(dim_err("add", x, y));
        }
        let mut out = x.clone();
        out.add_assign(y);
        self.push("add", out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(dim_err("sub", x, y));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p - q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        self.push("sub", out, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(dim_err("mul", x, y));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        self.push("mul", out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a).map(|x| c * x);
        self.push("scale", out, Op::Scale(a, c))
    }

    /// `x[n,m] + b[m]` broadcast over rows.
    pub fn add_row_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.rank() != 1 || xv.cols() != bv.numel() || xv.rank() == 0 {
            return Err(dim_err("add_row_bias", xv, bv));
        }
        let m = bv.numel();
        let mut out = xv.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += bv.data()[i % m];
        }
        self.push("add_row_bias", out, Op::AddRowBias(x, b))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.rank() != 2 || y.rank() != 2 || x.cols() != y.rows() {
            return Err(dim_err("matmul", x, y));
        }
        let (n, k, m) = (x.rows(), x.cols(), y.cols());
        let out = Tensor::matrix(n, m, matmul_raw(x.data(), y.data(), n, k, m))?;
        self.push("matmul", out, Op::MatMul(a, b))
    }

    /// Concatenation of vectors (axis 0), matrix rows (axis 0) or matrix
    /// columns (axis 1).
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = self.value(*inputs.first().ok_or(Error::Dimension {
            op: "concat",
            left: vec![],
            right: vec![],
        })?);
        let rank = first.rank();
        for v in inputs {
            let t = self.value(*v);
            let ok = t.rank() == rank
                && match (rank, axis) {
                    (1, 0) => true,
                    (2, 0) => t.cols() == first.cols(),
                    (2, 1) => t.rows() == first.rows(),
                    _ => false,
                };
            if !ok {
                return Err(dim_err("concat", first, t));
            }
        }
        let out = match (rank, axis) {
            (1, 0) => Tensor::vector(
                inputs
                    .iter()
                    .flat_map(|v| self.value(*v).data().iter().copied())
                    .collect(),
            ),
            (2, 0) => {
                let rows = inputs.iter().map(|v| self.value(*v).rows()).sum();
                let data = inputs
                    .iter()
                    .flat_map(|v| self.value(*v).data().iter().copied())
                    .collect();
                Tensor::matrix(rows, first.cols(), data)?
            }
            _ => {
                let rows = first.rows();
                let total: usize = inputs.iter().map(|v| self.value(*v).cols()).sum();
                let mut data = Vec::with_capacity(rows * total);
                for r in 0..rows {
                    for v in inputs {
                        data.extend_from_slice(self.value(*v).row(r));
                    }
                }
                Tensor::matrix(rows, total, data)?
            }
        };
        self.push(
            "concat",
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
        )
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(x);
        if t.rank() != 2 || start >= end || end > t.cols() {
            return Err(Error::Dimension {
                op: "slice_cols",
                left: t.shape().to_vec(),
                right: vec![start, end],
            });
        }
        let rows = t.rows();
        let mut data = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            data.extend_from_slice(&t.row(r)[start..end]);
        }
        let out = Tensor::matrix(rows, end - start, data)?;
        self.push("slice_cols", out, Op::SliceCols { x, start })
    }

    /// Rows of a matrix (or elements of a vector) selected by index.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(x);
        let limit = if t.rank() == 1 { t.numel() } else { t.rows() };
        if t.rank() == 0 || idx.iter().any(|&i| i >= limit) {
            return Err(Error::Dimension {
                op: "gather_rows",
                left: t.shape().to_vec(),
                right: vec![idx.iter().copied().max().unwrap_or(0)],
            });
        }
        let out = if t.rank() == 1 {
            Tensor::vector(idx.iter().map(|&i| t.data()[i]).collect())
        } else {
            let mut data = Vec::with_capacity(idx.len() * t.cols());
            for &i in idx {
                data.extend_from_slice(t.row(i));
            }
            Tensor::matrix(idx.len(), t.cols(), data)?
        };
        self.push("gather_rows", out, Op::GatherRows { x, idx: idx.to_vec() })
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(sigmoid);
        self.push("sigmoid", out, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(f64::tanh);
        self.push("tanh", out, Op::Tanh(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        self.push("leaky_relu", out, Op::LeakyRelu(x, slope))
    }

    /// Numerically stable `ln σ(x)`.
    pub fn log_sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(log_sigmoid);
        self.push("log_sigmoid", out, Op::LogSigmoid(x))
    }

    /// Softmax over the last axis (each row of a matrix).
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let out = masked_softmax_rows(self.value(x), None);
        self.push("softmax", out, Op::Softmax { x })
    }

    /// Row softmax ignoring entries whose mask is false; all-masked rows are zero.
    pub fn masked_softmax(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let t = self.value(x);
        if mask.len() != t.numel() {
            return Err(Error::Dimension {
                op: "masked_softmax",
                left: t.shape().to_vec(),
                right: vec![mask.len()],
            });
        }
        let out = masked_softmax_rows(t, Some(mask));
        self.push("softmax", out, Op::Softmax { x })
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.push("mean", Tensor::scalar(s), Op::Mean(x))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.numel() != y.numel() {
            return Err(dim_err("dot", x, y));
        }
        let s = x.data().iter().zip(y.data()).map(|(p, q)| p * q).sum();
        self.push("dot", Tensor::scalar(s), Op::Dot(a, b))
    }

    /// Row-wise dot products of two `[n,d]` matrices, giving `[n]`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() || x.rank() != 2 {
            return Err(dim_err("row_dot", x, y));
        }
        let out = Tensor::vector(
            (0..x.rows())
                .map(|r| x.row(r).iter().zip(y.row(r)).map(|(p, q)| p * q).sum())
                .collect(),
        );
        self.push("row_dot", out, Op::RowDot(a, b))
    }

    pub fn l2_norm(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).data().iter().map(|v| v * v).sum::<f64>().sqrt();
        self.push("l2_norm", Tensor::scalar(n), Op::L2Norm(x))
    }

    /// Scales row `r` of `x[n,d]` by `s[r]`; `s` is `[n]` or `[n,1]`.
    pub fn mul_rows(&mut self, x: Var, s: Var) -> Result<Var> {
        let (xv, sv) = (self.value(x), self.value(s));
        if xv.rank() != 2 || sv.numel() != xv.rows() || sv.cols() > 1 && sv.rank() == 2 {
            return Err(dim_err("mul_rows", xv, sv));
        }
        let c = xv.cols();
        let mut out = xv.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v *= sv.data()[i / c];
        }
        self.push("mul_rows", out, Op::MulRows(x, s))
    }

    /// Scales rows by constants that receive no gradient (masks, 1/len).
    pub fn mul_rows_const(&mut self, x: Var, w: &[f64]) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 2 || w.len() != xv.rows() {
            return Err(Error::Dimension {
                op: "mul_rows_const",
                left: xv.shape().to_vec(),
                right: vec![w.len()],
            });
        }
        let c = xv.cols();
        let mut out = xv.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v *= w[i / c];
        }
        self.push("mul_rows_const", out, Op::MulRowsConst(x, w.to_vec()))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshaped(shape)?;
        self.push("reshape", out, Op::Reshape(x))
    }

    /// Records an operation with a caller-supplied local gradient rule.
    /// `backward(inputs, output, upstream)` returns one gradient per input.
    pub fn custom(
        &mut self,
        inputs: &[Var],
        forward: impl Fn(&[&Tensor]) -> Tensor,
        backward: impl Fn(&[&Tensor], &Tensor, &Tensor) -> Vec<Tensor> + 'static,
    ) -> Result<Var> {
        let vals: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
        let out = forward(&vals);
        self.push(
            "custom",
            out,
            Op::Custom {
                inputs: inputs.to_vec(),
                backward: Box::new(backward),
            },
        )
    }

    /// Reverse pass from a scalar `loss`. Gradients of tracked leaves are
    /// added to whatever earlier passes left in their slots.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NotScalar(lv.shape().to_vec()));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));

        fn acc(adj: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut adj[v.0] {
                Some(t) => t.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let out = &self.values[i];
            let vals = &self.values;
            match &self.ops[i] {
                Op::Leaf { tracked, .. } => {
                    if *tracked {
                        match self.leaf_grads.get_mut(&i) {
                            Some(t) => t.add_assign(&g),
                            None => {
                                self.leaf_grads.insert(i, g);
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    acc(&mut adj, *b, g.clone());
                    acc(&mut adj, *a, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut adj, *b, g.map(|x| -x));
                    acc(&mut adj, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = zip(&g, &vals[b.0], |p, q| p * q);
                    let gb = zip(&g, &vals[a.0], |p, q| p * q);
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::Scale(a, c) => acc(&mut adj, *a, g.map(|x| c * x)),
                Op::AddRowBias(x, b) => {
                    let m = vals[b.0].numel();
                    let mut gb = vec![0.0; m];
                    for (k, v) in g.data().iter().enumerate() {
                        gb[k % m] += v;
                    }
                    acc(&mut adj, *b, Tensor::vector(gb));
                    acc(&mut adj, *x, g);
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (&vals[a.0], &vals[b.0]);
                    let (n, k, m) = (av.rows(), av.cols(), bv.cols());
                    let mut ga = vec![0.0; n * k];
                    for r in 0..n {
                        let grow = g.row(r);
                        for p in 0..k {
                            let brow = bv.row(p);
                            ga[r * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                        }
                    }
                    let mut gb = vec![0.0; k * m];
                    for r in 0..n {
                        let grow = g.row(r);
                        for p in 0..k {
                            let x = av.data()[r * k + p];
                            if x == 0.0 {
                                continue;
                            }
                            for (o, y) in gb[p * m..(p + 1) * m].iter_mut().zip(grow) {
                                *o += x * y;
                            }
                        }
                    }
                    acc(&mut adj, *a, Tensor::matrix(n, k, ga)?);
                    acc(&mut adj, *b, Tensor::matrix(k, m, gb)?);
                }
                Op::Concat { inputs, axis } => {
                    let rank = out.rank();
                    if rank == 1 || *axis == 0 {
                        let mut off = 0;
                        for v in inputs {
                            let t = &vals[v.0];
                            let n = t.numel();
                            let part = Tensor::new(t.shape().to_vec(), g.data()[off..off + n].to_vec())?;
                            off += n;
                            acc(&mut adj, *v, part);
                        }
                    } else {
                        let mut off = 0;
                        for v in inputs {
                            let t = &vals[v.0];
                            let c = t.cols();
                            let mut data = Vec::with_capacity(t.numel());
                            for r in 0..t.rows() {
                                data.extend_from_slice(&g.row(r)[off..off + c]);
                            }
                            off += c;
                            acc(&mut adj, *v, Tensor::matrix(t.rows(), c, data)?);
                        }
                    }
                }
                Op::SliceCols { x, start } => {
                    let xv = &vals[x.0];
                    let (cols, w) = (xv.cols(), out.cols());
                    let mut gx = Tensor::zeros(xv.shape());
                    for r in 0..xv.rows() {
                        gx.data_mut()[r * cols + start..r * cols + start + w].copy_from_slice(g.row(r));
                    }
                    acc(&mut adj, *x, gx);
                }
                Op::GatherRows { x, idx } => {
                    let xv = &vals[x.0];
                    let mut gx = Tensor::zeros(xv.shape());
                    let c = if xv.rank() == 1 { 1 } else { xv.cols() };
                    for (r, &src) in idx.iter().enumerate() {
                        let dst = &mut gx.data_mut()[src * c..(src + 1) * c];
                        for (o, v) in dst.iter_mut().zip(&g.data()[r * c..(r + 1) * c]) {
                            *o += v;
                        }
                    }
                    acc(&mut adj, *x, gx);
                }
                Op::Sigmoid(x) => acc(&mut adj, *x, zip(&g, out, |gg, y| gg * y * (1.0 - y))),
                Op::Tanh(x) => acc(&mut adj, *x, zip(&g, out, |gg, y| gg * (1.0 - y * y))),
                Op::LeakyRelu(x, s) => {
                    let s = *s;
                    acc(
                        &mut adj,
                        *x,
                        zip(&g, &vals[x.0], |gg, v| if v > 0.0 { gg } else { s * gg }),
                    )
                }
                Op::LogSigmoid(x) => acc(&mut adj, *x, zip(&g, &vals[x.0], |gg, v| gg * sigmoid(-v))),
                Op::Softmax { x } => {
                    let cols = out.cols();
                    let mut gx = Tensor::zeros(out.shape());
                    for r in 0..out.rows() {
                        let y = out.row(r);
                        let gr = g.row(r);
                        let inner: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for c in 0..cols {
                            gx.data_mut()[r * cols + c] = y[c] * (gr[c] - inner);
                        }
                    }
                    acc(&mut adj, *x, gx);
                }
                Op::Sum(x) => {
                    let s = g.item();
                    acc(&mut adj, *x, Tensor::filled(vals[x.0].shape(), s));
                }
                Op::Mean(x) => {
                    let t = &vals[x.0];
                    acc(&mut adj, *x, Tensor::filled(t.shape(), g.item() / t.numel() as f64));
                }
                Op::Dot(a, b) => {
                    let s = g.item();
                    let ga = vals[b.0].map(|v| s * v);
                    let gb = vals[a.0].map(|v| s * v);
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::RowDot(a, b) => {
                    let (av, bv) = (&vals[a.0], &vals[b.0]);
                    let c = av.cols();
                    let mut ga = Tensor::zeros(av.shape());
                    let mut gb = Tensor::zeros(bv.shape());
                    for (k, (o_a, o_b)) in ga.data_mut().iter_mut().zip(gb.data_mut().iter_mut()).enumerate() {
                        let s = g.data()[k / c];
                        *o_a = s * bv.data()[k];
                        *o_b = s * av.data()[k];
                    }
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::L2Norm(x) => {
                    let n = out.item();
                    let s = g.item();
                    let gx = if n > 0.0 {
                        vals[x.0].map(|v| s * v / n)
                    } else {
                        Tensor::zeros(vals[x.0].shape())
                    };
                    acc(&mut adj, *x, gx);
                }
                Op::MulRows(x, s) => {
                    let (xv, sv) = (&vals[x.0], &vals[s.0]);
                    let c = xv.cols();
                    let mut gx = Tensor::zeros(xv.shape());
                    let mut gs = vec![0.0; sv.numel()];
                    for (k, o) in gx.data_mut().iter_mut().enumerate() {
                        let r = k / c;
                        *o = g.data()[k] * sv.data()[r];
                        gs[r] += g.data()[k] * xv.data()[k];
                    }
                    acc(&mut adj, *x, gx);
                    acc(&mut adj, *s, Tensor::new(sv.shape().to_vec(), gs)?);
                }
                Op::MulRowsConst(x, w) => {
                    let c = out.cols();
                    let mut gx = g;
                    for (k, o) in gx.data_mut().iter_mut().enumerate() {
                        *o *= w[k / c];
                    }
                    acc(&mut adj, *x, gx);
                }
                Op::Reshape(x) => {
                    let shape = vals[x.0].shape().to_vec();
                    acc(&mut adj, *x, g.reshaped(&shape)?);
                }
                Op::Custom { inputs, backward } => {
                    let ins: Vec<&Tensor> = inputs.iter().map(|v| &vals[v.0]).collect();
                    let grads = backward(&ins, out, &g);
                    for (v, gv) in inputs.iter().zip(grads) {
                        acc(&mut adj, *v, gv);
                    }
                }
            }
        }
        Ok(())
    }

    /// Accumulated gradient of a tracked leaf, if any reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.leaf_grads.get(&v.0)
    }

    pub fn zero_grad(&mut self) {
        self.leaf_grads.clear();
    }

    /// Gradients for every parameter in `params`; unused ones are zero.
    pub fn param_gradients(&self, params: &ParamSet) -> Gradients {
        let mut grads: Vec<Tensor> = params.ids().map(|id| Tensor::zeros(params.get(id).shape())).collect();
        for (&i, g) in &self.leaf_grads {
            if let Op::Leaf { param: Some(id), .. } = &self.ops[i] {
                grads[id.0].add_assign(g);
            }
        }
        Gradients { grads }
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}
