//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation in creation order, which is already a
//! topological order, so [`Tape::backward`] is a single reverse sweep. Each
//! node keeps its forward value; adjoints are built only for nodes that
//! depend on at least one parameter.

mod matrix;

use std::sync::Arc;

pub use matrix::{matmul, Matrix};
use matrix::gemm;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Constant sparse operator with its transpose cached for the adjoint.
#[derive(Debug)]
pub struct SparseOperator {
    forward: CsrMatrix,
    adjoint: CsrMatrix,
}

impl SparseOperator {
    pub fn new(m: CsrMatrix) -> Self {
        let adjoint = m.transpose();
        Self { forward: m, adjoint }
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.forward
    }
}

/// Output row for every input row, for mean-scatter.
#[derive(Debug)]
pub struct ScatterIndex {
    target: Vec<usize>,
    counts: Vec<usize>,
}

impl ScatterIndex {
    pub fn new(target: Vec<usize>, n_out: usize) -> Self {
        let mut counts = vec![0; n_out];
        for &t in &target {
            counts[t] += 1;
        }
        Self { target, counts }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Sparse(Arc<SparseOperator>, Var),
    Cheb(Arc<SparseOperator>, Var, usize),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Affine(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softplus(Var),
    Concat(Vec<Var>),
    SliceCols(Var, usize),
    Gather(Var, Arc<Vec<usize>>),
    ScatterMean(Var, Arc<ScatterIndex>),
    SegmentMean(Var, Arc<Vec<usize>>),
    SumAll(Var),
    MeanAll(Var),
    Mse(Var, Var),
    WeightedSumSquares(Var, Arc<Vec<f64>>),
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::shape(op, format!("{}x{} vs {}x{}", a.0, a.1, b.0, b.1))
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

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ma, mb) = (self.value(a), self.value(b));
        if ma.cols != mb.rows {
            return Err(shape_err("matmul", ma.shape(), mb.shape()));
        }
        let out = matmul(ma, mb);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::MatMul(a, b), needs))
    }

    pub fn sparse_matmul(&mut self, op: &Arc<SparseOperator>, x: Var) -> Result<Var> {
        let m = self.value(x);
        if op.forward.ncols() != m.rows {
            return Err(shape_err("sparse_matmul", (op.forward.nrows(), op.forward.ncols()), m.shape()));
        }
        let out = Matrix::from_vec(op.forward.nrows(), m.cols, op.forward.matmul_dense(&m.data, m.cols));
        let needs = self.needs(x);
        Ok(self.push(out, Op::Sparse(op.clone(), x), needs))
    }

    /// Chebyshev basis `[T_0 X, T_1 X, …, T_K X]` stacked by columns, with
    /// `T_0 = I`, `T_1 = L`, `T_k = 2 L T_{k-1} - T_{k-2}`.
    pub fn chebyshev(&mut self, op: &Arc<SparseOperator>, x: Var, order: usize) -> Result<Var> {
        let m = self.value(x);
        if op.forward.nrows() != m.rows || op.forward.ncols() != m.rows {
            return Err(shape_err("chebyshev", (op.forward.nrows(), op.forward.ncols()), m.shape()));
        }
        let f = m.cols;
        let mut terms: Vec<Vec<f64>> = vec![m.data.clone()];
        if order >= 1 {
            terms.push(op.forward.matmul_dense(&m.data, f));
        }
        for k in 2..=order {
            let mut next = op.forward.matmul_dense(&terms[k - 1], f);
            next.iter_mut().zip(&terms[k - 2]).for_each(|(a, b)| *a = 2.0 * *a - b);
            terms.push(next);
        }
        let out = interleave(&terms, m.rows, f);
        let needs = self.needs(x);
        Ok(self.push(out, Op::Cheb(op.clone(), x, order), needs))
    }

    fn zip(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        let (ma, mb) = (self.value(a), self.value(b));
        if ma.shape() != mb.shape() {
            return Err(shape_err(name, ma.shape(), mb.shape()));
        }
        let data = ma.data.iter().zip(&mb.data).map(|(&x, &y)| f(x, y)).collect();
        Ok(Matrix::from_vec(ma.rows, ma.cols, data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip("add", a, b, |x, y| x + y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), needs))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip("sub", a, b, |x, y| x - y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Sub(a, b), needs))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip("mul", a, b, |x, y| x * y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Mul(a, b), needs))
    }

    /// `x + b` with a `1 × C` row broadcast over the rows of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (mx, mb) = (self.value(x), self.value(bias));
        if mb.rows != 1 || mb.cols != mx.cols {
            return Err(shape_err("add_row", mx.shape(), mb.shape()));
        }
        let mut out = mx.clone();
        for row in out.data.chunks_exact_mut(mx.cols.max(1)) {
            row.iter_mut().zip(&mb.data).for_each(|(o, b)| *o += b);
        }
        let needs = self.needs(x) || self.needs(bias);
        Ok(self.push(out, Op::AddRow(x, bias), needs))
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let m = self.value(x);
        let out = Matrix::from_vec(m.rows, m.cols, m.data.iter().map(|v| scale * v + shift).collect());
        let needs = self.needs(x);
        self.push(out, Op::Affine(x, scale), needs)
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let m = self.value(x);
        let out = Matrix::from_vec(m.rows, m.cols, m.data.iter().map(|&v| f(v)).collect());
        let needs = self.needs(x);
        self.push(out, op, needs)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, f64::tanh, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.map(x, softplus, Op::Softplus(x))
    }

    /// Horizontal concatenation of blocks with equal row counts.
    pub fn concat_columns(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = match parts.first() {
            Some(&p) => self.value(p).rows,
            None => return Err(Error::shape("concat_columns", "no blocks")),
        };
        if let Some(&bad) = parts.iter().find(|&&p| self.value(p).rows != rows) {
            return Err(shape_err("concat_columns", (rows, 0), self.shape(bad)));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut c0 = 0;
        for &p in parts {
            let m = self.value(p);
            for r in 0..rows {
                out.data[r * cols + c0..r * cols + c0 + m.cols].copy_from_slice(m.row(r));
            }
            c0 += m.cols;
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(out, Op::Concat(parts.to_vec()), needs))
    }

    /// Columns `start..end`.
    pub fn slice_columns(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let m = self.value(x);
        if start > end || end > m.cols {
            return Err(Error::shape("slice_columns", format!("{start}..{end} of {} columns", m.cols)));
        }
        let w = end - start;
        let mut data = Vec::with_capacity(m.rows * w);
        for r in 0..m.rows {
            data.extend_from_slice(&m.row(r)[start..end]);
        }
        let out = Matrix::from_vec(m.rows, w, data);
        let needs = self.needs(x);
        Ok(self.push(out, Op::SliceCols(x, start), needs))
    }

    /// `out[i] = x[index[i]]`.
    pub fn row_gather(&mut self, x: Var, index: Arc<Vec<usize>>) -> Result<Var> {
        let m = self.value(x);
        if let Some(&bad) = index.iter().find(|&&i| i >= m.rows) {
            return Err(Error::shape("row_gather", format!("row {bad} of {}", m.rows)));
        }
        let mut data = Vec::with_capacity(index.len() * m.cols);
        for &i in index.iter() {
            data.extend_from_slice(m.row(i));
        }
        let out = Matrix::from_vec(index.len(), m.cols, data);
        let needs = self.needs(x);
        Ok(self.push(out, Op::Gather(x, index), needs))
    }

    /// Mean of the input rows mapped to each output row; output rows with
    /// no contributor are zero.
    pub fn scatter_mean(&mut self, x: Var, index: Arc<ScatterIndex>) -> Result<Var> {
        let m = self.value(x);
        if index.target.len() != m.rows {
            return Err(Error::shape("scatter_mean", format!("{} targets for {} rows", index.target.len(), m.rows)));
        }
        let mut out = Matrix::zeros(index.counts.len(), m.cols);
        for (i, &t) in index.target.iter().enumerate() {
            let w = 1.0 / index.counts[t] as f64;
            let src = m.row(i);
            out.data[t * m.cols..(t + 1) * m.cols]
                .iter_mut()
                .zip(src)
                .for_each(|(o, v)| *o += w * v);
        }
        let needs = self.needs(x);
        Ok(self.push(out, Op::ScatterMean(x, index), needs))
    }

    /// Row means over contiguous segments `offsets[k]..offsets[k + 1]`.
    pub fn segment_mean(&mut self, x: Var, offsets: Arc<Vec<usize>>) -> Result<Var> {
        let m = self.value(x);
        let ok = offsets.len() >= 2
            && offsets[0] == 0
            && *offsets.last().unwrap() == m.rows
            && offsets.windows(2).all(|w| w[1] > w[0]);
        if !ok {
            return Err(Error::shape("segment_mean", format!("bad segments {offsets:?} for {} rows", m.rows)));
        }
        let mut out = Matrix::zeros(offsets.len() - 1, m.cols);
        for (k, w) in offsets.windows(2).enumerate() {
            let inv = 1.0 / (w[1] - w[0]) as f64;
            for r in w[0]..w[1] {
                out.data[k * m.cols..(k + 1) * m.cols]
                    .iter_mut()
                    .zip(m.row(r))
                    .for_each(|(o, v)| *o += v);
            }
            out.data[k * m.cols..(k + 1) * m.cols].iter_mut().for_each(|o| *o *= inv);
        }
        let needs = self.needs(x);
        Ok(self.push(out, Op::SegmentMean(x, offsets), needs))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).data.iter().sum();
        let needs = self.needs(x);
        self.push(Matrix::scalar(s), Op::SumAll(x), needs)
    }

    pub fn mean_all(&mut self, x: Var) -> Result<Var> {
        let m = self.value(x);
        if m.is_empty() {
            return Err(Error::shape("mean_all", "empty operand"));
        }
        let s = m.data.iter().sum::<f64>() / m.len() as f64;
        let needs = self.needs(x);
        Ok(self.push(Matrix::scalar(s), Op::MeanAll(x), needs))
    }

    /// Mean squared difference over all entries.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let diff = self.zip("mse", a, b, |x, y| x - y)?;
        if diff.is_empty() {
            return Err(Error::shape("mse", "empty operands"));
        }
        let v = diff.sum_squares() / diff.len() as f64;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Matrix::scalar(v), Op::Mse(a, b), needs))
    }

    /// `Σ_i w_i Σ_j x_ij²` with one weight per row.
    pub fn weighted_sum_squares(&mut self, x: Var, row_weights: Arc<Vec<f64>>) -> Result<Var> {
        let m = self.value(x);
        if row_weights.len() != m.rows {
            return Err(Error::shape(
                "weighted_sum_squares",
                format!("{} weights for {} rows", row_weights.len(), m.rows),
            ));
        }
        let v = (0..m.rows)
            .map(|r| row_weights[r] * m.row(r).iter().map(|v| v * v).sum::<f64>())
            .sum();
        let needs = self.needs(x);
        Ok(self.push(Matrix::scalar(v), Op::WeightedSumSquares(x, row_weights), needs))
    }

    /// Gradients of a scalar `loss` with respect to every recorded node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let (rows, cols) = self.shape(loss);
        if (rows, cols) != (1, 1) {
            return Err(Error::NonScalarLoss { rows, cols });
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(1.0));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        let mut acc = |v: Var, contribution: Matrix| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing
                    .data
                    .iter_mut()
                    .zip(&contribution.data)
                    .for_each(|(e, c)| *e += c),
                slot @ None => *slot = Some(contribution),
            }
        };
        let elementwise = |x: &Matrix, f: &dyn Fn(f64, f64) -> f64| {
            Matrix::from_vec(x.rows, x.cols, x.data.iter().zip(&g.data).map(|(&a, &b)| f(a, b)).collect())
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ma, mb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ma.rows, ma.cols, mb.cols);
                if self.needs(*a) {
                    let mut da = Matrix::zeros(m, k);
                    gemm(m, n, k, &g.data, (n, 1), &mb.data, (1, n), 0.0, &mut da.data);
                    acc(*a, da);
                }
                if self.needs(*b) {
                    let mut db = Matrix::zeros(k, n);
                    gemm(k, m, n, &ma.data, (1, k), &g.data, (n, 1), 0.0, &mut db.data);
                    acc(*b, db);
                }
            }
            Op::Sparse(op, x) => {
                let data = op.adjoint.matmul_dense(&g.data, g.cols);
                acc(*x, Matrix::from_vec(op.adjoint.nrows(), g.cols, data));
            }
            Op::Cheb(op, x, order) => {
                let f = self.value(*x).cols;
                let rows = g.rows;
                let mut d: Vec<Vec<f64>> = (0..=*order)
                    .map(|k| {
                        let mut block = Vec::with_capacity(rows * f);
                        for r in 0..rows {
                            block.extend_from_slice(&g.row(r)[k * f..(k + 1) * f]);
                        }
                        block
                    })
                    .collect();
                for k in (2..=*order).rev() {
                    let back = op.adjoint.matmul_dense(&d[k], f);
                    let dk = std::mem::take(&mut d[k]);
                    d[k - 1].iter_mut().zip(&back).for_each(|(a, b)| *a += 2.0 * b);
                    d[k - 2].iter_mut().zip(&dk).for_each(|(a, b)| *a -= b);
                }
                if *order >= 1 {
                    let back = op.adjoint.matmul_dense(&d[1], f);
                    d[0].iter_mut().zip(&back).for_each(|(a, b)| *a += b);
                }
                acc(*x, Matrix::from_vec(rows, f, std::mem::take(&mut d[0])));
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, elementwise(g, &|_, gv| -gv));
            }
            Op::Mul(a, b) => {
                let (ma, mb) = (self.value(*a), self.value(*b));
                acc(*a, elementwise(mb, &|bv, gv| bv * gv));
                acc(*b, elementwise(ma, &|av, gv| av * gv));
            }
            Op::AddRow(x, bias) => {
                acc(*x, g.clone());
                let mut db = Matrix::zeros(1, g.cols);
                for row in g.data.chunks_exact(g.cols.max(1)) {
                    db.data.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                }
                acc(*bias, db);
            }
            Op::Affine(x, scale) => acc(*x, elementwise(g, &|_, gv| scale * gv)),
            Op::Sigmoid(x) => acc(*x, elementwise(out, &|y, gv| gv * y * (1.0 - y))),
            Op::Tanh(x) => acc(*x, elementwise(out, &|y, gv| gv * (1.0 - y * y))),
            Op::Relu(x) => acc(*x, elementwise(self.value(*x), &|v, gv| if v > 0.0 { gv } else { 0.0 })),
            Op::Softplus(x) => acc(*x, elementwise(self.value(*x), &|v, gv| gv * sigmoid(v))),
            Op::Concat(parts) => {
                let mut c0 = 0;
                for &p in parts {
                    let w = self.value(p).cols;
                    if self.needs(p) {
                        let mut d = Vec::with_capacity(g.rows * w);
                        for r in 0..g.rows {
                            d.extend_from_slice(&g.row(r)[c0..c0 + w]);
                        }
                        acc(p, Matrix::from_vec(g.rows, w, d));
                    }
                    c0 += w;
                }
            }
            Op::SliceCols(x, start) => {
                let src = self.value(*x);
                let mut d = Matrix::zeros(src.rows, src.cols);
                for r in 0..g.rows {
                    d.data[r * src.cols + start..r * src.cols + start + g.cols].copy_from_slice(g.row(r));
                }
                acc(*x, d);
            }
            Op::Gather(x, index) => {
                let src = self.value(*x);
                let mut d = Matrix::zeros(src.rows, src.cols);
                for (i, &r) in index.iter().enumerate() {
                    d.data[r * src.cols..(r + 1) * src.cols]
                        .iter_mut()
                        .zip(g.row(i))
                        .for_each(|(a, b)| *a += b);
                }
                acc(*x, d);
            }
            Op::ScatterMean(x, index) => {
                let src = self.value(*x);
                let mut d = Matrix::zeros(src.rows, src.cols);
                for (i, &t) in index.target.iter().enumerate() {
                    let w = 1.0 / index.counts[t] as f64;
                    d.data[i * src.cols..(i + 1) * src.cols]
                        .iter_mut()
                        .zip(g.row(t))
                        .for_each(|(a, b)| *a = w * b);
                }
                acc(*x, d);
            }
            Op::SegmentMean(x, offsets) => {
                let src = self.value(*x);
                let mut d = Matrix::zeros(src.rows, src.cols);
                for (k, w) in offsets.windows(2).enumerate() {
                    let inv = 1.0 / (w[1] - w[0]) as f64;
                    for r in w[0]..w[1] {
                        d.data[r * src.cols..(r + 1) * src.cols]
                            .iter_mut()
                            .zip(g.row(k))
                            .for_each(|(a, b)| *a = inv * b);
                    }
                }
                acc(*x, d);
            }
            Op::SumAll(x) => {
                let (r, c) = self.shape(*x);
                acc(*x, Matrix::filled(r, c, g.item()));
            }
            Op::MeanAll(x) => {
                let (r, c) = self.shape(*x);
                acc(*x, Matrix::filled(r, c, g.item() / (r * c) as f64));
            }
            Op::Mse(a, b) => {
                let (ma, mb) = (self.value(*a), self.value(*b));
                let k = 2.0 * g.item() / ma.len() as f64;
                let da: Vec<f64> = ma.data.iter().zip(&mb.data).map(|(x, y)| k * (x - y)).collect();
                if self.needs(*b) {
                    acc(*b, Matrix::from_vec(ma.rows, ma.cols, da.iter().map(|v| -v).collect()));
                }
                acc(*a, Matrix::from_vec(ma.rows, ma.cols, da));
            }
            Op::WeightedSumSquares(x, w) => {
                let src = self.value(*x);
                let gv = g.item();
                let mut d = src.clone();
                for (r, row) in d.data.chunks_exact_mut(src.cols.max(1)).enumerate() {
                    let k = 2.0 * gv * w[r];
                    row.iter_mut().for_each(|v| *v *= k);
                }
                acc(*x, d);
            }
        }
    }
}

/// Column-stacks equally shaped row-major blocks.
fn interleave(blocks: &[Vec<f64>], rows: usize, cols: usize) -> Matrix {
    let width = blocks.len() * cols;
    let mut out = Matrix::zeros(rows, width);
    for (k, b) in blocks.iter().enumerate() {
        for r in 0..rows {
            out.data[r * width + k * cols..r * width + (k + 1) * cols].copy_from_slice(&b[r * cols..(r + 1) * cols]);
        }
    }
    out
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(v: f64) -> f64 {
    v.max(0.0) + (-v.abs()).exp().ln_1p()
}

/// Result of a backward sweep. Only leaves keep their gradient.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the leaf `v`; zeros when `v` does not influence the loss.
    pub fn get(&self, v: Var, tape: &Tape) -> Matrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = tape.shape(v);
                Matrix::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, v: Var, tape: &Tape) -> Matrix {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = tape.shape(v);
                Matrix::zeros(r, c)
            }
        }
    }
}
