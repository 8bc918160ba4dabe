//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Tape`] records every operation of one forward pass. Calling
//! [`Tape::backward`] on a scalar node returns the gradient of that scalar with
//! respect to every node on the tape, including parameter leaves.
//!
//! Shape errors inside tape operations are programming errors and panic; the
//! public model and loss entry points validate shapes before building graphs.

use std::collections::HashMap;

use crate::error::{MmclError, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{gemm, Matrix, Operand};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    /// `a * b^T`
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    AddCol(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Gelu(Var),
    Exp(Var),
    Ln(Var),
    Powf(Var, f64),
    Abs(Var),
    SumAll(Var),
    SumRows(Var),
    MeanSegments(Var, usize),
    LogSumExpRows {
        src: Var,
        /// Softmax weights over the masked entries, cached for backward.
        weights: Matrix,
    },
    LayerNorm {
        src: Var,
        inv_std: Vec<f64>,
    },
    Gather {
        src: Var,
        index: Vec<Option<u32>>,
    },
    GatherRows {
        src: Var,
        rows: Vec<usize>,
    },
    SliceCols {
        src: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Transpose(Var),
    BlockAttention {
        q: Var,
        k: Var,
        v: Var,
        seq_len: usize,
        heads: usize,
        /// Attention probabilities per (block, head), each `seq_len x seq_len`.
        probs: Vec<Matrix>,
    },
}

struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, zeros when `v` did not influence the root.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Matrix {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = tape.value(v).shape();
                Matrix::zeros(r, c)
            }
        }
    }

    /// Gradients for every parameter placed on `tape`.
    pub fn params(&self, tape: &Tape) -> Vec<(ParamId, Matrix)> {
        let mut out: Vec<(ParamId, Matrix)> = tape
            .params
            .iter()
            .map(|(&id, &v)| (id, self.wrt(tape, v)))
            .collect();
        out.sort_by_key(|(id, _)| *id);
        out
    }
}

fn shape_check(cond: bool, what: &str, a: (usize, usize), b: (usize, usize)) {
    assert!(cond, "{what}: incompatible shapes {a:?} and {b:?}");
}

#[inline]
fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

#[inline]
fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let inner = C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
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

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "scalar() on non-scalar node");
        m.get(0, 0)
    }

    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Leaf)
    }

    /// Places a parameter on the tape; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Param);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        shape_check(k == k2, "matmul", (m, k), (k2, n));
        let mut out = Matrix::zeros(m, n);
        gemm(
            m,
            k,
            n,
            Operand::plain(self.value(a)),
            Operand::plain(self.value(b)),
            out.as_mut_slice(),
            0.0,
        );
        self.push(out, Op::MatMul(a, b))
    }

    /// `a * b^T`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.shape(a);
        let (n, k2) = self.shape(b);
        shape_check(k == k2, "matmul_nt", (m, k), (n, k2));
        let mut out = Matrix::zeros(m, n);
        gemm(
            m,
            k,
            n,
            Operand::plain(self.value(a)),
            Operand::transposed(self.value(b)),
            out.as_mut_slice(),
            0.0,
        );
        self.push(out, Op::MatMulNt(a, b))
    }

    fn zip_same(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64) -> Matrix {
        let (sa, sb) = (self.shape(a), self.shape(b));
        shape_check(sa == sb, what, sa, sb);
        let va = self.value(a).as_slice();
        let vb = self.value(b).as_slice();
        let data = va.iter().zip(vb).map(|(&x, &y)| f(x, y)).collect();
        Matrix::from_vec(sa.0, sa.1, data).expect("shape preserved")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_same(a, b, "add", |x, y| x + y);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_same(a, b, "sub", |x, y| x - y);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_same(a, b, "mul", |x, y| x * y);
        self.push(out, Op::Mul(a, b))
    }

    fn broadcast(&self, x: Var, r: Var, by_row: bool, f: impl Fn(f64, f64) -> f64) -> Matrix {
        let (m, n) = self.shape(x);
        let sr = self.shape(r);
        if by_row {
            shape_check(sr == (1, n), "row broadcast", (m, n), sr);
        } else {
            shape_check(sr == (m, 1), "column broadcast", (m, n), sr);
        }
        let xv = self.value(x);
        let rv = self.value(r).as_slice();
        Matrix::from_fn(m, n, |i, j| {
            let b = if by_row { rv[j] } else { rv[i] };
            f(xv.get(i, j), b)
        })
    }

    /// `x[m,n] + r[1,n]` broadcast over rows.
    pub fn add_row(&mut self, x: Var, r: Var) -> Var {
        let out = self.broadcast(x, r, true, |a, b| a + b);
        self.push(out, Op::AddRow(x, r))
    }

    pub fn mul_row(&mut self, x: Var, r: Var) -> Var {
        let out = self.broadcast(x, r, true, |a, b| a * b);
        self.push(out, Op::MulRow(x, r))
    }

    /// `x[m,n] + c[m,1]` broadcast over columns.
    pub fn add_col(&mut self, x: Var, c: Var) -> Var {
        let out = self.broadcast(x, c, false, |a, b| a + b);
        self.push(out, Op::AddCol(x, c))
    }

    pub fn mul_col(&mut self, x: Var, c: Var) -> Var {
        let out = self.broadcast(x, c, false, |a, b| a * b);
        self.push(out, Op::MulCol(x, c))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x).scale(s);
        self.push(out, Op::Scale(x, s))
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x).map(|v| v + s);
        self.push(out, Op::AddScalar(x))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::tanh);
        self.push(out, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        self.push(out, Op::Sigmoid(x))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(gelu);
        self.push(out, Op::Gelu(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::exp);
        self.push(out, Op::Exp(x))
    }

    pub fn ln(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::ln);
        self.push(out, Op::Ln(x))
    }

    /// Elementwise `x^p`. For `p < 1` the derivative at exactly zero is taken as 0.
    pub fn powf(&mut self, x: Var, p: f64) -> Var {
        let out = self.value(x).map(|v| v.powf(p));
        self.push(out, Op::Powf(x, p))
    }

    /// Elementwise absolute value; subgradient 0 at 0.
    pub fn abs(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::abs);
        self.push(out, Op::Abs(x))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Matrix::filled(1, 1, s), Op::SumAll(x))
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.value(x).len();
        let s = self.sum_all(x);
        self.scale(s, 1.0 / n as f64)
    }

    /// Per-row sum, `[m,n] -> [m,1]`.
    pub fn sum_rows(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let out = Matrix::from_fn(v.rows(), 1, |r, _| v.row(r).iter().sum());
        self.push(out, Op::SumRows(x))
    }

    /// Mean over consecutive blocks of `seg_len` rows: `[b*seg_len, d] -> [b, d]`.
    pub fn mean_segments(&mut self, x: Var, seg_len: usize) -> Var {
        let (m, d) = self.shape(x);
        assert!(seg_len > 0 && m % seg_len == 0, "mean_segments: {m} rows not divisible by {seg_len}");
        let blocks = m / seg_len;
        let v = self.value(x);
        let mut out = Matrix::zeros(blocks, d);
        let inv = 1.0 / seg_len as f64;
        for b in 0..blocks {
            let dst = out.row_mut(b);
            for t in 0..seg_len {
                for (o, s) in dst.iter_mut().zip(v.row(b * seg_len + t)) {
                    *o += s * inv;
                }
            }
        }
        self.push(out, Op::MeanSegments(x, seg_len))
    }

    /// Row-wise log-sum-exp, optionally restricted to entries where `mask` is true
    /// (row-major, same length as `x`). Every row must keep at least one entry.
    pub fn logsumexp_rows(&mut self, x: Var, mask: Option<Vec<bool>>) -> Var {
        let v = self.value(x);
        let (m, n) = v.shape();
        if let Some(mk) = &mask {
            assert_eq!(mk.len(), m * n, "logsumexp mask length");
        }
        let keep = |r: usize, c: usize| mask.as_ref().is_none_or(|mk| mk[r * n + c]);
        let mut out = Matrix::zeros(m, 1);
        let mut weights = Matrix::zeros(m, n);
        for r in 0..m {
            let mut mx = f64::NEG_INFINITY;
            for c in 0..n {
                if keep(r, c) {
                    mx = mx.max(v.get(r, c));
                }
            }
            assert!(mx > f64::NEG_INFINITY, "logsumexp row {r} has no active entries");
            let mut s = 0.0;
            for c in 0..n {
                if keep(r, c) {
                    let e = (v.get(r, c) - mx).exp();
                    weights.set(r, c, e);
                    s += e;
                }
            }
            for c in 0..n {
                let w = weights.get(r, c) / s;
                weights.set(r, c, w);
            }
            out.set(r, 0, mx + s.ln());
        }
        self.push(out, Op::LogSumExpRows { src: x, weights })
    }

    /// Normalises each row to zero mean and unit variance (no affine part).
    pub fn layer_norm(&mut self, x: Var, eps: f64) -> Var {
        let v = self.value(x);
        let (m, n) = v.shape();
        let mut out = Matrix::zeros(m, n);
        let mut inv_std = Vec::with_capacity(m);
        for r in 0..m {
            let row = v.row(r);
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            for (o, a) in out.row_mut(r).iter_mut().zip(row) {
                *o = (a - mean) * is;
            }
            inv_std.push(is);
        }
        self.push(out, Op::LayerNorm { src: x, inv_std })
    }

    /// General gather: output entry `i` (row-major in `rows x cols`) copies
    /// source entry `index[i]`, or is zero when `None`.
    pub fn gather(&mut self, x: Var, rows: usize, cols: usize, index: Vec<Option<u32>>) -> Var {
        assert_eq!(index.len(), rows * cols, "gather index length");
        let src = self.value(x).as_slice();
        let data = index
            .iter()
            .map(|i| i.map_or(0.0, |i| src[i as usize]))
            .collect();
        let out = Matrix::from_vec(rows, cols, data).expect("gather shape");
        self.push(out, Op::Gather { src: x, index })
    }

    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Var {
        let v = self.value(x);
        let n = v.cols();
        let mut data = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            data.extend_from_slice(v.row(r));
        }
        let out = Matrix::from_vec(rows.len(), n, data).expect("gather_rows shape");
        self.push(
            out,
            Op::GatherRows {
                src: x,
                rows: rows.to_vec(),
            },
        )
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let v = self.value(x);
        assert!(start + len <= v.cols(), "slice_cols out of range");
        let out = Matrix::from_fn(v.rows(), len, |r, c| v.get(r, start + c));
        self.push(out, Op::SliceCols { src: x, start })
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let rows: Vec<usize> = (start..start + len).collect();
        self.gather_rows(x, &rows)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let m = self.shape(parts[0]).0;
        let total: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Matrix::zeros(m, total);
        let mut off = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.rows(), m, "concat_cols row mismatch");
            for r in 0..m {
                out.row_mut(r)[off..off + v.cols()].copy_from_slice(v.row(r));
            }
            off += v.cols();
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let n = self.shape(parts[0]).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols(), n, "concat_rows column mismatch");
            data.extend_from_slice(v.as_slice());
            rows += v.rows();
        }
        let out = Matrix::from_vec(rows, n, data).expect("concat_rows shape");
        self.push(out, Op::ConcatRows(parts.to_vec()))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let out = self.value(x).transpose();
        self.push(out, Op::Transpose(x))
    }

    /// Scaled dot-product self-attention applied independently to each block of
    /// `seq_len` consecutive rows and to each of `heads` column groups.
    pub fn block_attention(&mut self, q: Var, k: Var, v: Var, seq_len: usize, heads: usize) -> Var {
        let (m, d) = self.shape(q);
        assert_eq!(self.shape(k), (m, d), "attention key shape");
        assert_eq!(self.shape(v), (m, d), "attention value shape");
        assert!(seq_len > 0 && m % seq_len == 0, "attention rows not divisible by seq_len");
        assert!(heads > 0 && d % heads == 0, "attention heads must divide model dim");
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let mut out = Matrix::zeros(m, d);
        let mut probs = Vec::with_capacity(m / seq_len * heads);
        for b in 0..m / seq_len {
            let base = b * seq_len;
            for h in 0..heads {
                let c0 = h * dh;
                let mut p = Matrix::zeros(seq_len, seq_len);
                for i in 0..seq_len {
                    let qi = &qv.row(base + i)[c0..c0 + dh];
                    let mut mx = f64::NEG_INFINITY;
                    for j in 0..seq_len {
                        let kj = &kv.row(base + j)[c0..c0 + dh];
                        let s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                        p.set(i, j, s);
                        mx = mx.max(s);
                    }
                    let mut z = 0.0;
                    for j in 0..seq_len {
                        let e = (p.get(i, j) - mx).exp();
                        p.set(i, j, e);
                        z += e;
                    }
                    let orow = &mut out.row_mut(base + i)[c0..c0 + dh];
                    for j in 0..seq_len {
                        let w = p.get(i, j) / z;
                        p.set(i, j, w);
                        let vj = &vv.row(base + j)[c0..c0 + dh];
                        for (o, x) in orow.iter_mut().zip(vj) {
                            *o += w * x;
                        }
                    }
                }
                probs.push(p);
            }
        }
        self.push(
            out,
            Op::BlockAttention {
                q,
                k,
                v,
                seq_len,
                heads,
                probs,
            },
        )
    }

    /// Backpropagates from a `1 x 1` root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.shape(root) != (1, 1) {
            return Err(MmclError::validation("backward root must be a scalar"));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        fn acc(grads: &mut [Option<Matrix>], v: Var, delta: Matrix) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        }
        // Adds into the slot in place, allocating zeros first when empty.
        fn acc_with(
            grads: &mut [Option<Matrix>],
            v: Var,
            shape: (usize, usize),
            f: impl FnOnce(&mut Matrix),
        ) {
            let slot = grads[v.0].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1));
            f(slot);
        }
        let val = |v: Var| self.value(v);
        let out = &node.value;

        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let (m, k) = val(*a).shape();
                let n = val(*b).cols();
                acc_with(grads, *a, (m, k), |ga| {
                    gemm(m, n, k, Operand::plain(g), Operand::transposed(val(*b)), ga.as_mut_slice(), 1.0)
                });
                acc_with(grads, *b, (k, n), |gb| {
                    gemm(k, m, n, Operand::transposed(val(*a)), Operand::plain(g), gb.as_mut_slice(), 1.0)
                });
            }
            Op::MatMulNt(a, b) => {
                // out = a b^T ; da = g b ; db = g^T a
                let (m, k) = val(*a).shape();
                let n = val(*b).rows();
                acc_with(grads, *a, (m, k), |ga| {
                    gemm(m, n, k, Operand::plain(g), Operand::plain(val(*b)), ga.as_mut_slice(), 1.0)
                });
                acc_with(grads, *b, (n, k), |gb| {
                    gemm(n, m, k, Operand::transposed(g), Operand::plain(val(*a)), gb.as_mut_slice(), 1.0)
                });
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                acc(grads, *a, zip(g, vb, |x, y| x * y));
                acc(grads, *b, zip(g, va, |x, y| x * y));
            }
            Op::AddRow(x, r) => {
                acc(grads, *x, g.clone());
                let n = g.cols();
                let mut gr = Matrix::zeros(1, n);
                for i in 0..g.rows() {
                    for (o, v) in gr.as_mut_slice().iter_mut().zip(g.row(i)) {
                        *o += v;
                    }
                }
                acc(grads, *r, gr);
            }
            Op::MulRow(x, r) => {
                let (vx, vr) = (val(*x), val(*r));
                let (m, n) = g.shape();
                let gx = Matrix::from_fn(m, n, |i, j| g.get(i, j) * vr.get(0, j));
                let mut gr = Matrix::zeros(1, n);
                for i in 0..m {
                    for j in 0..n {
                        gr.as_mut_slice()[j] += g.get(i, j) * vx.get(i, j);
                    }
                }
                acc(grads, *x, gx);
                acc(grads, *r, gr);
            }
            Op::AddCol(x, c) => {
                acc(grads, *x, g.clone());
                let gc = Matrix::from_fn(g.rows(), 1, |i, _| g.row(i).iter().sum());
                acc(grads, *c, gc);
            }
            Op::MulCol(x, c) => {
                let (vx, vc) = (val(*x), val(*c));
                let (m, n) = g.shape();
                let gx = Matrix::from_fn(m, n, |i, j| g.get(i, j) * vc.get(i, 0));
                let gc = Matrix::from_fn(m, 1, |i, _| {
                    g.row(i).iter().zip(vx.row(i)).map(|(a, b)| a * b).sum()
                });
                acc(grads, *x, gx);
                acc(grads, *c, gc);
            }
            Op::Scale(x, s) => acc(grads, *x, g.scale(*s)),
            Op::AddScalar(x) => acc(grads, *x, g.clone()),
            Op::Tanh(x) => acc(grads, *x, zip(g, out, |gv, y| gv * (1.0 - y * y))),
            Op::Sigmoid(x) => acc(grads, *x, zip(g, out, |gv, y| gv * y * (1.0 - y))),
            Op::Gelu(x) => acc(grads, *x, zip(g, val(*x), |gv, xv| gv * gelu_grad(xv))),
            Op::Exp(x) => acc(grads, *x, zip(g, out, |gv, y| gv * y)),
            Op::Ln(x) => acc(grads, *x, zip(g, val(*x), |gv, xv| gv / xv)),
            Op::Powf(x, p) => {
                let p = *p;
                acc(
                    grads,
                    *x,
                    zip(g, val(*x), |gv, xv| {
                        if xv == 0.0 && p < 1.0 {
                            0.0
                        } else {
                            gv * p * xv.powf(p - 1.0)
                        }
                    }),
                )
            }
            Op::Abs(x) => acc(grads, *x, zip(g, val(*x), |gv, xv| gv * sign(xv))),
            Op::SumAll(x) => {
                let (m, n) = val(*x).shape();
                acc(grads, *x, Matrix::filled(m, n, g.get(0, 0)));
            }
            Op::SumRows(x) => {
                let (m, n) = val(*x).shape();
                acc(grads, *x, Matrix::from_fn(m, n, |i, _| g.get(i, 0)));
            }
            Op::MeanSegments(x, seg) => {
                let (m, d) = val(*x).shape();
                let inv = 1.0 / *seg as f64;
                acc(grads, *x, Matrix::from_fn(m, d, |i, j| g.get(i / seg, j) * inv));
            }
            Op::LogSumExpRows { src, weights, .. } => {
                let (m, n) = weights.shape();
                acc(grads, *src, Matrix::from_fn(m, n, |i, j| g.get(i, 0) * weights.get(i, j)));
            }
            Op::LayerNorm { src, inv_std } => {
                let (m, n) = out.shape();
                let mut gx = Matrix::zeros(m, n);
                for r in 0..m {
                    let y = out.row(r);
                    let gy = g.row(r);
                    let mean_g = gy.iter().sum::<f64>() / n as f64;
                    let mean_gy = gy.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                    for ((o, &gyv), &yv) in gx.row_mut(r).iter_mut().zip(gy).zip(y) {
                        *o = inv_std[r] * (gyv - mean_g - yv * mean_gy);
                    }
                }
                acc(grads, *src, gx);
            }
            Op::Gather { src, index } => {
                let shape = val(*src).shape();
                acc_with(grads, *src, shape, |gs| {
                    let dst = gs.as_mut_slice();
                    for (gv, i) in g.as_slice().iter().zip(index) {
                        if let Some(i) = i {
                            dst[*i as usize] += gv;
                        }
                    }
                });
            }
            Op::GatherRows { src, rows } => {
                let shape = val(*src).shape();
                acc_with(grads, *src, shape, |gs| {
                    for (i, &r) in rows.iter().enumerate() {
                        for (o, v) in gs.row_mut(r).iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                });
            }
            Op::SliceCols { src, start } => {
                let shape = val(*src).shape();
                let w = g.cols();
                acc_with(grads, *src, shape, |gs| {
                    for r in 0..g.rows() {
                        for (o, v) in gs.row_mut(r)[*start..*start + w].iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let (m, w) = val(p).shape();
                    let gp = Matrix::from_fn(m, w, |i, j| g.get(i, off + j));
                    acc(grads, p, gp);
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let (m, n) = val(p).shape();
                    let gp = Matrix::from_vec(m, n, g.as_slice()[off * n..(off + m) * n].to_vec())
                        .expect("concat_rows grad");
                    acc(grads, p, gp);
                    off += m;
                }
            }
            Op::Transpose(x) => acc(grads, *x, g.transpose()),
            Op::BlockAttention {
                q,
                k,
                v,
                seq_len,
                heads,
                probs,
            } => {
                let (qv, kv, vv) = (val(*q), val(*k), val(*v));
                let (m, d) = qv.shape();
                let l = *seq_len;
                let dh = d / heads;
                let scale = 1.0 / (dh as f64).sqrt();
                let mut gq = Matrix::zeros(m, d);
                let mut gk = Matrix::zeros(m, d);
                let mut gvv = Matrix::zeros(m, d);
                let mut dp = vec![0.0; l];
                for b in 0..m / l {
                    let base = b * l;
                    for h in 0..*heads {
                        let p = &probs[b * heads + h];
                        let c0 = h * dh;
                        for i in 0..l {
                            let go = &g.row(base + i)[c0..c0 + dh];
                            // dV_j += p_ij * dO_i ; dP_ij = dO_i . V_j
                            for j in 0..l {
                                let pij = p.get(i, j);
                                let gvr = &mut gvv.row_mut(base + j)[c0..c0 + dh];
                                for (o, x) in gvr.iter_mut().zip(go) {
                                    *o += pij * x;
                                }
                                let vj = &vv.row(base + j)[c0..c0 + dh];
                                dp[j] = go.iter().zip(vj).map(|(a, b)| a * b).sum();
                            }
                            let dot: f64 = (0..l).map(|j| dp[j] * p.get(i, j)).sum();
                            for j in 0..l {
                                let ds = p.get(i, j) * (dp[j] - dot) * scale;
                                if ds == 0.0 {
                                    continue;
                                }
                                let kj = &kv.row(base + j)[c0..c0 + dh];
                                for (o, x) in gq.row_mut(base + i)[c0..c0 + dh].iter_mut().zip(kj) {
                                    *o += ds * x;
                                }
                                let qi = &qv.row(base + i)[c0..c0 + dh];
                                for (o, x) in gk.row_mut(base + j)[c0..c0 + dh].iter_mut().zip(qi) {
                                    *o += ds * x;
                                }
                            }
                        }
                    }
                }
                acc(grads, *q, gq);
                acc(grads, *k, gk);
                acc(grads, *v, gvv);
            }
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn zip(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(&x, &y)| f(x, y)).collect();
    Matrix::from_vec(a.rows(), a.cols(), data).expect("zip shape")
}

/// Evaluates a scalar function of `inputs` built on a fresh tape and returns
/// its value together with the gradient for each input.
pub fn value_and_grad(
    inputs: &[Matrix],
    build: impl FnOnce(&mut Tape, &[Var]) -> Result<Var>,
) -> Result<(f64, Vec<Matrix>)> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.constant(m.clone())).collect();
    let root = build(&mut tape, &vars)?;
    let value = tape.scalar(root);
    let grads = tape.backward(root)?;
    Ok((value, vars.iter().map(|&v| grads.wrt(&tape, v)).collect()))
}

/// Central finite-difference gradient of a scalar function of several matrices.
pub fn numeric_grad(
    inputs: &[Matrix],
    step: f64,
    mut f: impl FnMut(&[Matrix]) -> Result<f64>,
) -> Result<Vec<Matrix>> {
    let mut work = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for which in 0..inputs.len() {
        let (r, c) = inputs[which].shape();
        let mut g = Matrix::zeros(r, c);
        for i in 0..r * c {
            let orig = work[which].as_slice()[i];
            work[which].as_mut_slice()[i] = orig + step;
            let fp = f(&work)?;
            work[which].as_mut_slice()[i] = orig - step;
            let fm = f(&work)?;
            work[which].as_mut_slice()[i] = orig;
            g.as_mut_slice()[i] = (fp - fm) / (2.0 * step);
        }
        out.push(g);
    }
    Ok(out)
}

/// Relative error `|a - b| / max(|a|, |b|, floor)` used by every gradient check.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
