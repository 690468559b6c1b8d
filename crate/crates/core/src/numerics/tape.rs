//! Reverse-mode differentiation over a linear tape.
//!
//! Nodes are appended in evaluation order, so the tape is a topological order
//! of the computation by construction; `backward` walks it in reverse once.

use std::borrow::Cow;

use super::kernels::{gemm, View, ViewMut};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh-approximated GELU: `0.5·x·(1 + tanh(sqrt(2/π)·(x + 0.044715·x³)))`.
pub fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_derivative(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        trans_b: bool,
    },
    Add(Var, Var),
    AddRow {
        x: Var,
        bias: Var,
    },
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Softmax {
        x: Var,
        axis: usize,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    ConcatRows(Vec<Var>),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        probs: Vec<f64>,
    },
    CrossEntropy {
        logits: Var,
        target: usize,
        probs: Vec<f64>,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul { .. } => "matmul",
            Op::Add(..) => "add",
            Op::AddRow { .. } => "add_row",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Sum(..) => "sum",
            Op::Gelu(..) => "gelu",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Softmax { .. } => "softmax",
            Op::Gather { .. } => "gather",
            Op::ConcatRows(..) => "concat_rows",
            Op::Attention { .. } => "attention",
            Op::CrossEntropy { .. } => "cross_entropy",
        }
    }
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    tracked: bool,
}

/// A single-threaded recording of tensor operations.
///
/// Parameters enter as borrowed tracked leaves ([`Tape::leaf`]); inputs that
/// need no gradient enter through [`Tape::constant`].
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    leaf_grads: Vec<Option<Vec<f64>>>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            leaf_grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Tensor>, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("{} output", op.name())));
        }
        let tracked = inputs.iter().any(|v| self.nodes[v.0].tracked);
        Ok(self.push(Cow::Owned(value), op, tracked))
    }

    /// Tracked leaf borrowing an existing tensor (typically a parameter).
    pub fn leaf(&mut self, t: &'a Tensor) -> Var {
        self.push(Cow::Borrowed(t), Op::Leaf, true)
    }

    /// Tracked leaf owning its value.
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(Cow::Owned(t.detached()), Op::Leaf, true)
    }

    /// Untracked input.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Cow::Owned(t.detached()), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// Accumulated gradient of a tracked leaf, if `backward` has reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.leaf_grads[v.0].as_deref()
    }

    /// Moves the accumulated gradient of a leaf out of the tape.
    pub fn take_grad(&mut self, v: Var) -> Option<Vec<f64>> {
        self.leaf_grads[v.0].take()
    }

    /// Resets every accumulated leaf gradient.
    pub fn zero_grad(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    /// Attention probabilities saved by an [`Tape::attention`] node, laid out
    /// `heads × rows × rows`.
    pub fn attention_probs(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    // ---- operations -------------------------------------------------------

    fn as_matrix(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        let t = self.value(v);
        if t.shape().len() > 2 {
            return Err(Error::InvalidShape {
                shape: t.shape().to_vec(),
                reason: format!("{op} expects rank 1 or 2"),
            });
        }
        Ok((t.rows(), t.cols()))
    }

    /// `a · b`, or `a · bᵀ` when `trans_b` is set.
    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (m, k) = self.as_matrix(a, "matmul")?;
        let (br, bc) = self.as_matrix(b, "matmul")?;
        let (kb, n) = if trans_b { (bc, br) } else { (br, bc) };
        if k != kb {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        let mut out = vec![0.0; m * n];
        {
            let av = View::dense(self.value(a).data(), m, k);
            let bv = View::dense(self.value(b).data(), br, bc);
            let bv = if trans_b { bv.t() } else { bv };
            gemm(1.0, av, bv, 0.0, ViewMut::dense(&mut out, m, n));
        }
        let t = Tensor::matrix(m, n, out)?;
        self.push_op(t, Op::MatMul { a, b, trans_b }, &[a, b])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ` without materializing the transpose.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::ShapeMismatch {
                op,
                lhs: self.value(a).shape().to_vec(),
                rhs: self.value(b).shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let av = self.value(a);
        let data = av
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let t = Tensor::new(av.shape().to_vec(), data)?;
        self.push_op(t, Op::Add(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let av = self.value(a);
        let data = av
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let t = Tensor::new(av.shape().to_vec(), data)?;
        self.push_op(t, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let av = self.value(a);
        let data = av.data().iter().map(|x| x * factor).collect();
        let t = Tensor::new(av.shape().to_vec(), data)?;
        self.push_op(t, Op::Scale(a, factor), &[a])
    }

    /// Adds a length-`cols` vector to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (rows, cols) = self.as_matrix(x, "add_row")?;
        if self.value(bias).len() != cols {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                lhs: self.value(x).shape().to_vec(),
                rhs: self.value(bias).shape().to_vec(),
            });
        }
        let b = self.value(bias).data();
        let mut data = self.value(x).data().to_vec();
        for r in 0..rows {
            for (d, bv) in data[r * cols..(r + 1) * cols].iter_mut().zip(b) {
                *d += bv;
            }
        }
        let t = Tensor::new(self.value(x).shape().to_vec(), data)?;
        self.push_op(t, Op::AddRow { x, bias }, &[x, bias])
    }

    /// `x · w + b` for a `[in, out]` weight and `[out]` bias.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => self.add_row(y, b),
            None => Ok(y),
        }
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.value(a).data().iter().sum();
        self.push_op(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| gelu_scalar(x)).collect();
        let t = Tensor::new(av.shape().to_vec(), data)?;
        self.push_op(t, Op::Gelu(a), &[a])
    }

    /// Normalizes each row to zero mean and unit variance, then applies
    /// `gamma ⊙ x̂ + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        if eps <= 0.0 {
            return Err(Error::invalid("layer_norm eps must be positive"));
        }
        let (rows, cols) = self.as_matrix(x, "layer_norm")?;
        if self.value(gamma).len() != cols || self.value(beta).len() != cols {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                lhs: self.value(x).shape().to_vec(),
                rhs: self.value(gamma).shape().to_vec(),
            });
        }
        let xs = self.value(x).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = vec![0.0; rows * cols];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &xs[r * cols..(r + 1) * cols];
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for c in 0..cols {
                let h = (row[c] - mean) * is;
                xhat[r * cols + c] = h;
                out[r * cols + c] = g[c] * h + b[c];
            }
        }
        let t = Tensor::new(self.value(x).shape().to_vec(), out)?;
        self.push_op(
            t,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        )
    }

    /// Softmax along `axis`, computed with max subtraction.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.value(x).shape().to_vec();
        if axis >= shape.len() {
            return Err(Error::InvalidShape {
                shape,
                reason: format!("softmax axis {axis} out of range"),
            });
        }
        let out = softmax_along(self.value(x).data(), &shape, axis);
        let t = Tensor::new(shape, out)?;
        self.push_op(t, Op::Softmax { x, axis }, &[x])
    }

    /// Row lookup: output row `i` is `table[ids[i]]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (rows, cols) = self.as_matrix(table, "gather")?;
        if ids.is_empty() {
            return Err(Error::Empty("gather ids"));
        }
        let src = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(Error::OutOfRange {
                    what: "gather",
                    index: id,
                    extent: rows,
                });
            }
            out.extend_from_slice(&src[id * cols..(id + 1) * cols]);
        }
        let t = Tensor::matrix(ids.len(), cols, out)?;
        self.push_op(
            t,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        )
    }

    /// Stacks matrices with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(Error::Empty("concat_rows parts"))?;
        let cols = self.as_matrix(first, "concat_rows")?.1;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (r, c) = self.as_matrix(p, "concat_rows")?;
            if c != cols {
                return Err(Error::ShapeMismatch {
                    op: "concat_rows",
                    lhs: self.value(first).shape().to_vec(),
                    rhs: self.value(p).shape().to_vec(),
                });
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        let t = Tensor::matrix(rows, cols, data)?;
        self.push_op(t, Op::ConcatRows(parts.to_vec()), parts)
    }

    /// Multi-head scaled dot-product attention with no masking: every row
    /// attends to every row. `q`, `k`, `v` are `[rows, width]` with
    /// `width % heads == 0`; heads occupy contiguous column blocks.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
        let (l, d) = self.as_matrix(q, "attention")?;
        for other in [k, v] {
            if self.value(other).shape() != self.value(q).shape() {
                return Err(Error::ShapeMismatch {
                    op: "attention",
                    lhs: self.value(q).shape().to_vec(),
                    rhs: self.value(other).shape().to_vec(),
                });
            }
        }
        if heads == 0 || d % heads != 0 {
            return Err(Error::invalid(format!(
                "attention width {d} not divisible by {heads} heads"
            )));
        }
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let qd = self.value(q).data();
        let kd = self.value(k).data();
        let vd = self.value(v).data();
        let mut probs = vec![0.0; heads * l * l];
        let mut out = vec![0.0; l * d];
        for h in 0..heads {
            let p = &mut probs[h * l * l..(h + 1) * l * l];
            gemm(
                scale,
                View::columns(qd, l, d, h * dh, dh),
                View::columns(kd, l, d, h * dh, dh).t(),
                0.0,
                ViewMut::dense(p, l, l),
            );
            for r in 0..l {
                softmax_in_place(&mut p[r * l..(r + 1) * l]);
            }
            gemm(
                1.0,
                View::dense(p, l, l),
                View::columns(vd, l, d, h * dh, dh),
                0.0,
                ViewMut::columns(&mut out, l, d, h * dh, dh),
            );
        }
        let t = Tensor::matrix(l, d, out)?;
        self.push_op(
            t,
            Op::Attention {
                q,
                k,
                v,
                heads,
                probs,
            },
            &[q, k, v],
        )
    }

    /// `−log softmax(logits)[target]` for a single row of logits.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let t = self.value(logits);
        if t.rows() != 1 {
            return Err(Error::InvalidShape {
                shape: t.shape().to_vec(),
                reason: "cross_entropy expects a single row of logits".into(),
            });
        }
        if target >= t.cols() {
            return Err(Error::OutOfRange {
                what: "cross_entropy target",
                index: target,
                extent: t.cols(),
            });
        }
        let mut probs = t.data().to_vec();
        let max = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + probs.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        let loss = lse - t.data()[target];
        for p in probs.iter_mut() {
            *p = (*p - lse).exp();
        }
        self.push_op(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                target,
                probs,
            },
            &[logits],
        )
    }

    // ---- reverse pass -----------------------------------------------------

    /// Propagates `∂root/∂leaf` into every tracked leaf. Gradients accumulate
    /// across calls until [`Tape::zero_grad`].
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if !self.nodes[root.0].tracked {
            return Err(Error::UntrackedRoot);
        }
        if self.value(root).len() != 1 {
            return Err(Error::NonScalarRoot(self.value(root).shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].tracked {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                if !g.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFinite(format!("gradient of leaf {i}")));
                }
                match &mut self.leaf_grads[i] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
                continue;
            }
            self.backprop_node(i, &g, &mut grads);
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        // Adds `delta` (computed lazily) into the gradient slot of `v`.
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[v.0].tracked {
                return;
            }
            let n = nodes[v.0].value.len();
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; n]);
            f(slot);
        };
        let val = |v: Var| -> &Tensor { &nodes[v.0].value };
        match &nodes[i].op {
            Op::Leaf => unreachable!(),
            Op::MatMul { a, b, trans_b } => {
                let (m, k) = (val(*a).rows(), val(*a).cols());
                let (br, bc) = (val(*b).rows(), val(*b).cols());
                let n = if *trans_b { br } else { bc };
                let gv = View::dense(g, m, n);
                acc(*a, &mut |da| {
                    // dA = dC · Bᵀ
                    let bv = View::dense(val(*b).data(), br, bc);
                    let bt = if *trans_b { bv } else { bv.t() };
                    gemm(1.0, gv, bt, 1.0, ViewMut::dense(da, m, k));
                });
                acc(*b, &mut |db| {
                    let av = View::dense(val(*a).data(), m, k);
                    if *trans_b {
                        // C = A·Bᵀ  ⇒  dB = dCᵀ · A
                        gemm(1.0, gv.t(), av, 1.0, ViewMut::dense(db, br, bc));
                    } else {
                        // dB = Aᵀ · dC
                        gemm(1.0, av.t(), gv, 1.0, ViewMut::dense(db, br, bc));
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |d| d.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                acc(*b, &mut |d| d.iter_mut().zip(g).for_each(|(x, y)| *x += y));
            }
            Op::AddRow { x, bias } => {
                acc(*x, &mut |d| d.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                let cols = val(*bias).len();
                acc(*bias, &mut |d| {
                    for row in g.chunks(cols) {
                        d.iter_mut().zip(row).for_each(|(x, y)| *x += y);
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a).data(), val(*b).data());
                acc(*a, &mut |d| {
                    for j in 0..d.len() {
                        d[j] += g[j] * bv[j];
                    }
                });
                acc(*b, &mut |d| {
                    for j in 0..d.len() {
                        d[j] += g[j] * av[j];
                    }
                });
            }
            Op::Scale(a, f) => {
                acc(*a, &mut |d| {
                    d.iter_mut().zip(g).for_each(|(x, y)| *x += y * f)
                });
            }
            Op::Sum(a) => {
                acc(*a, &mut |d| d.iter_mut().for_each(|x| *x += g[0]));
            }
            Op::Gelu(a) => {
                let av = val(*a).data();
                acc(*a, &mut |d| {
                    for j in 0..d.len() {
                        d[j] += g[j] * gelu_derivative(av[j]);
                    }
                });
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let cols = val(*gamma).len();
                let rows = inv_std.len();
                let gm = val(*gamma).data();
                acc(*x, &mut |dx| {
                    for r in 0..rows {
                        let gr = &g[r * cols..(r + 1) * cols];
                        let hr = &xhat[r * cols..(r + 1) * cols];
                        let mut mean_dh = 0.0;
                        let mut mean_dh_h = 0.0;
                        for c in 0..cols {
                            let dh = gr[c] * gm[c];
                            mean_dh += dh;
                            mean_dh_h += dh * hr[c];
                        }
                        mean_dh /= cols as f64;
                        mean_dh_h /= cols as f64;
                        for c in 0..cols {
                            let dh = gr[c] * gm[c];
                            dx[r * cols + c] += inv_std[r] * (dh - mean_dh - hr[c] * mean_dh_h);
                        }
                    }
                });
                acc(*gamma, &mut |dg| {
                    for r in 0..rows {
                        for c in 0..cols {
                            dg[c] += g[r * cols + c] * xhat[r * cols + c];
                        }
                    }
                });
                acc(*beta, &mut |db| {
                    for r in 0..rows {
                        for c in 0..cols {
                            db[c] += g[r * cols + c];
                        }
                    }
                });
            }
            Op::Softmax { x, axis } => {
                let y = nodes[i].value.data();
                let shape = nodes[i].value.shape();
                let n = shape[*axis];
                let inner: usize = shape[axis + 1..].iter().product();
                let outer: usize = shape[..*axis].iter().product();
                acc(*x, &mut |dx| {
                    for o in 0..outer {
                        for j in 0..inner {
                            let base = o * n * inner + j;
                            let dot: f64 = (0..n)
                                .map(|t| g[base + t * inner] * y[base + t * inner])
                                .sum();
                            for t in 0..n {
                                let idx = base + t * inner;
                                dx[idx] += y[idx] * (g[idx] - dot);
                            }
                        }
                    }
                });
            }
            Op::Gather { table, ids } => {
                let cols = val(*table).cols();
                acc(*table, &mut |dt| {
                    for (r, &id) in ids.iter().enumerate() {
                        for c in 0..cols {
                            dt[id * cols + c] += g[r * cols + c];
                        }
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = val(p).len();
                    let chunk = &g[offset..offset + n];
                    acc(p, &mut |d| {
                        d.iter_mut().zip(chunk).for_each(|(x, y)| *x += y)
                    });
                    offset += n;
                }
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                probs,
            } => {
                let (l, d) = (val(*q).rows(), val(*q).cols());
                let dh = d / heads;
                let scale = 1.0 / (dh as f64).sqrt();
                let (qd, kd, vd) = (val(*q).data(), val(*k).data(), val(*v).data());
                // dS per head, after the softmax Jacobian
                let mut ds = vec![0.0; heads * l * l];
                for h in 0..*heads {
                    let p = &probs[h * l * l..(h + 1) * l * l];
                    let dsh = &mut ds[h * l * l..(h + 1) * l * l];
                    // dP = dO_h · V_hᵀ
                    gemm(
                        1.0,
                        View::columns(g, l, d, h * dh, dh),
                        View::columns(vd, l, d, h * dh, dh).t(),
                        0.0,
                        ViewMut::dense(dsh, l, l),
                    );
                    for r in 0..l {
                        let pr = &p[r * l..(r + 1) * l];
                        let dr = &mut dsh[r * l..(r + 1) * l];
                        let dot: f64 = pr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
                        for c in 0..l {
                            dr[c] = pr[c] * (dr[c] - dot);
                        }
                    }
                }
                acc(*v, &mut |dv| {
                    for h in 0..*heads {
                        let p = &probs[h * l * l..(h + 1) * l * l];
                        gemm(
                            1.0,
                            View::dense(p, l, l).t(),
                            View::columns(g, l, d, h * dh, dh),
                            1.0,
                            ViewMut::columns(dv, l, d, h * dh, dh),
                        );
                    }
                });
                acc(*q, &mut |dq| {
                    for h in 0..*heads {
                        gemm(
                            scale,
                            View::dense(&ds[h * l * l..(h + 1) * l * l], l, l),
                            View::columns(kd, l, d, h * dh, dh),
                            1.0,
                            ViewMut::columns(dq, l, d, h * dh, dh),
                        );
                    }
                });
                acc(*k, &mut |dk| {
                    for h in 0..*heads {
                        gemm(
                            scale,
                            View::dense(&ds[h * l * l..(h + 1) * l * l], l, l).t(),
                            View::columns(qd, l, d, h * dh, dh),
                            1.0,
                            ViewMut::columns(dk, l, d, h * dh, dh),
                        );
                    }
                });
            }
            Op::CrossEntropy {
                logits,
                target,
                probs,
            } => {
                acc(*logits, &mut |d| {
                    for (j, p) in probs.iter().enumerate() {
                        let one_hot = if j == *target { 1.0 } else { 0.0 };
                        d[j] += g[0] * (p - one_hot);
                    }
                });
            }
        }
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Softmax of row-major `data` with `shape` along `axis`.
pub fn softmax_along(data: &[f64], shape: &[usize], axis: usize) -> Vec<f64> {
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = data.to_vec();
    let mut buf = vec![0.0; n];
    for o in 0..outer {
        for j in 0..inner {
            let base = o * n * inner + j;
            for t in 0..n {
                buf[t] = data[base + t * inner];
            }
            softmax_in_place(&mut buf);
            for t in 0..n {
                out[base + t * inner] = buf[t];
            }
        }
    }
    out
}
