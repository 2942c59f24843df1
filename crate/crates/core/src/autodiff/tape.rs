use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::array::{gemm, Array};
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::math;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Concat { parts: Vec<Var>, axis: usize },
    Slice { src: Var, axis: usize, start: usize },
    Lookup { table: Var, ids: Vec<usize> },
    Softmax { x: Var, axis: usize },
    LayerNorm { x: Var, gamma: Var, beta: Var, eps: f64 },
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Conv1d { x: Var, w: Var, b: Var, cols: Array },
    Gated(Var, Var),
    Mse(Var, Var),
    CrossEntropy { probs: Var, weights: Arc<Array> },
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node {
    value: Arc<Array>,
    op: Op,
    param: Option<ParamId>,
}

/// Probability floor inside the cross-entropy logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

/// Records primitive operations in execution order so that gradients can be
/// replayed backwards. Record order is a topological order by construction.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Array> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }
}

fn same_shape(op: &'static str, a: &Array, b: &Array) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, a.shape(), b.shape()));
    }
    Ok(())
}

fn require_matrix(op: &'static str, a: &Array) -> Result<()> {
    if a.shape().len() != 2 {
        return Err(Error::shape(op, a.shape(), &[]));
    }
    Ok(())
}

/// Iterates groups along `axis` of a rank ≤ 2 array as (offset, stride).
fn axis_groups(shape: &[usize], axis: usize) -> Result<(usize, usize, usize, usize)> {
    // returns (n_groups, group_len, group_step, elem_stride)
    match (shape.len(), axis) {
        (1, 0) => Ok((1, shape[0], 0, 1)),
        (2, 1) => Ok((shape[0], shape[1], shape[1], 1)),
        (2, 0) => Ok((shape[1], shape[0], 1, shape[1])),
        _ => Err(Error::shape("softmax", shape, &[axis])),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array, op: Op) -> Var {
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array {
        &self.nodes[v.0].value
    }

    /// First element of a node's value; used for scalar losses.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn constant(&mut self, value: Array) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn constant_shared(&mut self, value: Arc<Array>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Binds a stored parameter as a leaf; its gradient is collected by
    /// [`ParamStore::accumulate`].
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: store.shared(id),
            op: Op::Leaf,
            param: Some(id),
        });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn param_nodes(&self) -> impl Iterator<Item = (Var, ParamId)> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.param.map(|p| (Var(i), p)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul_t(self.value(b))?;
        Ok(self.push(out, Op::MatMulT(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("add", x, y)?;
        let mut out = x.clone();
        out.axpy(1.0, y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("sub", x, y)?;
        let mut out = x.clone();
        out.axpy(-1.0, y);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape("mul", x, y)?;
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let out = Array::new(x.shape(), data)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// Adds a row vector (`[c]` or `[1, c]`) to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.len() != xv.cols() {
            return Err(Error::shape("add_row", xv.shape(), bv.shape()));
        }
        let mut out = xv.clone();
        let c = xv.cols();
        for r in 0..xv.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        debug_assert_eq!(out.cols(), c);
        Ok(self.push(out, Op::AddRow(x, bias)))
    }

    pub fn scale(&mut self, x: Var, alpha: f64) -> Var {
        let out = self.value(x).scaled(alpha);
        self.push(out, Op::Scale(x, alpha))
    }

    /// Concatenates rank-2 arrays along `axis` (0 = rows, 1 = columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = *parts.first().ok_or(Error::Empty("concat"))?;
        let base = self.value(first).shape().to_vec();
        require_matrix("concat", self.value(first))?;
        if axis > 1 {
            return Err(Error::shape("concat", &base, &[axis]));
        }
        let keep = 1 - axis;
        let mut total = 0;
        for &p in parts {
            let s = self.value(p).shape();
            if s.len() != 2 || s[keep] != base[keep] {
                return Err(Error::shape("concat", &base, s));
            }
            total += s[axis];
        }
        let out = if axis == 0 {
            let mut data = Vec::with_capacity(total * base[1]);
            for &p in parts {
                data.extend_from_slice(self.value(p).data());
            }
            Array::new(&[total, base[1]], data)?
        } else {
            let rows = base[0];
            let mut out = Array::zeros(&[rows, total]);
            let mut off = 0;
            for &p in parts {
                let v = self.value(p);
                let w = v.cols();
                for r in 0..rows {
                    out.row_mut(r)[off..off + w].copy_from_slice(v.row(r));
                }
                off += w;
            }
            out
        };
        Ok(self.push(
            out,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
        ))
    }

    /// Contiguous slice `[start, start + len)` of a rank-2 array along `axis`.
    pub fn slice(&mut self, src: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let v = self.value(src);
        require_matrix("slice", v)?;
        let s = v.shape();
        if axis > 1 || start + len > s[axis] {
            return Err(Error::shape("slice", s, &[axis, start, len]));
        }
        let out = if axis == 0 {
            let c = s[1];
            Array::new(&[len, c], v.data()[start * c..(start + len) * c].to_vec())?
        } else {
            let mut out = Array::zeros(&[s[0], len]);
            for r in 0..s[0] {
                out.row_mut(r).copy_from_slice(&v.row(r)[start..start + len]);
            }
            out
        };
        Ok(self.push(out, Op::Slice { src, axis, start }))
    }

    /// Splits along `axis` into equally sized pieces.
    pub fn split(&mut self, src: Var, axis: usize, pieces: usize) -> Result<Vec<Var>> {
        let s = self.value(src).shape().to_vec();
        if s.len() != 2 || axis > 1 || pieces == 0 || !s[axis].is_multiple_of(pieces) {
            return Err(Error::shape("split", &s, &[axis, pieces]));
        }
        let w = s[axis] / pieces;
        (0..pieces).map(|i| self.slice(src, axis, i * w, w)).collect()
    }

    /// Gathers rows of `table` (`[n, d]`) into a `[ids.len(), d]` array.
    pub fn lookup(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        require_matrix("lookup", t)?;
        let d = t.cols();
        let mut data = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            if i >= t.rows() {
                return Err(Error::shape("lookup", t.shape(), &[i]));
            }
            data.extend_from_slice(t.row(i));
        }
        let out = Array::new(&[ids.len(), d], data)?;
        Ok(self.push(
            out,
            Op::Lookup {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let v = self.value(x);
        let (groups, len, step, stride) = axis_groups(v.shape(), axis)?;
        let mut out = v.clone();
        let data = out.data_mut();
        for g in 0..groups {
            let base = g * step;
            let mut m = f64::NEG_INFINITY;
            for i in 0..len {
                m = m.max(data[base + i * stride]);
            }
            let mut z = 0.0;
            for i in 0..len {
                let e = math::exp(data[base + i * stride] - m);
                data[base + i * stride] = e;
                z += e;
            }
            for i in 0..len {
                data[base + i * stride] /= z;
            }
        }
        Ok(self.push(out, Op::Softmax { x, axis }))
    }

    /// Normalizes each row to zero mean / unit variance, then applies the
    /// per-column affine `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (xv, g, b) = (self.value(x), self.value(gamma), self.value(beta));
        let c = xv.cols();
        if g.len() != c || b.len() != c {
            return Err(Error::shape("layer_norm", xv.shape(), g.shape()));
        }
        let mut out = xv.clone();
        for r in 0..xv.rows() {
            let (mean, inv) = row_stats(xv.row(r), eps);
            for (j, o) in out.row_mut(r).iter_mut().enumerate() {
                *o = (*o - mean) * inv * g.data()[j] + b.data()[j];
            }
        }
        Ok(self.push(out, Op::LayerNorm { x, gamma, beta, eps }))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(math::sigmoid);
        self.push(out, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(math::tanh);
        self.push(out, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(out, Op::Relu(x))
    }

    /// `x ⊙ sigmoid(x)`, composed from recorded primitives.
    pub fn silu(&mut self, x: Var) -> Result<Var> {
        let s = self.sigmoid(x);
        self.mul(x, s)
    }

    /// One-dimensional convolution along rows with same padding.
    ///
    /// `x` is `[n, c_in]`, `w` is `[k, c_in, c_out]` with odd `k`, `b` is
    /// `[c_out]`. Output is `[n, c_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        require_matrix("conv1d", xv)?;
        let ws = wv.shape();
        if ws.len() != 3 || ws[0] % 2 == 0 || ws[1] != xv.cols() || bv.len() != ws[2] {
            return Err(Error::shape("conv1d", xv.shape(), ws));
        }
        let (k, c_in, c_out) = (ws[0], ws[1], ws[2]);
        let n = xv.rows();
        let cols = im2col(xv, k);
        let mut out = Array::zeros(&[n, c_out]);
        for r in 0..n {
            out.row_mut(r).copy_from_slice(bv.data());
        }
        let wmat = Array::new(&[k * c_in, c_out], wv.data().to_vec())?;
        gemm(false, false, 1.0, &cols, &wmat, 1.0, &mut out);
        Ok(self.push(out, Op::Conv1d { x, w, b, cols }))
    }

    /// Gated activation unit `tanh(a) ⊙ sigmoid(b)`.
    pub fn gated(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape("gated", av, bv)?;
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&p, &q)| math::tanh(p) * math::sigmoid(q))
            .collect();
        let out = Array::new(av.shape(), data)?;
        Ok(self.push(out, Op::Gated(a, b)))
    }

    /// Mean of squared differences over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape("mse", av, bv)?;
        let n = av.len().max(1) as f64;
        let s: f64 = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(p, q)| (p - q) * (p - q))
            .sum();
        Ok(self.push(Array::scalar(s / n), Op::Mse(a, b)))
    }

    /// Row-averaged cross-entropy `−mean_r Σ_i probs[r,i] · ln(target[r,i] + floor)`.
    ///
    /// `probs` carries the gradient; `target` is treated as a constant.
    pub fn cross_entropy(&mut self, probs: Var, target: &Array) -> Result<Var> {
        let pv = self.value(probs);
        same_shape("cross_entropy", pv, target)?;
        let weights = target.map(|p| -math::ln(p + LOG_FLOOR));
        let rows = pv.rows().max(1) as f64;
        let v = pv.dot(&weights) / rows;
        Ok(self.push(
            Array::scalar(v),
            Op::CrossEntropy {
                probs,
                weights: Arc::new(weights),
            },
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Array::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.sum() / v.len().max(1) as f64;
        self.push(Array::scalar(s), Op::Mean(x))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::shape("backward", lv.shape(), &[1]));
        }
        let mut grads: Vec<Option<Array>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Array::filled(lv.shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.propagate(&node.op, &node.value, &g, &mut grads)?;
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, op: &Op, out: &Array, g: &Array, grads: &mut [Option<Array>]) -> Result<()> {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let mut ga = Array::zeros(av.shape());
                gemm(false, true, 1.0, g, bv, 0.0, &mut ga);
                let mut gb = Array::zeros(bv.shape());
                gemm(true, false, 1.0, av, g, 0.0, &mut gb);
                acc(grads, *a, ga);
                acc(grads, *b, gb);
            }
            Op::MatMulT(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let mut ga = Array::zeros(av.shape());
                gemm(false, false, 1.0, g, bv, 0.0, &mut ga);
                let mut gb = Array::zeros(bv.shape());
                gemm(true, false, 1.0, g, av, 0.0, &mut gb);
                acc(grads, *a, ga);
                acc(grads, *b, gb);
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.scaled(-1.0));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let ga = zip_map(g, bv, |x, y| x * y);
                let gb = zip_map(g, av, |x, y| x * y);
                acc(grads, *a, ga);
                acc(grads, *b, gb);
            }
            Op::AddRow(x, bias) => {
                let bv = self.value(*bias);
                let mut gb = Array::zeros(bv.shape());
                for r in 0..g.rows() {
                    for (o, v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                acc(grads, *x, g.clone());
                acc(grads, *bias, gb);
            }
            Op::Scale(x, alpha) => acc(grads, *x, g.scaled(*alpha)),
            Op::Concat { parts, axis } => {
                let mut off = 0;
                for &p in parts {
                    let s = self.value(p).shape().to_vec();
                    let piece = if *axis == 0 {
                        let c = s[1];
                        Array::new(&s, g.data()[off * c..(off + s[0]) * c].to_vec())?
                    } else {
                        let mut piece = Array::zeros(&s);
                        for r in 0..s[0] {
                            piece.row_mut(r).copy_from_slice(&g.row(r)[off..off + s[1]]);
                        }
                        piece
                    };
                    off += s[*axis];
                    acc(grads, p, piece);
                }
            }
            Op::Slice { src, axis, start } => {
                let sv = self.value(*src);
                let mut gs = Array::zeros(sv.shape());
                if *axis == 0 {
                    let c = sv.cols();
                    gs.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                } else {
                    let w = g.cols();
                    for r in 0..g.rows() {
                        gs.row_mut(r)[*start..start + w].copy_from_slice(g.row(r));
                    }
                }
                acc(grads, *src, gs);
            }
            Op::Lookup { table, ids } => {
                let tv = self.value(*table);
                let mut gt = Array::zeros(tv.shape());
                for (r, &i) in ids.iter().enumerate() {
                    for (o, v) in gt.row_mut(i).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                acc(grads, *table, gt);
            }
            Op::Softmax { x, axis } => {
                let (groups, len, step, stride) = axis_groups(out.shape(), *axis)?;
                let mut gx = Array::zeros(out.shape());
                let (y, gy) = (out.data(), g.data());
                let gd = gx.data_mut();
                for grp in 0..groups {
                    let base = grp * step;
                    let dot: f64 = (0..len)
                        .map(|i| y[base + i * stride] * gy[base + i * stride])
                        .sum();
                    for i in 0..len {
                        let k = base + i * stride;
                        gd[k] = y[k] * (gy[k] - dot);
                    }
                }
                acc(grads, *x, gx);
            }
            Op::LayerNorm { x, gamma, beta, eps } => {
                let (xv, gv) = (self.value(*x), self.value(*gamma));
                let c = xv.cols();
                let mut gx = Array::zeros(xv.shape());
                let mut gg = Array::zeros(gv.shape());
                let mut gb = Array::zeros(self.value(*beta).shape());
                let mut xhat = vec![0.0; c];
                let mut dxhat = vec![0.0; c];
                for r in 0..xv.rows() {
                    let row = xv.row(r);
                    let (mean, inv) = row_stats(row, *eps);
                    let gr = g.row(r);
                    for j in 0..c {
                        xhat[j] = (row[j] - mean) * inv;
                        dxhat[j] = gr[j] * gv.data()[j];
                        gg.data_mut()[j] += gr[j] * xhat[j];
                        gb.data_mut()[j] += gr[j];
                    }
                    let s1: f64 = dxhat.iter().sum();
                    let s2: f64 = dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum();
                    let cf = c as f64;
                    for (j, o) in gx.row_mut(r).iter_mut().enumerate() {
                        *o = inv / cf * (cf * dxhat[j] - s1 - xhat[j] * s2);
                    }
                }
                acc(grads, *x, gx);
                acc(grads, *gamma, gg);
                acc(grads, *beta, gb);
            }
            Op::Sigmoid(x) => acc(grads, *x, zip_map(g, out, |gy, y| gy * y * (1.0 - y))),
            Op::Tanh(x) => acc(grads, *x, zip_map(g, out, |gy, y| gy * (1.0 - y * y))),
            Op::Relu(x) => {
                let xv = self.value(*x);
                acc(grads, *x, zip_map(g, xv, |gy, v| if v > 0.0 { gy } else { 0.0 }));
            }
            Op::Conv1d { x, w, b, cols } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let ws = wv.shape();
                let (k, c_in, c_out) = (ws[0], ws[1], ws[2]);
                let mut gw = Array::zeros(&[k * c_in, c_out]);
                gemm(true, false, 1.0, cols, g, 0.0, &mut gw);
                let wmat = Array::new(&[k * c_in, c_out], wv.data().to_vec())?;
                let mut gcols = Array::zeros(cols.shape());
                gemm(false, true, 1.0, g, &wmat, 0.0, &mut gcols);
                let gx = col2im(&gcols, xv.rows(), c_in, k);
                let mut gb = Array::zeros(&[c_out]);
                for r in 0..g.rows() {
                    for (o, v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                acc(grads, *x, gx);
                acc(grads, *w, gw.reshape(ws)?);
                acc(grads, *b, gb.reshape(self.value(*b).shape())?);
            }
            Op::Gated(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let n = av.len();
                let mut ga = Array::zeros(av.shape());
                let mut gb = Array::zeros(bv.shape());
                for i in 0..n {
                    let th = math::tanh(av.data()[i]);
                    let sg = math::sigmoid(bv.data()[i]);
                    let gy = g.data()[i];
                    ga.data_mut()[i] = gy * (1.0 - th * th) * sg;
                    gb.data_mut()[i] = gy * th * sg * (1.0 - sg);
                }
                acc(grads, *a, ga);
                acc(grads, *b, gb);
            }
            Op::Mse(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let scale = 2.0 * g.data()[0] / av.len().max(1) as f64;
                let ga = zip_map(av, bv, |p, q| scale * (p - q));
                let gb = ga.scaled(-1.0);
                acc(grads, *a, ga);
                acc(grads, *b, gb);
            }
            Op::CrossEntropy { probs, weights } => {
                let rows = self.value(*probs).rows().max(1) as f64;
                acc(grads, *probs, weights.scaled(g.data()[0] / rows));
            }
            Op::Sum(x) => {
                let xv = self.value(*x);
                acc(grads, *x, Array::filled(xv.shape(), g.data()[0]));
            }
            Op::Mean(x) => {
                let xv = self.value(*x);
                let v = g.data()[0] / xv.len().max(1) as f64;
                acc(grads, *x, Array::filled(xv.shape(), v));
            }
        }
        Ok(())
    }
}

fn acc(grads: &mut [Option<Array>], v: Var, g: Array) {
    match &mut grads[v.0] {
        Some(existing) => existing.axpy(1.0, &g),
        slot @ None => *slot = Some(g),
    }
}

fn zip_map(a: &Array, b: &Array, f: impl Fn(f64, f64) -> f64) -> Array {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Array::new(a.shape(), data).expect("zip_map operands share a shape")
}

fn row_stats(row: &[f64], eps: f64) -> (f64, f64) {
    let c = row.len().max(1) as f64;
    let mean = row.iter().sum::<f64>() / c;
    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / c;
    (mean, 1.0 / math::sqrt(var + eps))
}

/// Row `n` of the result holds `x[n + j − k/2]` for `j in 0..k`, zero-padded.
fn im2col(x: &Array, k: usize) -> Array {
    let (n, c) = (x.rows(), x.cols());
    let pad = k / 2;
    let mut cols = Array::zeros(&[n, k * c]);
    for r in 0..n {
        for j in 0..k {
            let src = r + j;
            if src < pad || src - pad >= n {
                continue;
            }
            cols.row_mut(r)[j * c..(j + 1) * c].copy_from_slice(x.row(src - pad));
        }
    }
    cols
}

fn col2im(cols: &Array, n: usize, c: usize, k: usize) -> Array {
    let pad = k / 2;
    let mut x = Array::zeros(&[n, c]);
    for r in 0..n {
        for j in 0..k {
            let src = r + j;
            if src < pad || src - pad >= n {
                continue;
            }
            let piece = &cols.row(r)[j * c..(j + 1) * c];
            for (o, v) in x.row_mut(src - pad).iter_mut().zip(piece) {
                *o += v;
            }
        }
    }
    x
}
