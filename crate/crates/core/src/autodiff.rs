//! Reverse-mode differentiation over a recorded evaluation trace.
//!
//! A [`Tape`] owns every intermediate of one forward computation. Operations
//! append nodes and return [`Value`] handles; [`Tape::backward`] walks the
//! trace in reverse and produces a gradient per node, which callers route
//! into [`Parameter::accumulate`]. Each tape is single-threaded by design;
//! the recorded trace doubles as the shape log for executed-cost counting.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{
    batch_matmul, depthwise_conv2d, gelu, gelu_derivative, layer_norm, linear, matmul, matmul_nt,
    matmul_tn, softmax_rows, Parameter, Tensor,
};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Value(pub(crate) usize);

#[derive(Debug, Clone)]
pub(crate) enum Op<E: Scalar> {
    Input,
    Param,
    MatMul,
    /// x · w (+ bias when the node has a third input).
    Linear,
    BatchMatMul {
        trans_b: bool,
        scale: E,
    },
    SoftmaxRows,
    LayerNorm {
        eps: f64,
    },
    Gelu,
    DepthwiseConv2d,
    /// out.data[i] = in.data[idx[i]]
    Gather {
        idx: Arc<Vec<u32>>,
    },
    /// Row-group averaging: output row g is the mean of `group` input rows.
    GroupMeanRows {
        idx: Arc<Vec<u32>>,
        group: usize,
    },
    /// scores[b, i, j] += table[pair_idx[i*m + j], b % heads]
    AddRelBias {
        pair_idx: Arc<Vec<u32>>,
        heads: usize,
    },
    Add,
    SumAll,
}

pub(crate) struct Node<E: Scalar> {
    pub(crate) op: Op<E>,
    pub(crate) inputs: Vec<usize>,
    pub(crate) value: Tensor<E>,
    pub(crate) param_numel: usize,
}

/// Recorded forward trace plus the values at every node.
pub struct Tape<E: Scalar> {
    nodes: Vec<Node<E>>,
}

impl<E: Scalar> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Scalar> Tape<E> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub(crate) fn nodes(&self) -> &[Node<E>] {
        &self.nodes
    }

    fn push(&mut self, op: Op<E>, inputs: Vec<usize>, value: Tensor<E>) -> Value {
        let param_numel = if matches!(op, Op::Param) {
            value.numel()
        } else {
            0
        };
        self.nodes.push(Node {
            op,
            inputs,
            value,
            param_numel,
        });
        Value(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Value) -> &Tensor<E> {
        &self.nodes[v.0].value
    }

    /// Record a non-differentiable input (activations, images, constants).
    pub fn input(&mut self, t: Tensor<E>) -> Value {
        self.push(Op::Input, vec![], t)
    }

    /// Record a differentiable leaf holding a copy of the parameter value.
    pub fn param(&mut self, p: &Parameter<E>) -> Value {
        self.push(Op::Param, vec![], p.value.clone())
    }

    pub fn matmul(&mut self, a: Value, b: Value) -> Result<Value> {
        let v = matmul(self.value(a), self.value(b))?;
        Ok(self.push(Op::MatMul, vec![a.0, b.0], v))
    }

    pub fn linear(&mut self, x: Value, w: Value, b: Option<Value>) -> Result<Value> {
        let v = linear(self.value(x), self.value(w), b.map(|h| self.value(h)))?;
        let mut inputs = vec![x.0, w.0];
        if let Some(b) = b {
            inputs.push(b.0);
        }
        Ok(self.push(Op::Linear, inputs, v))
    }

    pub fn batch_matmul(&mut self, a: Value, b: Value, trans_b: bool, scale: E) -> Result<Value> {
        let v = batch_matmul(self.value(a), self.value(b), trans_b, scale)?;
        Ok(self.push(Op::BatchMatMul { trans_b, scale }, vec![a.0, b.0], v))
    }

    pub fn softmax_rows(&mut self, x: Value) -> Result<Value> {
        let v = softmax_rows(self.value(x))?;
        Ok(self.push(Op::SoftmaxRows, vec![x.0], v))
    }

    pub fn layer_norm(&mut self, x: Value, gamma: Value, beta: Value, eps: f64) -> Result<Value> {
        let v = layer_norm(self.value(x), self.value(gamma), self.value(beta), eps)?;
        Ok(self.push(Op::LayerNorm { eps }, vec![x.0, gamma.0, beta.0], v))
    }

    pub fn gelu(&mut self, x: Value) -> Value {
        let v = gelu(self.value(x));
        self.push(Op::Gelu, vec![x.0], v)
    }

    pub fn depthwise_conv2d(&mut self, x: Value, k: Value) -> Result<Value> {
        let v = depthwise_conv2d(self.value(x), self.value(k))?;
        Ok(self.push(Op::DepthwiseConv2d, vec![x.0, k.0], v))
    }

    /// Arbitrary element re-layout; `idx` maps output positions to input
    /// positions. Backward scatter-adds, so duplicated indices are allowed.
    pub fn gather(&mut self, x: Value, idx: Arc<Vec<u32>>, out_shape: Vec<usize>) -> Result<Value> {
        let src = self.value(x);
        let n = src.numel();
        for &i in idx.iter() {
            if i as usize >= n {
                return Err(Error::Dim(format!(
                    "gather index {} out of range for {} elements",
                    i, n
                )));
            }
        }
        let data: Vec<E> = idx.iter().map(|&i| src.data()[i as usize]).collect();
        let v = Tensor::from_vec(out_shape, data)?;
        Ok(self.push(Op::Gather { idx }, vec![x.0], v))
    }

    /// Average groups of rows of a `[N, C]` tensor into `[idx.len()/group, C]`.
    pub fn group_mean_rows(&mut self, x: Value, idx: Arc<Vec<u32>>, group: usize) -> Result<Value> {
        let src = self.value(x);
        let (rows, c) = src.dims2()?;
        if group == 0 || !idx.len().is_multiple_of(group) {
            return Err(Error::Dim(format!(
                "group size {} does not divide index count {}",
                group,
                idx.len()
            )));
        }
        for &i in idx.iter() {
            if i as usize >= rows {
                return Err(Error::Dim(format!(
                    "row index {} out of range for {} rows",
                    i, rows
                )));
            }
        }
        let out_rows = idx.len() / group;
        let inv = E::ONE / E::from_f64(group as f64);
        let mut data = vec![E::ZERO; out_rows * c];
        for g in 0..out_rows {
            for j in 0..group {
                let r = idx[g * group + j] as usize;
                let src_row = &src.data()[r * c..(r + 1) * c];
                let dst = &mut data[g * c..(g + 1) * c];
                for (d, &s) in dst.iter_mut().zip(src_row) {
                    *d += s;
                }
            }
            for d in &mut data[g * c..(g + 1) * c] {
                *d *= inv;
            }
        }
        let v = Tensor::from_vec(vec![out_rows, c], data)?;
        Ok(self.push(Op::GroupMeanRows { idx, group }, vec![x.0], v))
    }

    /// Add a learnable relative-position bias to batched attention scores.
    ///
    /// `scores` is `[B, m, m]` with `B = partitions * heads` laid out
    /// partition-major, `table` is `[T, heads]`, and `pair_idx` holds the
    /// table row for every intra-partition position pair.
    pub fn add_rel_bias(
        &mut self,
        scores: Value,
        table: Value,
        pair_idx: Arc<Vec<u32>>,
        heads: usize,
    ) -> Result<Value> {
        let (b, m, m2) = self.value(scores).dims3()?;
        let (t_rows, t_heads) = self.value(table).dims2()?;
        if m != m2 || pair_idx.len() != m * m {
            return Err(Error::Dim(format!(
                "bias pair index count {} does not match {}x{} scores",
                pair_idx.len(),
                m,
                m
            )));
        }
        if heads == 0 || b % heads != 0 || t_heads != heads {
            return Err(Error::Dim(format!(
                "bias table heads {} incompatible with batch {} (heads {})",
                t_heads, b, heads
            )));
        }
        for &i in pair_idx.iter() {
            if i as usize >= t_rows {
                return Err(Error::Dim(format!(
                    "bias table row {} out of range for {} rows",
                    i, t_rows
                )));
            }
        }
        let mut out = self.value(scores).clone();
        {
            let table_t = self.value(table);
            let data = out.data_mut();
            for bi in 0..b {
                let head = bi % heads;
                let base = bi * m * m;
                for (p, &row) in pair_idx.iter().enumerate() {
                    data[base + p] += table_t.data()[row as usize * heads + head];
                }
            }
        }
        Ok(self.push(
            Op::AddRelBias { pair_idx, heads },
            vec![scores.0, table.0],
            out,
        ))
    }

    pub fn add(&mut self, a: Value, b: Value) -> Result<Value> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Dim(format!(
                "elementwise add shapes differ: {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let mut v = ta.clone();
        for (o, &x) in v.data_mut().iter_mut().zip(tb.data()) {
            *o += x;
        }
        Ok(self.push(Op::Add, vec![a.0, b.0], v))
    }

    /// Reduce everything to a single scalar (the usual loss head in checks).
    pub fn sum_all(&mut self, x: Value) -> Value {
        let mut acc = E::ZERO;
        for &v in self.value(x).data() {
            acc += v;
        }
        self.push(Op::SumAll, vec![x.0], Tensor::scalar(acc))
    }

    /// Reverse sweep from a scalar loss; returns one gradient per
    /// contributing node.
    pub fn backward(&self, loss: Value) -> Result<Gradients<E>> {
        if self.nodes.is_empty() {
            return Err(Error::State(String::from(
                "backward called before any forward computation was recorded",
            )));
        }
        if loss.0 >= self.nodes.len() {
            return Err(Error::State(format!(
                "loss handle {} does not belong to this tape",
                loss.0
            )));
        }
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::Dim(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }

        let mut grads: Vec<Option<Tensor<E>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(
            self.nodes[loss.0].value.shape().to_vec(),
            E::ONE,
        )?);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(
        &self,
        i: usize,
        g: &Tensor<E>,
        grads: &mut [Option<Tensor<E>>],
    ) -> Result<()> {
        let node = &self.nodes[i];
        let val = |k: usize| &self.nodes[node.inputs[k]].value;
        match &node.op {
            Op::Input | Op::Param => {}
            Op::MatMul => {
                let da = matmul_nt(g, val(1))?;
                let db = matmul_tn(val(0), g)?;
                accumulate(grads, node.inputs[0], da)?;
                accumulate(grads, node.inputs[1], db)?;
            }
            Op::Linear => {
                let dx = matmul_nt(g, val(1))?;
                let dw = matmul_tn(val(0), g)?;
                accumulate(grads, node.inputs[0], dx)?;
                accumulate(grads, node.inputs[1], dw)?;
                if node.inputs.len() == 3 {
                    let (_, n) = g.dims2()?;
                    let mut db = vec![E::ZERO; n];
                    for row in g.data().chunks(n) {
                        for (acc, &gv) in db.iter_mut().zip(row) {
                            *acc += gv;
                        }
                    }
                    accumulate(grads, node.inputs[2], Tensor::from_vec(vec![n], db)?)?;
                }
            }
            Op::BatchMatMul { trans_b, scale } => {
                let a = val(0);
                let b = val(1);
                let (da, db) = if *trans_b {
                    // y = s * a · bᵀ  →  da = s * g · b ;  db = s * gᵀ · a
                    (
                        batch_matmul(g, b, false, *scale)?,
                        batch_transpose_matmul(g, a, *scale)?,
                    )
                } else {
                    // y = s * a · b  →  da = s * g · bᵀ ;  db = s * aᵀ · g
                    (
                        batch_matmul(g, b, true, *scale)?,
                        batch_transpose_matmul(a, g, *scale)?,
                    )
                };
                let da = da.reshaped(a.shape().to_vec())?;
                let db = db.reshaped(b.shape().to_vec())?;
                accumulate(grads, node.inputs[0], da)?;
                accumulate(grads, node.inputs[1], db)?;
            }
            Op::SoftmaxRows => {
                let y = &node.value;
                let (rows, cols) = y.as_rows();
                let mut dx = vec![E::ZERO; rows * cols];
                for r in 0..rows {
                    let yrow = &y.data()[r * cols..(r + 1) * cols];
                    let grow = &g.data()[r * cols..(r + 1) * cols];
                    let mut dot = E::ZERO;
                    for j in 0..cols {
                        dot += yrow[j] * grow[j];
                    }
                    let drow = &mut dx[r * cols..(r + 1) * cols];
                    for j in 0..cols {
                        drow[j] = yrow[j] * (grow[j] - dot);
                    }
                }
                accumulate(
                    grads,
                    node.inputs[0],
                    Tensor::from_vec(y.shape().to_vec(), dx)?,
                )?;
            }
            Op::LayerNorm { eps } => {
                let x = val(0);
                let gamma = val(1);
                let (rows, c) = x.as_rows();
                let inv_c = E::ONE / E::from_f64(c as f64);
                let epsv = E::from_f64(*eps);
                let mut dx = vec![E::ZERO; rows * c];
                let mut dgamma = vec![E::ZERO; c];
                let mut dbeta = vec![E::ZERO; c];
                for r in 0..rows {
                    let xrow = &x.data()[r * c..(r + 1) * c];
                    let grow = &g.data()[r * c..(r + 1) * c];
                    let mut mean = E::ZERO;
                    for &v in xrow {
                        mean += v;
                    }
                    mean *= inv_c;
                    let mut var = E::ZERO;
                    for &v in xrow {
                        let d = v - mean;
                        var += d * d;
                    }
                    var *= inv_c;
                    let inv_std = E::ONE / (var + epsv).sqrt();

                    // dxhat = g ⊙ gamma ; dx = inv_std (dxhat − mean(dxhat) − xhat·mean(dxhat ⊙ xhat))
                    let mut mean_dxhat = E::ZERO;
                    let mut mean_dxhat_xhat = E::ZERO;
                    for j in 0..c {
                        let xhat = (xrow[j] - mean) * inv_std;
                        let dxhat = grow[j] * gamma.data()[j];
                        mean_dxhat += dxhat;
                        mean_dxhat_xhat += dxhat * xhat;
                        dgamma[j] += grow[j] * xhat;
                        dbeta[j] += grow[j];
                    }
                    mean_dxhat *= inv_c;
                    mean_dxhat_xhat *= inv_c;
                    let drow = &mut dx[r * c..(r + 1) * c];
                    for j in 0..c {
                        let xhat = (xrow[j] - mean) * inv_std;
                        let dxhat = grow[j] * gamma.data()[j];
                        drow[j] = inv_std * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
                    }
                }
                accumulate(
                    grads,
                    node.inputs[0],
                    Tensor::from_vec(x.shape().to_vec(), dx)?,
                )?;
                accumulate(grads, node.inputs[1], Tensor::from_vec(vec![c], dgamma)?)?;
                accumulate(grads, node.inputs[2], Tensor::from_vec(vec![c], dbeta)?)?;
            }
            Op::Gelu => {
                let x = val(0);
                let mut dx = x.clone();
                for (d, (&xv, &gv)) in dx.data_mut().iter_mut().zip(x.data().iter().zip(g.data())) {
                    *d = gv * gelu_derivative(xv);
                }
                accumulate(grads, node.inputs[0], dx)?;
            }
            Op::DepthwiseConv2d => {
                let x = val(0);
                let k = val(1);
                let (c, h, w) = x.dims3()?;
                let (_, kh, kw) = k.dims3()?;
                let ph = (kh - 1) / 2;
                let pw = (kw - 1) / 2;
                let mut dx = vec![E::ZERO; c * h * w];
                let mut dk = vec![E::ZERO; c * kh * kw];
                for ci in 0..c {
                    let xo = ci * h * w;
                    let ko = ci * kh * kw;
                    for i in 0..h {
                        for j in 0..w {
                            let gv = g.data()[xo + i * w + j];
                            for u in 0..kh {
                                let si = i + u;
                                if si < ph || si - ph >= h {
                                    continue;
                                }
                                let si = si - ph;
                                for v in 0..kw {
                                    let sj = j + v;
                                    if sj < pw || sj - pw >= w {
                                        continue;
                                    }
                                    let sj = sj - pw;
                                    dx[xo + si * w + sj] += gv * k.data()[ko + u * kw + v];
                                    dk[ko + u * kw + v] += gv * x.data()[xo + si * w + sj];
                                }
                            }
                        }
                    }
                }
                accumulate(grads, node.inputs[0], Tensor::from_vec(vec![c, h, w], dx)?)?;
                accumulate(
                    grads,
                    node.inputs[1],
                    Tensor::from_vec(vec![c, kh, kw], dk)?,
                )?;
            }
            Op::Gather { idx } => {
                let x = val(0);
                let mut dx = vec![E::ZERO; x.numel()];
                for (p, &src) in idx.iter().enumerate() {
                    dx[src as usize] += g.data()[p];
                }
                accumulate(
                    grads,
                    node.inputs[0],
                    Tensor::from_vec(x.shape().to_vec(), dx)?,
                )?;
            }
            Op::GroupMeanRows { idx, group } => {
                let x = val(0);
                let (_, c) = x.dims2()?;
                let inv = E::ONE / E::from_f64(*group as f64);
                let mut dx = vec![E::ZERO; x.numel()];
                let out_rows = idx.len() / group;
                for gi in 0..out_rows {
                    let grow = &g.data()[gi * c..(gi + 1) * c];
                    for j in 0..*group {
                        let r = idx[gi * group + j] as usize;
                        let drow = &mut dx[r * c..(r + 1) * c];
                        for (d, &gv) in drow.iter_mut().zip(grow) {
                            *d += gv * inv;
                        }
                    }
                }
                accumulate(
                    grads,
                    node.inputs[0],
                    Tensor::from_vec(x.shape().to_vec(), dx)?,
                )?;
            }
            Op::AddRelBias { pair_idx, heads } => {
                let table = val(1);
                let (b, m, _) = node.value.dims3()?;
                let mut dt = vec![E::ZERO; table.numel()];
                for bi in 0..b {
                    let head = bi % heads;
                    let base = bi * m * m;
                    for (p, &row) in pair_idx.iter().enumerate() {
                        dt[row as usize * heads + head] += g.data()[base + p];
                    }
                }
                accumulate(grads, node.inputs[0], g.clone())?;
                accumulate(
                    grads,
                    node.inputs[1],
                    Tensor::from_vec(table.shape().to_vec(), dt)?,
                )?;
            }
            Op::Add => {
                accumulate(grads, node.inputs[0], g.clone())?;
                accumulate(grads, node.inputs[1], g.clone())?;
            }
            Op::SumAll => {
                let x = val(0);
                let gv = g.data()[0];
                accumulate(
                    grads,
                    node.inputs[0],
                    Tensor::filled(x.shape().to_vec(), gv)?,
                )?;
            }
        }
        Ok(())
    }
}

/// `aᵀ · b` per batch slice: a `[B, k, m]`, b `[B, k, n]` → `[B, m, n]`.
fn batch_transpose_matmul<E: Scalar>(a: &Tensor<E>, b: &Tensor<E>, scale: E) -> Result<Tensor<E>> {
    let (ba, k, m) = a.dims3()?;
    let (bb, kb, n) = b.dims3()?;
    if ba != bb || k != kb {
        return Err(Error::Dim(format!(
            "batch_transpose_matmul shapes incompatible: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = vec![E::ZERO; ba * m * n];
    for bi in 0..ba {
        let ao = bi * k * m;
        let bo = bi * k * n;
        let oo = bi * m * n;
        for t in 0..k {
            for i in 0..m {
                let av = a.data()[ao + t * m + i] * scale;
                for j in 0..n {
                    out[oo + i * n + j] += av * b.data()[bo + t * n + j];
                }
            }
        }
    }
    Tensor::from_vec(vec![ba, m, n], out)
}

fn accumulate<E: Scalar>(
    grads: &mut [Option<Tensor<E>>],
    idx: usize,
    delta: Tensor<E>,
) -> Result<()> {
    match &mut grads[idx] {
        Some(existing) => {
            if existing.shape() != delta.shape() {
                return Err(Error::Dim(format!(
                    "gradient shape {:?} conflicts with {:?}",
                    delta.shape(),
                    existing.shape()
                )));
            }
            for (a, &b) in existing.data_mut().iter_mut().zip(delta.data()) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(delta),
    }
    Ok(())
}

/// Result of a backward sweep.
pub struct Gradients<E: Scalar> {
    grads: Vec<Option<Tensor<E>>>,
}

impl<E: Scalar> Gradients<E> {
    /// Gradient with respect to a node, `None` when the loss does not
    /// depend on it.
    pub fn wrt(&self, v: Value) -> Option<&Tensor<E>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

/// Name → tape-leaf association produced while binding weight structs, used
/// to route gradients back into the owning [`Parameter`]s.
#[derive(Debug, Default, Clone)]
pub struct Bindings {
    entries: Vec<(String, Value)>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: String, v: Value) {
        self.entries.push((name, v));
    }

    pub fn entries(&self) -> &[(String, Value)] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<Value> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }
}
