//! Multi-head self-attention and its restricted variants behind one
//! interface: full MSA, glance attention over dilated partitions, local
//! window attention, and spatial-reduction attention.
//!
//! All variants share the projection layout: per-head batched Q·Kᵀ/√d,
//! softmax, context aggregation, then a common output projection. Partition
//! variants reorder tokens with the permutations from [`crate::partition`];
//! every reordering is a recorded gather so gradients flow through.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Bindings, Tape, Value};
use crate::error::{Error, Result};
use crate::init::{trunc_normal, INIT_STD};
use crate::partition::{
    dilated_split_permutation, window_split_permutation, PartitionSpec, Permutation,
};
use crate::scalar::Scalar;
use crate::tensor::{Parameter, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionVariant {
    Msa,
    GMsa,
    WMsa,
    Sra,
}

/// Static description of one attention layer.
#[derive(Debug, Clone, Copy)]
pub struct AttentionConfig {
    pub channels: usize,
    pub heads: usize,
    /// Partition side M (glance / window variants).
    pub partition: usize,
    /// Pooling factor R (spatial-reduction variant).
    pub reduction: usize,
    pub variant: AttentionVariant,
    pub rel_pos_bias: bool,
}

impl AttentionConfig {
    pub fn new(variant: AttentionVariant, channels: usize, heads: usize) -> Self {
        Self {
            channels,
            heads,
            partition: 1,
            reduction: 1,
            variant,
            rel_pos_bias: false,
        }
    }

    pub fn with_partition(mut self, m: usize) -> Self {
        self.partition = m;
        self
    }

    pub fn with_reduction(mut self, r: usize) -> Self {
        self.reduction = r;
        self
    }

    pub fn with_rel_pos_bias(mut self, enabled: bool) -> Self {
        self.rel_pos_bias = enabled;
        self
    }

    pub fn head_dim(&self) -> usize {
        self.channels / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.heads == 0 || !self.channels.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "channels {} must be a positive multiple of heads {}",
                self.channels, self.heads
            )));
        }
        if self.partition == 0 || self.reduction == 0 {
            return Err(Error::Config(String::from(
                "partition side and reduction factor must be >= 1",
            )));
        }
        if self.rel_pos_bias
            && !matches!(
                self.variant,
                AttentionVariant::GMsa | AttentionVariant::WMsa
            )
        {
            return Err(Error::Config(String::from(
                "relative position bias requires a partitioned variant",
            )));
        }
        Ok(())
    }
}

/// Learnable state of one attention layer. The bias table, when present,
/// holds one row per intra-partition offset in `(-M, M)²` and one column per
/// head.
#[derive(Debug, Clone)]
pub struct AttentionWeights<E: Scalar> {
    pub wq: Parameter<E>,
    pub wk: Parameter<E>,
    pub wv: Parameter<E>,
    pub wo: Parameter<E>,
    pub bq: Parameter<E>,
    pub bk: Parameter<E>,
    pub bv: Parameter<E>,
    pub bo: Parameter<E>,
    pub rel_bias: Option<Parameter<E>>,
}

impl<E: Scalar> AttentionWeights<E> {
    /// Truncated-normal projections, zero biases, zero bias table.
    pub fn init(cfg: &AttentionConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.channels;
        let table_rows = (2 * cfg.partition - 1) * (2 * cfg.partition - 1);
        Ok(Self {
            wq: Parameter::new(trunc_normal(vec![c, c], INIT_STD, rng)),
            wk: Parameter::new(trunc_normal(vec![c, c], INIT_STD, rng)),
            wv: Parameter::new(trunc_normal(vec![c, c], INIT_STD, rng)),
            wo: Parameter::new(trunc_normal(vec![c, c], INIT_STD, rng)),
            bq: Parameter::new(Tensor::zeros(vec![c])?),
            bk: Parameter::new(Tensor::zeros(vec![c])?),
            bv: Parameter::new(Tensor::zeros(vec![c])?),
            bo: Parameter::new(Tensor::zeros(vec![c])?),
            rel_bias: if cfg.rel_pos_bias {
                Some(Parameter::new(Tensor::zeros(vec![table_rows, cfg.heads])?))
            } else {
                None
            },
        })
    }

    pub fn bind(&self, tape: &mut Tape<E>, prefix: &str, binds: &mut Bindings) -> AttentionBound {
        let mut leaf = |name: &str, p: &Parameter<E>| {
            let v = tape.param(p);
            binds.push(format!("{prefix}{name}"), v);
            v
        };
        AttentionBound {
            wq: leaf("wq", &self.wq),
            wk: leaf("wk", &self.wk),
            wv: leaf("wv", &self.wv),
            wo: leaf("wo", &self.wo),
            bq: leaf("bq", &self.bq),
            bk: leaf("bk", &self.bk),
            bv: leaf("bv", &self.bv),
            bo: leaf("bo", &self.bo),
            rel_bias: self.rel_bias.as_ref().map(|p| leaf("rel_bias", p)),
        }
    }

    pub(crate) fn visit(&self, f: &mut dyn FnMut(&str, &Parameter<E>)) {
        f("wq", &self.wq);
        f("wk", &self.wk);
        f("wv", &self.wv);
        f("wo", &self.wo);
        f("bq", &self.bq);
        f("bk", &self.bk);
        f("bv", &self.bv);
        f("bo", &self.bo);
        if let Some(t) = &self.rel_bias {
            f("rel_bias", t);
        }
    }

    pub(crate) fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Parameter<E>)) {
        f("wq", &mut self.wq);
        f("wk", &mut self.wk);
        f("wv", &mut self.wv);
        f("wo", &mut self.wo);
        f("bq", &mut self.bq);
        f("bk", &mut self.bk);
        f("bv", &mut self.bv);
        f("bo", &mut self.bo);
        if let Some(t) = &mut self.rel_bias {
            f("rel_bias", t);
        }
    }
}

impl<E: Scalar> crate::gradcheck::ParamSet<E> for AttentionWeights<E> {
    fn for_each_param(&self, f: &mut dyn FnMut(&str, &Parameter<E>)) {
        self.visit(f);
    }
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&str, &mut Parameter<E>)) {
        self.visit_mut(f);
    }
}

/// Tape handles of one bound attention layer.
#[derive(Debug, Clone, Copy)]
pub struct AttentionBound {
    pub wq: Value,
    pub wk: Value,
    pub wv: Value,
    pub wo: Value,
    pub bq: Value,
    pub bk: Value,
    pub bv: Value,
    pub bo: Value,
    pub rel_bias: Option<Value>,
}

/// Glance-style attention result: the projected output plus the value
/// tensor merged back to original token order, which the gaze branch
/// consumes.
#[derive(Debug, Clone, Copy)]
pub struct GlanceOutput {
    pub output: Value,
    pub merged_values: Value,
}

/// Layout map from `[N, C]` rows into `[batches*heads, rows_per_batch, d]`.
///
/// `order`, when given, maps batched row slots back to original rows.
fn batch_idx(
    order: Option<&[usize]>,
    n: usize,
    rows_per_batch: usize,
    c: usize,
    heads: usize,
) -> Vec<u32> {
    let d = c / heads;
    let batches = n / rows_per_batch;
    let mut idx = Vec::with_capacity(n * c);
    for p in 0..batches {
        for h in 0..heads {
            for r in 0..rows_per_batch {
                let row = match order {
                    Some(o) => o[p * rows_per_batch + r],
                    None => p * rows_per_batch + r,
                };
                for e in 0..d {
                    idx.push((row * c + h * d + e) as u32);
                }
            }
        }
    }
    idx
}

/// Inverse layout map: original row `i`, channel `h·d+e` reads from the
/// batched tensor at `((p·heads + h)·rows_per_batch + r)·d + e`.
fn unbatch_idx(
    inverse: Option<&[usize]>,
    n: usize,
    rows_per_batch: usize,
    c: usize,
    heads: usize,
) -> Vec<u32> {
    let d = c / heads;
    let mut idx = Vec::with_capacity(n * c);
    for i in 0..n {
        let slot = match inverse {
            Some(inv) => inv[i],
            None => i,
        };
        let p = slot / rows_per_batch;
        let r = slot % rows_per_batch;
        for ch in 0..c {
            let h = ch / d;
            let e = ch % d;
            idx.push((((p * heads + h) * rows_per_batch + r) * d + e) as u32);
        }
    }
    idx
}

/// Table row per intra-partition position pair, indexed by the relative
/// grid offset inside the logical `M × M` partition.
pub(crate) fn rel_pair_idx(m: usize) -> Vec<u32> {
    let m2 = m * m;
    let span = 2 * m - 1;
    let mut idx = Vec::with_capacity(m2 * m2);
    for i in 0..m2 {
        let (pi, qi) = (i / m, i % m);
        for j in 0..m2 {
            let (pj, qj) = (j / m, j % m);
            let dp = pi + m - 1 - pj;
            let dq = qi + m - 1 - qj;
            idx.push((dp * span + dq) as u32);
        }
    }
    idx
}

fn check_tokens<E: Scalar>(tape: &Tape<E>, x: Value, cfg: &AttentionConfig) -> Result<usize> {
    let (n, c) = tape.value(x).dims2()?;
    if c != cfg.channels {
        return Err(Error::Dim(format!(
            "input has {} channels, config expects {}",
            c, cfg.channels
        )));
    }
    Ok(n)
}

pub(crate) struct PartitionContext {
    pub merged_ctx: Value,
    pub merged_values: Value,
}

/// Shared core of the partitioned variants: project, scatter into
/// per-partition per-head batches, attend, and merge the context back to
/// original token order. The output projection is left to the caller so the
/// gaze branch can be fused in first.
pub(crate) fn partition_attention_core<E: Scalar>(
    tape: &mut Tape<E>,
    x: Value,
    w: &AttentionBound,
    perm: &Permutation,
    spec: &PartitionSpec,
    cfg: &AttentionConfig,
) -> Result<PartitionContext> {
    cfg.validate()?;
    let n = check_tokens(tape, x, cfg)?;
    if n != spec.tokens() || perm.len() != n {
        return Err(Error::Dim(format!(
            "token count {} does not match grid {:?}",
            n,
            spec.grid()
        )));
    }
    let c = cfg.channels;
    let heads = cfg.heads;
    let d = cfg.head_dim();
    let m2 = spec.partition_len();
    let batches = spec.partitions() * heads;

    let q = tape.linear(x, w.wq, Some(w.bq))?;
    let k = tape.linear(x, w.wk, Some(w.bk))?;
    let v = tape.linear(x, w.wv, Some(w.bv))?;

    let to_batch = Arc::new(batch_idx(Some(perm.forward()), n, m2, c, heads));
    let qb = tape.gather(q, to_batch.clone(), vec![batches, m2, d])?;
    let kb = tape.gather(k, to_batch.clone(), vec![batches, m2, d])?;
    let vb = tape.gather(v, to_batch, vec![batches, m2, d])?;

    let scale = E::from_f64(1.0 / libm::sqrt(d as f64));
    let mut scores = tape.batch_matmul(qb, kb, true, scale)?;
    if cfg.rel_pos_bias {
        let table = w.rel_bias.ok_or_else(|| {
            Error::Config(String::from(
                "config enables relative position bias but weights carry no table",
            ))
        })?;
        scores = tape.add_rel_bias(scores, table, Arc::new(rel_pair_idx(spec.side())), heads)?;
    }
    let attn = tape.softmax_rows(scores)?;
    let ctx = tape.batch_matmul(attn, vb, false, E::ONE)?;

    let from_batch = Arc::new(unbatch_idx(Some(perm.inverse()), n, m2, c, heads));
    let merged_ctx = tape.gather(ctx, from_batch, vec![n, c])?;
    Ok(PartitionContext {
        merged_ctx,
        merged_values: v,
    })
}

/// Full multi-head self-attention over all tokens.
pub fn msa<E: Scalar>(
    tape: &mut Tape<E>,
    x: Value,
    w: &AttentionBound,
    cfg: &AttentionConfig,
) -> Result<Value> {
    cfg.validate()?;
    if cfg.rel_pos_bias {
        return Err(Error::Config(String::from(
            "relative position bias requires a partitioned variant",
        )));
    }
    let n = check_tokens(tape, x, cfg)?;
    let c = cfg.channels;
    let heads = cfg.heads;
    let d = cfg.head_dim();

    let q = tape.linear(x, w.wq, Some(w.bq))?;
    let k = tape.linear(x, w.wk, Some(w.bk))?;
    let v = tape.linear(x, w.wv, Some(w.bv))?;

    let to_batch = Arc::new(batch_idx(None, n, n, c, heads));
    let qb = tape.gather(q, to_batch.clone(), vec![heads, n, d])?;
    let kb = tape.gather(k, to_batch.clone(), vec![heads, n, d])?;
    let vb = tape.gather(v, to_batch, vec![heads, n, d])?;

    let scale = E::from_f64(1.0 / libm::sqrt(d as f64));
    let scores = tape.batch_matmul(qb, kb, true, scale)?;
    let attn = tape.softmax_rows(scores)?;
    let ctx = tape.batch_matmul(attn, vb, false, E::ONE)?;

    let from_batch = Arc::new(unbatch_idx(None, n, n, c, heads));
    let merged = tape.gather(ctx, from_batch, vec![n, c])?;
    tape.linear(merged, w.wo, Some(w.bo))
}

/// Glance attention: MSA applied independently to each adaptively-dilated
/// partition, merged back to original order.
pub fn g_msa<E: Scalar>(
    tape: &mut Tape<E>,
    x: Value,
    w: &AttentionBound,
    spec: &PartitionSpec,
    cfg: &AttentionConfig,
) -> Result<GlanceOutput> {
    let perm = dilated_split_permutation(spec);
    let core = partition_attention_core(tape, x, w, &perm, spec, cfg)?;
    let output = tape.linear(core.merged_ctx, w.wo, Some(w.bo))?;
    Ok(GlanceOutput {
        output,
        merged_values: core.merged_values,
    })
}

/// Local-window attention baseline over contiguous `M × M` blocks.
pub fn w_msa<E: Scalar>(
    tape: &mut Tape<E>,
    x: Value,
    w: &AttentionBound,
    spec: &PartitionSpec,
    cfg: &AttentionConfig,
) -> Result<GlanceOutput> {
    let perm = window_split_permutation(spec);
    let core = partition_attention_core(tape, x, w, &perm, spec, cfg)?;
    let output = tape.linear(core.merged_ctx, w.wo, Some(w.bo))?;
    Ok(GlanceOutput {
        output,
        merged_values: core.merged_values,
    })
}

/// Row-group indices pooling the `h × w` grid by `r × r` cells.
fn pool_idx(h: usize, w: usize, r: usize) -> Vec<u32> {
    let mut idx = Vec::with_capacity(h * w);
    for gi in 0..h / r {
        for gj in 0..w / r {
            for u in 0..r {
                for v in 0..r {
                    idx.push(((gi * r + u) * w + (gj * r + v)) as u32);
                }
            }
        }
    }
    idx
}

/// Spatial-reduction attention baseline: keys and values from the
/// average-pooled grid, queries at full resolution.
pub fn sra<E: Scalar>(
    tape: &mut Tape<E>,
    x: Value,
    w: &AttentionBound,
    grid: (usize, usize),
    cfg: &AttentionConfig,
) -> Result<Value> {
    cfg.validate()?;
    if cfg.rel_pos_bias {
        return Err(Error::Config(String::from(
            "relative position bias requires a partitioned variant",
        )));
    }
    let (h, wid) = grid;
    let r = cfg.reduction;
    if h % r != 0 || wid % r != 0 {
        return Err(Error::Config(format!(
            "grid {h}x{wid} is not divisible by reduction factor {r}"
        )));
    }
    let n = check_tokens(tape, x, cfg)?;
    if n != h * wid {
        return Err(Error::Dim(format!(
            "token count {} does not match grid {h}x{wid}",
            n
        )));
    }
    let c = cfg.channels;
    let heads = cfg.heads;
    let d = cfg.head_dim();
    let np = (h / r) * (wid / r);

    let pooled = tape.group_mean_rows(x, Arc::new(pool_idx(h, wid, r)), r * r)?;
    let q = tape.linear(x, w.wq, Some(w.bq))?;
    let k = tape.linear(pooled, w.wk, Some(w.bk))?;
    let v = tape.linear(pooled, w.wv, Some(w.bv))?;

    let qb = tape.gather(
        q,
        Arc::new(batch_idx(None, n, n, c, heads)),
        vec![heads, n, d],
    )?;
    let kv_idx = Arc::new(batch_idx(None, np, np, c, heads));
    let kb = tape.gather(k, kv_idx.clone(), vec![heads, np, d])?;
    let vb = tape.gather(v, kv_idx, vec![heads, np, d])?;

    let scale = E::from_f64(1.0 / libm::sqrt(d as f64));
    let scores = tape.batch_matmul(qb, kb, true, scale)?;
    let attn = tape.softmax_rows(scores)?;
    let ctx = tape.batch_matmul(attn, vb, false, E::ONE)?;

    let merged = tape.gather(ctx, Arc::new(unbatch_idx(None, n, n, c, heads)), vec![n, c])?;
    tape.linear(merged, w.wo, Some(w.bo))
}

/// Dispatch on the configured variant; the grid is taken from `spec`.
pub fn attention<E: Scalar>(
    tape: &mut Tape<E>,
    x: Value,
    w: &AttentionBound,
    spec: &PartitionSpec,
    cfg: &AttentionConfig,
) -> Result<Value> {
    match cfg.variant {
        AttentionVariant::Msa => msa(tape, x, w, cfg),
        AttentionVariant::GMsa => Ok(g_msa(tape, x, w, spec, cfg)?.output),
        AttentionVariant::WMsa => Ok(w_msa(tape, x, w, spec, cfg)?.output),
        AttentionVariant::Sra => sra(tape, x, w, spec.grid(), cfg),
    }
}
