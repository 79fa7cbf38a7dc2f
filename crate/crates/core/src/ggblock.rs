//! The glance-and-gaze transformer block.
//!
//! Two parallel branches share one attention module: the glance branch runs
//! partitioned attention over the dilated splitting, the gaze branch runs a
//! depthwise convolution over the merged value tensor to restore local
//! cross-partition context. Their outputs are summed before the shared
//! output projection, which keeps the extra cost of the gaze branch at
//! exactly one `k²·N·C` convolution. Pre-norm residuals and an MLP complete
//! the block.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use crate::attention::{
    partition_attention_core, AttentionBound, AttentionConfig, AttentionVariant, AttentionWeights,
};
use crate::autodiff::{Bindings, Tape, Value};
use crate::error::{Error, Result};
use crate::gradcheck::ParamSet;
use crate::init::{trunc_normal, INIT_STD};
use crate::partition::{dilated_split_permutation, PartitionSpec};
use crate::scalar::Scalar;
use crate::tensor::{NormParams, Parameter, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// How the gaze kernel size is chosen per block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GazePolicy {
    /// Same odd kernel everywhere.
    Fixed(usize),
    /// Kernel grows with the dilation rate: the next odd integer at least
    /// `dilation + 1`, per grid axis, so the kernel always bridges
    /// neighbouring partitions.
    Adaptive,
}

impl GazePolicy {
    pub fn kernel(&self, spec: &PartitionSpec) -> Result<(usize, usize)> {
        match *self {
            GazePolicy::Fixed(k) => {
                if k == 0 || k % 2 == 0 {
                    return Err(Error::Config(format!(
                        "fixed gaze kernel must be odd and >= 1, got {k}"
                    )));
                }
                Ok((k, k))
            }
            GazePolicy::Adaptive => {
                let (dh, dw) = spec.dilation();
                Ok((next_odd(dh + 1), next_odd(dw + 1)))
            }
        }
    }
}

fn next_odd(n: usize) -> usize {
    if n % 2 == 1 {
        n
    } else {
        n + 1
    }
}

/// Static description of one transformer block.
#[derive(Debug, Clone, Copy)]
pub struct BlockConfig {
    pub channels: usize,
    pub heads: usize,
    /// Partition side M.
    pub partition: usize,
    /// MLP expansion ratio alpha; hidden width is `alpha * channels`.
    pub mlp_ratio: usize,
    pub gaze: GazePolicy,
    pub rel_pos_bias: bool,
}

impl BlockConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mlp_ratio == 0 {
            return Err(Error::Config(alloc::string::String::from(
                "mlp expansion ratio must be >= 1",
            )));
        }
        self.attention().validate()
    }

    pub fn hidden_dim(&self) -> usize {
        self.mlp_ratio * self.channels
    }

    pub fn attention(&self) -> AttentionConfig {
        AttentionConfig::new(AttentionVariant::GMsa, self.channels, self.heads)
            .with_partition(self.partition)
            .with_rel_pos_bias(self.rel_pos_bias)
    }
}

/// Learnable state of one block.
#[derive(Debug, Clone)]
pub struct BlockWeights<E: Scalar> {
    pub norm1: NormParams<E>,
    pub attn: AttentionWeights<E>,
    /// Depthwise gaze kernel, `[C, kh, kw]`.
    pub gaze_kernel: Parameter<E>,
    pub norm2: NormParams<E>,
    pub fc1_w: Parameter<E>,
    pub fc1_b: Parameter<E>,
    pub fc2_w: Parameter<E>,
    pub fc2_b: Parameter<E>,
}

impl<E: Scalar> BlockWeights<E> {
    pub fn init(cfg: &BlockConfig, spec: &PartitionSpec, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.channels;
        let hidden = cfg.hidden_dim();
        let (kh, kw) = cfg.gaze.kernel(spec)?;
        Ok(Self {
            norm1: NormParams::identity(c),
            attn: AttentionWeights::init(&cfg.attention(), rng)?,
            gaze_kernel: Parameter::new(trunc_normal(vec![c, kh, kw], INIT_STD, rng)),
            norm2: NormParams::identity(c),
            fc1_w: Parameter::new(trunc_normal(vec![c, hidden], INIT_STD, rng)),
            fc1_b: Parameter::new(Tensor::zeros(vec![hidden])?),
            fc2_w: Parameter::new(trunc_normal(vec![hidden, c], INIT_STD, rng)),
            fc2_b: Parameter::new(Tensor::zeros(vec![c])?),
        })
    }

    pub fn bind(&self, tape: &mut Tape<E>, prefix: &str, binds: &mut Bindings) -> BlockBound {
        let norm1_gamma = bind_leaf(tape, binds, prefix, "norm1.gamma", &self.norm1.gamma);
        let norm1_beta = bind_leaf(tape, binds, prefix, "norm1.beta", &self.norm1.beta);
        let attn = self.attn.bind(tape, &format!("{prefix}attn."), binds);
        BlockBound {
            norm1_gamma,
            norm1_beta,
            attn,
            gaze_kernel: bind_leaf(tape, binds, prefix, "gaze.kernel", &self.gaze_kernel),
            norm2_gamma: bind_leaf(tape, binds, prefix, "norm2.gamma", &self.norm2.gamma),
            norm2_beta: bind_leaf(tape, binds, prefix, "norm2.beta", &self.norm2.beta),
            fc1_w: bind_leaf(tape, binds, prefix, "mlp.fc1.weight", &self.fc1_w),
            fc1_b: bind_leaf(tape, binds, prefix, "mlp.fc1.bias", &self.fc1_b),
            fc2_w: bind_leaf(tape, binds, prefix, "mlp.fc2.weight", &self.fc2_w),
            fc2_b: bind_leaf(tape, binds, prefix, "mlp.fc2.bias", &self.fc2_b),
        }
    }
}

pub(crate) fn bind_leaf<E: Scalar>(
    tape: &mut Tape<E>,
    binds: &mut Bindings,
    prefix: &str,
    name: &str,
    p: &Parameter<E>,
) -> Value {
    let v = tape.param(p);
    binds.push(format!("{prefix}{name}"), v);
    v
}

impl<E: Scalar> ParamSet<E> for BlockWeights<E> {
    fn for_each_param(&self, f: &mut dyn FnMut(&str, &Parameter<E>)) {
        f("norm1.gamma", &self.norm1.gamma);
        f("norm1.beta", &self.norm1.beta);
        self.attn.visit(&mut |n, p| f(&format!("attn.{n}"), p));
        f("gaze.kernel", &self.gaze_kernel);
        f("norm2.gamma", &self.norm2.gamma);
        f("norm2.beta", &self.norm2.beta);
        f("mlp.fc1.weight", &self.fc1_w);
        f("mlp.fc1.bias", &self.fc1_b);
        f("mlp.fc2.weight", &self.fc2_w);
        f("mlp.fc2.bias", &self.fc2_b);
    }

    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&str, &mut Parameter<E>)) {
        f("norm1.gamma", &mut self.norm1.gamma);
        f("norm1.beta", &mut self.norm1.beta);
        self.attn.visit_mut(&mut |n, p| f(&format!("attn.{n}"), p));
        f("gaze.kernel", &mut self.gaze_kernel);
        f("norm2.gamma", &mut self.norm2.gamma);
        f("norm2.beta", &mut self.norm2.beta);
        f("mlp.fc1.weight", &mut self.fc1_w);
        f("mlp.fc1.bias", &mut self.fc1_b);
        f("mlp.fc2.weight", &mut self.fc2_w);
        f("mlp.fc2.bias", &mut self.fc2_b);
    }
}

/// Tape handles of one bound block.
#[derive(Debug, Clone, Copy)]
pub struct BlockBound {
    pub norm1_gamma: Value,
    pub norm1_beta: Value,
    pub attn: AttentionBound,
    pub gaze_kernel: Value,
    pub norm2_gamma: Value,
    pub norm2_beta: Value,
    pub fc1_w: Value,
    pub fc1_b: Value,
    pub fc2_w: Value,
    pub fc2_b: Value,
}

/// Depthwise-convolve merged value tokens on their 2D grid.
///
/// `v_merged` is `[N, C]` in original token order with `N = h·w`; it is
/// re-laid out to `[C, h, w]`, convolved with same padding, and flattened
/// back.
pub fn gaze<E: Scalar>(
    tape: &mut Tape<E>,
    v_merged: Value,
    kernel: Value,
    spec: &PartitionSpec,
) -> Result<Value> {
    let (n, c) = tape.value(v_merged).dims2()?;
    let (h, w) = spec.grid();
    if n != h * w {
        return Err(Error::Dim(format!(
            "gaze expects {}x{} = {} tokens, got {}",
            h,
            w,
            h * w,
            n
        )));
    }
    let mut to_chw = Vec::with_capacity(n * c);
    for ch in 0..c {
        for pos in 0..n {
            to_chw.push((pos * c + ch) as u32);
        }
    }
    let grid = tape.gather(v_merged, Arc::new(to_chw), vec![c, h, w])?;
    let conv = tape.depthwise_conv2d(grid, kernel)?;
    let mut to_tokens = Vec::with_capacity(n * c);
    for pos in 0..n {
        for ch in 0..c {
            to_tokens.push((ch * n + pos) as u32);
        }
    }
    tape.gather(conv, Arc::new(to_tokens), vec![n, c])
}

/// Fused glance+gaze attention: partitioned attention context merged back
/// to original order, summed with the gaze branch, then projected once.
pub fn gg_msa<E: Scalar>(
    tape: &mut Tape<E>,
    x: Value,
    attn: &AttentionBound,
    gaze_kernel: Value,
    spec: &PartitionSpec,
    cfg: &AttentionConfig,
) -> Result<Value> {
    let perm = dilated_split_permutation(spec);
    let core = partition_attention_core(tape, x, attn, &perm, spec, cfg)?;
    let gazed = gaze(tape, core.merged_values, gaze_kernel, spec)?;
    let fused = tape.add(core.merged_ctx, gazed)?;
    tape.linear(fused, attn.wo, Some(attn.bo))
}

/// One full transformer block with pre-norm residuals:
/// `z' = GG-MSA(LN(x)) + x ; out = MLP(LN(z')) + z'`.
pub fn gg_block<E: Scalar>(
    tape: &mut Tape<E>,
    x: Value,
    w: &BlockBound,
    spec: &PartitionSpec,
    cfg: &BlockConfig,
) -> Result<Value> {
    cfg.validate()?;
    let normed = tape.layer_norm(x, w.norm1_gamma, w.norm1_beta, LAYER_NORM_EPS)?;
    let attn_out = gg_msa(tape, normed, &w.attn, w.gaze_kernel, spec, &cfg.attention())?;
    let z = tape.add(attn_out, x)?;

    let normed2 = tape.layer_norm(z, w.norm2_gamma, w.norm2_beta, LAYER_NORM_EPS)?;
    let hidden = tape.linear(normed2, w.fc1_w, Some(w.fc1_b))?;
    let act = tape.gelu(hidden);
    let mlp_out = tape.linear(act, w.fc2_w, Some(w.fc2_b))?;
    tape.add(mlp_out, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::g_msa;
    use crate::init::{rng_from_seed, standard_normal};

    #[test]
    fn adaptive_kernels_over_stage_grids() {
        // grids 56/28/14/7 with M=7 dilate by 8/4/2/1
        let expect = [9usize, 5, 3, 3];
        for (grid, want) in [56usize, 28, 14, 7].into_iter().zip(expect) {
            let spec = PartitionSpec::new(grid, grid, 7).unwrap();
            assert_eq!(GazePolicy::Adaptive.kernel(&spec).unwrap(), (want, want));
        }
    }

    #[test]
    fn fixed_policy_rejects_even_kernels() {
        let spec = PartitionSpec::new(4, 4, 2).unwrap();
        assert!(GazePolicy::Fixed(4).kernel(&spec).is_err());
        assert_eq!(GazePolicy::Fixed(3).kernel(&spec).unwrap(), (3, 3));
    }

    #[test]
    fn gaze_identity_kernel_keeps_tokens() {
        let spec = PartitionSpec::new(2, 3, 1).unwrap();
        let c = 2;
        let x = standard_normal::<f64>(vec![6, c], 11);
        let mut kernel = Tensor::zeros(vec![c, 3, 3]).unwrap();
        for ch in 0..c {
            kernel.data_mut()[ch * 9 + 4] = 1.0;
        }
        let mut tape = Tape::new();
        let xv = tape.input(x.clone());
        let kv = tape.input(kernel);
        let y = gaze(&mut tape, xv, kv, &spec).unwrap();
        assert_eq!(tape.value(y), &x);
    }

    #[test]
    fn gaze_ones_grid_counts_padded_overlap() {
        let spec = PartitionSpec::new(4, 4, 2).unwrap();
        let x = Tensor::filled(vec![16, 1], 1.0f64).unwrap();
        let kernel = Tensor::filled(vec![1, 3, 3], 1.0f64).unwrap();
        let mut tape = Tape::new();
        let xv = tape.input(x);
        let kv = tape.input(kernel);
        let y = gaze(&mut tape, xv, kv, &spec).unwrap();
        let expect = [
            4.0, 6.0, 6.0, 4.0, //
            6.0, 9.0, 9.0, 6.0, //
            6.0, 9.0, 9.0, 6.0, //
            4.0, 6.0, 6.0, 4.0,
        ];
        assert_eq!(tape.value(y).data(), &expect);
    }

    #[test]
    fn zero_gaze_kernel_reduces_to_glance_attention() {
        let spec = PartitionSpec::new(4, 4, 2).unwrap();
        let cfg = AttentionConfig::new(AttentionVariant::GMsa, 4, 2).with_partition(2);
        let mut rng = rng_from_seed(3);
        let weights = AttentionWeights::<f64>::init(&cfg, &mut rng).unwrap();
        let x = standard_normal::<f64>(vec![16, 4], 7);
        let zero_kernel = Tensor::zeros(vec![4, 3, 3]).unwrap();

        let mut tape = Tape::new();
        let xv = tape.input(x.clone());
        let mut binds = Bindings::new();
        let bound = weights.bind(&mut tape, "", &mut binds);
        let kv = tape.input(zero_kernel);
        let fused = gg_msa(&mut tape, xv, &bound, kv, &spec, &cfg).unwrap();
        let plain = g_msa(&mut tape, xv, &bound, &spec, &cfg).unwrap();
        // elementwise identical, same accumulation order
        assert_eq!(tape.value(fused), tape.value(plain.output));
    }

    #[test]
    fn uniform_attention_with_identity_gaze_adds_partition_mean() {
        // Wq = Wk = 0, Wv = I, identity kernel, Wo = I: the fused
        // pre-projection signal is per-partition mean plus the raw tokens.
        let spec = PartitionSpec::new(4, 4, 2).unwrap();
        let c = 2;
        let cfg = AttentionConfig::new(AttentionVariant::GMsa, c, 1).with_partition(2);
        let mut eye = Tensor::zeros(vec![c, c]).unwrap();
        for i in 0..c {
            eye.data_mut()[i * c + i] = 1.0;
        }
        let weights = AttentionWeights::<f64> {
            wq: Parameter::new(Tensor::zeros(vec![c, c]).unwrap()),
            wk: Parameter::new(Tensor::zeros(vec![c, c]).unwrap()),
            wv: Parameter::new(eye.clone()),
            wo: Parameter::new(eye),
            bq: Parameter::new(Tensor::zeros(vec![c]).unwrap()),
            bk: Parameter::new(Tensor::zeros(vec![c]).unwrap()),
            bv: Parameter::new(Tensor::zeros(vec![c]).unwrap()),
            bo: Parameter::new(Tensor::zeros(vec![c]).unwrap()),
            rel_bias: None,
        };
        let mut kernel = Tensor::zeros(vec![c, 3, 3]).unwrap();
        for ch in 0..c {
            kernel.data_mut()[ch * 9 + 4] = 1.0;
        }
        let x = standard_normal::<f64>(vec![16, c], 23);

        let mut tape = Tape::new();
        let xv = tape.input(x.clone());
        let mut binds = Bindings::new();
        let bound = weights.bind(&mut tape, "", &mut binds);
        let kv = tape.input(kernel);
        let out = gg_msa(&mut tape, xv, &bound, kv, &spec, &cfg).unwrap();

        let perm = dilated_split_permutation(&spec);
        let m2 = spec.partition_len();
        for (slot, &tok) in perm.forward().iter().enumerate() {
            let part = slot / m2;
            for ch in 0..c {
                let mut mean = 0.0;
                for r in 0..m2 {
                    mean += x.data()[perm.forward()[part * m2 + r] * c + ch];
                }
                mean /= m2 as f64;
                let want = mean + x.data()[tok * c + ch];
                let got = tape.value(out).data()[tok * c + ch];
                assert!((got - want).abs() < 1e-12, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn zero_weights_block_is_identity() {
        let spec = PartitionSpec::new(4, 4, 2).unwrap();
        let cfg = BlockConfig {
            channels: 4,
            heads: 2,
            partition: 2,
            mlp_ratio: 2,
            gaze: GazePolicy::Adaptive,
            rel_pos_bias: true,
        };
        let mut rng = rng_from_seed(1);
        let mut weights = BlockWeights::<f64>::init(&cfg, &spec, &mut rng).unwrap();
        weights.for_each_param_mut(&mut |_, p| {
            for v in p.value.data_mut() {
                *v = 0.0;
            }
        });
        let x = standard_normal::<f64>(vec![16, 4], 9);
        let mut tape = Tape::new();
        let xv = tape.input(x.clone());
        let mut binds = Bindings::new();
        let bound = weights.bind(&mut tape, "", &mut binds);
        let y = gg_block(&mut tape, xv, &bound, &spec, &cfg).unwrap();
        assert_eq!(tape.value(y), &x);
    }

    #[test]
    fn block_preserves_shape_across_random_configs() {
        let mut rng = rng_from_seed(42);
        for trial in 0..50 {
            let m = 1 + trial % 3;
            let (ph, pw) = (1 + trial % 2, 1 + (trial / 2) % 3);
            let (h, w) = (m * ph, m * pw);
            let heads = 1 + trial % 2;
            let c = heads * (1 + (trial / 3) % 3);
            let spec = PartitionSpec::new(h, w, m).unwrap();
            let cfg = BlockConfig {
                channels: c,
                heads,
                partition: m,
                mlp_ratio: 1 + trial % 4,
                gaze: if trial % 2 == 0 {
                    GazePolicy::Adaptive
                } else {
                    GazePolicy::Fixed(3)
                },
                rel_pos_bias: trial % 3 == 0,
            };
            let weights = BlockWeights::<f64>::init(&cfg, &spec, &mut rng).unwrap();
            let x = standard_normal::<f64>(vec![h * w, c], trial as u64);
            let mut tape = Tape::new();
            let xv = tape.input(x);
            let mut binds = Bindings::new();
            let bound = weights.bind(&mut tape, "", &mut binds);
            let y = gg_block(&mut tape, xv, &bound, &spec, &cfg).unwrap();
            assert_eq!(tape.value(y).shape(), &[h * w, c]);
        }
    }

    #[test]
    fn bind_names_match_visitor_names() {
        let spec = PartitionSpec::new(4, 4, 2).unwrap();
        let cfg = BlockConfig {
            channels: 4,
            heads: 2,
            partition: 2,
            mlp_ratio: 2,
            gaze: GazePolicy::Adaptive,
            rel_pos_bias: true,
        };
        let mut rng = rng_from_seed(0);
        let weights = BlockWeights::<f64>::init(&cfg, &spec, &mut rng).unwrap();
        let mut tape = Tape::new();
        let mut binds = Bindings::new();
        let _ = weights.bind(&mut tape, "", &mut binds);
        let bound_names: Vec<_> = binds.entries().iter().map(|(n, _)| n.clone()).collect();
        let visitor_names = weights.param_names();
        assert_eq!(bound_names, visitor_names);
    }
}
