//! Hierarchical four-stage backbone built from glance-and-gaze blocks.
//!
//! Non-overlapping patches are projected to the base width, each stage
//! stacks blocks at a fixed grid, and stage transitions concatenate 2×2
//! token neighbourhoods and reduce them to double width. Channels double as
//! the grid halves, giving down-sampling ratios 4/8/16/32. The classifier
//! head is final norm → global average pool → linear.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Bindings, Tape, Value};
use crate::error::{Error, Result};
use crate::ggblock::{
    bind_leaf, gg_block, BlockBound, BlockConfig, BlockWeights, GazePolicy, LAYER_NORM_EPS,
};
use crate::gradcheck::ParamSet;
use crate::init::{rng_from_seed, trunc_normal, INIT_STD};
use crate::partition::PartitionSpec;
use crate::scalar::Scalar;
use crate::tensor::{NormParams, Parameter, Tensor};

pub const STAGES: usize = 4;

/// The two published model sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Depths (2, 2, 6, 2).
    Tiny,
    /// Depths (2, 2, 18, 2).
    Small,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Tiny => "gg-t",
            Variant::Small => "gg-s",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gg-t" | "tiny" => Ok(Variant::Tiny),
            "gg-s" | "small" => Ok(Variant::Small),
            other => Err(Error::Config(format!(
                "unknown model variant '{other}' (expected gg-t or gg-s)"
            ))),
        }
    }
}

/// Full static description of a model instance.
#[derive(Debug, Clone, Copy)]
pub struct ModelConfig {
    pub img_size: (usize, usize),
    pub in_channels: usize,
    pub patch: usize,
    pub base_channels: usize,
    pub depths: [usize; STAGES],
    pub heads: [usize; STAGES],
    /// Partition side M, shared by all stages.
    pub partition: usize,
    pub mlp_ratio: usize,
    pub gaze: GazePolicy,
    pub rel_pos_bias: bool,
    pub num_classes: usize,
}

impl ModelConfig {
    pub fn for_variant(variant: Variant) -> Self {
        let depths = match variant {
            Variant::Tiny => [2, 2, 6, 2],
            Variant::Small => [2, 2, 18, 2],
        };
        Self {
            img_size: (224, 224),
            in_channels: 3,
            patch: 4,
            base_channels: 96,
            depths,
            heads: [3, 6, 12, 24],
            partition: 7,
            mlp_ratio: 4,
            gaze: GazePolicy::Adaptive,
            rel_pos_bias: true,
            num_classes: 1000,
        }
    }

    pub fn with_img_size(mut self, h: usize, w: usize) -> Self {
        self.img_size = (h, w);
        self
    }

    pub fn stage_channels(&self, stage: usize) -> usize {
        self.base_channels << stage
    }

    pub fn block_config(&self, stage: usize) -> BlockConfig {
        BlockConfig {
            channels: self.stage_channels(stage),
            heads: self.heads[stage],
            partition: self.partition,
            mlp_ratio: self.mlp_ratio,
            gaze: self.gaze,
            rel_pos_bias: self.rel_pos_bias,
        }
    }

    /// Validate the input geometry stage by stage, naming the first stage
    /// that fails.
    pub fn geometry(&self) -> Result<ModelGeometry> {
        let (h, w) = self.img_size;
        if self.patch == 0 || h % self.patch != 0 || w % self.patch != 0 {
            return Err(Error::Config(format!(
                "input {h}x{w} is not divisible by patch size {}",
                self.patch
            )));
        }
        let mut grids = [(0usize, 0usize); STAGES];
        let mut channels = [0usize; STAGES];
        let mut kernels = [(0usize, 0usize); STAGES];
        let (mut gh, mut gw) = (h / self.patch, w / self.patch);
        for s in 0..STAGES {
            if gh % self.partition != 0 || gw % self.partition != 0 {
                return Err(Error::Config(format!(
                    "stage {s} grid {gh}x{gw} is not divisible by partition size {}",
                    self.partition
                )));
            }
            let spec = PartitionSpec::new(gh, gw, self.partition)?;
            grids[s] = (gh, gw);
            channels[s] = self.stage_channels(s);
            kernels[s] = self.gaze.kernel(&spec)?;
            if s + 1 < STAGES {
                if gh % 2 != 0 || gw % 2 != 0 {
                    return Err(Error::Config(format!(
                        "stage {s} grid {gh}x{gw} is not even, cannot merge 2x2 neighbourhoods"
                    )));
                }
                gh /= 2;
                gw /= 2;
            }
        }
        Ok(ModelGeometry {
            grids,
            channels,
            kernels,
        })
    }
}

/// Per-stage grid, width, and gaze kernel resolved for one input size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelGeometry {
    pub grids: [(usize, usize); STAGES],
    pub channels: [usize; STAGES],
    pub kernels: [(usize, usize); STAGES],
}

impl ModelGeometry {
    pub fn tokens(&self, stage: usize) -> usize {
        self.grids[stage].0 * self.grids[stage].1
    }
}

#[derive(Debug, Clone)]
pub struct EmbedWeights<E: Scalar> {
    pub proj_w: Parameter<E>,
    pub proj_b: Parameter<E>,
    pub norm: NormParams<E>,
}

#[derive(Debug, Clone)]
pub struct MergeWeights<E: Scalar> {
    pub norm: NormParams<E>,
    /// `[4C, 2C]`, no bias.
    pub reduce_w: Parameter<E>,
}

#[derive(Debug, Clone)]
pub struct StageWeights<E: Scalar> {
    pub blocks: Vec<BlockWeights<E>>,
    pub merge: Option<MergeWeights<E>>,
}

/// All learnable state of one model.
#[derive(Debug, Clone)]
pub struct ModelWeights<E: Scalar> {
    pub embed: EmbedWeights<E>,
    pub stages: Vec<StageWeights<E>>,
    pub final_norm: NormParams<E>,
    pub head_w: Parameter<E>,
    pub head_b: Parameter<E>,
}

/// Initialize a model reproducibly from a seed: truncated-normal for every
/// weight matrix and conv kernel, zeros for biases and bias tables, the
/// identity affine for norms.
pub fn build<E: Scalar>(cfg: &ModelConfig, seed: u64) -> Result<ModelWeights<E>> {
    let geom = cfg.geometry()?;
    let mut rng = rng_from_seed(seed);
    let patch_dim = cfg.in_channels * cfg.patch * cfg.patch;
    let c0 = cfg.base_channels;

    let embed = EmbedWeights {
        proj_w: Parameter::new(trunc_normal(vec![patch_dim, c0], INIT_STD, &mut rng)),
        proj_b: Parameter::new(Tensor::zeros(vec![c0])?),
        norm: NormParams::identity(c0),
    };

    let mut stages = Vec::with_capacity(STAGES);
    for s in 0..STAGES {
        let (gh, gw) = geom.grids[s];
        let spec = PartitionSpec::new(gh, gw, cfg.partition)?;
        let block_cfg = cfg.block_config(s);
        let mut blocks = Vec::with_capacity(cfg.depths[s]);
        for _ in 0..cfg.depths[s] {
            blocks.push(BlockWeights::init(&block_cfg, &spec, &mut rng)?);
        }
        let merge = if s + 1 < STAGES {
            let c = geom.channels[s];
            Some(MergeWeights {
                norm: NormParams::identity(4 * c),
                reduce_w: Parameter::new(trunc_normal(vec![4 * c, 2 * c], INIT_STD, &mut rng)),
            })
        } else {
            None
        };
        stages.push(StageWeights { blocks, merge });
    }

    let top = geom.channels[STAGES - 1];
    Ok(ModelWeights {
        embed,
        stages,
        final_norm: NormParams::identity(top),
        head_w: Parameter::new(trunc_normal(vec![top, cfg.num_classes], INIT_STD, &mut rng)),
        head_b: Parameter::new(Tensor::zeros(vec![cfg.num_classes])?),
    })
}

pub fn build_variant<E: Scalar>(variant: Variant, seed: u64) -> Result<ModelWeights<E>> {
    build(&ModelConfig::for_variant(variant), seed)
}

impl<E: Scalar> ParamSet<E> for ModelWeights<E> {
    fn for_each_param(&self, f: &mut dyn FnMut(&str, &Parameter<E>)) {
        f("embed.proj.weight", &self.embed.proj_w);
        f("embed.proj.bias", &self.embed.proj_b);
        f("embed.norm.gamma", &self.embed.norm.gamma);
        f("embed.norm.beta", &self.embed.norm.beta);
        for (s, stage) in self.stages.iter().enumerate() {
            for (b, block) in stage.blocks.iter().enumerate() {
                block.for_each_param(&mut |n, p| f(&format!("stages.{s}.blocks.{b}.{n}"), p));
            }
            if let Some(merge) = &stage.merge {
                f(&format!("stages.{s}.merge.norm.gamma"), &merge.norm.gamma);
                f(&format!("stages.{s}.merge.norm.beta"), &merge.norm.beta);
                f(&format!("stages.{s}.merge.reduce.weight"), &merge.reduce_w);
            }
        }
        f("norm.gamma", &self.final_norm.gamma);
        f("norm.beta", &self.final_norm.beta);
        f("head.weight", &self.head_w);
        f("head.bias", &self.head_b);
    }

    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&str, &mut Parameter<E>)) {
        f("embed.proj.weight", &mut self.embed.proj_w);
        f("embed.proj.bias", &mut self.embed.proj_b);
        f("embed.norm.gamma", &mut self.embed.norm.gamma);
        f("embed.norm.beta", &mut self.embed.norm.beta);
        for (s, stage) in self.stages.iter_mut().enumerate() {
            for (b, block) in stage.blocks.iter_mut().enumerate() {
                block.for_each_param_mut(&mut |n, p| f(&format!("stages.{s}.blocks.{b}.{n}"), p));
            }
            if let Some(merge) = &mut stage.merge {
                f(
                    &format!("stages.{s}.merge.norm.gamma"),
                    &mut merge.norm.gamma,
                );
                f(&format!("stages.{s}.merge.norm.beta"), &mut merge.norm.beta);
                f(
                    &format!("stages.{s}.merge.reduce.weight"),
                    &mut merge.reduce_w,
                );
            }
        }
        f("norm.gamma", &mut self.final_norm.gamma);
        f("norm.beta", &mut self.final_norm.beta);
        f("head.weight", &mut self.head_w);
        f("head.bias", &mut self.head_b);
    }
}

pub struct EmbedBound {
    pub proj_w: Value,
    pub proj_b: Value,
    pub norm_gamma: Value,
    pub norm_beta: Value,
}

pub struct MergeBound {
    pub norm_gamma: Value,
    pub norm_beta: Value,
    pub reduce_w: Value,
}

pub struct StageBound {
    pub blocks: Vec<BlockBound>,
    pub merge: Option<MergeBound>,
}

pub struct ModelBound {
    pub embed: EmbedBound,
    pub stages: Vec<StageBound>,
    pub norm_gamma: Value,
    pub norm_beta: Value,
    pub head_w: Value,
    pub head_b: Value,
}

impl<E: Scalar> ModelWeights<E> {
    pub fn bind(&self, tape: &mut Tape<E>, binds: &mut Bindings) -> ModelBound {
        let embed = EmbedBound {
            proj_w: bind_leaf(tape, binds, "", "embed.proj.weight", &self.embed.proj_w),
            proj_b: bind_leaf(tape, binds, "", "embed.proj.bias", &self.embed.proj_b),
            norm_gamma: bind_leaf(tape, binds, "", "embed.norm.gamma", &self.embed.norm.gamma),
            norm_beta: bind_leaf(tape, binds, "", "embed.norm.beta", &self.embed.norm.beta),
        };
        let mut stages = Vec::with_capacity(self.stages.len());
        for (s, stage) in self.stages.iter().enumerate() {
            let mut blocks = Vec::with_capacity(stage.blocks.len());
            for (b, block) in stage.blocks.iter().enumerate() {
                blocks.push(block.bind(tape, &format!("stages.{s}.blocks.{b}."), binds));
            }
            let merge = stage.merge.as_ref().map(|m| MergeBound {
                norm_gamma: bind_leaf(
                    tape,
                    binds,
                    "",
                    &format!("stages.{s}.merge.norm.gamma"),
                    &m.norm.gamma,
                ),
                norm_beta: bind_leaf(
                    tape,
                    binds,
                    "",
                    &format!("stages.{s}.merge.norm.beta"),
                    &m.norm.beta,
                ),
                reduce_w: bind_leaf(
                    tape,
                    binds,
                    "",
                    &format!("stages.{s}.merge.reduce.weight"),
                    &m.reduce_w,
                ),
            });
            stages.push(StageBound { blocks, merge });
        }
        ModelBound {
            embed,
            stages,
            norm_gamma: bind_leaf(tape, binds, "", "norm.gamma", &self.final_norm.gamma),
            norm_beta: bind_leaf(tape, binds, "", "norm.beta", &self.final_norm.beta),
            head_w: bind_leaf(tape, binds, "", "head.weight", &self.head_w),
            head_b: bind_leaf(tape, binds, "", "head.bias", &self.head_b),
        }
    }
}

/// Cut the image into non-overlapping `patch × patch` squares and project
/// each flattened patch (channel-major pixel order) to the embed width.
pub fn patch_tokens<E: Scalar>(
    tape: &mut Tape<E>,
    img: Value,
    proj_w: Value,
    proj_b: Value,
    patch: usize,
) -> Result<Value> {
    let (c, h, w) = tape.value(img).dims3()?;
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(Error::Config(format!(
            "image {h}x{w} is not divisible by patch size {patch}"
        )));
    }
    let (gh, gw) = (h / patch, w / patch);
    let n = gh * gw;
    let feat = c * patch * patch;
    let mut idx = Vec::with_capacity(n * feat);
    for gy in 0..gh {
        for gx in 0..gw {
            for ch in 0..c {
                for dy in 0..patch {
                    for dx in 0..patch {
                        idx.push((ch * h * w + (gy * patch + dy) * w + (gx * patch + dx)) as u32);
                    }
                }
            }
        }
    }
    let patches = tape.gather(img, Arc::new(idx), vec![n, feat])?;
    tape.linear(patches, proj_w, Some(proj_b))
}

/// Patch embedding: projection followed by layer norm.
pub fn patch_embed<E: Scalar>(
    tape: &mut Tape<E>,
    img: Value,
    w: &EmbedBound,
    patch: usize,
) -> Result<Value> {
    let tokens = patch_tokens(tape, img, w.proj_w, w.proj_b, patch)?;
    tape.layer_norm(tokens, w.norm_gamma, w.norm_beta, LAYER_NORM_EPS)
}

/// Concatenate each 2×2 token neighbourhood into a `4C` row, column blocks
/// ordered (0,0), (1,0), (0,1), (1,1).
pub fn patch_concat<E: Scalar>(
    tape: &mut Tape<E>,
    x: Value,
    grid: (usize, usize),
) -> Result<Value> {
    let (n, c) = tape.value(x).dims2()?;
    let (h, w) = grid;
    if n != h * w {
        return Err(Error::Dim(format!(
            "token count {n} does not match grid {h}x{w}"
        )));
    }
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Dim(format!(
            "grid {h}x{w} must be even to merge 2x2 neighbourhoods"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut idx = Vec::with_capacity(n * c);
    for gy in 0..oh {
        for gx in 0..ow {
            for (dy, dx) in [(0usize, 0usize), (1, 0), (0, 1), (1, 1)] {
                let src = (gy * 2 + dy) * w + (gx * 2 + dx);
                for ch in 0..c {
                    idx.push((src * c + ch) as u32);
                }
            }
        }
    }
    tape.gather(x, Arc::new(idx), vec![oh * ow, 4 * c])
}

/// Stage transition: 2×2 concat → layer norm → linear reduction to double
/// width, halving each grid side.
pub fn patch_merge<E: Scalar>(
    tape: &mut Tape<E>,
    x: Value,
    w: &MergeBound,
    grid: (usize, usize),
) -> Result<Value> {
    let cat = patch_concat(tape, x, grid)?;
    let normed = tape.layer_norm(cat, w.norm_gamma, w.norm_beta, LAYER_NORM_EPS)?;
    tape.linear(normed, w.reduce_w, None)
}

/// Full forward pass on an existing tape; returns the logits value.
pub fn forward_on_tape<E: Scalar>(
    tape: &mut Tape<E>,
    img: Value,
    bound: &ModelBound,
    cfg: &ModelConfig,
) -> Result<Value> {
    let geom = cfg.geometry()?;
    let (c, h, w) = tape.value(img).dims3()?;
    if c != cfg.in_channels || (h, w) != cfg.img_size {
        return Err(Error::Config(format!(
            "input {c}x{h}x{w} does not match configured {}x{}x{}",
            cfg.in_channels, cfg.img_size.0, cfg.img_size.1
        )));
    }

    let mut tokens = patch_embed(tape, img, &bound.embed, cfg.patch)?;
    for s in 0..STAGES {
        let (gh, gw) = geom.grids[s];
        let spec = PartitionSpec::new(gh, gw, cfg.partition)?;
        let block_cfg = cfg.block_config(s);
        for block in &bound.stages[s].blocks {
            tokens = gg_block(tape, tokens, block, &spec, &block_cfg)?;
        }
        if let Some(merge) = &bound.stages[s].merge {
            tokens = patch_merge(tape, tokens, merge, (gh, gw))?;
        }
    }

    let normed = tape.layer_norm(tokens, bound.norm_gamma, bound.norm_beta, LAYER_NORM_EPS)?;
    let n = geom.tokens(STAGES - 1);
    let pool_idx: Vec<u32> = (0..n as u32).collect();
    let pooled = tape.group_mean_rows(normed, Arc::new(pool_idx), n)?;
    tape.linear(pooled, bound.head_w, Some(bound.head_b))
}

/// Run one image through the model, returning logits and the full
/// evaluation trace.
pub fn forward_traced<E: Scalar>(
    img: &Tensor<E>,
    weights: &ModelWeights<E>,
    cfg: &ModelConfig,
) -> Result<(Tensor<E>, Tape<E>)> {
    let mut tape = Tape::new();
    let img_v = tape.input(img.clone());
    let mut binds = Bindings::new();
    let bound = weights.bind(&mut tape, &mut binds);
    let logits = forward_on_tape(&mut tape, img_v, &bound, cfg)?;
    let out = tape.value(logits).reshaped(vec![cfg.num_classes])?;
    Ok((out, tape))
}

/// Run one image through the model.
pub fn forward<E: Scalar>(
    img: &Tensor<E>,
    weights: &ModelWeights<E>,
    cfg: &ModelConfig,
) -> Result<Tensor<E>> {
    Ok(forward_traced(img, weights, cfg)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_at_224_matches_published_grids() {
        let cfg = ModelConfig::for_variant(Variant::Tiny);
        let geom = cfg.geometry().unwrap();
        assert_eq!(geom.grids, [(56, 56), (28, 28), (14, 14), (7, 7)]);
        assert_eq!(geom.channels, [96, 192, 384, 768]);
        assert_eq!(geom.kernels, [(9, 9), (5, 5), (3, 3), (3, 3)]);
    }

    #[test]
    fn invalid_sizes_name_the_failing_stage() {
        let cfg = ModelConfig::for_variant(Variant::Tiny).with_img_size(225, 225);
        let err = cfg.geometry().unwrap_err();
        assert!(format!("{err}").contains("patch size 4"), "{err}");

        // 232/4 = 58, not divisible by 7
        let cfg = ModelConfig::for_variant(Variant::Tiny).with_img_size(232, 232);
        let err = cfg.geometry().unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("stage 0") && msg.contains("58"), "{msg}");
    }

    #[test]
    fn patch_tokens_reproduce_flattened_pixels() {
        // Single 4x4 patch, projection = identity over the 48 features.
        let feat = 48;
        let mut w = Tensor::zeros(vec![feat, feat]).unwrap();
        for i in 0..feat {
            w.data_mut()[i * feat + i] = 1.0;
        }
        let img = Tensor::from_vec(vec![3, 4, 4], (0..48).map(|v| v as f64).collect()).unwrap();
        let mut tape = Tape::new();
        let img_v = tape.input(img.clone());
        let wv = tape.input(w);
        let bv = tape.input(Tensor::zeros(vec![feat]).unwrap());
        let tokens = patch_tokens(&mut tape, img_v, wv, bv, 4).unwrap();
        // channel-major pixel order equals the raw image layout here
        assert_eq!(tape.value(tokens).data(), img.data());
    }

    #[test]
    fn zero_image_embeds_to_zero_tokens() {
        let feat = 48;
        let c0 = 6;
        let mut rng = crate::init::rng_from_seed(8);
        let w = trunc_normal::<f64>(vec![feat, c0], 0.1, &mut rng);
        let mut tape = Tape::new();
        let img_v = tape.input(Tensor::zeros(vec![3, 8, 8]).unwrap());
        let bound = EmbedBound {
            proj_w: tape.input(w),
            proj_b: tape.input(Tensor::zeros(vec![c0]).unwrap()),
            norm_gamma: tape.input(Tensor::filled(vec![c0], 1.0).unwrap()),
            norm_beta: tape.input(Tensor::zeros(vec![c0]).unwrap()),
        };
        let tokens = patch_embed(&mut tape, img_v, &bound, 4).unwrap();
        assert_eq!(tape.value(tokens).shape(), &[4, c0]);
        assert!(tape.value(tokens).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_tokens_merge_to_constant_tokens() {
        // zero-variance rows collapse to beta (zero) inside the merge norm,
        // so the reduced tokens stay constant across positions
        let c = 3;
        let x = Tensor::filled(vec![16, c], 2.5f64).unwrap();
        let mut rng = crate::init::rng_from_seed(9);
        let reduce = trunc_normal::<f64>(vec![4 * c, 2 * c], 0.1, &mut rng);
        let mut tape = Tape::new();
        let xv = tape.input(x);
        let bound = MergeBound {
            norm_gamma: tape.input(Tensor::filled(vec![4 * c], 1.0).unwrap()),
            norm_beta: tape.input(Tensor::zeros(vec![4 * c]).unwrap()),
            reduce_w: tape.input(reduce),
        };
        let merged = patch_merge(&mut tape, xv, &bound, (4, 4)).unwrap();
        let out = tape.value(merged);
        assert_eq!(out.shape(), &[4, 2 * c]);
        let first = &out.data()[..2 * c];
        for row in out.data().chunks(2 * c) {
            assert_eq!(row, first);
        }
    }

    #[test]
    fn patch_concat_orders_neighbourhood_blocks() {
        // 2x2 grid of tokens [t00, t01, t10, t11] with C=1 merges into one
        // row ordered (0,0), (1,0), (0,1), (1,1).
        let x = Tensor::from_vec(vec![4, 1], vec![10.0, 11.0, 12.0, 13.0]).unwrap();
        let mut tape = Tape::new();
        let xv = tape.input(x);
        let cat = patch_concat(&mut tape, xv, (2, 2)).unwrap();
        assert_eq!(tape.value(cat).data(), &[10.0, 12.0, 11.0, 13.0]);
    }

    #[test]
    fn averaging_reduction_doubles_the_mean() {
        // reduction rows = [0.25 I | 0.25 I] stacked four times: the output
        // is the mean of the four neighbour vectors, repeated twice.
        let c = 2;
        let x = Tensor::from_vec(vec![4, c], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let mut reduce = Tensor::zeros(vec![4 * c, 2 * c]).unwrap();
        for b in 0..4 {
            for ch in 0..c {
                let row = b * c + ch;
                reduce.data_mut()[row * 2 * c + ch] = 0.25;
                reduce.data_mut()[row * 2 * c + c + ch] = 0.25;
            }
        }
        let mut tape = Tape::new();
        let xv = tape.input(x);
        let cat = patch_concat(&mut tape, xv, (2, 2)).unwrap();
        let rv = tape.input(reduce);
        let out = tape.linear(cat, rv, None).unwrap();
        // mean of the four token vectors is (4, 5)
        assert_eq!(tape.value(out).data(), &[4.0, 5.0, 4.0, 5.0]);
    }

    #[test]
    fn same_seed_builds_identical_weights() {
        let cfg = toy_config();
        let a: ModelWeights<f64> = build(&cfg, 9).unwrap();
        let b: ModelWeights<f64> = build(&cfg, 9).unwrap();
        let mut equal = true;
        a.for_each_param(&mut |name, p| {
            let mut found = false;
            b.for_each_param(&mut |n2, p2| {
                if n2 == name {
                    found = true;
                    if p2.value != p.value {
                        equal = false;
                    }
                }
            });
            assert!(found, "missing {name}");
        });
        assert!(equal);
    }

    fn toy_config() -> ModelConfig {
        // grids 16/8/4/2, all divisible by the partition side 2
        ModelConfig {
            img_size: (64, 64),
            in_channels: 3,
            patch: 4,
            base_channels: 4,
            depths: [1, 1, 1, 1],
            heads: [1, 2, 2, 4],
            partition: 2,
            mlp_ratio: 2,
            gaze: GazePolicy::Adaptive,
            rel_pos_bias: true,
            num_classes: 5,
        }
    }

    #[test]
    fn toy_forward_is_deterministic_and_shaped() {
        let cfg = toy_config();
        let weights: ModelWeights<f64> = build(&cfg, 4).unwrap();
        let img = crate::init::standard_normal::<f64>(vec![3, 64, 64], 2);
        let a = forward(&img, &weights, &cfg).unwrap();
        let b = forward(&img, &weights, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), &[5]);
    }
}
