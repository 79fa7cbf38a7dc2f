//! Exact integer accounting of multiply-accumulates and parameters.
//!
//! One MAC is one FLOP under the convention used throughout: elementwise
//! work (softmax, norms, activations, bias adds, residuals, pooling) is
//! excluded from the headline number and reported separately. All sums use
//! checked 64-bit arithmetic; overflow is an error, never silent.
//!
//! Two independent routes produce the same numbers: [`count_model`] walks a
//! configuration symbolically, [`count_trace`] folds over an executed
//! evaluation trace. Convolution MACs are nominal (`k²·N·C`), counting
//! zero-padded taps like interior ones.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::attention::AttentionVariant;
use crate::autodiff::{Op, Tape};
use crate::backbone::{ModelConfig, STAGES};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAC_CONVENTION: &str =
    "1 FLOP = 1 multiply-accumulate; elementwise ops (softmax, norm, activation, bias, \
     residual, pooling) excluded from the MAC total and reported separately";

fn mul(a: u64, b: u64) -> Result<u64> {
    a.checked_mul(b)
        .ok_or_else(|| Error::Arithmetic(format!("multiply overflow: {a} * {b}")))
}

fn add(a: u64, b: u64) -> Result<u64> {
    a.checked_add(b)
        .ok_or_else(|| Error::Arithmetic(format!("add overflow: {a} + {b}")))
}

/// Cost of full self-attention: `4NC² + 2N²C`.
pub fn omega_msa(n: u64, c: u64) -> Result<u64> {
    let proj = mul(4, mul(n, mul(c, c)?)?)?;
    let attn = mul(2, mul(mul(n, n)?, c)?)?;
    add(proj, attn)
}

/// Cost of glance attention over `M²`-token partitions: `4NC² + 2M²NC`.
pub fn omega_g_msa(n: u64, c: u64, m: u64) -> Result<u64> {
    let proj = mul(4, mul(n, mul(c, c)?)?)?;
    let attn = mul(2, mul(mul(m, m)?, mul(n, c)?)?)?;
    add(proj, attn)
}

/// Cost of the fused glance+gaze module: `4NC² + 2M²NC + k²NC`.
pub fn omega_gg_msa(n: u64, c: u64, m: u64, k: u64) -> Result<u64> {
    let gaze = mul(mul(k, k)?, mul(n, c)?)?;
    add(omega_g_msa(n, c, m)?, gaze)
}

/// Predicted attention-module cost per variant, as plotted by cost sweeps.
/// Spatial reduction pools keys/values by `r²`, so its score/context terms
/// shrink while queries stay full resolution.
pub fn predicted_attention_macs(
    variant: AttentionVariant,
    n: u64,
    c: u64,
    m: u64,
    r: u64,
) -> Result<u64> {
    match variant {
        AttentionVariant::Msa => omega_msa(n, c),
        AttentionVariant::GMsa | AttentionVariant::WMsa => omega_g_msa(n, c, m),
        AttentionVariant::Sra => {
            if r == 0 || !n.is_multiple_of(r * r) {
                return Err(Error::Config(format!(
                    "token count {n} is not divisible by r² = {}",
                    r * r
                )));
            }
            let np = n / (r * r);
            let q_and_out = mul(2, mul(n, mul(c, c)?)?)?;
            let kv = mul(2, mul(np, mul(c, c)?)?)?;
            let attn = mul(2, mul(n, mul(np, c)?)?)?;
            add(add(q_and_out, kv)?, attn)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlopsRow {
    pub name: String,
    pub macs: u64,
    pub params: u64,
}

/// Per-layer (or per-op-kind) accounting with exact-integer totals.
#[derive(Debug, Clone)]
pub struct FlopsReport {
    pub rows: Vec<FlopsRow>,
    /// Scalar elements processed by non-MAC ops; informational.
    pub elementwise: u64,
    pub convention: &'static str,
}

impl FlopsReport {
    pub fn total_macs(&self) -> Result<u64> {
        let mut total = 0u64;
        for row in &self.rows {
            total = add(total, row.macs)?;
        }
        Ok(total)
    }

    pub fn total_params(&self) -> Result<u64> {
        let mut total = 0u64;
        for row in &self.rows {
            total = add(total, row.params)?;
        }
        Ok(total)
    }

    /// `layer,macs,params` rows plus a final `total` row.
    pub fn to_csv(&self) -> Result<String> {
        let mut out = String::from("layer,macs,params\n");
        for row in &self.rows {
            out.push_str(&format!("{},{},{}\n", row.name, row.macs, row.params));
        }
        out.push_str(&format!(
            "total,{},{}\n",
            self.total_macs()?,
            self.total_params()?
        ));
        Ok(out)
    }

    pub fn to_table(&self) -> Result<String> {
        let name_width = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .chain(core::iter::once(5))
            .max()
            .unwrap_or(5);
        let mut out = String::new();
        out.push_str(&format!(
            "{:<name_width$}  {:>16}  {:>12}\n",
            "layer", "macs", "params"
        ));
        for row in &self.rows {
            out.push_str(&format!(
                "{:<name_width$}  {:>16}  {:>12}\n",
                row.name, row.macs, row.params
            ));
        }
        out.push_str(&format!(
            "{:<name_width$}  {:>16}  {:>12}\n",
            "total",
            self.total_macs()?,
            self.total_params()?
        ));
        out.push_str(&format!(
            "\nelementwise elements (excluded from MAC total): {}\nconvention: {}\n",
            self.elementwise, self.convention
        ));
        Ok(out)
    }
}

/// Walk a model configuration symbolically, layer by layer. No tensors are
/// touched; every number is an exact integer. Attention rows are split so
/// the projection, score/context, and gaze terms can be compared against
/// the closed-form costs term for term.
pub fn count_model(cfg: &ModelConfig) -> Result<FlopsReport> {
    let geom = cfg.geometry()?;
    let mut rows = Vec::new();
    let mut elementwise = 0u64;

    let n0 = geom.tokens(0) as u64;
    let c0 = cfg.base_channels as u64;
    let patch_dim = (cfg.in_channels * cfg.patch * cfg.patch) as u64;
    rows.push(FlopsRow {
        name: String::from("embed.proj"),
        macs: mul(n0, mul(patch_dim, c0)?)?,
        params: add(mul(patch_dim, c0)?, c0)?,
    });
    elementwise = add(elementwise, mul(n0, c0)?)?; // bias adds
    rows.push(FlopsRow {
        name: String::from("embed.norm"),
        macs: 0,
        params: mul(2, c0)?,
    });
    elementwise = add(elementwise, mul(n0, c0)?)?;

    for s in 0..STAGES {
        let n = geom.tokens(s) as u64;
        let c = geom.channels[s] as u64;
        let heads = cfg.heads[s] as u64;
        let m = cfg.partition as u64;
        let (kh, kw) = geom.kernels[s];
        let (kh, kw) = (kh as u64, kw as u64);
        let hidden = mul(c, cfg.mlp_ratio as u64)?;

        for b in 0..cfg.depths[s] {
            let prefix = format!("stages.{s}.blocks.{b}");
            rows.push(FlopsRow {
                name: format!("{prefix}.norm1"),
                macs: 0,
                params: mul(2, c)?,
            });
            elementwise = add(elementwise, mul(n, c)?)?;

            // Q/K/V/O projections: 4NC² MACs, 4C² + 4C params.
            rows.push(FlopsRow {
                name: format!("{prefix}.attn.proj"),
                macs: mul(4, mul(n, mul(c, c)?)?)?,
                params: add(mul(4, mul(c, c)?)?, mul(4, c)?)?,
            });
            elementwise = add(elementwise, mul(4, mul(n, c)?)?)?; // bias adds

            // Scores and context aggregation: 2M²NC MACs.
            rows.push(FlopsRow {
                name: format!("{prefix}.attn.glance"),
                macs: mul(2, mul(mul(m, m)?, mul(n, c)?)?)?,
                params: 0,
            });
            // softmax entries: one score matrix per partition and head
            elementwise = add(elementwise, mul(n, mul(mul(m, m)?, heads)?)?)?;

            if cfg.rel_pos_bias {
                let span = 2 * m - 1;
                rows.push(FlopsRow {
                    name: format!("{prefix}.attn.bias"),
                    macs: 0, // table lookups
                    params: mul(mul(span, span)?, heads)?,
                });
                elementwise = add(elementwise, mul(n, mul(mul(m, m)?, heads)?)?)?;
            }

            rows.push(FlopsRow {
                name: format!("{prefix}.gaze"),
                macs: mul(mul(kh, kw)?, mul(n, c)?)?,
                params: mul(mul(kh, kw)?, c)?,
            });

            rows.push(FlopsRow {
                name: format!("{prefix}.norm2"),
                macs: 0,
                params: mul(2, c)?,
            });
            elementwise = add(elementwise, mul(n, c)?)?;

            rows.push(FlopsRow {
                name: format!("{prefix}.mlp"),
                macs: mul(2, mul(n, mul(c, hidden)?)?)?,
                params: add(add(mul(c, hidden)?, hidden)?, add(mul(hidden, c)?, c)?)?,
            });
            // fc1 bias + gelu over the hidden width; fc2 bias, branch
            // sum, and two residuals over the block width
            elementwise = add(elementwise, mul(2, mul(n, hidden)?)?)?;
            elementwise = add(elementwise, mul(4, mul(n, c)?)?)?;
        }

        if s + 1 < STAGES {
            let out_n = n / 4;
            rows.push(FlopsRow {
                name: format!("stages.{s}.merge.norm"),
                macs: 0,
                params: mul(2, mul(4, c)?)?,
            });
            elementwise = add(elementwise, mul(out_n, mul(4, c)?)?)?;
            rows.push(FlopsRow {
                name: format!("stages.{s}.merge.reduce"),
                macs: mul(out_n, mul(mul(4, c)?, mul(2, c)?)?)?,
                params: mul(mul(4, c)?, mul(2, c)?)?,
            });
        }
    }

    let n3 = geom.tokens(STAGES - 1) as u64;
    let c3 = geom.channels[STAGES - 1] as u64;
    rows.push(FlopsRow {
        name: String::from("norm"),
        macs: 0,
        params: mul(2, c3)?,
    });
    elementwise = add(elementwise, mul(n3, c3)?)?;
    elementwise = add(elementwise, c3)?; // global average pool output

    let ncls = cfg.num_classes as u64;
    rows.push(FlopsRow {
        name: String::from("head"),
        macs: mul(c3, ncls)?,
        params: add(mul(c3, ncls)?, ncls)?,
    });
    elementwise = add(elementwise, ncls)?;

    Ok(FlopsReport {
        rows,
        elementwise,
        convention: MAC_CONVENTION,
    })
}

/// Fold an executed evaluation trace into MAC counts by op kind, plus the
/// total parameter elements bound on the tape.
pub fn count_trace<E: Scalar>(tape: &Tape<E>) -> Result<FlopsReport> {
    let mut linear = 0u64;
    let mut matmul = 0u64;
    let mut batch_matmul = 0u64;
    let mut conv = 0u64;
    let mut params = 0u64;
    let mut elementwise = 0u64;

    for node in tape.nodes() {
        match &node.op {
            Op::Param => params = add(params, node.param_numel as u64)?,
            Op::Input => {}
            Op::MatMul => {
                let a = &tape.nodes()[node.inputs[0]].value;
                let (m, k) = a.dims2()?;
                let n = node.value.dims2()?.1;
                matmul = add(matmul, mul(m as u64, mul(k as u64, n as u64)?)?)?;
            }
            Op::Linear => {
                let a = &tape.nodes()[node.inputs[0]].value;
                let (m, k) = a.dims2()?;
                let n = node.value.dims2()?.1;
                linear = add(linear, mul(m as u64, mul(k as u64, n as u64)?)?)?;
                if node.inputs.len() == 3 {
                    elementwise = add(elementwise, node.value.numel() as u64)?;
                }
            }
            Op::BatchMatMul { .. } => {
                let a = &tape.nodes()[node.inputs[0]].value;
                let (b, m, k) = a.dims3()?;
                let n = node.value.dims3()?.2;
                batch_matmul = add(
                    batch_matmul,
                    mul(b as u64, mul(m as u64, mul(k as u64, n as u64)?)?)?,
                )?;
            }
            Op::DepthwiseConv2d => {
                let x = &tape.nodes()[node.inputs[0]].value;
                let k = &tape.nodes()[node.inputs[1]].value;
                let (c, h, w) = x.dims3()?;
                let (_, kh, kw) = k.dims3()?;
                conv = add(
                    conv,
                    mul(
                        c as u64,
                        mul(h as u64, mul(w as u64, mul(kh as u64, kw as u64)?)?)?,
                    )?,
                )?;
            }
            Op::SoftmaxRows
            | Op::LayerNorm { .. }
            | Op::Gelu
            | Op::Add
            | Op::AddRelBias { .. }
            | Op::GroupMeanRows { .. }
            | Op::SumAll => {
                elementwise = add(elementwise, node.value.numel() as u64)?;
            }
            Op::Gather { .. } => {}
        }
    }

    let rows = alloc::vec![
        FlopsRow {
            name: String::from("linear"),
            macs: linear,
            params: 0,
        },
        FlopsRow {
            name: String::from("matmul"),
            macs: matmul,
            params: 0,
        },
        FlopsRow {
            name: String::from("batch_matmul"),
            macs: batch_matmul,
            params: 0,
        },
        FlopsRow {
            name: String::from("depthwise_conv2d"),
            macs: conv,
            params: 0,
        },
        FlopsRow {
            name: String::from("leaves"),
            macs: 0,
            params,
        },
    ];
    Ok(FlopsReport {
        rows,
        elementwise,
        convention: MAC_CONVENTION,
    })
}
