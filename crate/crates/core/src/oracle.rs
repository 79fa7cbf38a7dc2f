//! Straight-line reference implementations used to cross-check the tape
//! kernels.
//!
//! Everything here is deliberately written as plain nested loops over `f64`
//! slices, projecting inside each partition and enumerating partition
//! membership directly from the residue/window rules. It shares no code
//! with the tape path it validates.

use alloc::vec;
use alloc::vec::Vec;

use crate::attention::{AttentionConfig, AttentionWeights};

/// Flat copies of one attention layer's projections.
#[derive(Debug, Clone)]
pub struct NaiveWeights {
    pub channels: usize,
    pub heads: usize,
    pub wq: Vec<f64>,
    pub wk: Vec<f64>,
    pub wv: Vec<f64>,
    pub wo: Vec<f64>,
    pub bq: Vec<f64>,
    pub bk: Vec<f64>,
    pub bv: Vec<f64>,
    pub bo: Vec<f64>,
}

impl NaiveWeights {
    pub fn from_weights(w: &AttentionWeights<f64>, cfg: &AttentionConfig) -> Self {
        Self {
            channels: cfg.channels,
            heads: cfg.heads,
            wq: w.wq.value.data().to_vec(),
            wk: w.wk.value.data().to_vec(),
            wv: w.wv.value.data().to_vec(),
            wo: w.wo.value.data().to_vec(),
            bq: w.bq.value.data().to_vec(),
            bk: w.bk.value.data().to_vec(),
            bv: w.bv.value.data().to_vec(),
            bo: w.bo.value.data().to_vec(),
        }
    }
}

/// Output plus every attention row the computation materialized.
#[derive(Debug, Clone)]
pub struct NaiveAttention {
    pub output: Vec<f64>,
    pub attn_rows: Vec<Vec<f64>>,
}

fn project(x: &[f64], n: usize, c: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n * c];
    for i in 0..n {
        for j in 0..c {
            let mut acc = b[j];
            for t in 0..c {
                acc += x[i * c + t] * w[t * c + j];
            }
            out[i * c + j] = acc;
        }
    }
    out
}

fn softmax_in_place(row: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for &v in row.iter() {
        if v > max {
            max = v;
        }
    }
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Multi-head attention over `n` tokens, computed with plain loops. Returns
/// the pre-output-projection context when `project_out` is false.
fn attend(x: &[f64], n: usize, w: &NaiveWeights, project_out: bool) -> NaiveAttention {
    let c = w.channels;
    let heads = w.heads;
    let d = c / heads;
    let scale = 1.0 / libm::sqrt(d as f64);

    let q = project(x, n, c, &w.wq, &w.bq);
    let k = project(x, n, c, &w.wk, &w.bk);
    let v = project(x, n, c, &w.wv, &w.bv);

    let mut ctx = vec![0.0; n * c];
    let mut attn_rows = Vec::new();
    for h in 0..heads {
        let off = h * d;
        for i in 0..n {
            let mut row = vec![0.0; n];
            for j in 0..n {
                let mut dot = 0.0;
                for e in 0..d {
                    dot += q[i * c + off + e] * k[j * c + off + e];
                }
                row[j] = dot * scale;
            }
            softmax_in_place(&mut row);
            for j in 0..n {
                for e in 0..d {
                    ctx[i * c + off + e] += row[j] * v[j * c + off + e];
                }
            }
            attn_rows.push(row);
        }
    }

    let output = if project_out {
        project(&ctx, n, c, &w.wo, &w.bo)
    } else {
        ctx
    };
    NaiveAttention { output, attn_rows }
}

/// Full multi-head self-attention over all `n` tokens.
pub fn naive_msa(x: &[f64], n: usize, w: &NaiveWeights) -> NaiveAttention {
    attend(x, n, w, true)
}

/// Token indices of dilated partition `(i, j)`: the grid positions congruent
/// to `(i, j)` modulo the dilation.
fn dilated_members(h: usize, wid: usize, m: usize, i: usize, j: usize) -> Vec<usize> {
    let (dh, dw) = (h / m, wid / m);
    let mut out = Vec::with_capacity(m * m);
    for p in 0..m {
        for q in 0..m {
            out.push((i + p * dh) * wid + (j + q * dw));
        }
    }
    out
}

fn window_members(wid: usize, m: usize, wi: usize, wj: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(m * m);
    for p in 0..m {
        for q in 0..m {
            out.push((wi * m + p) * wid + (wj * m + q));
        }
    }
    out
}

/// Brute-force partitioned attention: run full MSA independently on every
/// partition and write each result back to its original token rows.
pub fn naive_partitioned_msa(
    x: &[f64],
    h: usize,
    wid: usize,
    m: usize,
    w: &NaiveWeights,
    dilated: bool,
) -> NaiveAttention {
    let c = w.channels;
    let mut output = vec![0.0; h * wid * c];
    let mut attn_rows = Vec::new();
    for i in 0..h / m {
        for j in 0..wid / m {
            let members = if dilated {
                dilated_members(h, wid, m, i, j)
            } else {
                window_members(wid, m, i, j)
            };
            let mut sub = Vec::with_capacity(members.len() * c);
            for &t in &members {
                sub.extend_from_slice(&x[t * c..(t + 1) * c]);
            }
            let mut res = attend(&sub, members.len(), w, true);
            for (local, &t) in members.iter().enumerate() {
                output[t * c..(t + 1) * c].copy_from_slice(&res.output[local * c..(local + 1) * c]);
            }
            attn_rows.append(&mut res.attn_rows);
        }
    }
    NaiveAttention { output, attn_rows }
}

/// Spatial-reduction attention: keys and values come from the token grid
/// average-pooled `r × r`, queries stay full resolution.
pub fn naive_sra(x: &[f64], h: usize, wid: usize, r: usize, w: &NaiveWeights) -> NaiveAttention {
    let c = w.channels;
    let n = h * wid;
    let (gh, gw) = (h / r, wid / r);
    let np = gh * gw;
    let mut pooled = vec![0.0; np * c];
    for gi in 0..gh {
        for gj in 0..gw {
            let dst = (gi * gw + gj) * c;
            for u in 0..r {
                for v in 0..r {
                    let src = ((gi * r + u) * wid + (gj * r + v)) * c;
                    for e in 0..c {
                        pooled[dst + e] += x[src + e];
                    }
                }
            }
            for e in 0..c {
                pooled[dst + e] /= (r * r) as f64;
            }
        }
    }

    let heads = w.heads;
    let d = c / heads;
    let scale = 1.0 / libm::sqrt(d as f64);
    let q = project(x, n, c, &w.wq, &w.bq);
    let k = project(&pooled, np, c, &w.wk, &w.bk);
    let v = project(&pooled, np, c, &w.wv, &w.bv);

    let mut ctx = vec![0.0; n * c];
    let mut attn_rows = Vec::new();
    for hh in 0..heads {
        let off = hh * d;
        for i in 0..n {
            let mut row = vec![0.0; np];
            for j in 0..np {
                let mut dot = 0.0;
                for e in 0..d {
                    dot += q[i * c + off + e] * k[j * c + off + e];
                }
                row[j] = dot * scale;
            }
            softmax_in_place(&mut row);
            for j in 0..np {
                for e in 0..d {
                    ctx[i * c + off + e] += row[j] * v[j * c + off + e];
                }
            }
            attn_rows.push(row);
        }
    }
    NaiveAttention {
        output: project(&ctx, n, c, &w.wo, &w.bo),
        attn_rows,
    }
}

/// Zero-padded per-channel cross-correlation on a flattened `n × c` token
/// grid laid out row-major as `h × w` positions.
#[allow(clippy::too_many_arguments)]
pub fn naive_gaze(
    tokens: &[f64],
    h: usize,
    wid: usize,
    c: usize,
    kernel: &[f64],
    kh: usize,
    kw: usize,
) -> Vec<f64> {
    let ph = (kh - 1) / 2;
    let pw = (kw - 1) / 2;
    let mut out = vec![0.0; h * wid * c];
    for e in 0..c {
        for a in 0..h {
            for b in 0..wid {
                let mut acc = 0.0;
                for u in 0..kh {
                    for v in 0..kw {
                        let ia = a as isize + u as isize - ph as isize;
                        let ib = b as isize + v as isize - pw as isize;
                        if ia < 0 || ib < 0 || ia >= h as isize || ib >= wid as isize {
                            continue;
                        }
                        acc += tokens[(ia as usize * wid + ib as usize) * c + e]
                            * kernel[e * kh * kw + u * kw + v];
                    }
                }
                out[(a * wid + b) * c + e] = acc;
            }
        }
    }
    out
}

/// Independent end-to-end glance+gaze attention: per-partition attention
/// context merged back to grid order, plus the depthwise-convolved values,
/// summed before the shared output projection.
#[allow(clippy::too_many_arguments)]
pub fn naive_gg_msa(
    x: &[f64],
    h: usize,
    wid: usize,
    m: usize,
    w: &NaiveWeights,
    kernel: &[f64],
    kh: usize,
    kw: usize,
) -> Vec<f64> {
    let c = w.channels;
    let n = h * wid;

    // Glance context in original token order, no output projection yet.
    let mut glance = vec![0.0; n * c];
    for i in 0..h / m {
        for j in 0..wid / m {
            let members = dilated_members(h, wid, m, i, j);
            let mut sub = Vec::with_capacity(members.len() * c);
            for &t in &members {
                sub.extend_from_slice(&x[t * c..(t + 1) * c]);
            }
            let res = attend(&sub, members.len(), w, false);
            for (local, &t) in members.iter().enumerate() {
                glance[t * c..(t + 1) * c].copy_from_slice(&res.output[local * c..(local + 1) * c]);
            }
        }
    }

    // Gaze branch: depthwise conv over the merged values.
    let values = project(x, n, c, &w.wv, &w.bv);
    let gaze = naive_gaze(&values, h, wid, c, kernel, kh, kw);

    let mut fused = vec![0.0; n * c];
    for i in 0..n * c {
        fused[i] = glance[i] + gaze[i];
    }
    project(&fused, n, c, &w.wo, &w.bo)
}
