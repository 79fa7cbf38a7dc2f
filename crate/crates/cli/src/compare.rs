//! Cost sweeps across attention variants: predicted MACs per token count,
//! optional wall-clock timing, and log-log slope fits.

use std::time::Instant;

use ggt_core::attention::{self, AttentionConfig, AttentionVariant, AttentionWeights};
use ggt_core::complexity::predicted_attention_macs;
use ggt_core::init::{rng_from_seed, standard_normal};
use ggt_core::partition::PartitionSpec;
use ggt_core::{Bindings, Tape};

use crate::error::{CliError, Result};

#[derive(Debug, Clone)]
pub struct CompareOptions {
    pub variants: Vec<AttentionVariant>,
    pub base_grid: (usize, usize),
    /// Number of grid doublings, each quadrupling the token count.
    pub levels: usize,
    /// Explicit token counts overriding the doubling ladder; each must be
    /// a perfect square (the grid is taken as √N × √N).
    pub sweep: Option<Vec<u64>>,
    pub channels: usize,
    pub heads: usize,
    pub partition: usize,
    pub reduction: usize,
    pub timing: bool,
    /// Skip wall-clock timing above this predicted cost.
    pub time_budget_macs: u64,
    pub seed: u64,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            variants: vec![
                AttentionVariant::Msa,
                AttentionVariant::GMsa,
                AttentionVariant::WMsa,
                AttentionVariant::Sra,
            ],
            base_grid: (14, 14),
            levels: 5,
            sweep: None,
            channels: 96,
            heads: 1,
            partition: 7,
            reduction: 2,
            timing: false,
            time_budget_macs: 3_000_000_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompareRow {
    pub variant: &'static str,
    pub n: u64,
    pub macs: u64,
    pub wall_time_us: Option<u128>,
}

pub fn variant_name(v: AttentionVariant) -> &'static str {
    match v {
        AttentionVariant::Msa => "msa",
        AttentionVariant::GMsa => "gmsa",
        AttentionVariant::WMsa => "wmsa",
        AttentionVariant::Sra => "sra",
    }
}

pub fn parse_variant(s: &str) -> Result<AttentionVariant> {
    match s {
        "msa" => Ok(AttentionVariant::Msa),
        "gmsa" => Ok(AttentionVariant::GMsa),
        "wmsa" => Ok(AttentionVariant::WMsa),
        "sra" => Ok(AttentionVariant::Sra),
        other => Err(CliError::Input(format!(
            "unknown variant '{other}' (expected msa|gmsa|wmsa|sra)"
        ))),
    }
}

/// Grids visited by the sweep: either the explicit token counts or the
/// doubling ladder from the base grid.
fn sweep_grids(opts: &CompareOptions) -> Result<Vec<(usize, usize)>> {
    match &opts.sweep {
        Some(tokens) => tokens
            .iter()
            .map(|&n| {
                let side = (n as f64).sqrt().round() as usize;
                if (side * side) as u64 != n {
                    return Err(CliError::Input(format!(
                        "sweep token count {n} is not a perfect square"
                    )));
                }
                Ok((side, side))
            })
            .collect(),
        None => Ok((0..opts.levels)
            .map(|level| (opts.base_grid.0 << level, opts.base_grid.1 << level))
            .collect()),
    }
}

pub fn sweep(opts: &CompareOptions) -> Result<Vec<CompareRow>> {
    let grids = sweep_grids(opts)?;
    let mut rows = Vec::new();
    for &variant in &opts.variants {
        let cfg = AttentionConfig::new(variant, opts.channels, opts.heads)
            .with_partition(opts.partition)
            .with_reduction(opts.reduction);
        cfg.validate()?;

        // weights do not depend on the grid; time with f32 like the
        // forward-only paths
        let weights: AttentionWeights<f32> = {
            let mut rng = rng_from_seed(opts.seed);
            AttentionWeights::init(&cfg, &mut rng)?
        };

        for &(h, w) in &grids {
            check_grid(variant, h, w, opts)?;
            let n = (h * w) as u64;
            let macs = predicted_attention_macs(
                variant,
                n,
                opts.channels as u64,
                opts.partition as u64,
                opts.reduction as u64,
            )?;

            let wall_time_us = if opts.timing && macs <= opts.time_budget_macs {
                let x = standard_normal::<f32>(vec![h * w, opts.channels], opts.seed ^ n);
                let spec = PartitionSpec::new(h, w, spec_side(variant, opts))?;
                let start = Instant::now();
                let mut tape = Tape::new();
                let xv = tape.input(x);
                let mut binds = Bindings::new();
                let bound = weights.bind(&mut tape, "", &mut binds);
                attention::attention(&mut tape, xv, &bound, &spec, &cfg)?;
                Some(start.elapsed().as_micros())
            } else {
                None
            };

            rows.push(CompareRow {
                variant: variant_name(variant),
                n,
                macs,
                wall_time_us,
            });
        }
    }
    Ok(rows)
}

fn spec_side(variant: AttentionVariant, opts: &CompareOptions) -> usize {
    match variant {
        AttentionVariant::GMsa | AttentionVariant::WMsa => opts.partition,
        _ => 1,
    }
}

fn check_grid(variant: AttentionVariant, h: usize, w: usize, opts: &CompareOptions) -> Result<()> {
    match variant {
        AttentionVariant::GMsa | AttentionVariant::WMsa => {
            if !h.is_multiple_of(opts.partition) || !w.is_multiple_of(opts.partition) {
                return Err(CliError::Input(format!(
                    "grid {h}x{w} is not divisible by partition {}",
                    opts.partition
                )));
            }
        }
        AttentionVariant::Sra => {
            if !h.is_multiple_of(opts.reduction) || !w.is_multiple_of(opts.reduction) {
                return Err(CliError::Input(format!(
                    "grid {h}x{w} is not divisible by reduction {}",
                    opts.reduction
                )));
            }
        }
        AttentionVariant::Msa => {}
    }
    Ok(())
}

/// CSV with a stable column set; the timing column only exists when
/// requested, so default output is byte-deterministic.
pub fn to_csv(rows: &[CompareRow], timing: bool) -> String {
    let mut out = String::from(if timing {
        "variant,n,macs,wall_time_us\n"
    } else {
        "variant,n,macs\n"
    });
    for row in rows {
        if timing {
            let t = row.wall_time_us.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", row.variant, row.n, row.macs, t));
        } else {
            out.push_str(&format!("{},{},{}\n", row.variant, row.n, row.macs));
        }
    }
    out
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Slope of the predicted-MAC column for one variant.
pub fn mac_slope(rows: &[CompareRow], variant: &str) -> Option<f64> {
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.variant == variant)
        .map(|r| (r.n as f64, r.macs as f64))
        .collect();
    if points.len() < 2 {
        return None;
    }
    Some(loglog_slope(&points))
}
