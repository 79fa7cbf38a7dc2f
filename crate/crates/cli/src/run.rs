//! Command implementations. Every command echoes its fully resolved
//! configuration to stderr and keeps stdout for the actual payload.

use std::fs;
use std::path::{Path, PathBuf};

use ggt_core::backbone::{self, ModelConfig, Variant};
use ggt_core::complexity::{count_model, count_trace};
use ggt_core::ggblock::GazePolicy;
use ggt_core::init::standard_normal;
use ggt_core::verify::{Fault, Suite, VerifyOptions};
use ggt_core::{Scalar, Tensor};

use crate::compare::{self, CompareOptions};
use crate::error::{CliError, Result};
use crate::{checkpoint, ggt1};

/// `--seed` flag, then the `GG_SEED` environment variable, then zero.
pub fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var("GG_SEED") {
        Ok(text) => text
            .parse()
            .map_err(|_| CliError::Input(format!("GG_SEED must be an integer, got '{text}'"))),
        Err(_) => Ok(0),
    }
}

pub fn parse_gaze(s: &str) -> Result<GazePolicy> {
    if s == "adaptive" {
        return Ok(GazePolicy::Adaptive);
    }
    if s == "fixed" {
        return Ok(GazePolicy::Fixed(3));
    }
    if let Some(k) = s.strip_prefix("fixed:") {
        let k: usize = k
            .parse()
            .map_err(|_| CliError::Input(format!("bad fixed kernel '{k}'")))?;
        return Ok(GazePolicy::Fixed(k));
    }
    Err(CliError::Input(format!(
        "unknown gaze policy '{s}' (expected adaptive, fixed, or fixed:K)"
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

pub fn parse_precision(s: &str) -> Result<Precision> {
    match s {
        "f32" => Ok(Precision::F32),
        "f64" => Ok(Precision::F64),
        other => Err(CliError::Input(format!(
            "unknown precision '{other}' (expected f32 or f64)"
        ))),
    }
}

pub struct ForwardArgs {
    pub model: String,
    pub input: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub precision: String,
    pub weights: Option<PathBuf>,
    pub gaze: String,
}

pub fn cmd_forward(args: &ForwardArgs) -> Result<()> {
    let variant = Variant::parse(&args.model)?;
    let seed = resolve_seed(args.seed)?;
    let precision = parse_precision(&args.precision)?;
    let gaze = parse_gaze(&args.gaze)?;

    let img = ggt1::load(&args.input)?;
    let dims = img.shape().to_vec();
    if dims.len() != 3 || dims[0] != 3 {
        return Err(CliError::Input(format!(
            "input must be a 3xHxW tensor, got shape {dims:?}"
        )));
    }
    let mut cfg = ModelConfig::for_variant(variant).with_img_size(dims[1], dims[2]);
    cfg.gaze = gaze;
    cfg.geometry()?; // rejects bad geometry naming the failing stage

    eprintln!(
        "# ggt forward model={} input={} out={} seed={seed} precision={} weights={} gaze={}",
        variant.name(),
        args.input.display(),
        args.out.display(),
        args.precision,
        args.weights
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| "(from seed)".into()),
        args.gaze,
    );

    let logits: Tensor<f32> = match (precision, &args.weights) {
        (Precision::F32, None) => {
            let weights = backbone::build::<f32>(&cfg, seed)?;
            backbone::forward(&img, &weights, &cfg)?
        }
        (Precision::F64, None) => {
            let weights = backbone::build::<f64>(&cfg, seed)?;
            backbone::forward(&img.convert::<f64>(), &weights, &cfg)?.convert()
        }
        (Precision::F32, Some(dir)) => {
            let weights = load_checkpoint_for(dir, &cfg, variant)?;
            backbone::forward(&img, &weights, &cfg)?
        }
        (Precision::F64, Some(dir)) => {
            let weights = load_checkpoint_for(dir, &cfg, variant)?;
            let weights = convert_weights(&weights);
            backbone::forward(&img.convert::<f64>(), &weights, &cfg)?.convert()
        }
    };

    ggt1::save(&args.out, &logits)?;
    for (rank, (idx, v)) in top_k(&logits, 5).into_iter().enumerate() {
        println!("top{} class={idx} logit={v:.6}", rank + 1);
    }
    Ok(())
}

fn load_checkpoint_for(
    dir: &Path,
    cfg: &ModelConfig,
    variant: Variant,
) -> Result<backbone::ModelWeights<f32>> {
    let manifest = checkpoint::read_manifest(dir)?;
    if manifest.model != variant.name() {
        return Err(CliError::Input(format!(
            "checkpoint is for model '{}', requested '{}'",
            manifest.model,
            variant.name()
        )));
    }
    checkpoint::load(dir, cfg)
}

/// Structure-preserving element-type conversion of a full weight set.
fn convert_weights<A: Scalar, B: Scalar>(
    w: &backbone::ModelWeights<A>,
) -> backbone::ModelWeights<B> {
    use ggt_core::backbone::{EmbedWeights, MergeWeights, ModelWeights, StageWeights};
    use ggt_core::ggblock::BlockWeights;
    use ggt_core::{NormParams, Parameter};

    fn conv_param<A: Scalar, B: Scalar>(p: &Parameter<A>) -> Parameter<B> {
        Parameter::new(p.value.convert())
    }
    fn conv_norm<A: Scalar, B: Scalar>(n: &NormParams<A>) -> NormParams<B> {
        NormParams {
            gamma: conv_param(&n.gamma),
            beta: conv_param(&n.beta),
        }
    }

    ModelWeights {
        embed: EmbedWeights {
            proj_w: conv_param(&w.embed.proj_w),
            proj_b: conv_param(&w.embed.proj_b),
            norm: conv_norm(&w.embed.norm),
        },
        stages: w
            .stages
            .iter()
            .map(|stage| StageWeights {
                blocks: stage
                    .blocks
                    .iter()
                    .map(|b| BlockWeights {
                        norm1: conv_norm(&b.norm1),
                        attn: ggt_core::attention::AttentionWeights {
                            wq: conv_param(&b.attn.wq),
                            wk: conv_param(&b.attn.wk),
                            wv: conv_param(&b.attn.wv),
                            wo: conv_param(&b.attn.wo),
                            bq: conv_param(&b.attn.bq),
                            bk: conv_param(&b.attn.bk),
                            bv: conv_param(&b.attn.bv),
                            bo: conv_param(&b.attn.bo),
                            rel_bias: b.attn.rel_bias.as_ref().map(conv_param),
                        },
                        gaze_kernel: conv_param(&b.gaze_kernel),
                        norm2: conv_norm(&b.norm2),
                        fc1_w: conv_param(&b.fc1_w),
                        fc1_b: conv_param(&b.fc1_b),
                        fc2_w: conv_param(&b.fc2_w),
                        fc2_b: conv_param(&b.fc2_b),
                    })
                    .collect(),
                merge: stage.merge.as_ref().map(|m| MergeWeights {
                    norm: conv_norm(&m.norm),
                    reduce_w: conv_param(&m.reduce_w),
                }),
            })
            .collect(),
        final_norm: conv_norm(&w.final_norm),
        head_w: conv_param(&w.head_w),
        head_b: conv_param(&w.head_b),
    }
}

fn top_k(logits: &Tensor<f32>, k: usize) -> Vec<(usize, f32)> {
    let mut indexed: Vec<(usize, f32)> = logits.data().iter().copied().enumerate().collect();
    indexed.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    indexed.truncate(k);
    indexed
}

pub struct CountArgs {
    pub model: String,
    pub image_size: usize,
    pub format: String,
    pub out: Option<PathBuf>,
}

pub fn cmd_count(args: &CountArgs) -> Result<()> {
    let variant = Variant::parse(&args.model)?;
    let cfg = ModelConfig::for_variant(variant).with_img_size(args.image_size, args.image_size);
    let report = count_model(&cfg)?;
    eprintln!(
        "# ggt count model={} image_size={} format={}",
        variant.name(),
        args.image_size,
        args.format
    );
    let text = match args.format.as_str() {
        "csv" => report.to_csv()?,
        "table" => report.to_table()?,
        other => {
            return Err(CliError::Input(format!(
                "unknown format '{other}' (expected csv or table)"
            )))
        }
    };
    emit(&text, args.out.as_deref())
}

pub struct CompareArgs {
    pub variants: String,
    pub grid: String,
    pub levels: usize,
    pub sweep: Option<String>,
    pub channels: usize,
    pub heads: usize,
    pub partition: usize,
    pub reduction: usize,
    pub timing: bool,
    pub time_budget_macs: u64,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

pub fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let seed = resolve_seed(args.seed)?;
    let variants = args
        .variants
        .split(',')
        .map(compare::parse_variant)
        .collect::<Result<Vec<_>>>()?;
    let grid = parse_pair(&args.grid)?;
    let sweep_list = match &args.sweep {
        None => None,
        Some(text) => Some(
            text.split(',')
                .map(|s| {
                    s.trim()
                        .parse::<u64>()
                        .map_err(|_| CliError::Input(format!("bad sweep token count '{s}'")))
                })
                .collect::<Result<Vec<_>>>()?,
        ),
    };
    let opts = CompareOptions {
        variants,
        base_grid: grid,
        levels: args.levels,
        sweep: sweep_list,
        channels: args.channels,
        heads: args.heads,
        partition: args.partition,
        reduction: args.reduction,
        timing: args.timing,
        time_budget_macs: args.time_budget_macs,
        seed,
    };
    eprintln!(
        "# ggt compare variants={} grid={}x{} levels={} sweep={} channels={} heads={} \
         partition={} reduction={} timing={} seed={seed}",
        args.variants,
        grid.0,
        grid.1,
        opts.levels,
        args.sweep.as_deref().unwrap_or("(doubling ladder)"),
        opts.channels,
        opts.heads,
        opts.partition,
        opts.reduction,
        opts.timing,
    );
    let rows = compare::sweep(&opts)?;
    for variant in ["msa", "gmsa", "wmsa", "sra"] {
        if let Some(slope) = compare::mac_slope(&rows, variant) {
            eprintln!("# slope {variant} {slope:.4}");
        }
    }
    emit(&compare::to_csv(&rows, opts.timing), args.out.as_deref())
}

fn parse_pair(s: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(CliError::Input(format!("expected h,w — got '{s}'")));
    }
    let h = parts[0]
        .trim()
        .parse()
        .map_err(|_| CliError::Input(format!("bad grid extent '{}'", parts[0])))?;
    let w = parts[1]
        .trim()
        .parse()
        .map_err(|_| CliError::Input(format!("bad grid extent '{}'", parts[1])))?;
    Ok((h, w))
}

pub struct VerifyArgs {
    pub suite: String,
    pub seed: Option<u64>,
    pub inject_fault: Option<String>,
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<()> {
    let suite = Suite::parse(&args.suite)?;
    let seed = resolve_seed(args.seed)?;
    let fault = match args.inject_fault.as_deref() {
        None => None,
        Some("perm") => Some(Fault::MergePermutation),
        Some(other) => {
            return Err(CliError::Input(format!(
                "unknown fault '{other}' (expected perm)"
            )))
        }
    };
    eprintln!(
        "# ggt verify suite={} seed={seed} inject_fault={}",
        args.suite,
        args.inject_fault.as_deref().unwrap_or("none")
    );
    let results = ggt_core::verify::run(suite, &VerifyOptions { seed, fault });
    let mut failures = 0usize;
    for r in &results {
        println!(
            "check suite={} name={} status={} {}",
            r.suite,
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.detail
        );
        if !r.passed {
            failures += 1;
        }
    }
    println!(
        "summary checks={} failures={failures} status={}",
        results.len(),
        if failures == 0 { "PASS" } else { "FAIL" }
    );
    if failures > 0 {
        return Err(CliError::CheckFailed(format!(
            "{failures} verification check(s) failed"
        )));
    }
    Ok(())
}

pub struct ExportArgs {
    pub model: String,
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
}

pub fn cmd_export_weights(args: &ExportArgs) -> Result<()> {
    let variant = Variant::parse(&args.model)?;
    let seed = resolve_seed(args.seed)?;
    eprintln!(
        "# ggt export-weights model={} seed={seed} out_dir={}",
        variant.name(),
        args.out_dir.display()
    );
    let cfg = ModelConfig::for_variant(variant);
    let weights = backbone::build::<f32>(&cfg, seed)?;
    checkpoint::save(&args.out_dir, variant.name(), &weights)?;
    println!(
        "wrote {} and {} ({} parameters)",
        args.out_dir.join(checkpoint::MANIFEST_FILE).display(),
        args.out_dir.join(checkpoint::WEIGHTS_FILE).display(),
        ggt_core::gradcheck::ParamSet::param_count(&weights),
    );
    Ok(())
}

pub struct MakeInputArgs {
    pub shape: String,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

pub fn cmd_make_input(args: &MakeInputArgs) -> Result<()> {
    let seed = resolve_seed(args.seed)?;
    let shape: Vec<usize> = args
        .shape
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Input(format!("bad extent '{s}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    if shape.is_empty() || shape.contains(&0) {
        return Err(CliError::Input(format!("invalid shape '{}'", args.shape)));
    }
    eprintln!(
        "# ggt make-input shape={} seed={seed} out={}",
        args.shape,
        args.out.display()
    );
    let tensor = standard_normal::<f32>(shape, seed);
    ggt1::save(&args.out, &tensor)?;
    Ok(())
}

/// Reference a trace-count of a full forward pass (used by tests; exposed
/// for scripting parity checks against `count`).
pub fn traced_forward_macs(variant: Variant, seed: u64) -> Result<(u64, u64)> {
    let cfg = ModelConfig::for_variant(variant);
    let weights = backbone::build::<f32>(&cfg, seed)?;
    let img = standard_normal::<f32>(vec![3, 224, 224], seed ^ 0xD1CE);
    let (_, tape) = backbone::forward_traced(&img, &weights, &cfg)?;
    let report = count_trace(&tape)?;
    Ok((report.total_macs()?, report.total_params()?))
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, text)?;
            Ok(())
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
