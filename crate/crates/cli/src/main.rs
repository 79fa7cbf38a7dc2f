use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ggt_cli::run::{
    cmd_compare, cmd_count, cmd_export_weights, cmd_forward, cmd_make_input, cmd_verify,
    CompareArgs, CountArgs, ExportArgs, ForwardArgs, MakeInputArgs, VerifyArgs,
};

/// Glance/gaze attention models: forward passes, exact cost reports,
/// scaling sweeps, and verification suites.
///
/// Exit codes: 0 success, 1 verification failure, 2 usage or input error.
#[derive(Parser)]
#[command(name = "ggt", version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one image tensor through a model and write the logits.
    Forward {
        /// Model variant: gg-t or gg-s.
        #[arg(long)]
        model: String,
        /// Input GGT1 tensor of shape 3xHxW.
        #[arg(long)]
        input: PathBuf,
        /// Output GGT1 tensor of logits.
        #[arg(long)]
        out: PathBuf,
        /// Weight-init seed (falls back to GG_SEED, then 0).
        #[arg(long)]
        seed: Option<u64>,
        /// Element type for the forward pass: f32 or f64.
        #[arg(long, default_value = "f32")]
        precision: String,
        /// Load weights from an exported checkpoint directory instead of
        /// initializing from the seed.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Gaze kernel policy: adaptive, fixed, or fixed:K.
        #[arg(long, default_value = "adaptive")]
        gaze: String,
    },
    /// Print the symbolic MAC/parameter report for a model.
    Count {
        /// Model variant: gg-t or gg-s.
        #[arg(long)]
        model: String,
        /// Square input size.
        #[arg(long, default_value_t = 224)]
        image_size: usize,
        /// Output format: table or csv.
        #[arg(long, default_value = "table")]
        format: String,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep token counts across attention variants and report predicted
    /// MACs (CSV), with optional wall-clock timing.
    Compare {
        /// Comma-separated list drawn from msa,gmsa,wmsa,sra.
        #[arg(long, default_value = "msa,gmsa,wmsa,sra")]
        variants: String,
        /// Base token grid h,w; each level doubles both sides.
        #[arg(long, default_value = "14,14")]
        grid: String,
        /// Number of sweep levels.
        #[arg(long, default_value_t = 5)]
        levels: usize,
        /// Explicit comma-separated token counts (perfect squares),
        /// overriding the grid/levels ladder.
        #[arg(long)]
        sweep: Option<String>,
        #[arg(long, default_value_t = 96)]
        channels: usize,
        #[arg(long, default_value_t = 1)]
        heads: usize,
        /// Partition side for gmsa/wmsa.
        #[arg(long, default_value_t = 7)]
        partition: usize,
        /// Pooling factor for sra.
        #[arg(long, default_value_t = 2)]
        reduction: usize,
        /// Measure wall time per row (non-deterministic column; off by
        /// default so CSV output is byte-stable).
        #[arg(long)]
        timing: bool,
        /// Skip timing rows whose predicted cost exceeds this.
        #[arg(long, default_value_t = 3_000_000_000)]
        time_budget_macs: u64,
        #[arg(long)]
        seed: Option<u64>,
        /// Write CSV to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run verification suites: oracle, grad, perm, flops, or all.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Inject a deliberate defect (perm) to prove the suite catches it.
        #[arg(long)]
        inject_fault: Option<String>,
    },
    /// Build a model from a seed and write a checkpoint
    /// (manifest.json + weights.bin).
    ExportWeights {
        /// Model variant: gg-t or gg-s.
        #[arg(long)]
        model: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Write a seeded standard-normal GGT1 tensor (handy forward input).
    MakeInput {
        /// Comma-separated extents, e.g. 3,224,224.
        #[arg(long, default_value = "3,224,224")]
        shape: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Forward {
            model,
            input,
            out,
            seed,
            precision,
            weights,
            gaze,
        } => cmd_forward(&ForwardArgs {
            model,
            input,
            out,
            seed,
            precision,
            weights,
            gaze,
        }),
        Command::Count {
            model,
            image_size,
            format,
            out,
        } => cmd_count(&CountArgs {
            model,
            image_size,
            format,
            out,
        }),
        Command::Compare {
            variants,
            grid,
            levels,
            sweep,
            channels,
            heads,
            partition,
            reduction,
            timing,
            time_budget_macs,
            seed,
            out,
        } => cmd_compare(&CompareArgs {
            variants,
            grid,
            levels,
            sweep,
            channels,
            heads,
            partition,
            reduction,
            timing,
            time_budget_macs,
            seed,
            out,
        }),
        Command::Verify {
            suite,
            seed,
            inject_fault,
        } => cmd_verify(&VerifyArgs {
            suite,
            seed,
            inject_fault,
        }),
        Command::ExportWeights {
            model,
            seed,
            out_dir,
        } => cmd_export_weights(&ExportArgs {
            model,
            seed,
            out_dir,
        }),
        Command::MakeInput { shape, seed, out } => {
            cmd_make_input(&MakeInputArgs { shape, seed, out })
        }
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
