//! Exact-integer agreement between executed traces, the symbolic walker,
//! and the closed-form cost expressions.

use ggt_core::attention::AttentionVariant;
use ggt_core::backbone::{self, ModelConfig, Variant};
use ggt_core::complexity::{
    count_model, count_trace, omega_g_msa, omega_gg_msa, omega_msa, predicted_attention_macs,
};
use ggt_core::ggblock::GazePolicy;
use ggt_core::gradcheck::ParamSet;
use ggt_core::init::standard_normal;
use ggt_core::verify::executed_attention_macs;
use ggt_core::{Parameter, Tape};

// Independently derived totals for the published model shapes at 224².
const GG_T_PARAMS: u64 = 28_348_066;
const GG_T_MACS: u64 = 4_551_605_760;
const GG_S_PARAMS: u64 = 49_707_442;
const GG_S_MACS: u64 = 8_810_042_880;

fn toy_config() -> ModelConfig {
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
fn single_linear_counts_its_macs() {
    let (n, cin, cout) = (5usize, 3usize, 7usize);
    let mut tape = Tape::new();
    let x = tape.input(standard_normal::<f64>(vec![n, cin], 1));
    let w = Parameter::new(standard_normal::<f64>(vec![cin, cout], 2));
    let wv = tape.param(&w);
    tape.linear(x, wv, None).unwrap();
    let report = count_trace(&tape).unwrap();
    assert_eq!(report.total_macs().unwrap(), (n * cin * cout) as u64);
    assert_eq!(report.total_params().unwrap(), (cin * cout) as u64);
}

#[test]
fn executed_g_msa_matches_formula_at_spec_example() {
    // grid 8×8 = 64 tokens, C=8, M=2
    let macs = executed_attention_macs(AttentionVariant::GMsa, 8, 8, 2, 8, 1, 0, 5).unwrap();
    assert_eq!(macs, omega_g_msa(64, 8, 2).unwrap());
}

#[test]
fn executed_traces_match_formulas_for_random_shapes() {
    // matches the acceptance sweep but smaller; full 20-case sweep runs in
    // the acceptance suite
    for (i, (m, a, b, heads, d, k)) in [
        (1usize, 2usize, 3usize, 1usize, 4usize, 3usize),
        (2, 1, 2, 2, 2, 1),
        (3, 2, 1, 1, 3, 5),
        (2, 2, 2, 2, 4, 3),
    ]
    .into_iter()
    .enumerate()
    {
        let (h, w, c) = (m * a, m * b, heads * d);
        let n = (h * w) as u64;
        let seed = 50 + i as u64;
        assert_eq!(
            executed_attention_macs(AttentionVariant::Msa, h, w, m, c, heads, 0, seed).unwrap(),
            omega_msa(n, c as u64).unwrap()
        );
        assert_eq!(
            executed_attention_macs(AttentionVariant::GMsa, h, w, m, c, heads, 0, seed).unwrap(),
            omega_g_msa(n, c as u64, m as u64).unwrap()
        );
        assert_eq!(
            executed_attention_macs(AttentionVariant::GMsa, h, w, m, c, heads, k, seed).unwrap(),
            omega_gg_msa(n, c as u64, m as u64, k as u64).unwrap()
        );
        assert_eq!(
            executed_attention_macs(AttentionVariant::WMsa, h, w, m, c, heads, 0, seed).unwrap(),
            omega_g_msa(n, c as u64, m as u64).unwrap()
        );
    }
}

#[test]
fn executed_sra_matches_its_prediction() {
    let (h, w, r, heads, d) = (4usize, 4usize, 2usize, 2usize, 4usize);
    let c = heads * d;
    let n = (h * w) as u64;
    let cfg_macs =
        predicted_attention_macs(AttentionVariant::Sra, n, c as u64, 1, r as u64).unwrap();
    let mut cfg = ggt_core::attention::AttentionConfig::new(AttentionVariant::Sra, c, heads);
    cfg = cfg.with_reduction(r);
    let mut rng = ggt_core::init::rng_from_seed(7);
    let weights = ggt_core::attention::AttentionWeights::<f64>::init(&cfg, &mut rng).unwrap();
    let x = standard_normal::<f64>(vec![h * w, c], 8);
    let mut tape = Tape::new();
    let xv = tape.input(x);
    let mut binds = ggt_core::Bindings::new();
    let bound = weights.bind(&mut tape, "", &mut binds);
    ggt_core::attention::sra(&mut tape, xv, &bound, (h, w), &cfg).unwrap();
    assert_eq!(count_trace(&tape).unwrap().total_macs().unwrap(), cfg_macs);
}

#[test]
fn toy_model_execution_matches_symbolic_walk_exactly() {
    let cfg = toy_config();
    let weights = backbone::build::<f64>(&cfg, 3).unwrap();
    let img = standard_normal::<f64>(vec![3, 64, 64], 4);
    let (_, tape) = backbone::forward_traced(&img, &weights, &cfg).unwrap();
    let executed = count_trace(&tape).unwrap();
    let symbolic = count_model(&cfg).unwrap();
    assert_eq!(
        executed.total_macs().unwrap(),
        symbolic.total_macs().unwrap()
    );
    assert_eq!(
        executed.total_params().unwrap(),
        symbolic.total_params().unwrap()
    );
    assert_eq!(symbolic.total_params().unwrap(), weights.param_count());
    // the informational elementwise tally agrees too
    assert_eq!(executed.elementwise, symbolic.elementwise);
}

#[test]
fn published_model_budgets_from_symbolic_walk() {
    let tiny = count_model(&ModelConfig::for_variant(Variant::Tiny)).unwrap();
    assert_eq!(tiny.total_params().unwrap(), GG_T_PARAMS);
    assert_eq!(tiny.total_macs().unwrap(), GG_T_MACS);

    let small = count_model(&ModelConfig::for_variant(Variant::Small)).unwrap();
    assert_eq!(small.total_params().unwrap(), GG_S_PARAMS);
    assert_eq!(small.total_macs().unwrap(), GG_S_MACS);
}

#[test]
fn csv_roundtrips_to_the_same_integers() {
    let report = count_model(&toy_config()).unwrap();
    let csv = report.to_csv().unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "layer,macs,params");
    let mut macs_sum = 0u64;
    let mut params_sum = 0u64;
    let mut total: Option<(u64, u64)> = None;
    for line in lines {
        let mut parts = line.split(',');
        let name = parts.next().unwrap();
        let macs: u64 = parts.next().unwrap().parse().unwrap();
        let params: u64 = parts.next().unwrap().parse().unwrap();
        if name == "total" {
            total = Some((macs, params));
        } else {
            macs_sum += macs;
            params_sum += params;
        }
    }
    assert_eq!(total, Some((macs_sum, params_sum)));
    assert_eq!(macs_sum, report.total_macs().unwrap());
    assert_eq!(params_sum, report.total_params().unwrap());
}

#[test]
fn linearity_witness_for_glance_versus_full_attention() {
    // doubling N exactly doubles glance cost; full attention grows faster
    for n in [196u64, 3136, 12544] {
        assert_eq!(
            omega_g_msa(2 * n, 96, 7).unwrap(),
            2 * omega_g_msa(n, 96, 7).unwrap()
        );
        assert!(omega_msa(2 * n, 96).unwrap() > 2 * omega_msa(n, 96).unwrap());
    }
}
