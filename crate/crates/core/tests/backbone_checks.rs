use ggt_core::backbone::{self, ModelConfig, ModelWeights, Variant};
use ggt_core::ggblock::GazePolicy;
use ggt_core::gradcheck::ParamSet;
use ggt_core::init::standard_normal;
use ggt_core::verify::{run, Suite, VerifyOptions};

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
fn stage_grids_and_channels_at_224() {
    for variant in [Variant::Tiny, Variant::Small] {
        let geom = ModelConfig::for_variant(variant).geometry().unwrap();
        assert_eq!(geom.grids, [(56, 56), (28, 28), (14, 14), (7, 7)]);
        assert_eq!(geom.channels, [96, 192, 384, 768]);
        for (g, _) in geom.grids {
            assert_eq!(g % 7, 0);
        }
    }
}

#[test]
fn rejections_name_the_failing_stage() {
    let err = ModelConfig::for_variant(Variant::Tiny)
        .with_img_size(448, 225)
        .geometry()
        .unwrap_err();
    assert!(format!("{err}").contains("patch size"), "{err}");

    // 448 halves cleanly but 112/56/28 are fine; 116 → 58 breaks stage 1
    let err = ModelConfig::for_variant(Variant::Tiny)
        .with_img_size(464, 464)
        .geometry()
        .unwrap_err();
    let msg = format!("{err}");
    assert!(msg.contains("stage 0") && msg.contains("116"), "{msg}");
}

#[test]
fn multiples_of_224_are_accepted() {
    let geom = ModelConfig::for_variant(Variant::Tiny)
        .with_img_size(448, 224)
        .geometry()
        .unwrap();
    assert_eq!(geom.grids[0], (112, 56));
    assert_eq!(geom.grids[3], (14, 7));
    // adaptive kernels follow the taller axis
    assert_eq!(geom.kernels[0], (17, 9));
}

#[test]
fn toy_build_forward_deterministic_end_to_end() {
    let cfg = toy_config();
    let w1: ModelWeights<f64> = backbone::build(&cfg, 11).unwrap();
    let w2: ModelWeights<f64> = backbone::build(&cfg, 11).unwrap();
    let img = standard_normal::<f64>(vec![3, 64, 64], 12);
    let a = backbone::forward(&img, &w1, &cfg).unwrap();
    let b = backbone::forward(&img, &w2, &cfg).unwrap();
    assert_eq!(a, b);

    let different: ModelWeights<f64> = backbone::build(&cfg, 13).unwrap();
    let c = backbone::forward(&img, &different, &cfg).unwrap();
    assert_ne!(a, c);
}

#[test]
fn logits_softmax_to_a_distribution() {
    let cfg = toy_config();
    let weights: ModelWeights<f64> = backbone::build(&cfg, 21).unwrap();
    let img = standard_normal::<f64>(vec![3, 64, 64], 22);
    let logits = backbone::forward(&img, &weights, &cfg).unwrap();
    let probs = ggt_core::tensor::softmax_rows(&logits.reshaped(vec![1, cfg.num_classes]).unwrap())
        .unwrap();
    let sum: f64 = probs.data().iter().sum();
    assert!((sum - 1.0).abs() < 1e-9);
}

#[test]
fn weights_are_shareable_across_threads() {
    fn assert_send_sync<T: Send + Sync>() {}
    assert_send_sync::<ModelWeights<f32>>();
    assert_send_sync::<ModelWeights<f64>>();
    assert_send_sync::<ggt_core::Tensor<f64>>();

    // parallel forward passes on shared weights agree with serial ones
    let cfg = toy_config();
    let weights: std::sync::Arc<ModelWeights<f64>> =
        std::sync::Arc::new(backbone::build(&cfg, 31).unwrap());
    let img = standard_normal::<f64>(vec![3, 64, 64], 32);
    let serial = backbone::forward(&img, &weights, &cfg).unwrap();
    let handles: Vec<_> = (0..3)
        .map(|_| {
            let w = weights.clone();
            let img = img.clone();
            std::thread::spawn(move || backbone::forward(&img, &w, &cfg).unwrap())
        })
        .collect();
    for handle in handles {
        assert_eq!(handle.join().unwrap(), serial);
    }
}

#[test]
fn param_names_are_unique_and_stable() {
    let cfg = toy_config();
    let weights: ModelWeights<f64> = backbone::build(&cfg, 41).unwrap();
    let names = weights.param_names();
    let mut dedup = names.clone();
    dedup.sort();
    dedup.dedup();
    assert_eq!(dedup.len(), names.len(), "duplicate parameter names");
    assert!(names.contains(&"embed.proj.weight".to_string()));
    assert!(names.contains(&"stages.0.blocks.0.attn.wq".to_string()));
    assert!(names.contains(&"stages.2.merge.reduce.weight".to_string()));
    assert!(names.contains(&"head.bias".to_string()));
}

#[test]
fn verify_perm_suite_is_green() {
    let results = run(Suite::Perm, &VerifyOptions::default());
    for r in &results {
        assert!(r.passed, "{} failed: {}", r.name, r.detail);
    }
    assert!(!results.is_empty());
}
