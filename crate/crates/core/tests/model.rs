use std::fs;

use provlens_core::model::{
    forward_cached, generate_toy_model, load_model, write_toy_model, FfnKind, FfnWeights, Manifest,
    ModelConfig, NormKind, PositionKind, ToyOptions, BLOB_FILE, MANIFEST_FILE,
};
use provlens_core::tensor::Matrix;
use provlens_core::Error;

fn toy(l: usize, h: usize, d: usize, v: usize, seed: u64) -> provlens_core::ModelBundle {
    generate_toy_model(&ModelConfig::toy(l, h, d, v), seed, &ToyOptions::default()).unwrap()
}

fn ids(n: usize, v: usize) -> Vec<usize> {
    (0..n).map(|i| (i * 7 + 3) % v).collect()
}

#[test]
fn toy_generation_is_byte_identical() {
    let cfg = ModelConfig::toy(2, 2, 16, 50);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_toy_model(&cfg, 7, &ToyOptions::default(), a.path()).unwrap();
    write_toy_model(&cfg, 7, &ToyOptions::default(), b.path()).unwrap();
    for f in ["config.json", "manifest.json", "weights.bin", "vocab.txt"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
    let c = tempfile::tempdir().unwrap();
    write_toy_model(&cfg, 8, &ToyOptions::default(), c.path()).unwrap();
    assert_ne!(
        fs::read(a.path().join("weights.bin")).unwrap(),
        fs::read(c.path().join("weights.bin")).unwrap()
    );
}

#[test]
fn manifest_lists_expected_tensor_groups() {
    let dir = tempfile::tempdir().unwrap();
    write_toy_model(&ModelConfig::toy(1, 1, 8, 10), 0, &ToyOptions::default(), dir.path()).unwrap();
    let manifest: Manifest =
        serde_json::from_str(&fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
    let names: Vec<&str> = manifest.tensors.iter().map(|t| t.name.as_str()).collect();
    let count = |pred: &dyn Fn(&str) -> bool| names.iter().filter(|n| pred(n)).count();

    assert_eq!(count(&|n| n == "embedding"), 1);
    assert_eq!(count(&|n| n == "positional"), 1);
    for w in ["w_q", "w_k", "w_v", "w_o"] {
        assert_eq!(count(&|n| n == format!("layers.0.attn.{w}")), 1);
    }
    assert_eq!(count(&|n| n.starts_with("layers.0.ffn.")), 4);
    // Two norms per layer, each with gain and bias under layernorm.
    assert_eq!(count(&|n| n.starts_with("layers.0.attn_norm.")), 2);
    assert_eq!(count(&|n| n.starts_with("layers.0.ffn_norm.")), 2);
    assert_eq!(count(&|n| n.starts_with("final_norm.")), 2);
    assert_eq!(names.len(), 1 + 1 + 4 + 4 + 4 + 2);

    // Tensors are contiguous in the blob.
    let mut offset = 0;
    for t in &manifest.tensors {
        assert_eq!(t.offset, offset);
        offset += t.nbytes;
    }
    assert_eq!(offset, fs::metadata(dir.path().join(BLOB_FILE)).unwrap().len());
}

#[test]
fn load_round_trips_generated_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ModelConfig::toy(2, 2, 16, 30);
    let opts = ToyOptions {
        words: vec!["the".into(), "cat".into()],
        ..ToyOptions::default()
    };
    let generated = write_toy_model(&cfg, 3, &opts, dir.path()).unwrap();
    let loaded = load_model(dir.path()).unwrap();
    assert_eq!(loaded.config, cfg);
    assert_eq!(loaded.weights, generated.weights);
    assert_eq!(loaded.vocab.token(0), Some("the"));
    assert_eq!(loaded.vocab.token(2), Some("tok2"));
    assert_eq!(loaded.vocab.len(), 30);
}

#[test]
fn load_rejects_wrong_output_projection_shape() {
    let dir = tempfile::tempdir().unwrap();
    let d = 8;
    write_toy_model(&ModelConfig::toy(1, 1, d, 10), 0, &ToyOptions::default(), dir.path()).unwrap();
    let path = dir.path().join(MANIFEST_FILE);
    let mut manifest: Manifest = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let entry = manifest
        .tensors
        .iter_mut()
        .find(|t| t.name == "layers.0.attn.w_o")
        .unwrap();
    entry.shape = vec![d, d - 1];
    entry.nbytes = (d * (d - 1) * 4) as u64;
    fs::write(&path, serde_json::to_string(&manifest).unwrap()).unwrap();

    match load_model(dir.path()) {
        Err(Error::ShapeMismatch {
            name,
            expected,
            found,
        }) => {
            assert!(name.contains("w_o"), "{name}");
            assert_eq!(expected, vec![d, d]);
            assert_eq!(found, vec![d, d - 1]);
        }
        other => panic!("expected shape mismatch, got {other:?}"),
    }
}

#[test]
fn load_rejects_nan_with_name_and_index() {
    let dir = tempfile::tempdir().unwrap();
    write_toy_model(&ModelConfig::toy(1, 1, 8, 10), 0, &ToyOptions::default(), dir.path()).unwrap();
    let manifest: Manifest =
        serde_json::from_str(&fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
    let entry = manifest
        .tensors
        .iter()
        .find(|t| t.name == "layers.0.attn.w_k")
        .unwrap();
    let blob_path = dir.path().join(BLOB_FILE);
    let mut blob = fs::read(&blob_path).unwrap();
    let at = entry.offset as usize + 5 * 4;
    blob[at..at + 4].copy_from_slice(&f32::NAN.to_le_bytes());
    fs::write(&blob_path, blob).unwrap();

    match load_model(dir.path()) {
        Err(Error::NonFinite { name, index }) => {
            assert_eq!(name, "layers.0.attn.w_k");
            assert_eq!(index, 5);
        }
        other => panic!("expected non-finite error, got {other:?}"),
    }
}

#[test]
fn load_reports_missing_tensor_and_files() {
    let dir = tempfile::tempdir().unwrap();
    write_toy_model(&ModelConfig::toy(1, 1, 8, 10), 0, &ToyOptions::default(), dir.path()).unwrap();
    let path = dir.path().join(MANIFEST_FILE);
    let mut manifest: Manifest = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    manifest.tensors.retain(|t| t.name != "final_norm.bias");
    fs::write(&path, serde_json::to_string(&manifest).unwrap()).unwrap();
    assert!(matches!(load_model(dir.path()), Err(Error::MissingTensor(n)) if n == "final_norm.bias"));

    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(load_model(empty.path()), Err(Error::Io { .. })));
}

#[test]
fn forward_rows_are_distributions() {
    let m = toy(4, 4, 64, 200, 1);
    let cache = forward_cached(&m, &ids(12, 200)).unwrap();
    for t in 0..12 {
        let row = cache.final_probs.row(t);
        assert!(row.iter().all(|p| p.is_finite() && *p > 0.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
    for l in 0..4 {
        for h in 0..4 {
            let a = &cache.attn[l][h];
            for q in 0..12 {
                let visible: f64 = a.row(q)[..=q].iter().sum();
                assert!((visible - 1.0).abs() <= 1e-9);
                assert!(a.row(q)[q + 1..].iter().all(|&x| x == 0.0));
            }
        }
    }
}

#[test]
fn zero_blocks_leave_residual_stream_untouched() {
    let mut m = toy(3, 2, 16, 40, 5);
    for layer in &mut m.weights.layers {
        layer.w_v = Matrix::zeros(16, 16);
        if let FfnWeights::Gelu { w_out, b_out, .. } = &mut layer.ffn {
            *w_out = Matrix::zeros(w_out.rows(), w_out.cols());
            *b_out = None;
        }
    }
    let cache = forward_cached(&m, &ids(6, 40)).unwrap();
    assert_eq!(cache.last_hidden(), &cache.h0);
}

#[test]
fn head_outputs_sum_to_attention_update() {
    let m = toy(4, 4, 64, 200, 1);
    let cache = forward_cached(&m, &ids(12, 200)).unwrap();
    for l in 0..4 {
        let diff = cache.head_sum(l).max_abs_diff(&cache.attn_residual[l]);
        assert!(diff <= 1e-9, "layer {l}: {diff}");
    }
}

#[test]
fn residual_bookkeeping_is_exact() {
    let m = toy(3, 2, 16, 40, 9);
    let cache = forward_cached(&m, &ids(7, 40)).unwrap();
    for l in 0..3 {
        assert_eq!(cache.layer_input(l).add(&cache.attn_residual[l]), cache.h_mid[l]);
        assert_eq!(cache.h_mid[l].add(&cache.ffn_residual[l]), cache.h_out[l]);
    }
}

#[test]
fn prefix_rerun_matches_cached_rows() {
    let m = toy(4, 4, 64, 200, 1);
    let tokens = ids(12, 200);
    let full = forward_cached(&m, &tokens).unwrap();
    for t in 0..12 {
        let prefix = forward_cached(&m, &tokens[..=t]).unwrap();
        assert_eq!(prefix.final_probs.row(t), full.final_probs.row(t), "row {t}");
        assert_eq!(prefix.last_hidden().row(t), full.last_hidden().row(t));
    }
}

#[test]
fn forward_is_deterministic() {
    let m = toy(2, 2, 16, 50, 4);
    let tokens = ids(9, 50);
    assert_eq!(forward_cached(&m, &tokens).unwrap(), forward_cached(&m, &tokens).unwrap());
}

#[test]
fn forward_input_errors() {
    let mut cfg = ModelConfig::toy(1, 1, 8, 10);
    cfg.max_positions = 4;
    let m = generate_toy_model(&cfg, 0, &ToyOptions::default()).unwrap();
    assert!(matches!(
        forward_cached(&m, &[1, 2, 3, 4, 5]),
        Err(Error::SequenceLength { len: 5, max: 4 })
    ));
    assert!(matches!(forward_cached(&m, &[]), Err(Error::SequenceLength { .. })));
    assert!(matches!(
        forward_cached(&m, &[1, 10]),
        Err(Error::TokenOutOfRange { id: 10, position: 1, .. })
    ));
}

#[test]
fn rmsnorm_rotary_gated_untied_variant() {
    let cfg = ModelConfig {
        norm_kind: NormKind::Rmsnorm,
        position_kind: PositionKind::Rotary,
        ffn_kind: FfnKind::Gated,
        tied_embeddings: false,
        d_ff: 24,
        ..ModelConfig::toy(2, 2, 16, 30)
    };
    let dir = tempfile::tempdir().unwrap();
    let generated = write_toy_model(&cfg, 11, &ToyOptions::default(), dir.path()).unwrap();
    let m = load_model(dir.path()).unwrap();
    assert_eq!(m.weights, generated.weights);
    assert!(m.weights.positional.is_none());
    assert!(m.weights.unembedding.is_some());

    let tokens = ids(8, 30);
    let cache = forward_cached(&m, &tokens).unwrap();
    // Without learned positions the initial state is the raw embedding.
    for (t, &id) in tokens.iter().enumerate() {
        assert_eq!(cache.h0.row(t), m.weights.embedding.row(id));
    }
    for l in 0..2 {
        assert!(cache.head_sum(l).max_abs_diff(&cache.attn_residual[l]) <= 1e-9);
    }
    for t in 0..8 {
        assert!((cache.final_probs.row(t).iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn invalid_toy_requests_fail() {
    assert!(generate_toy_model(&ModelConfig::toy(1, 3, 8, 10), 0, &ToyOptions::default()).is_err());
    let opts = ToyOptions {
        words: vec!["a".into(); 11],
        ..ToyOptions::default()
    };
    assert!(generate_toy_model(&ModelConfig::toy(1, 1, 8, 10), 0, &opts).is_err());
}
