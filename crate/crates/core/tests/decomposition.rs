use proptest::prelude::*;
use provlens_core::model::{generate_toy_model, FfnWeights, ToyOptions};
use provlens_core::probe::{probe_distribution, probe_trace};
use provlens_core::tensor::Matrix;
use provlens_core::{decompose_coarse, forward_cached, probe, ModelBundle, ModelConfig};

fn toy(l: usize, h: usize, d: usize, v: usize, seed: u64) -> ModelBundle {
    generate_toy_model(&ModelConfig::toy(l, h, d, v), seed, &ToyOptions::default()).unwrap()
}

fn ids(n: usize, v: usize) -> Vec<usize> {
    (0..n).map(|i| (i * 11 + 2) % v).collect()
}

/// Reference probe: explicit logits followed by a log-sum-exp normaliser.
fn oracle_probe(hidden: &[f64], model: &ModelBundle, target: usize) -> f64 {
    let u = model.unembedding();
    let logits: Vec<f64> = (0..u.rows())
        .map(|v| (0..hidden.len()).map(|k| hidden[k] * u.get(v, k)).sum())
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    (logits[target] - lse).exp()
}

fn zero_blocks(m: &mut ModelBundle) {
    let d = m.config.d_model;
    for layer in &mut m.weights.layers {
        layer.w_v = Matrix::zeros(d, d);
        if let FfnWeights::Gelu { w_out, b_out, .. } = &mut layer.ffn {
            *w_out = Matrix::zeros(w_out.rows(), w_out.cols());
            *b_out = None;
        }
    }
}

#[test]
fn probe_matches_reference() {
    let m = toy(2, 2, 16, 50, 3);
    let cache = forward_cached(&m, &ids(8, 50)).unwrap();
    for pos in 0..8 {
        for target in [0, 7, 49] {
            let h = cache.h_mid[1].row(pos);
            let got = probe(h, &m, target).unwrap();
            let want = oracle_probe(h, &m, target);
            assert!((got - want).abs() <= 1e-13, "{got} vs {want}");
        }
    }
}

#[test]
fn probe_on_zero_hidden_is_uniform() {
    let m = toy(1, 1, 8, 40, 0);
    let p = probe(&[0.0; 8], &m, 5).unwrap();
    assert!((p - 1.0 / 40.0).abs() <= 1e-15);
}

#[test]
fn probe_with_dominant_direction_is_nearly_one_hot() {
    let m = toy(1, 1, 16, 30, 4);
    let target = 9;
    let h: Vec<f64> = m.unembedding().row(target).iter().map(|x| x * 1e4).collect();
    let p = probe_distribution(&h, &m).unwrap();
    let best = (0..30).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
    assert_eq!(best, target);
    assert!(p[target] > 1.0 - 1e-6);
}

#[test]
fn zero_blocks_leave_only_initial_and_norm() {
    let mut m = toy(3, 2, 16, 40, 5);
    zero_blocks(&mut m);
    let toks = ids(6, 40);
    let cache = forward_cached(&m, &toks).unwrap();
    for pos in 0..5 {
        let d = decompose_coarse(&cache, &m, pos, toks[pos + 1]).unwrap();
        assert!(d.att_delta.iter().chain(&d.ffn_delta).all(|&x| x == 0.0));
        assert!((d.p_initial + d.ln_delta - d.p_final).abs() <= f64::EPSILON);
    }
}

#[test]
fn telescoping_residual_is_tiny_on_reference_model() {
    let m = toy(4, 4, 64, 200, 1);
    let toks = ids(24, 200);
    let cache = forward_cached(&m, &toks).unwrap();
    let mut worst: f64 = 0.0;
    for pos in 0..24 {
        for target in [toks[(pos + 1) % 24], 0, 199, (pos * 37) % 200] {
            let d = decompose_coarse(&cache, &m, pos, target).unwrap();
            worst = worst.max(d.residual);
        }
    }
    assert!(worst <= 1e-9, "worst residual {worst}");
}

#[test]
fn deltas_match_independent_probe_differences() {
    let m = toy(3, 2, 16, 50, 9);
    let toks = ids(10, 50);
    let cache = forward_cached(&m, &toks).unwrap();
    let (pos, target) = (6, toks[7]);
    let d = decompose_coarse(&cache, &m, pos, target).unwrap();

    let mut prev = oracle_probe(cache.h0.row(pos), &m, target);
    assert!((d.p_initial - prev).abs() <= 1e-13);
    for l in 0..3 {
        let mid = oracle_probe(cache.h_mid[l].row(pos), &m, target);
        let out = oracle_probe(cache.h_out[l].row(pos), &m, target);
        assert!((d.att_delta[l] - (mid - prev)).abs() <= 1e-13);
        assert!((d.ffn_delta[l] - (out - mid)).abs() <= 1e-13);
        prev = out;
    }
    let p_final = cache.final_probs.get(pos, target);
    assert!((d.ln_delta - (p_final - prev)).abs() <= 1e-13);
}

#[test]
fn single_layer_attention_delta_is_reproducible_bit_for_bit() {
    let m = toy(1, 2, 16, 50, 12);
    let toks = ids(7, 50);
    let cache = forward_cached(&m, &toks).unwrap();
    for pos in 0..6 {
        let target = toks[pos + 1];
        let h0 = cache.h0.row(pos);
        let shifted: Vec<f64> = h0
            .iter()
            .zip(cache.attn_residual[0].row(pos))
            .map(|(a, b)| a + b)
            .collect();
        let want = probe(&shifted, &m, target).unwrap() - probe(h0, &m, target).unwrap();
        let d = decompose_coarse(&cache, &m, pos, target).unwrap();
        assert_eq!(d.att_delta[0].to_bits(), want.to_bits());
    }
}

#[test]
fn trace_is_consistent_with_decomposition() {
    let m = toy(2, 2, 16, 50, 1);
    let toks = ids(5, 50);
    let cache = forward_cached(&m, &toks).unwrap();
    let t = probe_trace(&cache, &m, 3, 4).unwrap();
    let d = decompose_coarse(&cache, &m, 3, 4).unwrap();
    assert_eq!(t.initial, d.p_initial);
    assert_eq!(t.layer_input(1), t.out[0]);
    assert_eq!(t.mid[1] - t.out[0], d.att_delta[1]);
}

#[test]
fn out_of_range_queries_fail() {
    let m = toy(1, 1, 8, 20, 0);
    let cache = forward_cached(&m, &ids(4, 20)).unwrap();
    assert!(decompose_coarse(&cache, &m, 4, 0).is_err());
    assert!(decompose_coarse(&cache, &m, 0, 20).is_err());
    assert!(probe(&[0.0; 7], &m, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn probe_distribution_sums_to_one(
        seed in 0u64..1000,
        scale in 0.01f64..50.0,
        raw in prop::collection::vec(-1.0f64..1.0, 16),
    ) {
        let m = toy(1, 1, 16, 37, seed);
        let h: Vec<f64> = raw.iter().map(|x| x * scale).collect();
        let p = probe_distribution(&h, &m).unwrap();
        let s: f64 = p.iter().sum();
        prop_assert!((s - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn decomposition_telescopes(seed in 0u64..500, layers in 1usize..4, pos in 0usize..9) {
        let m = toy(layers, 2, 16, 40, seed);
        let toks = ids(10, 40);
        let cache = forward_cached(&m, &toks).unwrap();
        let d = decompose_coarse(&cache, &m, pos, toks[pos + 1]).unwrap();
        prop_assert!(d.residual <= 1e-12);
        prop_assert!((d.total() - d.p_final).abs() <= 1e-12);
    }
}
