use std::collections::HashMap;

use provlens_cli::{
    attribute_record, attribute_records, build_features, group_tokens, plant_signal, synth_records,
    write_features_csv, AnalysisRecord, PromptSpans, SynthOptions, Tagging, DEMO_WORDS,
};
use provlens_core::model::{generate_toy_model, ToyOptions};
use provlens_core::syntax::{feature_index, FEATURE_DIM};
use provlens_core::{AttributionVector, ModelBundle, ModelConfig, PosTag, Source, TaggedWord};

fn demo_model(seed: u64) -> ModelBundle {
    let opts = ToyOptions {
        words: DEMO_WORDS.iter().map(|w| w.to_string()).collect(),
        ..Default::default()
    };
    generate_toy_model(&ModelConfig::toy(2, 2, 32, 96), seed, &opts).unwrap()
}

#[test]
fn thirty_records_run_end_to_end() {
    let m = demo_model(1);
    let records = synth_records(&m.vocab, &SynthOptions::default()).unwrap();
    assert_eq!(records.len(), 30);
    assert_eq!(records.iter().filter(|r| r.label == Some(1)).count(), 15);

    let tokens = attribute_records(&m, &records, true, true).unwrap();
    for (rec, toks) in records.iter().zip(&tokens) {
        assert_eq!(toks.len(), rec.response_ids.len());
        for t in toks {
            assert!(t.theorem_residual <= 1e-9);
            let layers = t.per_layer.as_ref().unwrap();
            assert_eq!(layers.len(), 2);
        }
    }
    let serial = attribute_records(&m, &records, true, false).unwrap();
    assert_eq!(tokens, serial);

    let grouped = group_tokens(tokens.into_iter().flatten().collect());
    let rows = build_features(&records, &grouped, &Tagging::Fallback, None).unwrap();
    assert_eq!(rows.len(), 30);
    assert!(rows.iter().all(|r| r.values.len() == FEATURE_DIM));

    let mut csv = Vec::new();
    write_features_csv(&mut csv, &rows).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 1 + 126 + 1);
    assert_eq!(header[0], "id");
    assert_eq!(header[127], "label");
}

#[test]
fn overlapping_spans_name_the_indices() {
    let m = demo_model(2);
    let mut rec = AnalysisRecord::from_text(&m.vocab, "x", "the city", "the river of Paris", "the tower .", None).unwrap();
    rec.spans = Some(PromptSpans {
        query: vec![0, 1, 2],
        rag: vec![2, 3, 4, 5],
    });
    let err = attribute_record(&m, &rec, false).unwrap_err();
    assert!(err.to_string().contains("[2]"), "{err}");
    assert_eq!(err.kind(), "record");
}

#[test]
fn explicit_spans_move_mass_between_query_and_rag() {
    let m = demo_model(3);
    let base = AnalysisRecord::from_text(&m.vocab, "x", "the city", "the river of Paris", "the tower of Nile .", None).unwrap();
    let mut swapped = base.clone();
    swapped.spans = Some(PromptSpans {
        query: vec![2, 3, 4, 5],
        rag: vec![0, 1],
    });
    let a = attribute_record(&m, &base, false).unwrap();
    let b = attribute_record(&m, &swapped, false).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.v.query, y.v.rag);
        assert_eq!(x.v.rag, y.v.query);
        assert_eq!(x.target_probability, y.target_probability);
    }
}

#[test]
fn sidecar_tags_are_used() {
    let m = demo_model(4);
    let rec = AnalysisRecord::from_text(&m.vocab, "s", "the city", "the river", "the modification .", Some(0)).unwrap();
    let tokens = attribute_record(&m, &rec, false).unwrap();
    // "the" "modi" "fication" "."
    assert_eq!(tokens.len(), 4);
    let words = vec![
        TaggedWord::new("the", 0, 3, PosTag::Det),
        TaggedWord::new("modification", 4, 16, PosTag::Verb),
        TaggedWord::new(".", 17, 18, PosTag::Punct),
    ];
    let sidecar = HashMap::from([("s".to_string(), words)]);
    let grouped = group_tokens(tokens.clone());
    let row = &build_features(std::slice::from_ref(&rec), &grouped, &Tagging::Sidecar(&sidecar), None).unwrap()[0];
    let mean_rag = (tokens[1].v.rag + tokens[2].v.rag) / 2.0;
    assert!((row.values[feature_index(PosTag::Verb, Source::Rag)] - mean_rag).abs() <= 1e-15);
    assert_eq!(row.values[feature_index(PosTag::Noun, Source::Rag)], 0.0);

    let empty = HashMap::new();
    assert!(build_features(&[rec], &grouped, &Tagging::Sidecar(&empty), None).is_err());
}

#[test]
fn planting_preserves_each_token_sum() {
    let mut v = vec![
        AttributionVector([0.1, 0.2, 0.0, 0.05, -0.1, 0.02, 0.3]),
        AttributionVector([0.0, 0.1, 0.1, 0.0, 0.2, -0.05, 0.1]),
        AttributionVector([0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1]),
    ];
    let before: Vec<f64> = v.iter().map(|x| x.sum()).collect();
    let tags = [PosTag::Noun, PosTag::Num, PosTag::Det];
    plant_signal(&mut v, &tags, &before, 1.0);
    for (x, b) in v.iter().zip(&before) {
        assert!((x.sum() - b).abs() <= 1e-15);
    }
    assert!((v[0].get(Source::Rag) - (0.2 - before[0])).abs() <= 1e-15);
    assert!((v[1].get(Source::Ln) - (-0.05 + before[1])).abs() <= 1e-15);
    assert_eq!(v[2].0, [0.3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1]);
}

#[test]
fn synthetic_corpus_is_seeded() {
    let m = demo_model(5);
    let opts = SynthOptions {
        n_records: 12,
        seed: 9,
        positive_rate: 0.25,
    };
    let a = synth_records(&m.vocab, &opts).unwrap();
    assert_eq!(a, synth_records(&m.vocab, &opts).unwrap());
    assert_eq!(a.iter().filter(|r| r.label == Some(1)).count(), 3);
    for r in &a {
        r.validate(96).unwrap();
        let text: Vec<char> = r.response_text.as_ref().unwrap().chars().collect();
        for (&(s, e), &id) in r.token_offsets.as_ref().unwrap().iter().zip(&r.response_ids) {
            let piece: String = text[s..e].iter().collect();
            assert_eq!(piece, m.vocab.token(id).unwrap());
        }
    }
}
