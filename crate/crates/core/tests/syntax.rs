use proptest::prelude::*;
use provlens_core::model::Vocab;
use provlens_core::syntax::{
    aggregate, align, builtin_fallback_tagger, feature_index, feature_names, propagate_tags,
    tag_counts, PosTag, TaggedWord, FEATURE_DIM,
};
use provlens_core::text::CharSpan;
use provlens_core::{AttributionVector, Source};

/// Reference aggregation: per-tag running sums in token order.
fn oracle_aggregate(vectors: &[[f64; 7]], tags: &[PosTag]) -> Vec<f64> {
    let mut sums = vec![0.0; 126];
    let mut counts = [0usize; 18];
    for (v, t) in vectors.iter().zip(tags) {
        let ti = PosTag::ALL.iter().position(|x| x == t).unwrap();
        counts[ti] += 1;
        for s in 0..7 {
            sums[ti * 7 + s] += v[s];
        }
    }
    for ti in 0..18 {
        if counts[ti] > 0 {
            for s in 0..7 {
                sums[ti * 7 + s] /= counts[ti] as f64;
            }
        }
    }
    sums
}

fn tag_strategy() -> impl Strategy<Value = PosTag> {
    (0usize..18).prop_map(|i| PosTag::ALL[i])
}

#[test]
fn subword_pieces_inherit_word_tag() {
    let vocab = Vocab::new(vec!["the".into(), "modi".into(), "fication".into(), ".".into()]);
    let text = "the modification";
    let toks = vocab.tokenize(text).unwrap();
    let pieces: Vec<&str> = toks.iter().map(|(id, _)| vocab.token(*id).unwrap()).collect();
    assert_eq!(pieces, ["the", "modi", "fication"]);

    let words = vec![
        TaggedWord::new("the", 0, 3, PosTag::Det),
        TaggedWord::new("modification", 4, 16, PosTag::Noun),
    ];
    let spans: Vec<CharSpan> = toks.iter().map(|(_, s)| *s).collect();
    let map = align(&spans, &words, 16).unwrap();
    assert_eq!(map.word_to_tokens, vec![vec![0], vec![1, 2]]);
    let tags = propagate_tags(&map, &words, 3).unwrap();
    assert_eq!(tags, [PosTag::Det, PosTag::Noun, PosTag::Noun]);
}

#[test]
fn gold_tagged_fixture() {
    // "Paris hosted 2 games!" with gold tags and hand-written token offsets.
    let words = vec![
        TaggedWord::new("Paris", 0, 5, PosTag::Propn),
        TaggedWord::new("hosted", 6, 12, PosTag::Verb),
        TaggedWord::new("2", 13, 14, PosTag::Num),
        TaggedWord::new("games", 15, 20, PosTag::Noun),
        TaggedWord::new("!", 20, 21, PosTag::Punct),
    ];
    let tokens = [
        CharSpan::new(0, 3),
        CharSpan::new(3, 5),
        CharSpan::new(5, 9),
        CharSpan::new(9, 12),
        CharSpan::new(13, 14),
        CharSpan::new(14, 15),
        CharSpan::new(15, 20),
        CharSpan::new(20, 21),
    ];
    let map = align(&tokens, &words, 21).unwrap();
    // Token 2 covers " hos": one space, three chars of "hosted".
    assert_eq!(map.word_to_tokens[1], vec![2, 3]);
    // Token 5 is a lone space and overlaps nothing.
    assert_eq!(map.unaligned, vec![5]);
    let tags = propagate_tags(&map, &words, tokens.len()).unwrap();
    use PosTag::*;
    assert_eq!(tags, [Propn, Propn, Verb, Verb, Num, X, Noun, Punct]);
}

#[test]
fn equal_overlap_goes_to_earlier_word() {
    let words = vec![
        TaggedWord::new("ab", 0, 2, PosTag::Noun),
        TaggedWord::new("cd", 2, 4, PosTag::Verb),
    ];
    let map = align(&[CharSpan::new(1, 3)], &words, 4).unwrap();
    assert_eq!(map.word_to_tokens, vec![vec![0], vec![]]);
}

#[test]
fn invalid_offsets_are_rejected() {
    let words = vec![TaggedWord::new("ab", 0, 2, PosTag::Noun)];
    assert!(align(&[CharSpan::new(0, 5)], &words, 4).is_err());
    let overlapping = vec![
        TaggedWord::new("ab", 0, 2, PosTag::Noun),
        TaggedWord::new("bc", 1, 3, PosTag::Noun),
    ];
    assert!(align(&[], &overlapping, 4).is_err());
}

#[test]
fn fallback_tagger_feeds_alignment() {
    let text = "the modification of 42 files";
    let words = builtin_fallback_tagger(text);
    let vocab = Vocab::new(
        ["the", "modi", "fication", "of", "4", "2", "file", "s"]
            .map(String::from)
            .to_vec(),
    );
    let toks = vocab.tokenize(text).unwrap();
    let spans: Vec<CharSpan> = toks.iter().map(|(_, s)| *s).collect();
    let map = align(&spans, &words, text.chars().count()).unwrap();
    let tags = propagate_tags(&map, &words, spans.len()).unwrap();
    use PosTag::*;
    assert_eq!(tags, [Det, Noun, Noun, Adp, Num, Num, Noun, Noun]);
}

#[test]
fn feature_vector_layout() {
    let names = feature_names();
    assert_eq!(names.len(), FEATURE_DIM);
    assert_eq!(FEATURE_DIM, 126);
    let mut sorted = names.clone();
    sorted.sort();
    sorted.dedup();
    assert_eq!(sorted.len(), 126);
    for (ti, tag) in PosTag::ALL.iter().enumerate() {
        for (si, src) in Source::ALL.iter().enumerate() {
            let idx = feature_index(*tag, *src);
            assert_eq!(idx, ti * 7 + si);
            assert_eq!(names[idx], format!("{}_{}", src.column_name(), tag.as_str()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn aggregation_matches_reference_and_conserves_mass(
        rows in prop::collection::vec(
            (prop::array::uniform7(-1.0f64..1.0), tag_strategy()), 1..60),
    ) {
        let vectors: Vec<[f64; 7]> = rows.iter().map(|r| r.0).collect();
        let tags: Vec<PosTag> = rows.iter().map(|r| r.1).collect();
        let wrapped: Vec<AttributionVector> = vectors.iter().map(|v| AttributionVector(*v)).collect();
        let f = aggregate(&wrapped, &tags).unwrap();
        prop_assert_eq!(f.values.len(), 126);

        let want = oracle_aggregate(&vectors, &tags);
        for (a, b) in f.values.iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-12);
        }

        let counts = tag_counts(&tags);
        let recovered: f64 = PosTag::ALL
            .iter()
            .map(|t| counts[t.index()] as f64 * f.block(*t).iter().sum::<f64>())
            .sum();
        let total: f64 = vectors.iter().flatten().sum();
        prop_assert!((recovered - total).abs() <= 1e-6);
    }

    #[test]
    fn aggregation_ignores_token_order(
        rows in prop::collection::vec(
            (prop::array::uniform7(-1.0f64..1.0), tag_strategy()), 1..40),
        perm_seed in any::<u64>(),
    ) {
        let mut shuffled = rows.clone();
        // Fisher-Yates driven by a simple LCG so the permutation is reproducible.
        let mut state = perm_seed;
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (state >> 33) as usize % (i + 1));
        }
        let run = |rows: &[([f64; 7], PosTag)]| {
            let v: Vec<AttributionVector> = rows.iter().map(|r| AttributionVector(r.0)).collect();
            let t: Vec<PosTag> = rows.iter().map(|r| r.1).collect();
            aggregate(&v, &t).unwrap().values
        };
        prop_assert_eq!(run(&rows), run(&shuffled));
    }

    #[test]
    fn alignment_is_total_and_disjoint(
        word_lens in prop::collection::vec(1usize..8, 1..12),
        gap in 0usize..3,
        cuts in prop::collection::vec(1usize..5, 1..80),
    ) {
        let mut words = Vec::new();
        let mut pos = 0;
        for (i, len) in word_lens.iter().enumerate() {
            words.push(TaggedWord::new(format!("w{i}"), pos, pos + len, PosTag::ALL[i % 18]));
            pos += len + gap;
        }
        let text_len = pos;
        let mut tokens = Vec::new();
        let mut start = 0;
        for c in cuts.iter().cycle() {
            if start >= text_len {
                break;
            }
            let end = (start + c).min(text_len);
            tokens.push(CharSpan::new(start, end));
            start = end;
        }
        let map = align(&tokens, &words, text_len).unwrap();
        prop_assert_eq!(map.n_tokens(), tokens.len());
        let mut seen = vec![0; tokens.len()];
        for t in map.word_to_tokens.iter().flatten().chain(&map.unaligned) {
            seen[*t] += 1;
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let tags = propagate_tags(&map, &words, tokens.len()).unwrap();
        for &t in &map.unaligned {
            prop_assert_eq!(tags[t], PosTag::X);
        }
    }
}
