//! Synthetic records over the demo vocabulary.

use provlens_core::model::Vocab;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CliError, Result};
use crate::record::AnalysisRecord;

/// Vocabulary pieces placed at the front of generated toy models. Longer
/// words such as "modification" are covered by several pieces.
pub const DEMO_WORDS: &[&str] = &[
    "the", "a", "this", "of", "in", "on", "at", "and", "is", "was", "has", "it", "they", ".", ",",
    "river", "city", "bridge", "year", "people", "station", "museum", "festival", "engine",
    "report", "tower", "modi", "fication", "popu", "lation", "Paris", "Berlin", "Nile", "Tokyo",
    "1990", "2010", "42", "7", "300", "0", "1", "2", "3", "4", "5", "6", "8", "9",
];

const DET: &[&str] = &["the", "a", "this"];
const ADP: &[&str] = &["of", "in", "on", "at"];
const AUX: &[&str] = &["is", "was", "has"];
const NOUN: &[&str] = &[
    "river", "city", "bridge", "year", "people", "station", "museum", "festival", "engine", "report",
    "tower", "modification", "population",
];
const PROPN: &[&str] = &["Paris", "Berlin", "Nile", "Tokyo"];
const NUM: &[&str] = &["1990", "2010", "42", "7", "300", "1850", "64"];

/// `the <noun> of <Propn> <aux> <num> <adp> the <noun> .`, with some slots varied.
fn sentence(rng: &mut ChaCha8Rng) -> Vec<&'static str> {
    let pick = |rng: &mut ChaCha8Rng, xs: &[&'static str]| *xs.choose(rng).unwrap();
    let mut s = vec![pick(rng, DET), pick(rng, NOUN), pick(rng, ADP), pick(rng, PROPN), pick(rng, AUX)];
    s.push(pick(rng, NUM));
    if rng.random_bool(0.5) {
        s.extend([pick(rng, ADP), "the", pick(rng, NOUN)]);
    }
    s.push(".");
    s
}

fn text(rng: &mut ChaCha8Rng, sentences: usize) -> String {
    (0..sentences)
        .flat_map(|_| sentence(rng))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub n_records: usize,
    pub seed: u64,
    /// Exactly `round(n · rate)` records are labeled 1.
    pub positive_rate: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            n_records: 30,
            seed: 0,
            positive_rate: 0.5,
        }
    }
}

/// Records with one-sentence queries, two-sentence retrieved passages and
/// one- or two-sentence responses. `vocab` must contain [`DEMO_WORDS`].
pub fn synth_records(vocab: &Vocab, opts: &SynthOptions) -> Result<Vec<AnalysisRecord>> {
    if !(0.0..=1.0).contains(&opts.positive_rate) {
        return Err(CliError::Usage("positive rate must be in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n_pos = (opts.n_records as f64 * opts.positive_rate).round() as usize;
    let mut labels: Vec<u8> = (0..opts.n_records).map(|i| u8::from(i < n_pos)).collect();
    labels.shuffle(&mut rng);
    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let query = text(&mut rng, 1);
            let rag = text(&mut rng, 2);
            let n = rng.random_range(1..=2);
            let response = text(&mut rng, n);
            AnalysisRecord::from_text(vocab, format!("r{i:04}"), &query, &rag, &response, Some(label))
        })
        .collect()
}
