use serde::{Deserialize, Serialize};

use crate::attribution::{AttributionVector, Source};
use crate::error::{Error, Result};
use crate::syntax::pos::PosTag;

pub const N_SOURCES: usize = 7;
pub const N_TAGS: usize = 18;
pub const FEATURE_DIM: usize = N_SOURCES * N_TAGS;

/// Column index of `(tag, source)`: tag blocks in [`PosTag::ALL`] order, sources
/// in canonical order inside each block.
pub fn feature_index(tag: PosTag, source: Source) -> usize {
    tag.index() * N_SOURCES + source.index()
}

/// `<SOURCE>_<TAG>` names for all 126 columns, e.g. `RAG_NOUN`.
pub fn feature_names() -> Vec<String> {
    PosTag::ALL
        .iter()
        .flat_map(|t| Source::ALL.iter().map(move |s| format!("{}_{}", s.column_name(), t.as_str())))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    /// 1 = hallucination.
    pub label: Option<u8>,
}

impl FeatureVector {
    pub fn get(&self, tag: PosTag, source: Source) -> f64 {
        self.values[feature_index(tag, source)]
    }

    pub fn block(&self, tag: PosTag) -> &[f64] {
        let start = tag.index() * N_SOURCES;
        &self.values[start..start + N_SOURCES]
    }
}

/// Mean attribution vector per POS tag, concatenated in the fixed tag order.
/// Tags with no tokens contribute a zero block.
///
/// Each mean sums its terms in sorted order, so the result does not depend on
/// token order.
pub fn aggregate(vectors: &[AttributionVector], tags: &[PosTag]) -> Result<FeatureVector> {
    if vectors.len() != tags.len() {
        return Err(Error::LengthMismatch {
            what: "attribution vectors vs tags",
            left: vectors.len(),
            right: tags.len(),
        });
    }
    if vectors.is_empty() {
        return Err(Error::EmptyInput("attribution vectors"));
    }
    let mut buckets: Vec<Vec<[f64; N_SOURCES]>> = vec![Vec::new(); N_TAGS];
    for (v, t) in vectors.iter().zip(tags) {
        buckets[t.index()].push(v.0);
    }
    let mut values = vec![0.0; FEATURE_DIM];
    for (tag_idx, bucket) in buckets.iter().enumerate() {
        if bucket.is_empty() {
            continue;
        }
        let n = bucket.len() as f64;
        for s in 0..N_SOURCES {
            let mut terms: Vec<f64> = bucket.iter().map(|v| v[s]).collect();
            terms.sort_by(f64::total_cmp);
            values[tag_idx * N_SOURCES + s] = terms.iter().sum::<f64>() / n;
        }
    }
    Ok(FeatureVector {
        values,
        label: None,
    })
}

/// Number of tokens carrying each tag, in [`PosTag::ALL`] order.
pub fn tag_counts(tags: &[PosTag]) -> [usize; N_TAGS] {
    let mut counts = [0; N_TAGS];
    for t in tags {
        counts[t.index()] += 1;
    }
    counts
}
