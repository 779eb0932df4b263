//! Sub-word tag propagation and POS-aggregated feature vectors.

mod aggregate;
mod align;
mod pos;
mod tagger;

pub use aggregate::{
    aggregate, feature_index, feature_names, tag_counts, FeatureVector, FEATURE_DIM, N_SOURCES,
    N_TAGS,
};
pub use align::{align, propagate_tags, AlignmentMap, TaggedWord};
pub use pos::PosTag;
pub use tagger::builtin_fallback_tagger;
