//! Exact token-probability attribution for Pre-LN transformers.
//!
//! The pipeline is:
//!
//! 1. [`model::forward_cached`] runs a teacher-forced pass and keeps every
//!    residual checkpoint, attention map and per-head output.
//! 2. [`probe::decompose_coarse`] splits a token's final probability into
//!    initial-embedding, per-layer attention, per-layer FFN and final-norm
//!    deltas that sum to it exactly.
//! 3. [`attribution::attribute_token`] splits each attention delta across
//!    heads and then across query, RAG, past and self positions, giving a
//!    seven-source [`attribution::AttributionVector`].
//! 4. [`syntax::aggregate`] averages the vectors per POS tag into a fixed
//!    126-column [`syntax::FeatureVector`].

pub mod attribution;
pub mod error;
pub mod model;
pub mod probe;
pub mod spans;
pub mod syntax;
pub mod tensor;
pub mod text;

pub use attribution::{
    apportion_heads, attribute_token, head_logit_contribution, map_sources, taylor_check,
    AttributionVector, HeadAttribution, LayerAttribution, Source, TaylorDiagnostic,
    TokenAttribution,
};
pub use error::{Error, Result};
pub use model::{forward_cached, load_model, CachedStates, ModelBundle, ModelConfig};
pub use probe::{decompose_coarse, probe, CoarseDecomposition};
pub use spans::{ContextLayout, InputSource, SourceSpans};
pub use syntax::{FeatureVector, PosTag, TaggedWord, FEATURE_DIM};
