//! File-based pipeline around the attribution core and the detector:
//! records in, per-token attributions, POS feature CSVs, trained models and
//! evaluation reports out.

pub mod error;
pub mod io;
pub mod pipeline;
pub mod record;
pub mod synth;

pub use error::{CliError, Result};
pub use pipeline::{
    attribute_record, attribute_records, build_features, group_tokens, plant_signal, record_features,
    token_tags, write_features_csv, FeatureRow, SourceValues, TagSidecar, Tagging, TokenRecord,
};
pub use record::{AnalysisRecord, PromptSpans};
pub use synth::{synth_records, SynthOptions, DEMO_WORDS};
