//! Per-record attribution and feature extraction.

use std::collections::HashMap;

use provlens_core::model::ModelBundle;
use provlens_core::syntax::{aggregate, align, builtin_fallback_tagger, feature_names, propagate_tags};
use provlens_core::text::CharSpan;
use provlens_core::{attribute_token, forward_cached, AttributionVector, PosTag, Source, TaggedWord};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::record::AnalysisRecord;

/// The seven sources of one token, by name.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceValues {
    pub query: f64,
    pub rag: f64,
    pub past: f64,
    #[serde(rename = "self")]
    pub self_token: f64,
    pub ffn: f64,
    pub ln: f64,
    pub initial: f64,
}

impl From<AttributionVector> for SourceValues {
    fn from(v: AttributionVector) -> Self {
        let [query, rag, past, self_token, ffn, ln, initial] = v.0;
        Self {
            query,
            rag,
            past,
            self_token,
            ffn,
            ln,
            initial,
        }
    }
}

impl From<SourceValues> for AttributionVector {
    fn from(s: SourceValues) -> Self {
        AttributionVector([s.query, s.rag, s.past, s.self_token, s.ffn, s.ln, s.initial])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub att_delta: f64,
    pub ffn_delta: f64,
    pub head_logit_deltas: Vec<f64>,
    pub head_weights: Vec<f64>,
    pub head_shares: Vec<f64>,
    /// Query, RAG, past and self shares of `att_delta`.
    pub sources: [f64; 4],
}

/// Attribution of one response token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub record_id: String,
    pub token_index: usize,
    pub token_id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub char_start: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub char_end: Option<usize>,
    pub target_probability: f64,
    pub v: SourceValues,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_layer: Option<Vec<LayerRecord>>,
    /// `|Σ v − target_probability|`
    pub theorem_residual: f64,
}

/// Teacher-forced attribution of every response token of `rec`.
pub fn attribute_record(model: &ModelBundle, rec: &AnalysisRecord, per_layer: bool) -> Result<Vec<TokenRecord>> {
    rec.validate(model.config.vocab_size)?;
    let layout = rec.layout()?;
    let ids = rec.token_ids();
    let cache = forward_cached(model, &ids).map_err(|e| CliError::record(&rec.id, e))?;
    let mut out = Vec::with_capacity(rec.response_ids.len());
    for (j, &target) in rec.response_ids.iter().enumerate() {
        let spans = layout.spans_for_response_token(j)?;
        let t = attribute_token(&cache, model, spans.row, target, &spans).map_err(|e| CliError::record(&rec.id, e))?;
        let offsets = rec.token_offsets.as_ref().map(|o| o[j]);
        out.push(TokenRecord {
            record_id: rec.id.clone(),
            token_index: j,
            token_id: target,
            token_text: model.vocab.token(target).map(String::from),
            char_start: offsets.map(|o| o.0),
            char_end: offsets.map(|o| o.1),
            target_probability: t.coarse.p_final,
            v: t.vector.into(),
            per_layer: per_layer.then(|| {
                t.layers
                    .iter()
                    .map(|l| LayerRecord {
                        att_delta: l.att_delta,
                        ffn_delta: l.ffn_delta,
                        head_logit_deltas: l.heads.logit_delta.clone(),
                        head_weights: l.heads.weight.clone(),
                        head_shares: l.heads.prob_share.clone(),
                        sources: l.sources,
                    })
                    .collect()
            }),
            theorem_residual: t.partition_residual(),
        });
    }
    Ok(out)
}

/// Attributes every record. Output order follows input order either way.
pub fn attribute_records(
    model: &ModelBundle,
    records: &[AnalysisRecord],
    per_layer: bool,
    parallel: bool,
) -> Result<Vec<Vec<TokenRecord>>> {
    if parallel {
        records.par_iter().map(|r| attribute_record(model, r, per_layer)).collect()
    } else {
        records.iter().map(|r| attribute_record(model, r, per_layer)).collect()
    }
}

/// Where word-level POS tags come from.
pub enum Tagging<'a> {
    /// The built-in rule-based tagger run on `response_text`.
    Fallback,
    /// Pre-tagged words keyed by record id.
    Sidecar(&'a HashMap<String, Vec<TaggedWord>>),
}

/// One line of a tags sidecar file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagSidecar {
    pub id: String,
    pub words: Vec<TaggedWord>,
}

/// POS tag of every response token of `rec`.
pub fn token_tags(rec: &AnalysisRecord, tagging: &Tagging) -> Result<Vec<PosTag>> {
    let text = rec
        .response_text
        .as_deref()
        .ok_or_else(|| CliError::record(&rec.id, "response_text is required for tagging"))?;
    let offsets = rec
        .token_offsets
        .as_ref()
        .ok_or_else(|| CliError::record(&rec.id, "token_offsets are required for tagging"))?;
    let words = match tagging {
        Tagging::Fallback => builtin_fallback_tagger(text),
        Tagging::Sidecar(map) => map
            .get(&rec.id)
            .cloned()
            .ok_or_else(|| CliError::record(&rec.id, "no entry in the tags sidecar"))?,
    };
    let spans: Vec<CharSpan> = offsets.iter().map(|&(s, e)| CharSpan::new(s, e)).collect();
    let map = align(&spans, &words, text.chars().count()).map_err(|e| CliError::record(&rec.id, e))?;
    Ok(propagate_tags(&map, &words, spans.len())?)
}

/// Moves attribution mass within hallucinated tokens so that nouns draw less
/// on retrieved context and numerals more on the final norm. Each token's sum
/// is unchanged: the mass comes from or goes to the FFN entry.
///
/// Used to build benchmark corpora with a known signal.
pub fn plant_signal(vectors: &mut [AttributionVector], tags: &[PosTag], probabilities: &[f64], strength: f64) {
    for ((v, tag), &p) in vectors.iter_mut().zip(tags).zip(probabilities) {
        let shift = strength * p;
        match tag {
            PosTag::Noun => {
                v.0[Source::Rag.index()] -= shift;
                v.0[Source::Ffn.index()] += shift;
            }
            PosTag::Num => {
                v.0[Source::Ln.index()] += shift;
                v.0[Source::Ffn.index()] -= shift;
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub id: String,
    pub values: Vec<f64>,
    pub label: Option<u8>,
}

/// Aggregated features of one record from its token attributions.
pub fn record_features(
    rec: &AnalysisRecord,
    tokens: &[TokenRecord],
    tagging: &Tagging,
    plant: Option<f64>,
) -> Result<FeatureRow> {
    if tokens.len() != rec.response_ids.len() {
        return Err(CliError::record(
            &rec.id,
            format!("{} attributed tokens for {} response tokens", tokens.len(), rec.response_ids.len()),
        ));
    }
    let tags = token_tags(rec, tagging)?;
    let mut vectors: Vec<AttributionVector> = tokens.iter().map(|t| t.v.into()).collect();
    if let (Some(strength), Some(1)) = (plant, rec.label) {
        let probs: Vec<f64> = tokens.iter().map(|t| t.target_probability).collect();
        plant_signal(&mut vectors, &tags, &probs, strength);
    }
    let f = aggregate(&vectors, &tags)?;
    Ok(FeatureRow {
        id: rec.id.clone(),
        values: f.values,
        label: rec.label,
    })
}

/// Groups token records by `record_id`, keeping first-seen order.
pub fn group_tokens(tokens: Vec<TokenRecord>) -> HashMap<String, Vec<TokenRecord>> {
    let mut map: HashMap<String, Vec<TokenRecord>> = HashMap::new();
    for t in tokens {
        map.entry(t.record_id.clone()).or_default().push(t);
    }
    for v in map.values_mut() {
        v.sort_by_key(|t| t.token_index);
    }
    map
}

/// Feature rows for every record, in record order.
pub fn build_features(
    records: &[AnalysisRecord],
    tokens: &HashMap<String, Vec<TokenRecord>>,
    tagging: &Tagging,
    plant: Option<f64>,
) -> Result<Vec<FeatureRow>> {
    records
        .iter()
        .map(|r| {
            let toks = tokens
                .get(&r.id)
                .ok_or_else(|| CliError::record(&r.id, "no attributions for this record"))?;
            record_features(r, toks, tagging, plant)
        })
        .collect()
}

/// CSV with `id`, the 126 named feature columns and `label` (blank when unknown).
pub fn write_features_csv(writer: impl std::io::Write, rows: &[FeatureRow]) -> Result<()> {
    let err = |e: csv::Error| CliError::Usage(format!("writing features: {e}"));
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string()];
    header.extend(feature_names());
    header.push("label".into());
    w.write_record(&header).map_err(err)?;
    for r in rows {
        let mut rec = vec![r.id.clone()];
        rec.extend(r.values.iter().map(f64::to_string));
        rec.push(r.label.map(|l| l.to_string()).unwrap_or_default());
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::Usage(format!("writing features: {e}")))
}
