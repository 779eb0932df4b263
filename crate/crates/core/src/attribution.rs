//! Fine-grained attribution of a token's probability to seven sources.
//!
//! Each layer's attention delta is split across heads in proportion to
//! `exp(Δz_h)`, where `Δz_h` is the head's contribution to the target logit.
//! Each head's share is then split across query, RAG, past and self positions
//! by where that head's attention row puts its mass. Together with the FFN,
//! final-norm and initial-embedding terms this partitions the final
//! probability exactly.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CachedStates, ModelBundle};
use crate::probe::{check_target, decompose_from_trace, probe, probe_distribution, probe_trace, CoarseDecomposition};
use crate::spans::{InputSource, SourceSpans};
use crate::tensor::dot;

/// The seven attribution sources in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Source {
    Query,
    Rag,
    Past,
    SelfToken,
    Ffn,
    Ln,
    Initial,
}

impl Source {
    pub const ALL: [Source; 7] = [
        Source::Query,
        Source::Rag,
        Source::Past,
        Source::SelfToken,
        Source::Ffn,
        Source::Ln,
        Source::Initial,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Upper-case column prefix, e.g. `RAG` in `RAG_NOUN`.
    pub fn column_name(self) -> &'static str {
        match self {
            Source::Query => "QUERY",
            Source::Rag => "RAG",
            Source::Past => "PAST",
            Source::SelfToken => "SELF",
            Source::Ffn => "FFN",
            Source::Ln => "LN",
            Source::Initial => "INITIAL",
        }
    }
}

impl From<InputSource> for Source {
    fn from(s: InputSource) -> Self {
        match s {
            InputSource::Query => Source::Query,
            InputSource::Rag => Source::Rag,
            InputSource::Past => Source::Past,
            InputSource::SelfToken => Source::SelfToken,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column_name())
    }
}

/// Signed probability contribution of each [`Source`], indexed canonically.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributionVector(pub [f64; 7]);

impl AttributionVector {
    pub fn get(&self, s: Source) -> f64 {
        self.0[s.index()]
    }

    pub fn set(&mut self, s: Source, v: f64) {
        self.0[s.index()] = v;
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Per-head apportionment of one layer's attention delta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadAttribution {
    pub logit_delta: Vec<f64>,
    pub weight: Vec<f64>,
    pub prob_share: Vec<f64>,
}

/// Everything computed for one layer of one token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerAttribution {
    pub att_delta: f64,
    pub ffn_delta: f64,
    pub heads: HeadAttribution,
    /// Query, RAG, past and self shares of `att_delta`.
    pub sources: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenAttribution {
    pub position: usize,
    pub target: usize,
    pub vector: AttributionVector,
    pub coarse: CoarseDecomposition,
    pub layers: Vec<LayerAttribution>,
}

impl TokenAttribution {
    /// `|Σ v − p_final|`
    pub fn partition_residual(&self) -> f64 {
        (self.vector.sum() - self.coarse.p_final).abs()
    }
}

/// Contribution of one head to the target logit: its projected output at
/// `position` dotted with the target's unembedding row.
pub fn head_logit_contribution(
    cache: &CachedStates,
    model: &ModelBundle,
    layer: usize,
    head: usize,
    position: usize,
    target: usize,
) -> Result<f64> {
    cache.check_layer(layer)?;
    cache.check_position(position)?;
    if head >= cache.n_heads() {
        return Err(Error::IndexOutOfRange {
            what: "head",
            index: head,
            limit: cache.n_heads(),
        });
    }
    let u = model.unembedding_row(target)?;
    Ok(dot(cache.head_out[layer][head].row(position), u))
}

/// Splits `att_delta` across heads with weights `softmax(logit_deltas)`.
pub fn apportion_heads(att_delta: f64, logit_deltas: &[f64]) -> Result<HeadAttribution> {
    if logit_deltas.is_empty() {
        return Err(Error::EmptyInput("logit deltas"));
    }
    if !att_delta.is_finite() || logit_deltas.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFiniteInput("head apportionment input"));
    }
    let weight = crate::tensor::softmax(logit_deltas);
    let prob_share = weight.iter().map(|w| att_delta * w).collect();
    Ok(HeadAttribution {
        logit_delta: logit_deltas.to_vec(),
        weight,
        prob_share,
    })
}

/// Splits each head's probability share across the four input sources by the
/// fraction of its attention row that falls on each source's positions.
///
/// `attn_rows[h]` is head `h`'s full attention row for `spans.row`.
pub fn map_sources(
    heads: &HeadAttribution,
    attn_rows: &[&[f64]],
    spans: &SourceSpans,
) -> Result<[f64; 4]> {
    if attn_rows.len() != heads.prob_share.len() {
        return Err(Error::LengthMismatch {
            what: "attention rows vs heads",
            left: attn_rows.len(),
            right: heads.prob_share.len(),
        });
    }
    spans.validate()?;
    let mut out = [0.0; 4];
    for (h, (row, &share)) in attn_rows.iter().zip(&heads.prob_share).enumerate() {
        if row.len() <= spans.row {
            return Err(Error::LengthMismatch {
                what: "attention row length vs visible context",
                left: row.len(),
                right: spans.row + 1,
            });
        }
        let total: f64 = row.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(Error::EmptyAttentionRow { head: h });
        }
        for s in InputSource::ALL {
            let mass: f64 = spans.get(s).iter().map(|&k| row[k]).sum();
            out[s.index()] += share * (mass / total);
        }
    }
    Ok(out)
}

/// Full seven-source attribution of `final_probs[position][target]`.
pub fn attribute_token(
    cache: &CachedStates,
    model: &ModelBundle,
    position: usize,
    target: usize,
    spans: &SourceSpans,
) -> Result<TokenAttribution> {
    if spans.row != position {
        return Err(Error::malformed(
            "source spans",
            format!("built for row {} but position is {}", spans.row, position),
        ));
    }
    let trace = probe_trace(cache, model, position, target)?;
    let coarse = decompose_from_trace(cache, &trace, position, target);
    let u = model.unembedding_row(target)?;

    let mut vector = AttributionVector::default();
    let mut layers = Vec::with_capacity(cache.n_layers());
    for l in 0..cache.n_layers() {
        let logit_deltas: Vec<f64> = cache.head_out[l]
            .iter()
            .map(|h| dot(h.row(position), u))
            .collect();
        let heads = apportion_heads(coarse.att_delta[l], &logit_deltas)?;
        let rows: Vec<&[f64]> = cache.attn[l].iter().map(|a| a.row(position)).collect();
        let sources = map_sources(&heads, &rows, spans)?;
        for s in InputSource::ALL {
            vector.0[s.index()] += sources[s.index()];
        }
        vector.0[Source::Ffn.index()] += coarse.ffn_delta[l];
        layers.push(LayerAttribution {
            att_delta: coarse.att_delta[l],
            ffn_delta: coarse.ffn_delta[l],
            heads,
            sources,
        });
    }
    vector.set(Source::Ln, coarse.ln_delta);
    vector.set(Source::Initial, coarse.p_initial);

    Ok(TokenAttribution {
        position,
        target,
        vector,
        coarse,
        layers,
    })
}

/// First-order check of a layer's attention delta around the layer input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorDiagnostic {
    pub scale: f64,
    /// `p_y (1 − p_y)` at the layer input.
    pub gradient_factor: f64,
    /// `scale · G · Σ_h Δz_h`, the target-logit part of the linear term.
    pub logit_term: f64,
    /// `scale · Σ_{v≠y} p_y p_v (u_v · r)`, the off-target part.
    pub off_target_term: f64,
    /// Complete linear term `logit_term − off_target_term`.
    pub first_order_estimate: f64,
    /// `Φ(h + scale·r) − Φ(h)`
    pub actual: f64,
    /// `|actual − first_order_estimate|`, the second- and higher-order remainder.
    pub abs_error: f64,
}

/// Compares the probe change caused by `scale` times the attention update of
/// `layer` against its first-order expansion.
pub fn taylor_check(
    cache: &CachedStates,
    model: &ModelBundle,
    layer: usize,
    position: usize,
    target: usize,
    scale: f64,
) -> Result<TaylorDiagnostic> {
    cache.check_layer(layer)?;
    cache.check_position(position)?;
    check_target(model, target)?;
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Error::malformed("taylor scale", format!("{scale} not in (0, 1]")));
    }
    let h = cache.layer_input(layer).row(position);
    let r = cache.attn_residual[layer].row(position);
    let u = model.unembedding();

    let p = probe_distribution(h, model)?;
    let py = p[target];
    let g = py * (1.0 - py);
    let logit_sum: f64 = cache.head_out[layer]
        .iter()
        .map(|ho| dot(ho.row(position), u.row(target)))
        .sum();
    let mut off = 0.0;
    for (v, &pv) in p.iter().enumerate() {
        if v != target {
            off += py * pv * dot(u.row(v), r);
        }
    }
    let logit_term = scale * g * logit_sum;
    let off_target_term = scale * off;
    let first_order_estimate = logit_term - off_target_term;

    let shifted: Vec<f64> = h.iter().zip(r).map(|(a, b)| a + scale * b).collect();
    let actual = probe(&shifted, model, target)? - py;

    Ok(TaylorDiagnostic {
        scale,
        gradient_factor: g,
        logit_term,
        off_target_term,
        first_order_estimate,
        actual,
        abs_error: (actual - first_order_estimate).abs(),
    })
}

/// Analytic gradient of the probe with respect to the hidden state:
/// `Σ_v p_y (δ_yv − p_v) u_v`.
pub fn probe_gradient(hidden: &[f64], model: &ModelBundle, target: usize) -> Result<Vec<f64>> {
    check_target(model, target)?;
    let p = probe_distribution(hidden, model)?;
    let u = model.unembedding();
    let py = p[target];
    let mut grad = vec![0.0; hidden.len()];
    for (v, &pv) in p.iter().enumerate() {
        let coef = py * (if v == target { 1.0 } else { 0.0 } - pv);
        for (g, w) in grad.iter_mut().zip(u.row(v)) {
            *g += coef * w;
        }
    }
    Ok(grad)
}

/// Sum of probe deltas obtained by adding each head's output alone to the
/// layer input. Differs from the layer's attention delta in general because
/// the probe is non-linear.
pub fn isolated_head_probe_sum(
    cache: &CachedStates,
    model: &ModelBundle,
    layer: usize,
    position: usize,
    target: usize,
) -> Result<f64> {
    cache.check_layer(layer)?;
    cache.check_position(position)?;
    let h = cache.layer_input(layer).row(position);
    let base = probe(h, model, target)?;
    let mut sum = 0.0;
    for ho in &cache.head_out[layer] {
        let shifted: Vec<f64> = h.iter().zip(ho.row(position)).map(|(a, b)| a + b).collect();
        sum += probe(&shifted, model, target)? - base;
    }
    Ok(sum)
}
