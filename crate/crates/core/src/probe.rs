//! Probe function and exact coarse decomposition.
//!
//! The probe unembeds an intermediate residual state directly, with no final
//! norm in between, and reads off the softmax probability of a target token.
//! Taking probe differences across consecutive residual checkpoints gives
//! per-block probability deltas that telescope to the model's final
//! probability; the gap between the probe at the last residual state and the
//! true output distribution is charged to the final norm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CachedStates, ModelBundle};
use crate::tensor::{dot, softmax_in_place};

/// Unembedding logits `hidden · Uᵀ` for every vocabulary entry.
pub fn probe_logits(hidden: &[f64], model: &ModelBundle) -> Result<Vec<f64>> {
    if hidden.len() != model.config.d_model {
        return Err(Error::LengthMismatch {
            what: "hidden row vs d_model",
            left: hidden.len(),
            right: model.config.d_model,
        });
    }
    if hidden.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("hidden row"));
    }
    let u = model.unembedding();
    Ok((0..u.rows()).map(|v| dot(hidden, u.row(v))).collect())
}

/// Full probe distribution `softmax(hidden · Uᵀ)`.
pub fn probe_distribution(hidden: &[f64], model: &ModelBundle) -> Result<Vec<f64>> {
    let mut logits = probe_logits(hidden, model)?;
    softmax_in_place(&mut logits);
    Ok(logits)
}

/// Probability of `target` under the probe.
pub fn probe(hidden: &[f64], model: &ModelBundle, target: usize) -> Result<f64> {
    check_target(model, target)?;
    Ok(probe_distribution(hidden, model)?[target])
}

pub(crate) fn check_target(model: &ModelBundle, target: usize) -> Result<()> {
    if target >= model.config.vocab_size {
        return Err(Error::IndexOutOfRange {
            what: "target token",
            index: target,
            limit: model.config.vocab_size,
        });
    }
    Ok(())
}

/// Probability contributions of the initial embedding, each attention and FFN
/// block, and the final norm for one predicted token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseDecomposition {
    pub p_initial: f64,
    pub att_delta: Vec<f64>,
    pub ffn_delta: Vec<f64>,
    pub ln_delta: f64,
    pub p_final: f64,
    /// `|p_initial + ln_delta + Σ(att + ffn) − p_final|`
    pub residual: f64,
}

impl CoarseDecomposition {
    /// Sum of all contributions in a fixed order.
    pub fn total(&self) -> f64 {
        let mut sum = self.p_initial;
        for (a, f) in self.att_delta.iter().zip(&self.ffn_delta) {
            sum += a + f;
        }
        sum + self.ln_delta
    }
}

/// Probe values at every residual checkpoint of one position.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeTrace {
    pub initial: f64,
    pub mid: Vec<f64>,
    pub out: Vec<f64>,
}

impl ProbeTrace {
    /// Probe at the input of `layer`.
    pub fn layer_input(&self, layer: usize) -> f64 {
        if layer == 0 {
            self.initial
        } else {
            self.out[layer - 1]
        }
    }
}

pub fn probe_trace(
    cache: &CachedStates,
    model: &ModelBundle,
    position: usize,
    target: usize,
) -> Result<ProbeTrace> {
    cache.check_position(position)?;
    check_target(model, target)?;
    let initial = probe(cache.h0.row(position), model, target)?;
    let mut mid = Vec::with_capacity(cache.n_layers());
    let mut out = Vec::with_capacity(cache.n_layers());
    for l in 0..cache.n_layers() {
        mid.push(probe(cache.h_mid[l].row(position), model, target)?);
        out.push(probe(cache.h_out[l].row(position), model, target)?);
    }
    Ok(ProbeTrace { initial, mid, out })
}

/// Decomposes `final_probs[position][target]` into coarse contributions.
///
/// `position` is the predicting row: under teacher forcing, `target` is the
/// token that actually follows it.
pub fn decompose_coarse(
    cache: &CachedStates,
    model: &ModelBundle,
    position: usize,
    target: usize,
) -> Result<CoarseDecomposition> {
    let trace = probe_trace(cache, model, position, target)?;
    Ok(decompose_from_trace(cache, &trace, position, target))
}

pub(crate) fn decompose_from_trace(
    cache: &CachedStates,
    trace: &ProbeTrace,
    position: usize,
    target: usize,
) -> CoarseDecomposition {
    let n = cache.n_layers();
    let mut att_delta = Vec::with_capacity(n);
    let mut ffn_delta = Vec::with_capacity(n);
    for l in 0..n {
        att_delta.push(trace.mid[l] - trace.layer_input(l));
        ffn_delta.push(trace.out[l] - trace.mid[l]);
    }
    let p_final = cache.final_probs.get(position, target);
    let last = trace.layer_input(n);
    let mut d = CoarseDecomposition {
        p_initial: trace.initial,
        att_delta,
        ffn_delta,
        ln_delta: p_final - last,
        p_final,
        residual: 0.0,
    };
    d.residual = (d.total() - p_final).abs();
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_toy_model, ModelConfig, ToyOptions};
    use crate::tensor::Matrix;

    fn identity_model(v: usize) -> ModelBundle {
        let mut m = generate_toy_model(&ModelConfig::toy(1, 1, v, v), 0, &ToyOptions::default())
            .unwrap();
        m.weights.embedding = Matrix::identity(v);
        m
    }

    #[test]
    fn zero_hidden_is_uniform() {
        let m = identity_model(8);
        for y in 0..8 {
            assert!((probe(&[0.0; 8], &m, y).unwrap() - 1.0 / 8.0).abs() < 1e-15);
        }
    }

    #[test]
    fn one_hot_hidden_matches_closed_form() {
        let v = 6;
        let m = identity_model(v);
        let mut h = vec![0.0; v];
        h[2] = 10.0;
        let e10 = 10f64.exp();
        let expected = e10 / (e10 + (v as f64 - 1.0));
        assert!((probe(&h, &m, 2).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = identity_model(4);
        assert!(matches!(
            probe(&[f64::NAN, 0.0, 0.0, 0.0], &m, 0),
            Err(Error::NonFiniteInput(_))
        ));
        assert!(matches!(
            probe(&[0.0; 4], &m, 4),
            Err(Error::IndexOutOfRange { .. })
        ));
    }
}
