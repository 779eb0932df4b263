use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Layernorm,
    Rmsnorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionKind {
    LearnedAbsolute,
    Rotary,
    None,
}

/// Feed-forward block shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FfnKind {
    /// `gelu(x·W_in + b_in)·W_out + b_out`
    Gelu,
    /// `(silu(x·W_gate) ⊙ x·W_up)·W_down`
    Gated,
}

fn default_ffn_kind() -> FfnKind {
    FfnKind::Gelu
}

fn default_norm_eps() -> f64 {
    1e-5
}

fn default_rope_theta() -> f64 {
    10_000.0
}

/// Architecture descriptor, serialized as `config.json` in a model directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub norm_kind: NormKind,
    pub position_kind: PositionKind,
    #[serde(default = "default_ffn_kind")]
    pub ffn_kind: FfnKind,
    /// Hidden width of the feed-forward block. Zero means `4 * d_model`.
    #[serde(default)]
    pub d_ff: usize,
    /// When false the bundle carries a separate `unembedding` tensor.
    #[serde(default = "crate::model::config::default_true")]
    pub tied_embeddings: bool,
    #[serde(default = "default_norm_eps")]
    pub norm_eps: f64,
    #[serde(default = "default_rope_theta")]
    pub rope_theta: f64,
}

pub(crate) fn default_true() -> bool {
    true
}

impl ModelConfig {
    /// Toy defaults: layernorm, learned absolute positions, GELU FFN, tied embeddings.
    pub fn toy(n_layers: usize, n_heads: usize, d_model: usize, vocab_size: usize) -> Self {
        Self {
            n_layers,
            n_heads,
            d_model,
            vocab_size,
            max_positions: 256,
            norm_kind: NormKind::Layernorm,
            position_kind: PositionKind::LearnedAbsolute,
            ffn_kind: FfnKind::Gelu,
            d_ff: 0,
            tied_embeddings: true,
            norm_eps: default_norm_eps(),
            rope_theta: default_rope_theta(),
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn ffn_width(&self) -> usize {
        if self.d_ff == 0 {
            4 * self.d_model
        } else {
            self.d_ff
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_model", self.d_model),
            ("vocab_size", self.vocab_size),
            ("max_positions", self.max_positions),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::InvalidConfig(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.position_kind == PositionKind::Rotary && !self.head_dim().is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "rotary positions need an even head dimension, got {}",
                self.head_dim()
            )));
        }
        if !(self.norm_eps.is_finite() && self.norm_eps > 0.0) {
            return Err(Error::InvalidConfig("norm_eps must be positive".into()));
        }
        if !(self.rope_theta.is_finite() && self.rope_theta > 0.0) {
            return Err(Error::InvalidConfig("rope_theta must be positive".into()));
        }
        Ok(())
    }
}
