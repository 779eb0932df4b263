use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::config::{FfnKind, ModelConfig, NormKind, PositionKind};
use crate::model::format::{save_model, DType};
use crate::model::weights::{FfnWeights, LayerWeights, ModelWeights, NormParams};
use crate::model::{ModelBundle, Vocab};
use crate::tensor::Matrix;

#[derive(Debug, Clone)]
pub struct ToyOptions {
    /// Placed at the start of the vocabulary; remaining slots are `tok{i}`.
    pub words: Vec<String>,
    /// Multiplier on the `1/sqrt(d)` standard deviation of projection weights.
    pub weight_scale: f64,
    pub dtype: DType,
}

impl Default for ToyOptions {
    fn default() -> Self {
        Self {
            words: Vec::new(),
            weight_scale: 1.0,
            dtype: DType::F32,
        }
    }
}

struct Sampler {
    rng: ChaCha8Rng,
    round_f32: bool,
}

impl Sampler {
    fn normal(&mut self, std: f64) -> f64 {
        let v = Normal::new(0.0, std).expect("finite std").sample(&mut self.rng);
        // Round in memory so the saved and reloaded model are identical.
        if self.round_f32 {
            v as f32 as f64
        } else {
            v
        }
    }

    fn matrix(&mut self, rows: usize, cols: usize, std: f64) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| self.normal(std)).collect())
    }

    fn vector(&mut self, n: usize, mean: f64, std: f64) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let v = mean + self.normal(std);
                if self.round_f32 {
                    v as f32 as f64
                } else {
                    v
                }
            })
            .collect()
    }

    fn norm(&mut self, d: usize, kind: NormKind) -> NormParams {
        let weight = self.vector(d, 1.0, 0.1);
        let bias = match kind {
            NormKind::Layernorm => Some(self.vector(d, 0.0, 0.1)),
            NormKind::Rmsnorm => None,
        };
        NormParams { weight, bias }
    }
}

/// Draws a random model. Deterministic for a fixed `(config, seed, options)`.
pub fn generate_toy_model(config: &ModelConfig, seed: u64, options: &ToyOptions) -> Result<ModelBundle> {
    config.validate()?;
    if options.words.len() > config.vocab_size {
        return Err(Error::InvalidConfig(format!(
            "{} vocabulary words do not fit in vocab_size {}",
            options.words.len(),
            config.vocab_size
        )));
    }
    if !(options.weight_scale.is_finite() && options.weight_scale > 0.0) {
        return Err(Error::InvalidConfig("weight_scale must be positive".into()));
    }

    let d = config.d_model;
    let v = config.vocab_size;
    let ff = config.ffn_width();
    let std = options.weight_scale / (d as f64).sqrt();
    let std_ff = options.weight_scale / (ff as f64).sqrt();
    let mut s = Sampler {
        rng: ChaCha8Rng::seed_from_u64(seed),
        round_f32: options.dtype == DType::F32,
    };

    let embedding = s.matrix(v, d, 1.0 / (d as f64).sqrt());
    let positional = match config.position_kind {
        PositionKind::LearnedAbsolute => {
            Some(s.matrix(config.max_positions, d, 0.5 / (d as f64).sqrt()))
        }
        PositionKind::Rotary | PositionKind::None => None,
    };
    let unembedding = (!config.tied_embeddings).then(|| s.matrix(v, d, 1.0 / (d as f64).sqrt()));

    let mut layers = Vec::with_capacity(config.n_layers);
    for _ in 0..config.n_layers {
        let attn_norm = s.norm(d, config.norm_kind);
        let w_q = s.matrix(d, d, std);
        let w_k = s.matrix(d, d, std);
        let w_v = s.matrix(d, d, std);
        let w_o = s.matrix(d, d, std);
        let ffn_norm = s.norm(d, config.norm_kind);
        let ffn = match config.ffn_kind {
            FfnKind::Gelu => FfnWeights::Gelu {
                w_in: s.matrix(d, ff, std),
                b_in: Some(s.vector(ff, 0.0, 0.02)),
                w_out: s.matrix(ff, d, std_ff),
                b_out: Some(s.vector(d, 0.0, 0.02)),
            },
            FfnKind::Gated => FfnWeights::Gated {
                w_gate: s.matrix(d, ff, std),
                w_up: s.matrix(d, ff, std),
                w_down: s.matrix(ff, d, std_ff),
            },
        };
        layers.push(LayerWeights {
            attn_norm,
            w_q,
            w_k,
            w_v,
            w_o,
            ffn_norm,
            ffn,
        });
    }
    let final_norm = s.norm(d, config.norm_kind);

    let tokens = (0..v)
        .map(|i| options.words.get(i).cloned().unwrap_or_else(|| format!("tok{i}")))
        .collect();

    ModelBundle::new(
        config.clone(),
        ModelWeights {
            embedding,
            positional,
            unembedding,
            layers,
            final_norm,
        },
        Vocab::new(tokens),
    )
}

/// Generates a toy model and persists it in the canonical format.
pub fn write_toy_model(
    config: &ModelConfig,
    seed: u64,
    options: &ToyOptions,
    dir: &Path,
) -> Result<ModelBundle> {
    let bundle = generate_toy_model(config, seed, options)?;
    save_model(&bundle, dir, options.dtype)?;
    Ok(bundle)
}
