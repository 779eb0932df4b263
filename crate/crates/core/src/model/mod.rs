//! Minimal Pre-LN decoder-only transformer.
//!
//! The model exists to be taken apart: [`forward_cached`] runs one
//! teacher-forced pass and keeps every residual checkpoint, attention map and
//! per-head projected output so the attribution code can read them back.

mod config;
mod format;
mod forward;
mod toy;
mod weights;

use std::collections::HashMap;

pub use config::{FfnKind, ModelConfig, NormKind, PositionKind};
pub use format::{
    load_model, save_model, DType, Manifest, TensorEntry, BLOB_FILE, CONFIG_FILE, MANIFEST_FILE,
    VOCAB_FILE,
};
pub use forward::{forward_cached, CachedStates};
pub use toy::{generate_toy_model, write_toy_model, ToyOptions};
pub use weights::{FfnWeights, LayerWeights, ModelWeights, NamedTensor, NormParams};

use crate::error::{Error, Result};
use crate::tensor::Matrix;
use crate::text::CharSpan;

/// Token strings plus a reverse index for the demo tokenizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    max_piece_chars: usize,
}

impl Vocab {
    pub fn new(tokens: Vec<String>) -> Self {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            index.entry(t.clone()).or_insert(i);
        }
        let max_piece_chars = tokens.iter().map(|t| t.chars().count()).max().unwrap_or(0);
        Self {
            tokens,
            index,
            max_piece_chars,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Demo tokenizer: splits on whitespace, then greedily takes the longest
    /// vocabulary entry that prefixes the rest of each word. Returns ids with
    /// their character spans in `text`.
    pub fn tokenize(&self, text: &str) -> Result<Vec<(usize, CharSpan)>> {
        let chars: Vec<char> = text.chars().collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            if chars[i].is_whitespace() {
                i += 1;
                continue;
            }
            let mut word_end = i;
            while word_end < chars.len() && !chars[word_end].is_whitespace() {
                word_end += 1;
            }
            while i < word_end {
                let longest = (word_end - i).min(self.max_piece_chars);
                let found = (1..=longest).rev().find_map(|n| {
                    let piece: String = chars[i..i + n].iter().collect();
                    self.id(&piece).map(|id| (id, n))
                });
                match found {
                    Some((id, n)) => {
                        out.push((id, CharSpan::new(i, i + n)));
                        i += n;
                    }
                    None => {
                        return Err(Error::Untokenizable(chars[i..word_end].iter().collect()))
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Immutable configuration, weights and vocabulary. Safe to share across
/// threads; every analysis owns its own [`CachedStates`].
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub config: ModelConfig,
    pub weights: ModelWeights,
    pub vocab: Vocab,
}

impl ModelBundle {
    pub fn new(config: ModelConfig, weights: ModelWeights, vocab: Vocab) -> Result<Self> {
        config.validate()?;
        if vocab.len() != config.vocab_size {
            return Err(Error::malformed(
                "vocabulary",
                format!("{} entries, config says {}", vocab.len(), config.vocab_size),
            ));
        }
        // Round-trip through the named form to reuse the shape/finiteness checks.
        let named = weights.to_named().into_iter().collect();
        let weights = ModelWeights::from_named(&config, named)?;
        Ok(Self {
            config,
            weights,
            vocab,
        })
    }

    /// Matrix whose rows are the unembedding vectors: the separate
    /// unembedding tensor when present, otherwise the tied input embedding.
    pub fn unembedding(&self) -> &Matrix {
        self.weights
            .unembedding
            .as_ref()
            .unwrap_or(&self.weights.embedding)
    }

    pub fn unembedding_row(&self, token: usize) -> Result<&[f64]> {
        let u = self.unembedding();
        if token >= u.rows() {
            return Err(Error::IndexOutOfRange {
                what: "target token",
                index: token,
                limit: u.rows(),
            });
        }
        Ok(u.row(token))
    }
}
