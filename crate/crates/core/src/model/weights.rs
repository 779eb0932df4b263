use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::config::{FfnKind, ModelConfig, NormKind, PositionKind};
use crate::tensor::Matrix;

/// A named tensor as it appears in the canonical format, widened to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormParams {
    pub weight: Vec<f64>,
    /// Present for layernorm, absent for rmsnorm.
    pub bias: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FfnWeights {
    Gelu {
        w_in: Matrix,
        b_in: Option<Vec<f64>>,
        w_out: Matrix,
        b_out: Option<Vec<f64>>,
    },
    Gated {
        w_gate: Matrix,
        w_up: Matrix,
        w_down: Matrix,
    },
}

/// Projections use the row-vector convention: `q = x · w_q`, so every
/// matrix is `in × out`. Head `h` owns columns `h*dh..(h+1)*dh` of
/// `w_q/w_k/w_v` and the matching rows of `w_o`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub attn_norm: NormParams,
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_o: Matrix,
    pub ffn_norm: NormParams,
    pub ffn: FfnWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub embedding: Matrix,
    pub positional: Option<Matrix>,
    pub unembedding: Option<Matrix>,
    pub layers: Vec<LayerWeights>,
    pub final_norm: NormParams,
}

impl ModelWeights {
    /// Flattens the weights into canonical `(name, tensor)` pairs, in the
    /// order they are written to the blob.
    pub fn to_named(&self) -> Vec<(String, NamedTensor)> {
        let mut out = Vec::new();
        let mat = |m: &Matrix| NamedTensor::new(vec![m.rows(), m.cols()], m.as_slice().to_vec());
        let vec1 = |v: &[f64]| NamedTensor::new(vec![v.len()], v.to_vec());
        let norm = |out: &mut Vec<(String, NamedTensor)>, prefix: &str, n: &NormParams| {
            out.push((format!("{prefix}.weight"), vec1(&n.weight)));
            if let Some(b) = &n.bias {
                out.push((format!("{prefix}.bias"), vec1(b)));
            }
        };

        out.push(("embedding".into(), mat(&self.embedding)));
        if let Some(p) = &self.positional {
            out.push(("positional".into(), mat(p)));
        }
        if let Some(u) = &self.unembedding {
            out.push(("unembedding".into(), mat(u)));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let p = format!("layers.{l}");
            norm(&mut out, &format!("{p}.attn_norm"), &layer.attn_norm);
            out.push((format!("{p}.attn.w_q"), mat(&layer.w_q)));
            out.push((format!("{p}.attn.w_k"), mat(&layer.w_k)));
            out.push((format!("{p}.attn.w_v"), mat(&layer.w_v)));
            out.push((format!("{p}.attn.w_o"), mat(&layer.w_o)));
            norm(&mut out, &format!("{p}.ffn_norm"), &layer.ffn_norm);
            match &layer.ffn {
                FfnWeights::Gelu {
                    w_in,
                    b_in,
                    w_out,
                    b_out,
                } => {
                    out.push((format!("{p}.ffn.w_in"), mat(w_in)));
                    if let Some(b) = b_in {
                        out.push((format!("{p}.ffn.b_in"), vec1(b)));
                    }
                    out.push((format!("{p}.ffn.w_out"), mat(w_out)));
                    if let Some(b) = b_out {
                        out.push((format!("{p}.ffn.b_out"), vec1(b)));
                    }
                }
                FfnWeights::Gated {
                    w_gate,
                    w_up,
                    w_down,
                } => {
                    out.push((format!("{p}.ffn.w_gate"), mat(w_gate)));
                    out.push((format!("{p}.ffn.w_up"), mat(w_up)));
                    out.push((format!("{p}.ffn.w_down"), mat(w_down)));
                }
            }
        }
        norm(&mut out, "final_norm", &self.final_norm);
        out
    }

    /// Rebuilds weights from named tensors, checking every shape against the
    /// config and every entry for finiteness. Unknown tensor names are rejected.
    pub fn from_named(
        config: &ModelConfig,
        mut tensors: BTreeMap<String, NamedTensor>,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let v = config.vocab_size;
        let ff = config.ffn_width();

        let mut take = |name: &str, shape: &[usize]| -> Result<NamedTensor> {
            let t = tensors
                .remove(name)
                .ok_or_else(|| Error::MissingTensor(name.to_string()))?;
            check(name, shape, &t)?;
            Ok(t)
        };

        let embedding = to_matrix(take("embedding", &[v, d])?);
        let positional = match config.position_kind {
            PositionKind::LearnedAbsolute => {
                Some(to_matrix(take("positional", &[config.max_positions, d])?))
            }
            PositionKind::Rotary | PositionKind::None => None,
        };
        let unembedding = if config.tied_embeddings {
            None
        } else {
            Some(to_matrix(take("unembedding", &[v, d])?))
        };

        let norm_bias = config.norm_kind == NormKind::Layernorm;
        let mut layers = Vec::with_capacity(config.n_layers);
        for l in 0..config.n_layers {
            let p = format!("layers.{l}");
            let mut norm = |prefix: &str| -> Result<NormParams> {
                let weight = take(&format!("{p}.{prefix}.weight"), &[d])?.data;
                let bias = if norm_bias {
                    Some(take(&format!("{p}.{prefix}.bias"), &[d])?.data)
                } else {
                    None
                };
                Ok(NormParams { weight, bias })
            };
            let attn_norm = norm("attn_norm")?;
            let ffn_norm = norm("ffn_norm")?;
            let w_q = to_matrix(take(&format!("{p}.attn.w_q"), &[d, d])?);
            let w_k = to_matrix(take(&format!("{p}.attn.w_k"), &[d, d])?);
            let w_v = to_matrix(take(&format!("{p}.attn.w_v"), &[d, d])?);
            let w_o = to_matrix(take(&format!("{p}.attn.w_o"), &[d, d])?);
            let ffn = match config.ffn_kind {
                FfnKind::Gelu => {
                    let w_in = to_matrix(take(&format!("{p}.ffn.w_in"), &[d, ff])?);
                    let w_out = to_matrix(take(&format!("{p}.ffn.w_out"), &[ff, d])?);
                    let b_in = optional(&mut take, &format!("{p}.ffn.b_in"), &[ff])?;
                    let b_out = optional(&mut take, &format!("{p}.ffn.b_out"), &[d])?;
                    FfnWeights::Gelu {
                        w_in,
                        b_in,
                        w_out,
                        b_out,
                    }
                }
                FfnKind::Gated => FfnWeights::Gated {
                    w_gate: to_matrix(take(&format!("{p}.ffn.w_gate"), &[d, ff])?),
                    w_up: to_matrix(take(&format!("{p}.ffn.w_up"), &[d, ff])?),
                    w_down: to_matrix(take(&format!("{p}.ffn.w_down"), &[ff, d])?),
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
        let final_norm = NormParams {
            weight: take("final_norm.weight", &[d])?.data,
            bias: if norm_bias {
                Some(take("final_norm.bias", &[d])?.data)
            } else {
                None
            },
        };

        if let Some(extra) = tensors.keys().next() {
            return Err(Error::malformed(
                "manifest",
                format!("unexpected tensor {extra}"),
            ));
        }

        Ok(Self {
            embedding,
            positional,
            unembedding,
            layers,
            final_norm,
        })
    }
}

fn optional(
    take: &mut impl FnMut(&str, &[usize]) -> Result<NamedTensor>,
    name: &str,
    shape: &[usize],
) -> Result<Option<Vec<f64>>> {
    match take(name, shape) {
        Ok(t) => Ok(Some(t.data)),
        Err(Error::MissingTensor(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn check(name: &str, expected: &[usize], t: &NamedTensor) -> Result<()> {
    if t.shape != expected {
        return Err(Error::ShapeMismatch {
            name: name.to_string(),
            expected: expected.to_vec(),
            found: t.shape.clone(),
        });
    }
    if let Some(index) = t.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            name: name.to_string(),
            index,
        });
    }
    Ok(())
}

fn to_matrix(t: NamedTensor) -> Matrix {
    Matrix::from_vec(t.shape[0], t.shape[1], t.data)
}
