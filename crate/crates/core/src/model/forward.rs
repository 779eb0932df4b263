use crate::error::{Error, Result};
use crate::model::config::{NormKind, PositionKind};
use crate::model::weights::{FfnWeights, LayerWeights, NormParams};
use crate::model::ModelBundle;
use crate::tensor::{dot, softmax_in_place, Matrix};

/// Every intermediate state of one teacher-forced pass.
///
/// Layers are 0-indexed: `h_mid[l]` and `h_out[l]` are the states after the
/// attention and FFN blocks of layer `l`; the input of layer `l` is
/// [`CachedStates::layer_input`].
#[derive(Debug, Clone, PartialEq)]
pub struct CachedStates {
    pub tokens: Vec<usize>,
    /// Token embedding plus positional embedding, `T × d`.
    pub h0: Matrix,
    pub h_mid: Vec<Matrix>,
    pub h_out: Vec<Matrix>,
    /// Attention block update `concat(A_h V_h) · W_O`; `h_mid = input + attn_residual`.
    pub attn_residual: Vec<Matrix>,
    /// FFN block update; `h_out = h_mid + ffn_residual`.
    pub ffn_residual: Vec<Matrix>,
    /// `attn[l][h]` is the causal `T × T` attention map; masked entries are exactly 0.
    pub attn: Vec<Vec<Matrix>>,
    /// `head_out[l][h]` is the projected head output `(A_h V_h) · W_O^(h)`, `T × d`.
    pub head_out: Vec<Vec<Matrix>>,
    /// Softmax over the vocabulary after final norm and unembedding, `T × V`.
    pub final_probs: Matrix,
}

impl CachedStates {
    pub fn n_layers(&self) -> usize {
        self.h_out.len()
    }

    pub fn n_heads(&self) -> usize {
        self.head_out.first().map_or(0, Vec::len)
    }

    pub fn seq_len(&self) -> usize {
        self.tokens.len()
    }

    /// Residual stream entering layer `layer` (`h0` for the first layer).
    pub fn layer_input(&self, layer: usize) -> &Matrix {
        if layer == 0 {
            &self.h0
        } else {
            &self.h_out[layer - 1]
        }
    }

    /// Final residual stream, before the final norm.
    pub fn last_hidden(&self) -> &Matrix {
        self.h_out.last().unwrap_or(&self.h0)
    }

    /// `Σ_h head_out[layer][h]`, summed in head order.
    pub fn head_sum(&self, layer: usize) -> Matrix {
        let heads = &self.head_out[layer];
        let mut acc = heads[0].clone();
        for h in &heads[1..] {
            acc.add_assign(h);
        }
        acc
    }

    pub(crate) fn check_layer(&self, layer: usize) -> Result<()> {
        if layer >= self.n_layers() {
            return Err(Error::IndexOutOfRange {
                what: "layer",
                index: layer,
                limit: self.n_layers(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_position(&self, position: usize) -> Result<()> {
        if position >= self.seq_len() {
            return Err(Error::IndexOutOfRange {
                what: "position",
                index: position,
                limit: self.seq_len(),
            });
        }
        Ok(())
    }
}

/// Runs the whole sequence through the model in one pass and caches every
/// residual checkpoint, attention map and per-head output.
pub fn forward_cached(model: &ModelBundle, token_ids: &[usize]) -> Result<CachedStates> {
    let cfg = &model.config;
    let t_len = token_ids.len();
    if t_len == 0 || t_len > cfg.max_positions {
        return Err(Error::SequenceLength {
            len: t_len,
            max: cfg.max_positions,
        });
    }
    for (position, &id) in token_ids.iter().enumerate() {
        if id >= cfg.vocab_size {
            return Err(Error::TokenOutOfRange {
                id,
                position,
                vocab: cfg.vocab_size,
            });
        }
    }

    let d = cfg.d_model;
    let w = &model.weights;
    let mut h0 = Matrix::zeros(t_len, d);
    for (t, &id) in token_ids.iter().enumerate() {
        let row = h0.row_mut(t);
        row.copy_from_slice(w.embedding.row(id));
        if let Some(pos) = &w.positional {
            for (x, p) in row.iter_mut().zip(pos.row(t)) {
                *x += p;
            }
        }
    }

    let mut h_mid = Vec::with_capacity(cfg.n_layers);
    let mut h_out: Vec<Matrix> = Vec::with_capacity(cfg.n_layers);
    let mut attn_residual = Vec::with_capacity(cfg.n_layers);
    let mut ffn_residual = Vec::with_capacity(cfg.n_layers);
    let mut attn = Vec::with_capacity(cfg.n_layers);
    let mut head_out = Vec::with_capacity(cfg.n_layers);

    for layer in &w.layers {
        let input = h_out.last().unwrap_or(&h0);
        let normed = apply_norm(input, &layer.attn_norm, cfg.norm_kind, cfg.norm_eps);
        let block = attention(model, layer, &normed);
        let mid = input.add(&block.residual);

        let normed = apply_norm(&mid, &layer.ffn_norm, cfg.norm_kind, cfg.norm_eps);
        let ffn = feed_forward(&layer.ffn, &normed);
        let out = mid.add(&ffn);

        attn.push(block.maps);
        head_out.push(block.head_out);
        attn_residual.push(block.residual);
        h_mid.push(mid);
        ffn_residual.push(ffn);
        h_out.push(out);
    }

    let last = h_out.last().unwrap_or(&h0);
    let normed = apply_norm(last, &w.final_norm, cfg.norm_kind, cfg.norm_eps);
    let unembed = model.unembedding();
    let mut final_probs = Matrix::zeros(t_len, cfg.vocab_size);
    for t in 0..t_len {
        let x = normed.row(t);
        let row = final_probs.row_mut(t);
        for (v, logit) in row.iter_mut().enumerate() {
            *logit = dot(x, unembed.row(v));
        }
        softmax_in_place(row);
    }

    Ok(CachedStates {
        tokens: token_ids.to_vec(),
        h0,
        h_mid,
        h_out,
        attn_residual,
        ffn_residual,
        attn,
        head_out,
        final_probs,
    })
}

struct AttentionBlock {
    residual: Matrix,
    maps: Vec<Matrix>,
    head_out: Vec<Matrix>,
}

fn attention(model: &ModelBundle, layer: &LayerWeights, x: &Matrix) -> AttentionBlock {
    let cfg = &model.config;
    let t_len = x.rows();
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    let mut q = x.matmul(&layer.w_q);
    let mut k = x.matmul(&layer.w_k);
    let v = x.matmul(&layer.w_v);
    if cfg.position_kind == PositionKind::Rotary {
        apply_rotary(&mut q, cfg.n_heads, cfg.rope_theta);
        apply_rotary(&mut k, cfg.n_heads, cfg.rope_theta);
    }

    let mut concat = Matrix::zeros(t_len, cfg.d_model);
    let mut maps = Vec::with_capacity(cfg.n_heads);
    let mut head_out = Vec::with_capacity(cfg.n_heads);
    for h in 0..cfg.n_heads {
        let cols = h * dh..(h + 1) * dh;
        let mut map = Matrix::zeros(t_len, t_len);
        let mut z = Matrix::zeros(t_len, dh);
        for i in 0..t_len {
            let qi = &q.row(i)[cols.clone()];
            // Only keys 0..=i are visible; the rest of the row stays exactly 0.
            let scores = &mut map.row_mut(i)[..=i];
            for (j, s) in scores.iter_mut().enumerate() {
                *s = dot(qi, &k.row(j)[cols.clone()]) * scale;
            }
            softmax_in_place(scores);
            let zi = z.row_mut(i);
            for j in 0..=i {
                let a = map.get(i, j);
                for (zc, vc) in zi.iter_mut().zip(&v.row(j)[cols.clone()]) {
                    *zc += a * vc;
                }
            }
        }
        for i in 0..t_len {
            concat.row_mut(i)[cols.clone()].copy_from_slice(z.row(i));
        }
        head_out.push(z.matmul(&layer.w_o.row_block(h * dh, dh)));
        maps.push(map);
    }

    AttentionBlock {
        residual: concat.matmul(&layer.w_o),
        maps,
        head_out,
    }
}

/// Rotary embedding in the split-half layout: dimension `i` of each head is
/// rotated together with dimension `i + dh/2`.
fn apply_rotary(m: &mut Matrix, n_heads: usize, theta: f64) {
    let dh = m.cols() / n_heads;
    let half = dh / 2;
    for pos in 0..m.rows() {
        let row = m.row_mut(pos);
        for h in 0..n_heads {
            let base = h * dh;
            for i in 0..half {
                let freq = theta.powf(-2.0 * i as f64 / dh as f64);
                let (sin, cos) = (pos as f64 * freq).sin_cos();
                let a = row[base + i];
                let b = row[base + i + half];
                row[base + i] = a * cos - b * sin;
                row[base + i + half] = a * sin + b * cos;
            }
        }
    }
}

fn apply_norm(x: &Matrix, params: &NormParams, kind: NormKind, eps: f64) -> Matrix {
    let d = x.cols() as f64;
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        let row = x.row(i);
        let o = out.row_mut(i);
        match kind {
            NormKind::Layernorm => {
                let mean = row.iter().sum::<f64>() / d;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
                let inv = 1.0 / (var + eps).sqrt();
                for (j, (oj, xj)) in o.iter_mut().zip(row).enumerate() {
                    *oj = (xj - mean) * inv * params.weight[j];
                }
            }
            NormKind::Rmsnorm => {
                let ms = row.iter().map(|v| v * v).sum::<f64>() / d;
                let inv = 1.0 / (ms + eps).sqrt();
                for (j, (oj, xj)) in o.iter_mut().zip(row).enumerate() {
                    *oj = xj * inv * params.weight[j];
                }
            }
        }
        if let Some(b) = &params.bias {
            for (oj, bj) in o.iter_mut().zip(b) {
                *oj += bj;
            }
        }
    }
    out
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn add_bias(m: &mut Matrix, bias: &Option<Vec<f64>>) {
    if let Some(b) = bias {
        for i in 0..m.rows() {
            for (x, bj) in m.row_mut(i).iter_mut().zip(b) {
                *x += bj;
            }
        }
    }
}

fn feed_forward(ffn: &FfnWeights, x: &Matrix) -> Matrix {
    match ffn {
        FfnWeights::Gelu {
            w_in,
            b_in,
            w_out,
            b_out,
        } => {
            let mut hidden = x.matmul(w_in);
            add_bias(&mut hidden, b_in);
            hidden.as_mut_slice().iter_mut().for_each(|v| *v = gelu(*v));
            let mut out = hidden.matmul(w_out);
            add_bias(&mut out, b_out);
            out
        }
        FfnWeights::Gated {
            w_gate,
            w_up,
            w_down,
        } => {
            let mut gate = x.matmul(w_gate);
            let up = x.matmul(w_up);
            for (g, u) in gate.as_mut_slice().iter_mut().zip(up.as_slice()) {
                *g = silu(*g) * u;
            }
            gate.matmul(w_down)
        }
    }
}
