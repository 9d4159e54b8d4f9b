// Copyright 2026 The cvnmt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Shared bidirectional LSTM encoder.
//!
//! Source and target sentences run through the same recurrent weights; only
//! the embedding tables differ. The translation path and the inference
//! networks read the same parameter slots.

use rand::Rng;

use crate::data::PaddedIds;
use crate::error::{Error, Result};
use crate::model::{lstm_bias, uniform_init, ModelConfig};
use crate::numerics::{Graph, ParamId, ParamStore, Real, Tensor, Var};

/// One LSTM cell: `w` is `[input + hidden, 4 * hidden]` with gates ordered
/// input, forget, cell, output.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn register<F: Real, R: Rng>(store: &mut ParamStore<F>, rng: &mut R, name: &str, input: usize, hidden: usize) -> Result<Self> {
        let w = store.insert(&format!("{name}.w"), uniform_init(&[input + hidden, 4 * hidden], rng))?;
        let b = store.insert(&format!("{name}.b"), lstm_bias(hidden))?;
        Ok(LstmParams { w, b, input, hidden })
    }
}

/// Single LSTM step over a `[B, input]` batch.
pub fn lstm_step<F: Real>(g: &mut Graph<F>, store: &ParamStore<F>, p: &LstmParams, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
    let w = g.param(store, p.w);
    let b = g.param(store, p.b);
    let xh = g.concat(&[x, h])?;
    let pre = g.matmul(xh, w)?;
    let gates = g.add_bias(pre, b)?;
    let n = p.hidden;
    let parts = g.split(gates, &[n, n, n, n])?;
    let i = g.sigmoid(parts[0])?;
    let f = g.sigmoid(parts[1])?;
    let cand = g.tanh(parts[2])?;
    let o = g.sigmoid(parts[3])?;
    let fc = g.mul(f, c)?;
    let ic = g.mul(i, cand)?;
    let c_next = g.add(fc, ic)?;
    let tc = g.tanh(c_next)?;
    let h_next = g.mul(o, tc)?;
    Ok((h_next, c_next))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Source,
    Target,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub src_emb: ParamId,
    pub tgt_emb: ParamId,
    /// (forward, backward) cell per layer.
    pub layers: Vec<(LstmParams, LstmParams)>,
    pub d_hid: usize,
}

impl EncoderParams {
    pub fn register<F: Real, R: Rng>(store: &mut ParamStore<F>, rng: &mut R, cfg: &ModelConfig) -> Result<Self> {
        let src_emb = store.insert("enc.src_emb", uniform_init(&[cfg.src_vocab, cfg.d_emb], rng))?;
        let tgt_emb = store.insert("enc.tgt_emb", uniform_init(&[cfg.tgt_vocab, cfg.d_emb], rng))?;
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let input = if l == 0 { cfg.d_emb } else { 2 * cfg.d_hid };
            let fwd = LstmParams::register(store, rng, &format!("enc.l{l}.fwd"), input, cfg.d_hid)?;
            let bwd = LstmParams::register(store, rng, &format!("enc.l{l}.bwd"), input, cfg.d_hid)?;
            layers.push((fwd, bwd));
        }
        Ok(EncoderParams {
            src_emb,
            tgt_emb,
            layers,
            d_hid: cfg.d_hid,
        })
    }

    pub fn annotation_width(&self) -> usize {
        2 * self.d_hid
    }
}

/// Per-token annotation vectors `[B, T, 2 * d_hid]` with the padding layout they came from.
#[derive(Clone, Debug)]
pub struct AnnotationMatrix {
    pub h: Var,
    pub mask: Vec<bool>,
    pub lens: Vec<usize>,
    pub width: usize,
}

impl AnnotationMatrix {
    pub fn batch(&self) -> usize {
        self.lens.len()
    }
}

pub fn encode<F: Real>(
    g: &mut Graph<F>,
    store: &ParamStore<F>,
    enc: &EncoderParams,
    ids: &PaddedIds,
    side: Side,
) -> Result<AnnotationMatrix> {
    let table = match side {
        Side::Source => enc.src_emb,
        Side::Target => enc.tgt_emb,
    };
    let vocab = store.get(table).shape()[0];
    if let Some(&bad) = ids.ids.iter().find(|&&i| i >= vocab) {
        return Err(Error::invalid(format!("encode: token id {bad} out of range for vocabulary of {vocab}")));
    }
    let table = g.param(store, table);
    let (bsz, steps, hid) = (ids.batch(), ids.width, enc.d_hid);
    let mut inputs = Vec::with_capacity(steps);
    for t in 0..steps {
        inputs.push(g.embedding(table, &ids.column(t))?);
    }
    let zeros = g.constant(Tensor::zeros(&[bsz, hid]));
    let valid: Vec<Vec<bool>> = (0..steps).map(|t| ids.valid_at(t)).collect();
    for (fwd, bwd) in &enc.layers {
        // Forward direction: trailing PAD positions never influence real ones.
        let mut fwd_out = Vec::with_capacity(steps);
        let (mut h, mut c) = (zeros, zeros);
        for &x in &inputs {
            (h, c) = lstm_step(g, store, fwd, x, h, c)?;
            fwd_out.push(h);
        }
        // Backward direction: state stays at zero until each row's last real token.
        let mut bwd_out = vec![zeros; steps];
        let (mut h, mut c) = (zeros, zeros);
        for t in (0..steps).rev() {
            let (h2, c2) = lstm_step(g, store, bwd, inputs[t], h, c)?;
            if valid[t].iter().all(|&v| v) {
                (h, c) = (h2, c2);
            } else {
                h = g.where_rows(&valid[t], h2, h)?;
                c = g.where_rows(&valid[t], c2, c)?;
            }
            bwd_out[t] = h;
        }
        inputs = fwd_out
            .into_iter()
            .zip(bwd_out)
            .map(|(f, b)| g.concat(&[f, b]))
            .collect::<Result<_>>()?;
    }
    let flat = g.concat(&inputs)?;
    let h = g.reshape(flat, &[bsz, steps, 2 * hid])?;
    Ok(AnnotationMatrix {
        h,
        mask: ids.mask(),
        lens: ids.lens.clone(),
        width: steps,
    })
}

/// Mean of the annotation rows at real positions, `[B, 2 * d_hid]`.
pub fn masked_mean_pool<F: Real>(g: &mut Graph<F>, ann: &AnnotationMatrix) -> Result<Var> {
    g.masked_mean(ann.h, &ann.mask)
}
