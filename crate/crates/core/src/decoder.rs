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

//! Latent-conditioned attention decoder.

use std::cmp::Ordering;

use rand::Rng;

use crate::data::{PaddedIds, BOS, EOS};
use crate::encoder::{lstm_step, masked_mean_pool, AnnotationMatrix, LstmParams};
use crate::error::{Error, Result};
use crate::latent::PAD_SCORE;
use crate::model::{uniform_init, zero_bias, ModelConfig};
use crate::numerics::{Graph, ParamId, ParamStore, Real, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams {
    pub layers: Vec<LstmParams>,
    /// Target embeddings, the same slot the target-side encoder reads.
    pub tgt_emb: ParamId,
    /// Annotation projection `[2 * d_hid, d_hid]` used for attention scores only.
    pub w_s: ParamId,
    pub w_0: ParamId,
    pub b_0: ParamId,
    /// Output projection `[d_hid + 2 * d_hid + d_z, |V_tgt|]`.
    pub w_v: ParamId,
    pub b_v: ParamId,
    pub d_hid: usize,
    pub d_z: usize,
    pub vocab: usize,
}

impl DecoderParams {
    /// `d_z == 0` gives the plain attention decoder.
    pub fn register<F: Real, R: Rng>(
        store: &mut ParamStore<F>,
        rng: &mut R,
        cfg: &ModelConfig,
        tgt_emb: ParamId,
        d_z: usize,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let input = if l == 0 { cfg.d_emb + d_z } else { cfg.d_hid };
            layers.push(LstmParams::register(store, rng, &format!("dec.l{l}"), input, cfg.d_hid)?);
        }
        let ann = 2 * cfg.d_hid;
        Ok(DecoderParams {
            layers,
            tgt_emb,
            w_s: store.insert("dec.w_s", uniform_init(&[ann, cfg.d_hid], rng))?,
            w_0: store.insert("dec.w_0", uniform_init(&[ann, cfg.d_hid], rng))?,
            b_0: store.insert("dec.b_0", zero_bias(cfg.d_hid))?,
            w_v: store.insert("dec.w_v", uniform_init(&[cfg.d_hid + ann + d_z, cfg.tgt_vocab], rng))?,
            b_v: store.insert("dec.b_v", zero_bias(cfg.tgt_vocab))?,
            d_hid: cfg.d_hid,
            d_z,
            vocab: cfg.tgt_vocab,
        })
    }
}

/// Hidden and cell state per decoder layer, each `[B, d_hid]`.
#[derive(Clone, Debug)]
pub struct DecoderState {
    pub h: Vec<Var>,
    pub c: Vec<Var>,
}

/// Source-side tensors the decoder attends over.
#[derive(Clone, Debug)]
pub struct SourceContext {
    pub ann: Var,
    pub keys: Var,
    /// True at PAD positions, one row of `width` flags per batch entry.
    pub fill: Vec<bool>,
    pub batch: usize,
    pub width: usize,
}

/// Projects attention keys and builds the initial state
/// `tanh(W_0 * mean_pool(h^x) + b_0)` for every layer's hidden state, zero cells.
pub fn prepare_source<F: Real>(
    g: &mut Graph<F>,
    store: &ParamStore<F>,
    dec: &DecoderParams,
    src: &AnnotationMatrix,
) -> Result<(SourceContext, DecoderState)> {
    let s = g.shape(src.h).to_vec();
    let (bsz, steps, width) = (s[0], s[1], s[2]);
    let flat = g.reshape(src.h, &[bsz * steps, width])?;
    let w_s = g.param(store, dec.w_s);
    let keys = g.matmul(flat, w_s)?;
    let keys = g.reshape(keys, &[bsz, steps, dec.d_hid])?;

    let pooled = masked_mean_pool(g, src)?;
    let w_0 = g.param(store, dec.w_0);
    let b_0 = g.param(store, dec.b_0);
    let pre = g.matmul(pooled, w_0)?;
    let pre = g.add_bias(pre, b_0)?;
    let h0 = g.tanh(pre)?;
    let c0 = g.constant(Tensor::zeros(&[bsz, dec.d_hid]));
    let n = dec.layers.len();
    Ok((
        SourceContext {
            ann: src.h,
            keys,
            fill: src.mask.iter().map(|&m| !m).collect(),
            batch: bsz,
            width: steps,
        },
        DecoderState {
            h: vec![h0; n],
            c: vec![c0; n],
        },
    ))
}

#[derive(Clone, Debug)]
pub struct StepOutput {
    /// `[B, |V|]` log-probabilities.
    pub log_probs: Var,
    pub state: DecoderState,
    /// `[B, T_x]` attention weights.
    pub attention: Var,
}

/// One decoder step. `z` is `[B, d_z]`, or `None` for the plain decoder.
pub fn decode_step<F: Real>(
    g: &mut Graph<F>,
    store: &ParamStore<F>,
    dec: &DecoderParams,
    prev: &[usize],
    state: &DecoderState,
    src: &SourceContext,
    z: Option<Var>,
) -> Result<StepOutput> {
    if prev.len() != src.batch {
        return Err(Error::invalid(format!("decode_step: {} tokens for batch of {}", prev.len(), src.batch)));
    }
    if let Some(&bad) = prev.iter().find(|&&t| t >= dec.vocab) {
        return Err(Error::invalid(format!("decode_step: token id {bad} out of range for vocabulary of {}", dec.vocab)));
    }
    match (z, dec.d_z) {
        (None, 0) => {}
        (Some(zv), d) if d > 0 && g.shape(zv) == [src.batch, d] => {}
        _ => return Err(Error::invalid(format!("decode_step: latent input does not match d_z = {}", dec.d_z))),
    }
    let emb = g.param(store, dec.tgt_emb);
    let e = g.embedding(emb, prev)?;
    let mut x = match z {
        Some(zv) => g.concat(&[e, zv])?,
        None => e,
    };
    let mut next = DecoderState {
        h: Vec::with_capacity(dec.layers.len()),
        c: Vec::with_capacity(dec.layers.len()),
    };
    for (l, cell) in dec.layers.iter().enumerate() {
        let (h, c) = lstm_step(g, store, cell, x, state.h[l], state.c[l])?;
        next.h.push(h);
        next.c.push(c);
        x = h;
    }
    let top = x;
    let q = g.reshape(top, &[src.batch, 1, dec.d_hid])?;
    let scores = g.bmm(q, src.keys, true)?;
    let scores = g.masked_fill(scores, &src.fill, F::lit(PAD_SCORE))?;
    let alpha = g.softmax(scores)?;
    let ctx = g.bmm(alpha, src.ann, false)?;
    let ctx = g.reshape(ctx, &[src.batch, g.shape(src.ann)[2]])?;
    let attention = g.reshape(alpha, &[src.batch, src.width])?;
    let feats = match z {
        Some(zv) => g.concat(&[top, ctx, zv])?,
        None => g.concat(&[top, ctx])?,
    };
    let act = g.tanh(feats)?;
    let w_v = g.param(store, dec.w_v);
    let b_v = g.param(store, dec.b_v);
    let logits = g.matmul(act, w_v)?;
    let logits = g.add_bias(logits, b_v)?;
    let log_probs = g.log_softmax(logits)?;
    Ok(StepOutput {
        log_probs,
        state: next,
        attention,
    })
}

/// Per-sentence negative log-likelihood `[B]` of BOS/EOS-wrapped targets
/// under teacher forcing. Position 0 (BOS) is never predicted.
pub fn teacher_forced_nll<F: Real>(
    g: &mut Graph<F>,
    store: &ParamStore<F>,
    dec: &DecoderParams,
    tgt: &PaddedIds,
    src: &SourceContext,
    init: &DecoderState,
    z: Option<Var>,
) -> Result<Var> {
    if tgt.width < 2 {
        return Err(Error::invalid("teacher_forced_nll: targets need at least BOS and one more token"));
    }
    let mut state = init.clone();
    let mut total: Option<Var> = None;
    for j in 0..tgt.width - 1 {
        let out = decode_step(g, store, dec, &tgt.column(j), &state, src, z)?;
        state = out.state;
        let gold = tgt.column(j + 1);
        let picked = g.gather(out.log_probs, &gold)?;
        let weights: Vec<F> = tgt
            .lens
            .iter()
            .map(|&l| if j + 1 < l { -F::one() } else { F::zero() })
            .collect();
        let w = g.constant(Tensor::from_vec(weights));
        let term = g.mul(picked, w)?;
        total = Some(match total {
            Some(t) => g.add(t, term)?,
            None => term,
        });
    }
    Ok(total.expect("at least one prediction step"))
}

/// A decoded token sequence. `tokens` excludes EOS; `finished` records whether EOS was emitted.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// Tokens that were predicted, EOS included when emitted.
    pub fn predicted_len(&self) -> usize {
        self.tokens.len() + usize::from(self.finished)
    }

    pub fn per_word_log_prob(&self) -> f64 {
        self.log_prob / self.predicted_len().max(1) as f64
    }
}

fn row<F: Real>(g: &Graph<F>, v: Var) -> Vec<f64> {
    g.value(v).data().iter().map(|x| x.as_f64()).collect()
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Argmax decoding of a single sentence (batch of one).
pub fn greedy_decode<F: Real>(
    g: &mut Graph<F>,
    store: &ParamStore<F>,
    dec: &DecoderParams,
    src: &SourceContext,
    init: &DecoderState,
    z: Option<Var>,
    max_len: usize,
) -> Result<Hypothesis> {
    if max_len == 0 {
        return Err(Error::invalid("max_len must be at least 1"));
    }
    let mut hyp = Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
    };
    let mut state = init.clone();
    let mut prev = BOS;
    for _ in 0..max_len {
        let out = decode_step(g, store, dec, &[prev], &state, src, z)?;
        let lp = row(g, out.log_probs);
        let tok = argmax(&lp);
        hyp.log_prob += lp[tok];
        if tok == EOS {
            hyp.finished = true;
            break;
        }
        hyp.tokens.push(tok);
        state = out.state;
        prev = tok;
    }
    Ok(hyp)
}

/// Indices of the `k` largest entries, ties broken by lower index.
fn top_k(row: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Length-unnormalized beam search. Returns at most `width` hypotheses,
/// best first; unfinished ones appear only when `max_len` cut the search.
pub fn beam_decode<F: Real>(
    g: &mut Graph<F>,
    store: &ParamStore<F>,
    dec: &DecoderParams,
    src: &SourceContext,
    init: &DecoderState,
    z: Option<Var>,
    width: usize,
    max_len: usize,
) -> Result<Vec<Hypothesis>> {
    if width == 0 {
        return Err(Error::invalid("beam width must be at least 1"));
    }
    if max_len == 0 {
        return Err(Error::invalid("max_len must be at least 1"));
    }
    struct Alive {
        tokens: Vec<usize>,
        log_prob: f64,
        state: DecoderState,
    }
    let mut alive = vec![Alive {
        tokens: Vec::new(),
        log_prob: 0.0,
        state: init.clone(),
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for _ in 0..max_len {
        // (score, parent, token, parent's next state)
        let mut cands: Vec<(f64, usize, usize, DecoderState)> = Vec::new();
        for (pi, a) in alive.iter().enumerate() {
            let prev = a.tokens.last().copied().unwrap_or(BOS);
            let out = decode_step(g, store, dec, &[prev], &a.state, src, z)?;
            let lp = row(g, out.log_probs);
            for tok in top_k(&lp, width) {
                cands.push((a.log_prob + lp[tok], pi, tok, out.state.clone()));
            }
        }
        cands.sort_by(|x, y| {
            y.0.partial_cmp(&x.0)
                .unwrap_or(Ordering::Equal)
                .then(x.1.cmp(&y.1))
                .then(x.2.cmp(&y.2))
        });
        cands.truncate(width);
        let mut next = Vec::with_capacity(width);
        for (score, pi, tok, state) in cands {
            let mut tokens = alive[pi].tokens.clone();
            if tok == EOS {
                finished.push(Hypothesis {
                    tokens,
                    log_prob: score,
                    finished: true,
                });
            } else {
                tokens.push(tok);
                next.push(Alive {
                    tokens,
                    log_prob: score,
                    state,
                });
            }
        }
        alive = next;
        if alive.is_empty() || finished.len() >= width {
            break;
        }
    }
    let mut results = finished;
    if results.len() < width {
        results.extend(alive.into_iter().map(|a| Hypothesis {
            tokens: a.tokens,
            log_prob: a.log_prob,
            finished: false,
        }));
    }
    results.sort_by(|a, b| b.log_prob.partial_cmp(&a.log_prob).unwrap_or(Ordering::Equal));
    results.truncate(width);
    Ok(results)
}
