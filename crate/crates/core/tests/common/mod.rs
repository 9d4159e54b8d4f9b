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

//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use cvnmt::data::{build_vocab, encode_pairs, SentencePair, TextPair, Vocabulary};
use cvnmt::model::{Model, ModelConfig, ModelMode};
use cvnmt::latent::GaussianParams;
use cvnmt::numerics::{Graph, Real, Tensor, Var};
use cvnmt::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
    let mut r = rng(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.random_range(lo..hi)).collect()).unwrap()
}

pub fn toy_config(mode: ModelMode, src_vocab: usize, tgt_vocab: usize) -> ModelConfig {
    ModelConfig {
        mode,
        d_emb: 8,
        d_hid: 8,
        layers: 2,
        d_z: 4,
        src_vocab,
        tgt_vocab,
    }
}

pub fn toy_model<F: Real>(mode: ModelMode, vocab: usize, seed: u64) -> Model<F> {
    Model::new(toy_config(mode, vocab, vocab), &mut rng(seed)).unwrap()
}

/// Random id sequence of length `len` over the non-special ids of a vocabulary of size `vocab`.
pub fn random_ids<R: Rng>(r: &mut R, len: usize, vocab: usize) -> Vec<usize> {
    (0..len).map(|_| r.random_range(4..vocab)).collect()
}

/// Two sentence pairs of different lengths, so padding is exercised.
pub fn two_pairs() -> Vec<SentencePair> {
    vec![
        SentencePair {
            source: vec![4, 5, 6, 7, 8],
            target: vec![2, 9, 10, 4, 3],
        },
        SentencePair {
            source: vec![11, 4, 9],
            target: vec![2, 6, 7, 5, 8, 3],
        },
    ]
}

pub struct Corpus {
    pub src_vocab: Vocabulary,
    pub tgt_vocab: Vocabulary,
    pub pairs: Vec<SentencePair>,
}

pub fn corpus(text: &[TextPair]) -> Corpus {
    let src_vocab = build_vocab(text.iter().map(|p| p.source.as_slice()), 1).unwrap();
    let tgt_vocab = build_vocab(text.iter().map(|p| p.target.as_slice()), 1).unwrap();
    let pairs = encode_pairs(text, &src_vocab, &tgt_vocab);
    Corpus {
        src_vocab,
        tgt_vocab,
        pairs,
    }
}

pub const OPS: usize = 24;

/// Applies primitive number `op` to `x` (shape `[a, b, c]`) and reduces to a weighted scalar.
pub fn apply(g: &mut Graph<f64>, op: usize, x: Var, seed: u64) -> Result<Var> {
    let s = g.shape(x).to_vec();
    let (a, b, c) = (s[0], s[1], s[2]);
    let k = |g: &mut Graph<f64>, shape: &[usize], off: u64| g.constant(random_tensor(shape, seed + off, -1.0, 1.0));
    let y = match op {
        0 => { let m = g.reshape(x, &[a * b, c])?; let w = k(g, &[c, 3], 1); g.matmul(m, w)? }
        1 => { let w = k(g, &[a, 2, b], 2); g.bmm(w, x, false)? }
        2 => { let w = k(g, &[a, 3, c], 3); g.bmm(x, w, true)? }
        3 => { let w = k(g, &s, 4); g.add(x, w)? }
        4 => { let w = k(g, &s, 5); g.sub(w, x)? }
        5 => g.mul(x, x)?,
        6 => { let w = k(g, &[c], 6); g.add_bias(x, w)? }
        7 => g.scale(x, 1.7)?,
        8 => g.tanh(x)?,
        9 => g.sigmoid(x)?,
        10 => g.exp(x)?,
        11 => { let sq = g.mul(x, x)?; let p = g.add_scalar(sq, 0.5)?; g.log(p)? }
        12 => { let w = k(g, &[a, b, 2], 7); g.concat(&[x, w, x])? }
        13 => g.slice(x, c / 2, c - c / 2)?,
        14 => g.softmax(x)?,
        15 => g.log_softmax(x)?,
        16 => g.sum_all(x)?,
        17 => g.mean_axis(x, 1)?,
        18 => g.sum_axis(x, 0)?,
        19 => {
            let mask: Vec<bool> = (0..a * b).map(|i| i % b == 0 || i % 3 != 1).collect();
            g.masked_mean(x, &mask)?
        }
        20 => {
            let fill: Vec<bool> = (0..a * b * c).map(|i| i % 4 == 1).collect();
            g.masked_fill(x, &fill, 0.3)?
        }
        21 => {
            let m = g.reshape(x, &[a, b * c])?;
            let w = k(g, &[a, b * c], 8);
            let keep: Vec<bool> = (0..a).map(|i| i % 2 == 0).collect();
            g.where_rows(&keep, m, w)?
        }
        22 => {
            let m = g.reshape(x, &[a * b, c])?;
            let ids: Vec<usize> = (0..a * b).map(|i| (i * 7 + 1) % c).collect();
            g.gather(m, &ids)?
        }
        23 => {
            let table = g.reshape(x, &[a * b, c])?;
            let ids: Vec<usize> = (0..5).map(|i| (i * 3) % (a * b)).collect();
            g.embedding(table, &ids)?
        }
        _ => unreachable!(),
    };
    let w = k(g, &g.shape(y).to_vec(), 9);
    let p = g.mul(y, w)?;
    g.sum_all(p)
}

fn log_density(z: &[f64], p: &GaussianParams) -> f64 {
    z.iter()
        .zip(p.mean.iter().zip(&p.log_var))
        .map(|(&z, (&m, &lv))| -0.5 * ((2.0 * std::f64::consts::PI).ln() + lv + (z - m).powi(2) / lv.exp()))
        .sum()
}

/// Mean and standard error of log q(z) - log p(z) for z drawn from q.
pub fn monte_carlo_kl(q: &GaussianParams, p: &GaussianParams, n: usize, seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let (mut s, mut s2) = (0.0, 0.0);
    let mut z = vec![0.0; q.dim()];
    for _ in 0..n {
        for (i, zi) in z.iter_mut().enumerate() {
            let e: f64 = StandardNormal.sample(&mut r);
            *zi = q.mean[i] + (0.5 * q.log_var[i]).exp() * e;
        }
        let d = log_density(&z, q) - log_density(&z, p);
        s += d;
        s2 += d * d;
    }
    let mean = s / n as f64;
    let var = (s2 / n as f64 - mean * mean) * n as f64 / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
