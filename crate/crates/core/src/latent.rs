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

//! Prior and posterior inference networks, diagonal-Gaussian KL and
//! reparameterized sampling.

use rand::Rng;

use crate::encoder::{masked_mean_pool, AnnotationMatrix};
use crate::error::{Error, Result};
use crate::model::{uniform_init, zero_bias};
use crate::numerics::{Graph, ParamId, ParamStore, Real, Tensor, Var};

/// Log-variances are clamped to this range before any exponentiation.
pub const LOG_VAR_LIMIT: f64 = 8.0;

/// Additive score given to PAD positions before an attention softmax.
pub const PAD_SCORE: f64 = -1e9;

/// Mean and diagonal log-variance of one latent Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianParams {
    pub mean: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl GaussianParams {
    pub fn standard(dim: usize) -> Self {
        GaussianParams {
            mean: vec![0.0; dim],
            log_var: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Batched Gaussian parameters on the tape, each `[B, d_z]`.
#[derive(Clone, Copy, Debug)]
pub struct GaussianVars {
    pub mean: Var,
    pub log_var: Var,
}

impl GaussianVars {
    /// Per-sentence values.
    pub fn to_params<F: Real>(&self, g: &Graph<F>) -> Vec<GaussianParams> {
        let (m, lv) = (g.value(self.mean), g.value(self.log_var));
        let dz = m.shape()[1];
        (0..m.shape()[0])
            .map(|b| GaussianParams {
                mean: m.data()[b * dz..(b + 1) * dz].iter().map(|v| v.as_f64()).collect(),
                log_var: lv.data()[b * dz..(b + 1) * dz].iter().map(|v| v.as_f64()).collect(),
            })
            .collect()
    }
}

/// Pooled features -> tanh hidden layer -> (mean, log-variance).
/// Used for both the prior and the posterior networks.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianHead {
    pub w_z: ParamId,
    pub b_z: ParamId,
    pub w_mu: ParamId,
    pub b_mu: ParamId,
    pub w_sigma: ParamId,
    pub b_sigma: ParamId,
    pub input: usize,
}

pub type PriorNetParams = GaussianHead;
pub type PosteriorNetParams = GaussianHead;

impl GaussianHead {
    pub fn register<F: Real, R: Rng>(
        store: &mut ParamStore<F>,
        rng: &mut R,
        name: &str,
        input: usize,
        hidden: usize,
        d_z: usize,
    ) -> Result<Self> {
        Ok(GaussianHead {
            w_z: store.insert(&format!("{name}.w_z"), uniform_init(&[input, hidden], rng))?,
            b_z: store.insert(&format!("{name}.b_z"), zero_bias(hidden))?,
            w_mu: store.insert(&format!("{name}.w_mu"), uniform_init(&[hidden, d_z], rng))?,
            b_mu: store.insert(&format!("{name}.b_mu"), zero_bias(d_z))?,
            w_sigma: store.insert(&format!("{name}.w_sigma"), uniform_init(&[hidden, d_z], rng))?,
            b_sigma: store.insert(&format!("{name}.b_sigma"), zero_bias(d_z))?,
            input,
        })
    }

    pub fn ids(&self) -> [ParamId; 6] {
        [self.w_z, self.b_z, self.w_mu, self.b_mu, self.w_sigma, self.b_sigma]
    }

    fn project<F: Real>(&self, g: &mut Graph<F>, store: &ParamStore<F>, features: Var) -> Result<GaussianVars> {
        if g.shape(features)[1] != self.input {
            return Err(Error::Shape {
                op: "gaussian_head",
                lhs: g.shape(features).to_vec(),
                rhs: vec![self.input],
            });
        }
        let lin = |g: &mut Graph<F>, x: Var, w: ParamId, b: ParamId| -> Result<Var> {
            let w = g.param(store, w);
            let b = g.param(store, b);
            let y = g.matmul(x, w)?;
            g.add_bias(y, b)
        };
        let pre = lin(g, features, self.w_z, self.b_z)?;
        let hz = g.tanh(pre)?;
        let mean = lin(g, hz, self.w_mu, self.b_mu)?;
        let raw = lin(g, hz, self.w_sigma, self.b_sigma)?;
        let limit = F::lit(LOG_VAR_LIMIT);
        let log_var = g.clamp(raw, -limit, limit)?;
        Ok(GaussianVars { mean, log_var })
    }
}

fn check_width(a: &AnnotationMatrix, b: &AnnotationMatrix, ga: &[usize], gb: &[usize]) -> Result<()> {
    if ga[2] != gb[2] || a.batch() != b.batch() {
        return Err(Error::Shape {
            op: "coattention",
            lhs: ga.to_vec(),
            rhs: gb.to_vec(),
        });
    }
    Ok(())
}

/// p(z | x): pooled source annotations through the prior head.
pub fn prior_params<F: Real>(g: &mut Graph<F>, store: &ParamStore<F>, head: &PriorNetParams, src: &AnnotationMatrix) -> Result<GaussianVars> {
    let pooled = masked_mean_pool(g, src)?;
    head.project(g, store, pooled)
}

/// Pairwise dot-product attention in both directions.
#[derive(Clone, Copy, Debug)]
pub struct CoAttention {
    /// `[B, Ty, Tx]`: for each target position, weights over source positions.
    pub alpha_x: Var,
    /// `[B, Ty, D]`: source context per target position.
    pub ctx_x: Var,
    /// `[B, Tx, Ty]`: for each source position, weights over target positions.
    pub alpha_y: Var,
    /// `[B, Tx, D]`: target context per source position.
    pub ctx_y: Var,
}

fn attention_fill(queries: usize, keys_mask: &[bool], batch: usize) -> Vec<bool> {
    let tk = keys_mask.len() / batch;
    let mut fill = Vec::with_capacity(batch * queries * tk);
    for b in 0..batch {
        for _ in 0..queries {
            fill.extend(keys_mask[b * tk..(b + 1) * tk].iter().map(|&m| !m));
        }
    }
    fill
}

pub fn coattention<F: Real>(g: &mut Graph<F>, src: &AnnotationMatrix, tgt: &AnnotationMatrix) -> Result<CoAttention> {
    let (sx, sy) = (g.shape(src.h).to_vec(), g.shape(tgt.h).to_vec());
    check_width(src, tgt, &sx, &sy)?;
    let (bsz, tx, ty) = (sx[0], sx[1], sy[1]);
    let pad = F::lit(PAD_SCORE);

    let scores_x = g.bmm(tgt.h, src.h, true)?;
    let scores_x = g.masked_fill(scores_x, &attention_fill(ty, &src.mask, bsz), pad)?;
    let alpha_x = g.softmax(scores_x)?;
    let ctx_x = g.bmm(alpha_x, src.h, false)?;

    let scores_y = g.bmm(src.h, tgt.h, true)?;
    let scores_y = g.masked_fill(scores_y, &attention_fill(tx, &tgt.mask, bsz), pad)?;
    let alpha_y = g.softmax(scores_y)?;
    let ctx_y = g.bmm(alpha_y, tgt.h, false)?;
    Ok(CoAttention {
        alpha_x,
        ctx_x,
        alpha_y,
        ctx_y,
    })
}

/// q(z | x, y) with co-attention features `(mean c^x ; mean h^x ; mean c^y ; mean h^y)`.
/// Each mean runs over the positions of the sequence the vectors are indexed by.
pub fn posterior_params<F: Real>(
    g: &mut Graph<F>,
    store: &ParamStore<F>,
    head: &PosteriorNetParams,
    src: &AnnotationMatrix,
    tgt: &AnnotationMatrix,
) -> Result<GaussianVars> {
    let co = coattention(g, src, tgt)?;
    let cx = g.masked_mean(co.ctx_x, &tgt.mask)?;
    let hx = masked_mean_pool(g, src)?;
    let cy = g.masked_mean(co.ctx_y, &src.mask)?;
    let hy = masked_mean_pool(g, tgt)?;
    let features = g.concat(&[cx, hx, cy, hy])?;
    head.project(g, store, features)
}

/// Mean-pool baseline posterior: `(mean h^x ; mean h^y)` only.
pub fn posterior_params_meanpool<F: Real>(
    g: &mut Graph<F>,
    store: &ParamStore<F>,
    head: &PosteriorNetParams,
    src: &AnnotationMatrix,
    tgt: &AnnotationMatrix,
) -> Result<GaussianVars> {
    let (sx, sy) = (g.shape(src.h).to_vec(), g.shape(tgt.h).to_vec());
    check_width(src, tgt, &sx, &sy)?;
    let hx = masked_mean_pool(g, src)?;
    let hy = masked_mean_pool(g, tgt)?;
    let features = g.concat(&[hx, hy])?;
    head.project(g, store, features)
}

/// Per-row KL(q || p) between diagonal Gaussians, `[B]`.
pub fn kl_diag_gauss_vars<F: Real>(g: &mut Graph<F>, q: &GaussianVars, p: &GaussianVars) -> Result<Var> {
    if g.shape(q.mean) != g.shape(p.mean) {
        return Err(Error::Shape {
            op: "kl_diag_gauss",
            lhs: g.shape(q.mean).to_vec(),
            rhs: g.shape(p.mean).to_vec(),
        });
    }
    // 0.5 * sum(lv_p - lv_q + exp(lv_q - lv_p) + (mu_q - mu_p)^2 * exp(-lv_p) - 1)
    let lv_diff = g.sub(p.log_var, q.log_var)?;
    let neg = g.scale(lv_diff, -F::one())?;
    let ratio = g.exp(neg)?;
    let dmu = g.sub(q.mean, p.mean)?;
    let dmu2 = g.mul(dmu, dmu)?;
    let neg_lvp = g.scale(p.log_var, -F::one())?;
    let inv_var_p = g.exp(neg_lvp)?;
    let maha = g.mul(dmu2, inv_var_p)?;
    let a = g.add(lv_diff, ratio)?;
    let b = g.add(a, maha)?;
    let terms = g.add_scalar(b, -F::one())?;
    let summed = g.sum_axis(terms, 1)?;
    g.scale(summed, F::lit(0.5))
}

/// Closed-form KL(q || p) for one pair of diagonal Gaussians.
pub fn kl_diag_gauss(q: &GaussianParams, p: &GaussianParams) -> Result<f64> {
    if q.dim() != p.dim() || q.log_var.len() != q.dim() || p.log_var.len() != p.dim() {
        return Err(Error::Shape {
            op: "kl_diag_gauss",
            lhs: vec![q.mean.len(), q.log_var.len()],
            rhs: vec![p.mean.len(), p.log_var.len()],
        });
    }
    let mut kl = 0.0;
    for i in 0..q.dim() {
        let (lq, lp) = (q.log_var[i], p.log_var[i]);
        let d = q.mean[i] - p.mean[i];
        kl += lp - lq + ((lq.exp() + d * d) / lp.exp()) - 1.0;
    }
    Ok(0.5 * kl)
}

/// `z = mean + exp(0.5 * log_var) * eps`, differentiable in the Gaussian parameters.
pub fn reparam_sample<F: Real>(g: &mut Graph<F>, gauss: &GaussianVars, eps: Var) -> Result<Var> {
    if g.shape(eps) != g.shape(gauss.mean) {
        return Err(Error::Shape {
            op: "reparam_sample",
            lhs: g.shape(gauss.mean).to_vec(),
            rhs: g.shape(eps).to_vec(),
        });
    }
    let half = g.scale(gauss.log_var, F::lit(0.5))?;
    let std = g.exp(half)?;
    let noise = g.mul(std, eps)?;
    g.add(gauss.mean, noise)
}

/// Value-only reparameterized draw for a single Gaussian.
pub fn sample_from(gauss: &GaussianParams, eps: &[f64]) -> Vec<f64> {
    gauss
        .mean
        .iter()
        .zip(&gauss.log_var)
        .zip(eps)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect()
}

/// Standard-normal noise `[rows, dim]` drawn from `rng`.
pub fn standard_normal<F: Real, R: Rng>(rng: &mut R, rows: usize, dim: usize) -> Tensor<F> {
    let data = (0..rows * dim)
        .map(|_| F::lit(rng.sample::<f64, _>(rand_distr::StandardNormal)))
        .collect();
    Tensor::new(vec![rows, dim], data).expect("noise shape")
}
