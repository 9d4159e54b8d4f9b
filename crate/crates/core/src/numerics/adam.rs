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

//! Adam with bias-corrected moments.

use super::params::ParamStore;
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<F> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub first_moment: Vec<Tensor<F>>,
    pub second_moment: Vec<Tensor<F>>,
}

impl<F: Real> AdamState<F> {
    /// Zero moments shaped like `params`; betas 0.9/0.999, eps 1e-8.
    pub fn new(params: &ParamStore<F>, lr: f64) -> Self {
        let zeros: Vec<Tensor<F>> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }
}

/// Scales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<F: Real>(grads: &mut [Tensor<F>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data().iter())
        .map(|v| v.as_f64() * v.as_f64())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = F::lit(max_norm / norm);
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

/// One Adam update of every parameter in `params`.
pub fn optimizer_step<F: Real>(params: &mut ParamStore<F>, grads: &[Tensor<F>], state: &mut AdamState<F>) -> Result<()> {
    if grads.len() != params.len() || state.first_moment.len() != params.len() {
        return Err(Error::invalid(format!(
            "optimizer_step: {} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    for (id, g) in params.ids().zip(grads) {
        if params.get(id).shape() != g.shape() {
            return Err(Error::Shape {
                op: "optimizer_step",
                lhs: params.get(id).shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
        if let Some(index) = g.first_non_finite() {
            return Err(Error::NonFinite {
                op: "optimizer_step",
                index,
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (F::lit(state.beta1), F::lit(state.beta2));
    let bc1 = F::lit(1.0 - state.beta1.powi(t));
    let bc2 = F::lit(1.0 - state.beta2.powi(t));
    let (lr, eps) = (F::lit(state.lr), F::lit(state.eps));
    let one = F::one();
    for (i, id) in params.ids().enumerate() {
        let g = grads[i].data();
        let m = state.first_moment[i].data_mut();
        let v = state.second_moment[i].data_mut();
        let p = params.get_mut(id).data_mut();
        for j in 0..p.len() {
            m[j] = b1 * m[j] + (one - b1) * g[j];
            v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
