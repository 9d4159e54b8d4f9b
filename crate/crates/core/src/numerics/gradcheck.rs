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

//! Central-difference gradient checks in 64-bit precision.

use super::graph::{Graph, Var};
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is zero are compared in absolute terms.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (parameter or input index, flat coordinate) of the worst entry.
    pub worst: (usize, usize),
    pub coordinates: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

fn eval_scalar(g: &Graph<f64>, v: Var) -> Result<f64> {
    let t = g.value(v);
    if t.numel() != 1 {
        return Err(Error::Shape {
            op: "grad_check",
            lhs: t.shape().to_vec(),
            rhs: vec![1],
        });
    }
    Ok(t.item())
}

/// Max relative error between the tape gradient of `f` at `x` and central differences with step `h`.
pub fn grad_check<Fun>(f: Fun, x: &Tensor<f64>, h: f64) -> Result<f64>
where
    Fun: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    if h <= 0.0 {
        return Err(Error::invalid("grad_check: step must be positive"));
    }
    let mut g = Graph::new();
    let xv = g.leaf(x.clone(), true)?;
    let y = f(&mut g, xv)?;
    eval_scalar(&g, y)?;
    let analytic = g.backward(y)?.wrt(&g, xv);
    let mut worst: f64 = 0.0;
    for i in 0..x.numel() {
        let probe = |delta: f64| -> Result<f64> {
            let mut xp = x.clone();
            xp.data_mut()[i] += delta;
            let mut g = Graph::new();
            let xv = g.leaf(xp, false)?;
            let y = f(&mut g, xv).map_err(|e| Error::invalid(format!("grad_check coordinate {i}: {e}")))?;
            eval_scalar(&g, y)
        };
        let numeric = (probe(h)? - probe(-h)?) / (2.0 * h);
        worst = worst.max(relative_error(analytic.data()[i], numeric));
    }
    Ok(worst)
}

/// Gradient check of a loss built from a parameter store, over every
/// coordinate of every parameter (or only those `select` accepts).
pub fn grad_check_params<Fun>(
    store: &ParamStore<f64>,
    f: Fun,
    h: f64,
    select: impl Fn(&str) -> bool,
) -> Result<GradCheckReport>
where
    Fun: Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var>,
{
    if h <= 0.0 {
        return Err(Error::invalid("grad_check: step must be positive"));
    }
    let mut g = Graph::new();
    let y = f(&mut g, store)?;
    eval_scalar(&g, y)?;
    let analytic = g.backward(y)?.params(&g, store);
    let mut perturbed = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        coordinates: 0,
    };
    for id in store.ids() {
        if !select(store.name(id)) {
            continue;
        }
        for i in 0..store.get(id).numel() {
            let orig = store.get(id).data()[i];
            let mut probe = |delta: f64| -> Result<f64> {
                perturbed.get_mut(id).data_mut()[i] = orig + delta;
                let mut g = Graph::new();
                let y = f(&mut g, &perturbed)
                    .map_err(|e| Error::invalid(format!("grad_check {}[{i}]: {e}", store.name(id))))?;
                eval_scalar(&g, y)
            };
            let numeric = (probe(h)? - probe(-h)?) / (2.0 * h);
            perturbed.get_mut(id).data_mut()[i] = orig;
            let err = relative_error(analytic[id.0].data()[i], numeric);
            report.coordinates += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (id.0, i);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_sum_is_exact() {
        let x = Tensor::new(vec![2, 3], vec![0.1, -2.0, 3.5, 4.0, 0.0, -0.3]).unwrap();
        let err = grad_check(|g, x| g.sum_all(x), &x, 1e-4).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn tanh_at_zero_has_unit_slope() {
        let x = Tensor::from_vec(vec![0.0]);
        let mut g = Graph::new();
        let xv = g.leaf(x.clone(), true).unwrap();
        let t = g.tanh(xv).unwrap();
        let y = g.sum_all(t).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.wrt(&g, xv).data(), &[1.0]);
        assert!(grad_check(|g, x| {
            let t = g.tanh(x)?;
            g.sum_all(t)
        }, &x, 1e-4).unwrap() < 1e-8);
    }

    #[test]
    fn rejects_nonpositive_step() {
        let x = Tensor::from_vec(vec![1.0]);
        assert!(grad_check(|g, x| g.sum_all(x), &x, 0.0).is_err());
    }
}
