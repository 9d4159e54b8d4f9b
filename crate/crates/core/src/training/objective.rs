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

//! Combined objective `J` and the KL schedules.

use super::config::Mitigation;
use crate::error::{Error, Result};
use crate::numerics::{Graph, Real, Var};

/// Epochs (1-indexed) at which the warm-up weight stays zero.
pub const WARMUP_ZERO_EPOCHS: usize = 5;
/// Epochs over which the weight then ramps linearly to one.
pub const WARMUP_RAMP_EPOCHS: usize = 10;

/// KL weight for a 1-indexed epoch: 0 through epoch 5, then linear to 1 at epoch 15.
pub fn kl_warmup_alpha(epoch: usize) -> f64 {
    let x = (epoch as f64 - WARMUP_ZERO_EPOCHS as f64) / WARMUP_RAMP_EPOCHS as f64;
    x.clamp(0.0, 1.0)
}

/// How the KL value enters `J` for one batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KlTerm {
    /// `alpha * KL`, gradient scaled by alpha.
    Weighted(f64),
    /// The constant floor `m` replaces KL; no gradient flows into KL.
    Floor(f64),
}

pub fn kl_term(mitigation: Mitigation, epoch: usize, kl: f64) -> KlTerm {
    match mitigation {
        Mitigation::Warmup => KlTerm::Weighted(kl_warmup_alpha(epoch)),
        Mitigation::KlCoeff(c) => KlTerm::Weighted(c),
        Mitigation::None => KlTerm::Weighted(1.0),
        Mitigation::KlMin(m) if kl < m => KlTerm::Floor(m),
        Mitigation::KlMin(_) => KlTerm::Weighted(1.0),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ObjectiveBreakdown {
    pub re_per_word: f64,
    pub kl_per_word: f64,
    /// Effective weight on KL (0 when a KL floor is active).
    pub alpha: f64,
    pub j_per_word: f64,
    pub re_sum: f64,
    pub kl_sum: f64,
    pub words: usize,
}

/// Evaluates `J` from per-word reconstruction error and KL.
pub fn objective(re: f64, kl: f64, mitigation: Mitigation, epoch: usize) -> Result<ObjectiveBreakdown> {
    if !re.is_finite() || !kl.is_finite() {
        return Err(Error::invalid(format!("objective: non-finite inputs re={re} kl={kl}")));
    }
    if kl < 0.0 {
        return Err(Error::invalid(format!("objective: negative KL {kl}")));
    }
    let (alpha, j) = match kl_term(mitigation, epoch, kl) {
        KlTerm::Weighted(a) => (a, re + a * kl),
        KlTerm::Floor(m) => (0.0, re + m),
    };
    Ok(ObjectiveBreakdown {
        re_per_word: re,
        kl_per_word: kl,
        alpha,
        j_per_word: j,
        ..Default::default()
    })
}

/// Builds `J` on the tape from per-word RE and (optionally) KL scalars.
/// Without a KL term (seq2seq) `J = RE`.
pub fn objective_on_tape<F: Real>(
    g: &mut Graph<F>,
    re: Var,
    kl: Option<Var>,
    mitigation: Mitigation,
    epoch: usize,
) -> Result<(Var, ObjectiveBreakdown)> {
    let re_v = g.value(re).item().as_f64();
    let Some(kl) = kl else {
        return Ok((
            re,
            ObjectiveBreakdown {
                re_per_word: re_v,
                j_per_word: re_v,
                ..Default::default()
            },
        ));
    };
    // Rounding can leave a tiny negative KL when q == p.
    let kl_v = g.value(kl).item().as_f64().max(0.0);
    let breakdown = objective(re_v, kl_v, mitigation, epoch)?;
    let j = match kl_term(mitigation, epoch, kl_v) {
        KlTerm::Weighted(a) if a == 0.0 => re,
        KlTerm::Weighted(a) => {
            let scaled = g.scale(kl, F::lit(a))?;
            g.add(re, scaled)?
        }
        KlTerm::Floor(m) => g.add_scalar(re, F::lit(m))?,
    };
    Ok((j, breakdown))
}
