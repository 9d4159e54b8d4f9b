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

//! Latent-space exploration: ranked prior samples and linear interpolation.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Vocabulary;
use crate::decoder::Hypothesis;
use crate::error::{Error, Result};
use crate::evaluation::{latent_for, LatentChoice};
use crate::model::Model;
use crate::numerics::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct RankedSample {
    pub tokens: Vec<usize>,
    pub finished: bool,
    /// Teacher-forced log-probability of the output (EOS included when emitted).
    pub total_log_prob: f64,
    pub per_word_log_prob: f64,
    pub z: Vec<f64>,
}

impl RankedSample {
    pub fn score(&self, by_total: bool) -> f64 {
        if by_total {
            self.total_log_prob
        } else {
            self.per_word_log_prob
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SampleOptions {
    pub keep_duplicates: bool,
    /// Rank by total instead of per-word log-probability.
    pub by_total: bool,
}

/// Draws `n` latent vectors from the prior, greedy-decodes each and ranks
/// the outputs by their rescored log-probability, highest first.
pub fn sample_ranked<F: Real>(model: &Model<F>, source: &[usize], n: usize, seed: u64, opts: SampleOptions) -> Result<Vec<RankedSample>> {
    if n == 0 {
        return Err(Error::invalid("sample_ranked: n must be at least 1"));
    }
    if !model.config.mode.is_variational() {
        return Err(Error::invalid("sampling needs a variational model"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_len = Model::<F>::default_max_len(source);
    let mut out: Vec<RankedSample> = Vec::with_capacity(n);
    for _ in 0..n {
        let z = latent_for(model, source, LatentChoice::Sample, &mut rng)?.expect("variational model has a latent");
        let h = model.greedy(source, Some(&z), max_len)?;
        let total = model.score(source, Some(&z), &h.tokens, h.finished)?;
        let sample = RankedSample {
            per_word_log_prob: total / h.predicted_len().max(1) as f64,
            total_log_prob: total,
            tokens: h.tokens,
            finished: h.finished,
            z,
        };
        if !opts.keep_duplicates {
            if let Some(prev) = out.iter_mut().find(|s| s.tokens == sample.tokens) {
                if sample.score(opts.by_total) > prev.score(opts.by_total) {
                    *prev = sample;
                }
                continue;
            }
        }
        out.push(sample);
    }
    // Stable sort keeps draw order among ties.
    out.sort_by(|a, b| b.score(opts.by_total).total_cmp(&a.score(opts.by_total)));
    Ok(out)
}

/// `z(t) = (1 - t) z1 + t z2` at `steps` evenly spaced points of `[0, 1]`.
/// The endpoints are exactly `z1` and `z2`.
pub fn interpolation_points(z1: &[f64], z2: &[f64], steps: usize) -> Result<Vec<Vec<f64>>> {
    if steps < 2 {
        return Err(Error::invalid(format!("interpolate: steps must be at least 2, got {steps}")));
    }
    if z1.len() != z2.len() {
        return Err(Error::invalid(format!(
            "interpolate: latent dimensions differ ({} vs {})",
            z1.len(),
            z2.len()
        )));
    }
    Ok((0..steps)
        .map(|k| {
            if k == 0 {
                return z1.to_vec();
            }
            if k == steps - 1 {
                return z2.to_vec();
            }
            let t = k as f64 / (steps - 1) as f64;
            z1.iter().zip(z2).map(|(a, b)| (1.0 - t) * a + t * b).collect()
        })
        .collect())
}

/// Greedy decodes along the line from `z1` to `z2`.
pub fn interpolate<F: Real>(model: &Model<F>, source: &[usize], z1: &[f64], z2: &[f64], steps: usize) -> Result<Vec<Hypothesis>> {
    let d = model.config.decoder_latent();
    if z1.len() != d {
        return Err(Error::invalid(format!("interpolate: z has {} entries, model expects {d}", z1.len())));
    }
    let max_len = Model::<F>::default_max_len(source);
    interpolation_points(z1, z2, steps)?
        .iter()
        .map(|z| model.greedy(source, Some(z), max_len))
        .collect()
}

/// One `score<TAB>translation` line per entry, score to six decimals.
pub fn format_lines<'a>(vocab: &Vocabulary, items: impl IntoIterator<Item = (f64, &'a [usize])>) -> String {
    let mut s = String::new();
    for (score, tokens) in items {
        let _ = writeln!(s, "{score:.6}\t{}", vocab.decode(tokens).join(" "));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_grid() {
        let pts = interpolation_points(&[0.0, 2.0], &[1.0, -2.0], 3).unwrap();
        assert_eq!(pts, vec![vec![0.0, 2.0], vec![0.5, 0.0], vec![1.0, -2.0]]);
        assert_eq!(interpolation_points(&[1.0], &[3.0], 2).unwrap(), vec![vec![1.0], vec![3.0]]);
        assert!(interpolation_points(&[1.0], &[3.0], 1).is_err());
        assert!(interpolation_points(&[1.0], &[3.0, 1.0], 4).is_err());
    }
}
