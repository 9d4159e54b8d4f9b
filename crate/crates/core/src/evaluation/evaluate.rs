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

//! Model-level scoring: likelihood bounds plus greedy, zero-latent and beam BLEU.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bleu::corpus_bleu;
use super::table::{fmt4, fmt_bleu, fmt_opt4, Table};
use crate::data::{SentencePair, Vocabulary};
use crate::decoder::Hypothesis;
use crate::error::{Error, Result};
use crate::latent::{sample_from, standard_normal};
use crate::model::Model;
use crate::numerics::Real;
use crate::training::validate;

/// Perplexity from a per-word negative log-likelihood or NELBO.
pub fn ppl_from_nelbo(nelbo_per_word: f64) -> f64 {
    nelbo_per_word.exp()
}

/// Which latent vector drives generation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LatentChoice {
    PriorMean,
    Zero,
    /// One draw from the prior.
    Sample,
}

/// Latent vector for `source` under `choice`; `None` for seq2seq models.
/// Only `Sample` consumes randomness (`d_z` standard-normal draws).
pub fn latent_for<F: Real, R: Rng>(model: &Model<F>, source: &[usize], choice: LatentChoice, rng: &mut R) -> Result<Option<Vec<f64>>> {
    let d = model.config.decoder_latent();
    if d == 0 {
        return Ok(None);
    }
    Ok(Some(match choice {
        LatentChoice::Zero => vec![0.0; d],
        LatentChoice::PriorMean => model.prior_of(source)?.mean,
        LatentChoice::Sample => {
            let prior = model.prior_of(source)?;
            let eps = standard_normal::<f64, _>(rng, 1, d);
            sample_from(&prior, eps.data())
        }
    }))
}

/// Greedy when `beam` is `None`, otherwise the best beam hypothesis.
pub fn translate_ids<F: Real>(model: &Model<F>, source: &[usize], z: Option<&[f64]>, beam: Option<usize>) -> Result<Hypothesis> {
    let max_len = Model::<F>::default_max_len(source);
    match beam {
        None => model.greedy(source, z, max_len),
        Some(w) => model
            .beam(source, z, w, max_len)?
            .into_iter()
            .next()
            .ok_or_else(|| Error::invalid("beam search returned no hypothesis")),
    }
}

/// BLEU of decodes against the pairs' own targets, compared as vocabulary
/// tokens so UNK is retained on both sides.
pub fn bleu_on_pairs<F: Real>(
    model: &Model<F>,
    tgt_vocab: &Vocabulary,
    pairs: &[SentencePair],
    choice: LatentChoice,
    beam: Option<usize>,
) -> Result<f64> {
    // Only `LatentChoice::Sample` draws from this stream.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut hyps = Vec::with_capacity(pairs.len());
    let mut refs = Vec::with_capacity(pairs.len());
    for p in pairs {
        let z = latent_for(model, &p.source, choice, &mut rng)?;
        let h = translate_ids(model, &p.source, z.as_deref(), beam)?;
        hyps.push(tgt_vocab.decode(&h.tokens));
        refs.push(tgt_vocab.decode(p.target_words()));
    }
    Ok(corpus_bleu(&hyps, &refs)?.bleu)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub label: String,
    pub ppl: f64,
    /// NELBO for variational models, NLL for seq2seq.
    pub nelbo: f64,
    pub re: Option<f64>,
    pub kl: Option<f64>,
    pub bleu_greedy: f64,
    pub bleu_zero_latent: Option<f64>,
    pub bleu_beam: Option<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct EvalOptions {
    /// Beam width for the beam BLEU column; `None` skips it.
    pub beam: Option<usize>,
    pub batch_size: usize,
    pub eval_seed: u64,
}

pub fn evaluate<F: Real>(label: &str, model: &Model<F>, tgt_vocab: &Vocabulary, pairs: &[SentencePair], opts: EvalOptions) -> Result<EvalRow> {
    let v = validate(model, pairs, opts.batch_size, opts.eval_seed)?;
    let variational = model.config.mode.is_variational();
    let latent = LatentChoice::PriorMean;
    Ok(EvalRow {
        label: label.to_string(),
        ppl: ppl_from_nelbo(v.nelbo_per_word),
        nelbo: v.nelbo_per_word,
        re: variational.then_some(v.re_per_word),
        kl: v.kl_per_word,
        bleu_greedy: bleu_on_pairs(model, tgt_vocab, pairs, latent, None)?,
        bleu_zero_latent: if variational {
            Some(bleu_on_pairs(model, tgt_vocab, pairs, LatentChoice::Zero, None)?)
        } else {
            None
        },
        bleu_beam: match opts.beam {
            Some(w) => Some(bleu_on_pairs(model, tgt_vocab, pairs, latent, Some(w))?),
            None => None,
        },
    })
}

pub fn eval_table(rows: &[EvalRow]) -> Table {
    let mut t = Table::new(["Model", "PPL", "NELBO/NLL", "RE", "KL", "BLEU Greedy", "BLEU Greedy Zero-Latent", "BLEU Beam"]);
    for r in rows {
        t.push(vec![
            r.label.clone(),
            fmt4(r.ppl),
            fmt4(r.nelbo),
            fmt_opt4(r.re),
            fmt_opt4(r.kl),
            fmt_bleu(Some(r.bleu_greedy)),
            fmt_bleu(r.bleu_zero_latent),
            fmt_bleu(r.bleu_beam),
        ]);
    }
    t
}
