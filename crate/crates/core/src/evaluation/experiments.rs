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

//! Experiment harnesses: zeroed-KL posterior comparison and the collapse-mitigation sweep.

use std::fmt;
use std::str::FromStr;

use super::evaluate::{bleu_on_pairs, ppl_from_nelbo, LatentChoice};
use super::table::{fmt4, fmt_bleu, Table};
use crate::data::{build_vocab, encode_pairs, SentencePair, TextPair, Vocabulary};
use crate::error::{Error, Result};
use crate::model::ModelMode;
use crate::training::{Mitigation, TrainConfig, Trainer, ValidationMetrics};

/// A shared corpus with vocabularies built from its training half.
#[derive(Clone, Debug)]
pub struct ExperimentData {
    pub src_vocab: Vocabulary,
    pub tgt_vocab: Vocabulary,
    pub train: Vec<SentencePair>,
    pub val: Vec<SentencePair>,
}

impl ExperimentData {
    pub fn from_text(train: &[TextPair], val: &[TextPair], min_freq: u64) -> Result<Self> {
        if train.is_empty() || val.is_empty() {
            return Err(Error::Data("experiments need non-empty training and validation sets".into()));
        }
        let src_vocab = build_vocab(train.iter().map(|p| p.source.as_slice()), min_freq)?;
        let tgt_vocab = build_vocab(train.iter().map(|p| p.target.as_slice()), min_freq)?;
        Ok(ExperimentData {
            train: encode_pairs(train, &src_vocab, &tgt_vocab),
            val: encode_pairs(val, &src_vocab, &tgt_vocab),
            src_vocab,
            tgt_vocab,
        })
    }
}

/// Trains `config.epochs` epochs with validation after each one.
/// Returns the trainer, the final validation metrics and the largest KL weight seen.
pub fn train_run(config: &TrainConfig, data: &ExperimentData) -> Result<(Trainer, ValidationMetrics, f64)> {
    let mut trainer = Trainer::new(config.clone(), data.src_vocab.clone(), data.tgt_vocab.clone())?;
    let mut max_alpha: f64 = 0.0;
    let mut last = None;
    while trainer.epoch < config.epochs {
        let report = trainer.run_epoch(&data.train, Some(&data.val))?;
        max_alpha = max_alpha.max(report.train.alpha);
        if let Some(v) = report.validation {
            log::info!(
                "[{} {}] epoch {} train re {:.4} kl {:.4} | val re {:.4} kl {:.4}",
                config.mode,
                config.mitigation,
                report.train.epoch,
                report.train.re_per_word,
                report.train.kl_per_word.unwrap_or(0.0),
                v.re_per_word,
                v.kl_per_word.unwrap_or(0.0)
            );
        }
        last = report.validation;
    }
    let last = match last {
        Some(v) => v,
        None => trainer.validate(&data.val)?,
    };
    Ok((trainer, last, max_alpha))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Experiment1Row {
    pub label: String,
    pub mode: ModelMode,
    pub re_per_word: f64,
    pub kl_per_word: f64,
    /// Largest KL weight applied during training; zero by construction.
    pub alpha: f64,
}

fn posterior_label(mode: ModelMode) -> &'static str {
    match mode {
        ModelMode::Cvae => "Co-attention",
        ModelMode::CvaeMeanpool => "Mean-pool (VNMT)",
        ModelMode::Seq2seq => "Seq2seq",
    }
}

/// Trains both posterior variants with `J = RE` and reports final validation RE.
///
/// The two configurations must agree on everything except the posterior
/// type. Their mitigation is replaced by `kl_coeff:0`, so the prior network
/// receives no gradient.
pub fn experiment1_zeroed_kl(a: &TrainConfig, b: &TrainConfig, data: &ExperimentData) -> Result<Vec<Experiment1Row>> {
    let modes = [a.mode, b.mode];
    if !(modes.contains(&ModelMode::Cvae) && modes.contains(&ModelMode::CvaeMeanpool)) {
        return Err(Error::Config(format!(
            "experiment 1 compares cvae with cvae_meanpool_posterior, got {} and {}",
            a.mode, b.mode
        )));
    }
    let (mut a2, mut b2) = (a.clone(), b.clone());
    a2.mode = ModelMode::Cvae;
    b2.mode = ModelMode::Cvae;
    a2.mitigation = Mitigation::KlCoeff(0.0);
    b2.mitigation = Mitigation::KlCoeff(0.0);
    if a2 != b2 {
        return Err(Error::Config("experiment 1 configurations may differ only in posterior type".into()));
    }
    let mut rows = Vec::new();
    for cfg in [a, b] {
        let mut run = cfg.clone();
        run.mitigation = Mitigation::KlCoeff(0.0);
        let (_, v, alpha) = train_run(&run, data)?;
        rows.push(Experiment1Row {
            label: posterior_label(cfg.mode).to_string(),
            mode: cfg.mode,
            re_per_word: v.re_per_word,
            kl_per_word: v.kl_per_word.unwrap_or(0.0),
            alpha,
        });
    }
    Ok(rows)
}

pub fn experiment1_table(rows: &[Experiment1Row]) -> Table {
    let mut t = Table::new(["Model", "RE", "KL", "alpha"]);
    for r in rows {
        t.push(vec![r.label.clone(), fmt4(r.re_per_word), fmt4(r.kl_per_word), fmt4(r.alpha)]);
    }
    t
}

/// One sweep configuration: a KL mitigation plus an optional word-dropout rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepEntry {
    pub mitigation: Mitigation,
    pub word_dropout: f64,
}

impl FromStr for SweepEntry {
    type Err = Error;

    /// `warmup`, `none`, `kl_min:<m>`, `kl_coeff:<c>` or `word_dropout:<rate>` (warm-up plus dropout).
    fn from_str(s: &str) -> Result<Self> {
        if let Some(rate) = s.strip_prefix("word_dropout:") {
            let r: f64 = rate
                .parse()
                .map_err(|_| Error::Config(format!("bad word dropout rate in `{s}`")))?;
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("word dropout rate must lie in [0, 1], got `{s}`")));
            }
            return Ok(SweepEntry {
                mitigation: Mitigation::Warmup,
                word_dropout: r,
            });
        }
        Ok(SweepEntry {
            mitigation: s.parse()?,
            word_dropout: 0.0,
        })
    }
}

impl fmt::Display for SweepEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.mitigation, self.word_dropout) {
            (Mitigation::Warmup, r) if r > 0.0 => write!(f, "CVAE - word dropout = {r}"),
            (Mitigation::Warmup, _) => f.write_str("CVAE"),
            (Mitigation::None, _) => f.write_str("CVAE - alpha = 1"),
            (Mitigation::KlMin(m), _) => write!(f, "CVAE - min KL = {m}"),
            (Mitigation::KlCoeff(c), _) => write!(f, "CVAE - KL coeff = {c}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Experiment2Row {
    pub label: String,
    pub ppl: f64,
    pub nelbo: f64,
    pub re: f64,
    pub kl: f64,
    pub bleu_greedy: f64,
}

/// One training run per entry on the shared corpus and seed in `base`.
pub fn experiment2_sweep(base: &TrainConfig, entries: &[SweepEntry], data: &ExperimentData) -> Result<Vec<Experiment2Row>> {
    if !base.mode.is_variational() {
        return Err(Error::Config("experiment 2 needs a variational mode".into()));
    }
    let mut rows = Vec::new();
    for e in entries {
        let mut cfg = base.clone();
        cfg.mitigation = e.mitigation;
        cfg.word_dropout = e.word_dropout;
        cfg.validate()?;
        let (trainer, v, _) = train_run(&cfg, data)?;
        let kl = v.kl_per_word.unwrap_or(0.0);
        rows.push(Experiment2Row {
            label: e.to_string(),
            ppl: ppl_from_nelbo(v.nelbo_per_word),
            nelbo: v.nelbo_per_word,
            re: v.re_per_word,
            kl,
            bleu_greedy: bleu_on_pairs(&trainer.model, &data.tgt_vocab, &data.val, LatentChoice::PriorMean, None)?,
        });
    }
    Ok(rows)
}

pub fn experiment2_table(rows: &[Experiment2Row]) -> Table {
    let mut t = Table::new(["Model", "PPL", "NELBO/NLL", "RE", "KL", "BLEU Greedy"]);
    for r in rows {
        t.push(vec![
            r.label.clone(),
            fmt4(r.ppl),
            fmt4(r.nelbo),
            fmt4(r.re),
            fmt4(r.kl),
            fmt_bleu(Some(r.bleu_greedy)),
        ]);
    }
    t
}
