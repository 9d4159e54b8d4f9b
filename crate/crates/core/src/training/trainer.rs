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

//! Epoch loop, validation and learning-rate scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::dropout::word_dropout;
use super::objective::{kl_warmup_alpha, objective_on_tape, ObjectiveBreakdown};
use crate::data::{make_batches_with_rng, Batch, SentencePair, Vocabulary};
use crate::error::{Error, Result};
use crate::latent::standard_normal;
use crate::model::{ForwardPass, Model};
use crate::numerics::{clip_grad_norm, optimizer_step, AdamState, Graph, PlateauScheduler, Real, Var};

/// Training-split numbers for one epoch, all per target word.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub re_per_word: f64,
    /// `None` for seq2seq.
    pub kl_per_word: Option<f64>,
    /// KL weight in force for the epoch (last batch's effective weight under `kl_min`).
    pub alpha: f64,
    pub j_per_word: f64,
    pub nelbo_per_word: f64,
    pub words: usize,
    /// Learning rate used throughout the epoch.
    pub lr: f64,
}

/// Held-out evaluation: one posterior sample per sentence, KL weight 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidationMetrics {
    pub re_per_word: f64,
    pub kl_per_word: Option<f64>,
    /// NELBO for variational models, NLL for seq2seq.
    pub nelbo_per_word: f64,
    pub ppl: f64,
    pub words: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochReport {
    pub train: EpochMetrics,
    pub validation: Option<ValidationMetrics>,
    /// Learning rate for the next epoch after the scheduler step.
    pub next_lr: f64,
}

/// Everything that evolves during training. Checkpoints serialize this whole struct.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub src_vocab: Vocabulary,
    pub tgt_vocab: Vocabulary,
    pub model: Model<f32>,
    pub adam: AdamState<f32>,
    pub scheduler: PlateauScheduler,
    pub rng: ChaCha8Rng,
    /// Completed epochs.
    pub epoch: usize,
}

fn sum_per_word<F: Real>(g: &mut Graph<F>, per_sentence: Var, words: usize) -> Result<Var> {
    let s = g.sum_all(per_sentence)?;
    g.scale(s, F::lit(1.0 / words as f64))
}

impl Trainer {
    /// Fresh model and optimizer; the RNG seeded from `config.seed` first draws the initial weights.
    pub fn new(config: TrainConfig, src_vocab: Vocabulary, tgt_vocab: Vocabulary) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let model = Model::new(config.model_config(src_vocab.len(), tgt_vocab.len()), &mut rng)?;
        let adam = AdamState::new(&model.params, config.lr);
        let scheduler = PlateauScheduler::new(config.lr_patience, config.lr_factor, config.lr_min);
        Ok(Trainer {
            config,
            src_vocab,
            tgt_vocab,
            model,
            adam,
            scheduler,
            rng,
            epoch: 0,
        })
    }

    pub fn lr(&self) -> f64 {
        self.adam.lr
    }

    /// Runs one pass over `pairs` and advances the epoch counter.
    pub fn train_epoch(&mut self, pairs: &[SentencePair]) -> Result<EpochMetrics> {
        if pairs.is_empty() {
            return Err(Error::invalid("train_epoch: empty training set"));
        }
        let epoch = self.epoch + 1;
        let lr = self.adam.lr;
        let batches = make_batches_with_rng(pairs, self.config.batch_size, &mut self.rng)?;
        let variational = self.model.config.mode.is_variational();
        let (mut re_sum, mut kl_sum, mut j_sum, mut words) = (0.0, 0.0, 0.0, 0usize);
        let mut alpha = if variational { kl_warmup_alpha(epoch) } else { 0.0 };
        for (i, batch) in batches.iter().enumerate() {
            let b = self
                .train_batch(batch, epoch)
                .map_err(|e| {
                    Error::invalid(format!(
                        "epoch {epoch}, batch {i} ({} pairs, source width {}, target width {}): {e}",
                        batch.size(),
                        batch.src.width,
                        batch.tgt.width
                    ))
                })?;
            re_sum += b.re_sum;
            kl_sum += b.kl_sum;
            j_sum += b.j_per_word * b.words as f64;
            words += b.words;
            alpha = b.alpha;
        }
        self.epoch = epoch;
        let w = words as f64;
        let kl = variational.then_some(kl_sum / w);
        Ok(EpochMetrics {
            epoch,
            re_per_word: re_sum / w,
            kl_per_word: kl,
            alpha: if variational { alpha } else { 0.0 },
            j_per_word: j_sum / w,
            nelbo_per_word: (re_sum + kl_sum) / w,
            words,
            lr,
        })
    }

    /// Forward, backward and one Adam step on a single batch.
    pub fn train_batch(&mut self, batch: &Batch, epoch: usize) -> Result<ObjectiveBreakdown> {
        let dropped = if self.config.word_dropout > 0.0 {
            Some(word_dropout(batch, self.config.word_dropout, &mut self.rng)?)
        } else {
            None
        };
        let mode = self.model.config.mode;
        let noise = mode
            .is_variational()
            .then(|| standard_normal::<f32, _>(&mut self.rng, batch.size(), self.model.config.d_z));
        let mut g = Graph::new();
        let fp = self.model.forward(&mut g, batch, dropped.as_ref(), noise.as_ref())?;
        let words = batch.target_words();
        let (j, mut breakdown) = batch_objective(&mut g, &fp, words, self.config.mitigation, epoch)?;
        let mut grads = g.backward(j)?.params(&g, &self.model.params);
        if self.config.clip_norm > 0.0 {
            clip_grad_norm(&mut grads, self.config.clip_norm);
        }
        optimizer_step(&mut self.model.params, &grads, &mut self.adam)?;
        breakdown.words = words;
        Ok(breakdown)
    }

    /// Records the monitored metric and updates the learning rate. Returns the new rate.
    pub fn end_epoch(&mut self, metric: f64) -> f64 {
        self.adam.lr = self.scheduler.step(metric, self.adam.lr);
        self.adam.lr
    }

    /// One epoch of training, optional validation, then the scheduler step.
    /// The scheduler follows validation NELBO when a held-out set is given, training NELBO otherwise.
    pub fn run_epoch(&mut self, train: &[SentencePair], val: Option<&[SentencePair]>) -> Result<EpochReport> {
        let metrics = self.train_epoch(train)?;
        let validation = match val {
            Some(v) => Some(self.validate(v)?),
            None => None,
        };
        let monitored = validation.map_or(metrics.nelbo_per_word, |v| v.nelbo_per_word);
        let next_lr = self.end_epoch(monitored);
        Ok(EpochReport {
            train: metrics,
            validation,
            next_lr,
        })
    }

    pub fn validate(&self, pairs: &[SentencePair]) -> Result<ValidationMetrics> {
        validate(&self.model, pairs, self.config.batch_size, self.config.eval_seed)
    }
}

/// Builds the per-word objective for one batch on the tape.
pub fn batch_objective<F: Real>(
    g: &mut Graph<F>,
    fp: &ForwardPass,
    words: usize,
    mitigation: super::config::Mitigation,
    epoch: usize,
) -> Result<(Var, ObjectiveBreakdown)> {
    if words == 0 {
        return Err(Error::invalid("batch has no target words"));
    }
    let re = sum_per_word(g, fp.nll, words)?;
    let kl = match fp.kl {
        Some(k) => Some(sum_per_word(g, k, words)?),
        None => None,
    };
    let (j, mut b) = objective_on_tape(g, re, kl, mitigation, epoch)?;
    b.words = words;
    b.re_sum = b.re_per_word * words as f64;
    b.kl_sum = b.kl_per_word * words as f64;
    Ok((j, b))
}

/// Per-word RE, KL and NELBO on `pairs`, batched in the given order.
/// Noise for the single posterior sample comes from a ChaCha8 stream seeded with `eval_seed`.
pub fn validate<F: Real>(model: &Model<F>, pairs: &[SentencePair], batch_size: usize, eval_seed: u64) -> Result<ValidationMetrics> {
    if pairs.is_empty() {
        return Err(Error::invalid("validate: empty held-out set"));
    }
    if batch_size == 0 {
        return Err(Error::invalid("validate: batch size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(eval_seed);
    let variational = model.config.mode.is_variational();
    let (mut re, mut kl, mut words) = (0.0, 0.0, 0usize);
    for chunk in pairs.chunks(batch_size) {
        let batch = Batch::from_pairs(chunk)?;
        let noise = variational.then(|| standard_normal::<F, _>(&mut rng, batch.size(), model.config.d_z));
        let mut g = Graph::new();
        let fp = model.forward(&mut g, &batch, None, noise.as_ref())?;
        re += g.value(fp.nll).data().iter().map(|v| v.as_f64()).sum::<f64>();
        if let Some(k) = fp.kl {
            kl += g.value(k).data().iter().map(|v| v.as_f64()).sum::<f64>();
        }
        words += batch.target_words();
    }
    let w = words as f64;
    let nelbo = (re + kl) / w;
    Ok(ValidationMetrics {
        re_per_word: re / w,
        kl_per_word: variational.then_some(kl / w),
        nelbo_per_word: nelbo,
        ppl: nelbo.exp(),
        words,
    })
}
