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

//! Python bindings: corpus tools, training, decoding and scoring.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cvnmt::data::{self, SynthKind, TextPair};
use cvnmt::evaluation::{self, latent_for, translate_ids, EvalOptions, LatentChoice};
use cvnmt::exploration::{self, SampleOptions};
use cvnmt::latent::{self, GaussianParams};
use cvnmt::training::{self, TrainConfig};

fn err(e: cvnmt::Error) -> PyErr {
    match e {
        cvnmt::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn text_pairs(pairs: &[(String, String)]) -> Vec<TextPair> {
    pairs.iter().map(|(s, t)| TextPair::new(s, t)).collect()
}

fn latent_choice(name: &str) -> PyResult<LatentChoice> {
    match name {
        "prior_mean" => Ok(LatentChoice::PriorMean),
        "zero" => Ok(LatentChoice::Zero),
        "sample" => Ok(LatentChoice::Sample),
        other => Err(PyValueError::new_err(format!(
            "latent must be prior_mean, zero or sample, got `{other}`"
        ))),
    }
}

/// Word list with frequency counts and reserved special tokens.
#[pyclass(name = "Vocabulary", module = "pycvnmt", from_py_object)]
#[derive(Clone)]
struct PyVocabulary {
    inner: data::Vocabulary,
}

#[pymethods]
impl PyVocabulary {
    /// Builds a vocabulary from whitespace-tokenized sentences.
    #[staticmethod]
    #[pyo3(signature = (sentences, min_freq = 1))]
    fn build(sentences: Vec<String>, min_freq: u64) -> PyResult<Self> {
        let toks: Vec<Vec<String>> = sentences.iter().map(|s| data::tokenize(s)).collect();
        let inner = data::build_vocab(toks.iter().map(|t| t.as_slice()), min_freq).map_err(err)?;
        Ok(PyVocabulary { inner })
    }

    fn encode(&self, sentence: &str) -> Vec<usize> {
        self.inner.encode(&data::tokenize(sentence))
    }

    fn decode(&self, ids: Vec<usize>) -> String {
        self.inner.decode(&ids).join(" ")
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __contains__(&self, token: &str) -> bool {
        self.inner.contains(token)
    }
}

/// Model, optimizer and data streams for one training run.
#[pyclass(name = "Trainer", module = "pycvnmt")]
struct PyTrainer {
    inner: training::Trainer,
    train: Vec<data::SentencePair>,
    val: Vec<data::SentencePair>,
}

fn epoch_dict<'py>(py: Python<'py>, r: &training::EpochReport) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let d = pyo3::types::PyDict::new(py);
    d.set_item("epoch", r.train.epoch)?;
    d.set_item("train_re", r.train.re_per_word)?;
    d.set_item("train_kl", r.train.kl_per_word)?;
    d.set_item("alpha", r.train.alpha)?;
    d.set_item("train_j", r.train.j_per_word)?;
    d.set_item("lr", r.train.lr)?;
    d.set_item("next_lr", r.next_lr)?;
    if let Some(v) = &r.validation {
        d.set_item("val_re", v.re_per_word)?;
        d.set_item("val_kl", v.kl_per_word)?;
        d.set_item("val_nelbo", v.nelbo_per_word)?;
        d.set_item("val_ppl", v.ppl)?;
    }
    Ok(d)
}

impl PyTrainer {
    fn encode_source(&self, sentence: &str) -> PyResult<Vec<usize>> {
        let src = self.inner.src_vocab.encode(&data::tokenize(sentence));
        if src.is_empty() {
            return Err(PyValueError::new_err("empty source sentence"));
        }
        Ok(src)
    }

    fn text(&self, ids: &[usize]) -> String {
        self.inner.tgt_vocab.decode(ids).join(" ")
    }
}

#[pymethods]
impl PyTrainer {
    /// `config` maps configuration keys to values, as in a config file.
    /// Vocabularies are built from `train` with the configured `min_freq`.
    #[new]
    #[pyo3(signature = (train, val = None, config = None))]
    fn new(
        train: Vec<(String, String)>,
        val: Option<Vec<(String, String)>>,
        config: Option<std::collections::HashMap<String, String>>,
    ) -> PyResult<Self> {
        let mut cfg = TrainConfig::default();
        if let Some(c) = config {
            let mut keys: Vec<_> = c.into_iter().collect();
            keys.sort();
            for (k, v) in keys {
                cfg.set(&k, &v).map_err(err)?;
            }
        }
        cfg.validate().map_err(err)?;
        let train = text_pairs(&train);
        if train.is_empty() {
            return Err(PyValueError::new_err("training set is empty"));
        }
        let src_vocab = data::build_vocab(train.iter().map(|p| p.source.as_slice()), cfg.min_freq).map_err(err)?;
        let tgt_vocab = data::build_vocab(train.iter().map(|p| p.target.as_slice()), cfg.min_freq).map_err(err)?;
        let val = data::encode_pairs(&text_pairs(&val.unwrap_or_default()), &src_vocab, &tgt_vocab);
        let train = data::encode_pairs(&train, &src_vocab, &tgt_vocab);
        let inner = training::Trainer::new(cfg, src_vocab, tgt_vocab).map_err(err)?;
        Ok(PyTrainer { inner, train, val })
    }

    /// Restores a checkpoint; training data must be supplied again to continue.
    #[staticmethod]
    #[pyo3(signature = (path, train = None, val = None))]
    fn load(path: PathBuf, train: Option<Vec<(String, String)>>, val: Option<Vec<(String, String)>>) -> PyResult<Self> {
        let inner = training::load_checkpoint(&path).map_err(err)?;
        let enc = |p: Option<Vec<(String, String)>>| {
            data::encode_pairs(&text_pairs(&p.unwrap_or_default()), &inner.src_vocab, &inner.tgt_vocab)
        };
        Ok(PyTrainer {
            train: enc(train),
            val: enc(val),
            inner,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        training::save_checkpoint(&self.inner, &path).map_err(err)
    }

    /// One training epoch plus validation when a held-out set was given.
    fn run_epoch<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
        let val = (!self.val.is_empty()).then_some(self.val.as_slice());
        let r = self.inner.run_epoch(&self.train, val).map_err(err)?;
        epoch_dict(py, &r)
    }

    #[getter]
    fn epoch(&self) -> usize {
        self.inner.epoch
    }

    #[getter]
    fn lr(&self) -> f64 {
        self.inner.lr()
    }

    #[getter]
    fn config(&self) -> String {
        self.inner.config.to_text()
    }

    #[getter]
    fn src_vocab(&self) -> PyVocabulary {
        PyVocabulary { inner: self.inner.src_vocab.clone() }
    }

    #[getter]
    fn tgt_vocab(&self) -> PyVocabulary {
        PyVocabulary { inner: self.inner.tgt_vocab.clone() }
    }

    /// Greedy (or beam, when `beam` is set) translation of one sentence.
    #[pyo3(signature = (sentence, beam = None, latent = "prior_mean", seed = 1))]
    fn translate(&self, sentence: &str, beam: Option<usize>, latent: &str, seed: u64) -> PyResult<String> {
        let src = self.encode_source(sentence)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = &self.inner.model;
        let z = latent_for(model, &src, latent_choice(latent)?, &mut rng).map_err(err)?;
        let h = translate_ids(model, &src, z.as_deref(), beam).map_err(err)?;
        Ok(self.text(&h.tokens))
    }

    /// `n` prior samples, deduplicated and ranked: list of (score, translation).
    #[pyo3(signature = (sentence, n = 20, seed = 1, keep_duplicates = false, by_total = false))]
    fn sample(&self, sentence: &str, n: usize, seed: u64, keep_duplicates: bool, by_total: bool) -> PyResult<Vec<(f64, String)>> {
        let src = self.encode_source(sentence)?;
        let opts = SampleOptions { keep_duplicates, by_total };
        let s = exploration::sample_ranked(&self.inner.model, &src, n, seed, opts).map_err(err)?;
        Ok(s.iter().map(|x| (x.score(by_total), self.text(&x.tokens))).collect())
    }

    /// Greedy decodes at `steps` evenly spaced points between two prior draws.
    #[pyo3(signature = (sentence, steps = 5, seed = 1))]
    fn interpolate(&self, sentence: &str, steps: usize, seed: u64) -> PyResult<Vec<String>> {
        let src = self.encode_source(sentence)?;
        let model = &self.inner.model;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || -> PyResult<Vec<f64>> {
            latent_for(model, &src, LatentChoice::Sample, &mut rng)
                .map_err(err)?
                .ok_or_else(|| PyValueError::new_err("interpolation needs a variational model"))
        };
        let (z1, z2) = (draw()?, draw()?);
        let hs = exploration::interpolate(model, &src, &z1, &z2, steps).map_err(err)?;
        Ok(hs.iter().map(|h| self.text(&h.tokens)).collect())
    }

    /// Evaluation row on sentence pairs: dict with ppl, nelbo, re, kl and BLEU columns.
    #[pyo3(signature = (pairs, beam = Some(10)))]
    fn evaluate<'py>(&self, py: Python<'py>, pairs: Vec<(String, String)>, beam: Option<usize>) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
        let enc = data::encode_pairs(&text_pairs(&pairs), &self.inner.src_vocab, &self.inner.tgt_vocab);
        let opts = EvalOptions {
            beam,
            batch_size: self.inner.config.batch_size,
            eval_seed: self.inner.config.eval_seed,
        };
        let row = evaluation::evaluate("", &self.inner.model, &self.inner.tgt_vocab, &enc, opts).map_err(err)?;
        let d = pyo3::types::PyDict::new(py);
        d.set_item("ppl", row.ppl)?;
        d.set_item("nelbo", row.nelbo)?;
        d.set_item("re", row.re)?;
        d.set_item("kl", row.kl)?;
        d.set_item("bleu_greedy", row.bleu_greedy)?;
        d.set_item("bleu_zero_latent", row.bleu_zero_latent)?;
        d.set_item("bleu_beam", row.bleu_beam)?;
        Ok(d)
    }
}

/// Synthetic parallel corpus as (source, target) sentence pairs.
#[pyfunction]
#[pyo3(signature = (kind, size, vocab_size, seed = 1))]
fn synth_corpus(kind: &str, size: usize, vocab_size: usize, seed: u64) -> PyResult<Vec<(String, String)>> {
    let kind: SynthKind = kind.parse().map_err(err)?;
    let pairs = data::synth_corpus(kind, size, vocab_size, seed).map_err(err)?;
    Ok(pairs.into_iter().map(|p| (p.source.join(" "), p.target.join(" "))).collect())
}

/// Corpus BLEU of whitespace-tokenized hypotheses against references.
#[pyfunction]
fn corpus_bleu(hypotheses: Vec<String>, references: Vec<String>) -> PyResult<f64> {
    let h: Vec<Vec<String>> = hypotheses.iter().map(|s| data::tokenize(s)).collect();
    let r: Vec<Vec<String>> = references.iter().map(|s| data::tokenize(s)).collect();
    Ok(evaluation::corpus_bleu(&h, &r).map_err(err)?.bleu)
}

/// KL(q || p) between diagonal Gaussians given means and log-variances.
#[pyfunction]
fn kl_diag_gauss(q_mean: Vec<f64>, q_log_var: Vec<f64>, p_mean: Vec<f64>, p_log_var: Vec<f64>) -> PyResult<f64> {
    let q = GaussianParams { mean: q_mean, log_var: q_log_var };
    let p = GaussianParams { mean: p_mean, log_var: p_log_var };
    latent::kl_diag_gauss(&q, &p).map_err(err)
}

#[pyfunction]
fn kl_warmup_alpha(epoch: usize) -> f64 {
    training::kl_warmup_alpha(epoch)
}

#[pyfunction]
fn ppl_from_nelbo(nelbo_per_word: f64) -> f64 {
    evaluation::ppl_from_nelbo(nelbo_per_word)
}

#[pymodule]
fn pycvnmt(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyVocabulary>()?;
    m.add_class::<PyTrainer>()?;
    m.add_function(wrap_pyfunction!(synth_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(corpus_bleu, m)?)?;
    m.add_function(wrap_pyfunction!(kl_diag_gauss, m)?)?;
    m.add_function(wrap_pyfunction!(kl_warmup_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(ppl_from_nelbo, m)?)?;
    Ok(())
}
