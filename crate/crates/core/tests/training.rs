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

//! Objective, training loop, validation and checkpoints.

mod common;

use common::{rng, toy_model, two_pairs};
use cvnmt::data::{synth_corpus, Batch, SynthKind, BOS, EOS, PAD, UNK};
use cvnmt::latent::standard_normal;
use cvnmt::model::ModelMode;
use cvnmt::numerics::{grad_check_params, Graph, Tensor};
use cvnmt::training::{
    batch_objective, checkpoint_bytes, kl_warmup_alpha, load_checkpoint, metrics_rows, objective, parse_checkpoint,
    save_checkpoint, word_dropout, Mitigation, TrainConfig, Trainer, METRICS_HEADER,
};
use cvnmt::Error;
use proptest::prelude::*;

fn toy_trainer(mode: ModelMode, mitigation: Mitigation, seed: u64) -> (Trainer, common::Corpus, common::Corpus) {
    let train = common::corpus(&synth_corpus(SynthKind::Multimodal, 24, 8, 3).unwrap());
    let val_text = synth_corpus(SynthKind::Multimodal, 8, 8, 4).unwrap();
    let val = common::Corpus {
        pairs: cvnmt::data::encode_pairs(&val_text, &train.src_vocab, &train.tgt_vocab),
        src_vocab: train.src_vocab.clone(),
        tgt_vocab: train.tgt_vocab.clone(),
    };
    let config = TrainConfig {
        mode,
        mitigation,
        epochs: 5,
        batch_size: 4,
        lr: 0.01,
        d_emb: 8,
        d_hid: 8,
        layers: 2,
        d_z: 4,
        seed,
        min_freq: 1,
        ..TrainConfig::default()
    };
    let t = Trainer::new(config, train.src_vocab.clone(), train.tgt_vocab.clone()).unwrap();
    (t, train, val)
}

#[test]
fn warmup_schedule() {
    for e in 1..=5 {
        assert_eq!(kl_warmup_alpha(e), 0.0);
    }
    assert_eq!(kl_warmup_alpha(6), 0.1);
    assert_eq!(kl_warmup_alpha(10), 0.5);
    for e in 15..40 {
        assert_eq!(kl_warmup_alpha(e), 1.0);
    }
}

#[test]
fn objective_examples() {
    let b = objective(1.9677, 0.0788, Mitigation::KlMin(0.1), 1).unwrap();
    assert!((b.j_per_word - 2.0677).abs() < 1e-12);
    assert_eq!(b.alpha, 0.0);
    let b = objective(2.0, 0.4, Mitigation::KlCoeff(0.25), 1).unwrap();
    assert!((b.j_per_word - 2.1).abs() < 1e-12);
    let b = objective(2.0, 0.4, Mitigation::KlMin(0.1), 1).unwrap();
    assert!((b.j_per_word - 2.4).abs() < 1e-12);
    assert_eq!(objective(3.0, 7.0, Mitigation::Warmup, 3).unwrap().j_per_word, 3.0);
    assert_eq!(objective(3.0, 7.0, Mitigation::None, 3).unwrap().j_per_word, 10.0);
    assert!(objective(3.0, -0.1, Mitigation::Warmup, 3).is_err());
    assert!(objective(f64::NAN, 0.1, Mitigation::Warmup, 3).is_err());
}

proptest! {
    #[test]
    fn objective_matches_its_definition(re in 0.0f64..10.0, kl in 0.0f64..5.0, m in 0.0f64..3.0, epoch in 1usize..30) {
        let w = objective(re, kl, Mitigation::Warmup, epoch).unwrap();
        prop_assert!((w.j_per_word - (re + kl_warmup_alpha(epoch) * kl)).abs() < 1e-12);
        let f = objective(re, kl, Mitigation::KlMin(m), epoch).unwrap();
        prop_assert!((f.j_per_word - (re + kl.max(m))).abs() < 1e-12);
        let c = objective(re, kl, Mitigation::KlCoeff(m), epoch).unwrap();
        prop_assert!((c.j_per_word - (re + m * kl)).abs() < 1e-12);
    }

    #[test]
    fn word_dropout_never_touches_specials(rate in 0.0f64..=1.0, seed in 0u64..500) {
        let batch = Batch::from_pairs(&two_pairs()).unwrap();
        let d = word_dropout(&batch, rate, &mut rng(seed)).unwrap();
        for (orig, new) in [(&batch.src, &d.src), (&batch.tgt, &d.tgt)] {
            prop_assert_eq!(&orig.lens, &new.lens);
            for (&a, &b) in orig.ids.iter().zip(&new.ids) {
                if [PAD, BOS, EOS].contains(&a) {
                    prop_assert_eq!(a, b);
                } else {
                    prop_assert!(b == a || b == UNK);
                }
            }
        }
    }
}

fn param_grads(
    m: &cvnmt::model::Model<f64>,
    batch: &Batch,
    noise: &Tensor<f64>,
    mitigation: Mitigation,
    epoch: usize,
) -> (f64, f64, Vec<Tensor<f64>>) {
    let mut g = Graph::new();
    let fp = m.forward(&mut g, batch, None, Some(noise)).unwrap();
    let (j, b) = batch_objective(&mut g, &fp, batch.target_words(), mitigation, epoch).unwrap();
    let grads = g.backward(j).unwrap().params(&g, &m.params);
    (g.value(j).item(), b.re_per_word, grads)
}

#[test]
fn kl_floor_adds_a_constant_with_the_gradient_of_re_alone() {
    let m = toy_model::<f64>(ModelMode::Cvae, 14, 21);
    let batch = Batch::from_pairs(&two_pairs()).unwrap();
    let noise = standard_normal(&mut rng(4), 2, 4);
    let (nelbo, re_none, _) = param_grads(&m, &batch, &noise, Mitigation::None, 1);
    // Just above the actual KL: a large constant offset would swamp the finite differences in rounding error.
    let floor = (nelbo - re_none + 0.5).round();
    let (j, re, g_floor) = param_grads(&m, &batch, &noise, Mitigation::KlMin(floor), 1);
    assert_eq!(j, re + floor);
    let (j0, _, g_re) = param_grads(&m, &batch, &noise, Mitigation::KlCoeff(0.0), 1);
    assert_eq!(j0, re);
    assert_eq!(g_floor, g_re);
    // Finite differences over every coordinate agree with the analytic gradient.
    let words = batch.target_words();
    let r = grad_check_params(
        &m.params,
        |g, p| {
            let fp = m.with_params(p.clone()).forward(g, &batch, None, Some(&noise))?;
            Ok(batch_objective(g, &fp, words, Mitigation::KlMin(floor), 1)?.0)
        },
        1e-5,
        |_| true,
    )
    .unwrap();
    assert!(r.max_rel_error < 1e-4, "{:e} at {:?}", r.max_rel_error, r.worst);
}

#[test]
fn warmup_kl_term_contributes_no_gradient_before_epoch_six() {
    let m = toy_model::<f64>(ModelMode::Cvae, 14, 22);
    let batch = Batch::from_pairs(&two_pairs()).unwrap();
    let noise = standard_normal(&mut rng(5), 2, 4);
    let (_, _, re_only) = param_grads(&m, &batch, &noise, Mitigation::KlCoeff(0.0), 1);
    for epoch in 1..=5 {
        assert_eq!(param_grads(&m, &batch, &noise, Mitigation::Warmup, epoch).2, re_only);
    }
    assert_ne!(param_grads(&m, &batch, &noise, Mitigation::Warmup, 6).2, re_only);
}

#[test]
fn alpha_zero_epoch_leaves_the_prior_untouched() {
    let (mut t, train, _) = toy_trainer(ModelMode::Cvae, Mitigation::Warmup, 1);
    let before = t.model.params.clone();
    let m = t.train_epoch(&train.pairs).unwrap();
    assert_eq!(m.alpha, 0.0);
    let prior = t.model.prior.clone().unwrap();
    for id in prior.ids() {
        assert_eq!(t.model.params.get(id), before.get(id), "{}", t.model.params.name(id));
    }
    let post = t.model.posterior.clone().unwrap();
    assert_ne!(t.model.params.get(post.w_z), before.get(post.w_z));
}

#[test]
fn identical_seeds_give_identical_metrics() {
    let run = |seed| {
        let (mut t, train, val) = toy_trainer(ModelMode::Cvae, Mitigation::KlCoeff(0.5), seed);
        let reports: Vec<_> = (0..3).map(|_| t.run_epoch(&train.pairs, Some(&val.pairs)).unwrap()).collect();
        (reports, checkpoint_bytes(&t))
    };
    let (a, ca) = run(7);
    let (b, cb) = run(7);
    assert_eq!(a, b);
    assert_eq!(ca, cb);
    let (c, _) = run(8);
    assert_ne!(a, c);
}

#[test]
fn validation_reports_a_consistent_bound() {
    for mode in [ModelMode::Cvae, ModelMode::CvaeMeanpool, ModelMode::Seq2seq] {
        let (mut t, train, val) = toy_trainer(mode, Mitigation::Warmup, 2);
        let r = t.run_epoch(&train.pairs, Some(&val.pairs)).unwrap();
        let v = r.validation.unwrap();
        let kl = v.kl_per_word.unwrap_or(0.0);
        assert_eq!(v.kl_per_word.is_some(), mode.is_variational());
        assert!((v.nelbo_per_word - (v.re_per_word + kl)).abs() < 1e-6);
        assert!((v.ppl - v.nelbo_per_word.exp()).abs() < 1e-9 * v.ppl);
        assert!(kl >= 0.0);
        assert_eq!(v, t.validate(&val.pairs).unwrap());
        let rows = metrics_rows(&r, 0.0);
        let n_cols = METRICS_HEADER.split(',').count();
        assert!(rows.lines().all(|l| l.split(',').count() == n_cols));
        assert_eq!(rows.lines().count(), 2);
        assert_eq!(rows.contains(",NA,"), !mode.is_variational());
    }
}

#[test]
fn learning_rate_never_increases() {
    let (mut t, train, val) = toy_trainer(ModelMode::Cvae, Mitigation::Warmup, 3);
    let mut lr = t.lr();
    for _ in 0..8 {
        let r = t.run_epoch(&train.pairs, Some(&val.pairs)).unwrap();
        assert!(r.next_lr <= lr && r.next_lr == t.lr());
        lr = r.next_lr;
    }
}

#[test]
fn non_finite_loss_reports_the_failing_batch() {
    let (mut t, train, _) = toy_trainer(ModelMode::Cvae, Mitigation::None, 4);
    let id = t.model.decoder.b_v;
    t.model.params.get_mut(id).data_mut()[5] = f32::NAN;
    let e = t.train_epoch(&train.pairs).unwrap_err().to_string();
    assert!(e.contains("epoch 1, batch 0"), "{e}");
}

#[test]
fn dropout_masks_the_translation_path_only() {
    let m = toy_model::<f64>(ModelMode::Cvae, 14, 23);
    let batch = Batch::from_pairs(&two_pairs()).unwrap();
    let dropped = word_dropout(&batch, 1.0, &mut rng(1)).unwrap();
    assert!(dropped.src.ids.iter().all(|&i| i == UNK || i == PAD));
    let noise = standard_normal(&mut rng(6), 2, 4);
    let mut g1 = Graph::new();
    let plain = m.forward(&mut g1, &batch, None, Some(&noise)).unwrap();
    let mut g2 = Graph::new();
    let masked = m.forward(&mut g2, &batch, Some(&dropped), Some(&noise)).unwrap();
    for (a, b) in [
        (plain.posterior.unwrap().mean, masked.posterior.unwrap().mean),
        (plain.prior.unwrap().log_var, masked.prior.unwrap().log_var),
        (plain.kl.unwrap(), masked.kl.unwrap()),
    ] {
        assert_eq!(g1.value(a), g2.value(b));
    }
    assert_ne!(g1.value(plain.nll), g2.value(masked.nll));
}

#[test]
fn dropout_rate_is_respected() {
    let pairs: Vec<_> = (0..500)
        .map(|i| cvnmt::data::SentencePair {
            source: (0..10).map(|k| 4 + (i + k) % 20).collect(),
            target: cvnmt::data::wrap_target((0..10).map(|k| 4 + (i * 7 + k) % 20).collect()),
        })
        .collect();
    let batch = Batch::from_pairs(&pairs).unwrap();
    let d = word_dropout(&batch, 0.5, &mut rng(9)).unwrap();
    let masked = d.src.ids.iter().chain(&d.tgt.ids).filter(|&&i| i == UNK).count();
    let frac = masked as f64 / 10_000.0;
    assert!((frac - 0.5).abs() < 0.02, "{frac}");
    assert_eq!(word_dropout(&batch, 0.0, &mut rng(9)).unwrap(), batch);
    assert!(word_dropout(&batch, 1.5, &mut rng(9)).is_err());
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let (mut t, train, val) = toy_trainer(ModelMode::Cvae, Mitigation::KlMin(0.2), 5);
    t.run_epoch(&train.pairs, Some(&val.pairs)).unwrap();
    let bytes = checkpoint_bytes(&t);
    let back = parse_checkpoint(&bytes).unwrap();
    assert_eq!(back.model, t.model);
    assert_eq!(back.adam, t.adam);
    assert_eq!(back.config, t.config);
    assert_eq!(back.epoch, 1);
    assert_eq!(checkpoint_bytes(&back), bytes);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ckpt");
    save_checkpoint(&t, &path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
    assert_eq!(checkpoint_bytes(&load_checkpoint(&path).unwrap()), bytes);
}

#[test]
fn resume_reproduces_the_uninterrupted_run() {
    let (mut full, train, val) = toy_trainer(ModelMode::Cvae, Mitigation::Warmup, 6);
    let (mut first, _, _) = toy_trainer(ModelMode::Cvae, Mitigation::Warmup, 6);
    let mut expected = Vec::new();
    for _ in 0..4 {
        expected.push(full.run_epoch(&train.pairs, Some(&val.pairs)).unwrap());
    }
    for _ in 0..2 {
        first.run_epoch(&train.pairs, Some(&val.pairs)).unwrap();
    }
    let mut resumed = parse_checkpoint(&checkpoint_bytes(&first)).unwrap();
    for e in &expected[2..] {
        assert_eq!(&resumed.run_epoch(&train.pairs, Some(&val.pairs)).unwrap(), e);
    }
    assert_eq!(checkpoint_bytes(&resumed), checkpoint_bytes(&full));
}

fn section_of(e: Error) -> String {
    match e {
        Error::Checkpoint { section, .. } => section,
        other => panic!("expected a checkpoint error, got {other}"),
    }
}

#[test]
fn corrupt_checkpoints_name_the_failing_section() {
    let (t, _, _) = toy_trainer(ModelMode::Cvae, Mitigation::Warmup, 7);
    let bytes = checkpoint_bytes(&t);
    assert_eq!(section_of(parse_checkpoint(&bytes[..bytes.len() - 3]).unwrap_err()), "data");
    assert_eq!(section_of(parse_checkpoint(&bytes[..200]).unwrap_err()), "header");
    let text = String::from_utf8_lossy(&bytes).into_owned();
    let versioned = text.replacen("CVNMT-CHECKPOINT 1", "CVNMT-CHECKPOINT 9", 1);
    let e = parse_checkpoint(versioned.as_bytes()).unwrap_err();
    assert!(e.to_string().contains('9'), "{e}");
    assert_eq!(section_of(e), "header");
    let header_end = bytes.windows(7).position(|w| w == b"\n[data]").unwrap();
    let mut broken = bytes.clone();
    let header = String::from_utf8(bytes[..header_end].to_vec()).unwrap();
    let bad = header.replacen("rng.stream=", "rng.stream=x", 1);
    broken.splice(..header_end, bad.into_bytes());
    assert_eq!(section_of(parse_checkpoint(&broken).unwrap_err()), "state");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("short.ckpt");
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    let e = load_checkpoint(&path).unwrap_err().to_string();
    assert!(e.contains("short.ckpt"), "{e}");
}
