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

//! Attention decoder: step distributions, teacher forcing and search.

mod common;

use common::{random_ids, rng, toy_config, toy_model, two_pairs};
use cvnmt::data::{Batch, PaddedIds, BOS, EOS};
use cvnmt::decoder::{decode_step, prepare_source, teacher_forced_nll};
use cvnmt::encoder::Side;
use cvnmt::model::{Model, ModelMode};
use cvnmt::numerics::{Graph, Real, Tensor, Var};
use rand::Rng;

const VOCAB: usize = 14;

fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn random_z<R: Rng>(r: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| r.random_range(-2.0..2.0)).collect()
}

fn z_var<F: Real>(g: &mut Graph<F>, rows: usize, z: &[f64]) -> Var {
    let data = (0..rows).flat_map(|_| z.iter().map(|&v| F::lit(v))).collect();
    g.constant(Tensor::new(vec![rows, z.len()], data).unwrap())
}

#[test]
fn step_outputs_are_distributions_and_attention_skips_padding() {
    let mut r = rng(1);
    for case in 0..20u64 {
        let m = toy_model::<f64>(ModelMode::Cvae, VOCAB, case);
        let srcs = [random_ids(&mut r, 1 + case as usize % 5, VOCAB), random_ids(&mut r, 6, VOCAB)];
        let mut g = Graph::new();
        let ann = m.encode(&mut g, &PaddedIds::from_seqs(&srcs).unwrap(), Side::Source).unwrap();
        let (ctx, init) = prepare_source(&mut g, &m.params, &m.decoder, &ann).unwrap();
        let z = if case % 2 == 0 { vec![0.0; 4] } else { random_z(&mut r, 4) };
        let zv = z_var(&mut g, 2, &z);
        let mut state = init;
        let mut prev = vec![BOS, BOS];
        for _ in 0..4 {
            let out = decode_step(&mut g, &m.params, &m.decoder, &prev, &state, &ctx, Some(zv)).unwrap();
            let lp = g.value(out.log_probs).clone();
            let att = g.value(out.attention).clone();
            for b in 0..2 {
                let row = &lp.data()[b * VOCAB..(b + 1) * VOCAB];
                assert!(log_sum_exp(row).abs() < 1e-5);
                let a = &att.data()[b * 6..(b + 1) * 6];
                assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                assert!(a.iter().all(|&w| w >= 0.0));
                assert!(a[srcs[b].len()..].iter().all(|&w| w == 0.0));
                if srcs[b].len() == 1 {
                    assert_eq!(a[0], 1.0);
                }
            }
            prev = (0..2).map(|_| r.random_range(4..VOCAB)).collect();
            state = out.state;
        }
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    let m = toy_model::<f64>(ModelMode::Cvae, VOCAB, 2);
    let mut g = Graph::new();
    let ann = m.encode(&mut g, &PaddedIds::from_seqs(&[vec![4, 5]]).unwrap(), Side::Source).unwrap();
    let (ctx, init) = prepare_source(&mut g, &m.params, &m.decoder, &ann).unwrap();
    let zv = z_var(&mut g, 1, &[0.0; 4]);
    assert!(decode_step(&mut g, &m.params, &m.decoder, &[VOCAB], &init, &ctx, Some(zv)).is_err());
    assert!(decode_step(&mut g, &m.params, &m.decoder, &[BOS], &init, &ctx, None).is_err());
    let wrong = z_var(&mut g, 1, &[0.0; 3]);
    assert!(decode_step(&mut g, &m.params, &m.decoder, &[BOS], &init, &ctx, Some(wrong)).is_err());
    assert!(m.greedy(&[4], Some(&[0.0; 4]), 0).is_err());
    assert!(m.beam(&[4], Some(&[0.0; 4]), 0, 5).is_err());
}

fn stepwise_nll<F: Real>(m: &Model<F>, src: &[usize], tgt: &[usize], z: &[f64]) -> f64 {
    let mut g = Graph::new();
    let ann = m.encode(&mut g, &PaddedIds::from_seqs(&[src]).unwrap(), Side::Source).unwrap();
    let (ctx, mut state) = prepare_source(&mut g, &m.params, &m.decoder, &ann).unwrap();
    let zv = z_var(&mut g, 1, z);
    let mut nll = 0.0;
    for j in 0..tgt.len() - 1 {
        let out = decode_step(&mut g, &m.params, &m.decoder, &[tgt[j]], &state, &ctx, Some(zv)).unwrap();
        nll -= g.value(out.log_probs).data()[tgt[j + 1]].as_f64();
        state = out.state;
    }
    nll
}

fn teacher_forced<F: Real>(m: &Model<F>, srcs: &[Vec<usize>], tgts: &[Vec<usize>], z: &[f64]) -> Vec<f64> {
    let mut g = Graph::new();
    let ann = m.encode(&mut g, &PaddedIds::from_seqs(srcs).unwrap(), Side::Source).unwrap();
    let (ctx, init) = prepare_source(&mut g, &m.params, &m.decoder, &ann).unwrap();
    let zv = z_var(&mut g, srcs.len(), z);
    let nll = teacher_forced_nll(&mut g, &m.params, &m.decoder, &PaddedIds::from_seqs(tgts).unwrap(), &ctx, &init, Some(zv)).unwrap();
    g.value(nll).data().iter().map(|v| v.as_f64()).collect()
}

#[test]
fn teacher_forcing_equals_stepwise_accumulation() {
    let mut r = rng(3);
    for case in 0..20u64 {
        let m64 = toy_model::<f64>(ModelMode::Cvae, VOCAB, 100 + case);
        let m32: Model<f32> = m64.cast();
        let srcs = vec![random_ids(&mut r, 3, VOCAB), random_ids(&mut r, 5, VOCAB)];
        let wrap = |mut w: Vec<usize>| {
            w.insert(0, BOS);
            w.push(EOS);
            w
        };
        let tgts = vec![wrap(random_ids(&mut r, 6, VOCAB)), wrap(random_ids(&mut r, 2, VOCAB))];
        let z = random_z(&mut r, 4);
        let batched64 = teacher_forced(&m64, &srcs, &tgts, &z);
        let batched32 = teacher_forced(&m32, &srcs, &tgts, &z);
        for b in 0..2 {
            let step64 = stepwise_nll(&m64, &srcs[b], &tgts[b], &z);
            let step32 = stepwise_nll(&m32, &srcs[b], &tgts[b], &z);
            assert!((batched64[b] - step64).abs() < 1e-10, "{} vs {step64}", batched64[b]);
            assert!((batched32[b] - step32).abs() < 1e-5 * step32.abs().max(1.0), "{} vs {step32}", batched32[b]);
            let score = m64.score(&srcs[b], Some(&z), &tgts[b][1..tgts[b].len() - 1], true).unwrap();
            assert!((score + step64).abs() < 1e-10);
        }
    }
}

#[test]
fn zero_parameters_predict_uniformly() {
    let m = Model::<f64>::zeroed(toy_config(ModelMode::Seq2seq, 12, VOCAB)).unwrap();
    let batch = Batch::from_pairs(&two_pairs()).unwrap();
    let mut g = Graph::new();
    let fp = m.forward(&mut g, &batch, None, None).unwrap();
    let total: f64 = g.value(fp.nll).data().iter().sum();
    let per_word = total / batch.target_words() as f64;
    assert!((per_word - (VOCAB as f64).ln()).abs() < 1e-12);
}

#[test]
fn duplicating_a_sentence_doubles_the_summed_nll() {
    let m = toy_model::<f64>(ModelMode::Seq2seq, VOCAB, 4);
    let p = two_pairs().remove(0);
    let nll = |pairs: &[cvnmt::data::SentencePair]| {
        let batch = Batch::from_pairs(pairs).unwrap();
        let mut g = Graph::new();
        let fp = m.forward(&mut g, &batch, None, None).unwrap();
        let s: f64 = g.value(fp.nll).data().iter().sum();
        (s, s / batch.target_words() as f64)
    };
    let (one, pw1) = nll(std::slice::from_ref(&p));
    let (two, pw2) = nll(&[p.clone(), p]);
    assert!((two - 2.0 * one).abs() < 1e-12);
    assert!((pw1 - pw2).abs() < 1e-12);
}

#[test]
fn zeroed_latent_still_gives_valid_distributions() {
    let m = toy_model::<f64>(ModelMode::Cvae, VOCAB, 5);
    let h = m.greedy(&[4, 5, 6], Some(&[0.0; 4]), 12).unwrap();
    let prior = m.prior_of(&[4, 5, 6]).unwrap();
    let hp = m.greedy(&[4, 5, 6], Some(&prior.mean), 12).unwrap();
    for hyp in [h, hp] {
        assert!(hyp.log_prob.is_finite() && hyp.log_prob <= 0.0);
        assert!(hyp.predicted_len() >= 1);
    }
}

#[test]
fn greedy_is_deterministic_and_respects_max_len() {
    let m = toy_model::<f64>(ModelMode::Seq2seq, VOCAB, 6);
    let h = m.greedy(&[4, 5, 6, 7], None, 1).unwrap();
    assert_eq!(h.predicted_len(), 1);
    let a = m.greedy(&[4, 5, 6, 7], None, 30).unwrap();
    assert_eq!(a, m.greedy(&[4, 5, 6, 7], None, 30).unwrap());
    assert!(a.predicted_len() <= 30);
    assert_eq!(Model::<f64>::default_max_len(&[4, 5, 6, 7]), 18);
}

#[test]
fn beam_of_width_one_is_greedy_and_wider_beams_do_no_worse() {
    let mut r = rng(7);
    let mut improved = 0;
    for case in 0..100u64 {
        let mode = if case % 2 == 0 { ModelMode::Cvae } else { ModelMode::Seq2seq };
        let m = toy_model::<f64>(mode, VOCAB, 500 + case);
        let len = r.random_range(1..7);
        let src = random_ids(&mut r, len, VOCAB);
        let z = random_z(&mut r, 4);
        let z = if mode.is_variational() { Some(z.as_slice()) } else { None };
        let max_len = Model::<f64>::default_max_len(&src);
        let greedy = m.greedy(&src, z, max_len).unwrap();
        let beam1 = m.beam(&src, z, 1, max_len).unwrap();
        assert_eq!(beam1, vec![greedy.clone()], "case {case}");

        let beam = m.beam(&src, z, 5, max_len).unwrap();
        assert!(!beam.is_empty() && beam.len() <= 5);
        assert!(beam.windows(2).all(|w| w[0].log_prob >= w[1].log_prob));
        for h in &beam {
            let rescored = m.score(&src, z, &h.tokens, h.finished).unwrap();
            assert!((rescored - h.log_prob).abs() < 1e-9);
            assert!(!h.tokens.contains(&EOS));
        }
        if greedy.finished && beam[0].finished {
            assert!(beam[0].log_prob >= greedy.log_prob - 1e-12, "case {case}: {} < {}", beam[0].log_prob, greedy.log_prob);
            if beam[0].log_prob > greedy.log_prob + 1e-12 {
                improved += 1;
            }
        }
    }
    eprintln!("beam strictly improved on greedy in {improved} of 100 cases");
}
