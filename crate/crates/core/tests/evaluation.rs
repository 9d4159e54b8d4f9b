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

//! BLEU, evaluation rows and the experiment harnesses.

mod common;

use common::toy_model;
use cvnmt::data::{synth_corpus, SynthKind};
use cvnmt::evaluation::{
    bleu_on_pairs, corpus_bleu, eval_table, evaluate, experiment1_table, experiment1_zeroed_kl, experiment2_sweep,
    experiment2_table, ppl_from_nelbo, EvalOptions, ExperimentData, LatentChoice, SweepEntry,
};
use cvnmt::model::ModelMode;
use cvnmt::training::{Mitigation, TrainConfig};
use proptest::prelude::*;

fn words(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

/// Straightforward re-derivation of smoothed corpus BLEU, quadratic n-gram matching.
fn oracle_bleu(hyps: &[Vec<u8>], refs: &[Vec<u8>]) -> f64 {
    let (mut c, mut r) = (0usize, 0usize);
    let mut log_p = 0.0;
    let mut m = [0usize; 4];
    let mut t = [0usize; 4];
    for (h, rf) in hyps.iter().zip(refs) {
        c += h.len();
        r += rf.len();
        for n in 1..=4 {
            if h.len() < n {
                continue;
            }
            let hg: Vec<&[u8]> = h.windows(n).collect();
            let rg: Vec<&[u8]> = if rf.len() >= n { rf.windows(n).collect() } else { vec![] };
            let mut used = vec![false; rg.len()];
            for g in &hg {
                if let Some(k) = (0..rg.len()).find(|&k| !used[k] && rg[k] == *g) {
                    used[k] = true;
                    m[n - 1] += 1;
                }
            }
            t[n - 1] += hg.len();
        }
    }
    if c == 0 || m[0] == 0 {
        return 0.0;
    }
    for n in 0..4 {
        let p = if n > 0 && m[n] == 0 { 1.0 / (t[n] as f64 + 1.0) } else { m[n] as f64 / t[n] as f64 };
        log_p += p.ln() / 4.0;
    }
    let bp = if c >= r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * log_p.exp()
}

fn corpus_pair() -> impl Strategy<Value = (Vec<Vec<u8>>, Vec<Vec<u8>>)> {
    (1usize..8).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(0u8..5, 0..9), n),
            prop::collection::vec(prop::collection::vec(0u8..5, 1..9), n),
        )
    })
}

proptest! {
    #[test]
    fn bleu_matches_the_oracle_and_stays_in_range((hyps, refs) in corpus_pair()) {
        let b = corpus_bleu(&hyps, &refs).unwrap();
        prop_assert!((0.0..=1.0).contains(&b.bleu));
        prop_assert!((b.bleu - oracle_bleu(&hyps, &refs)).abs() < 1e-12, "{} vs {}", b.bleu, oracle_bleu(&hyps, &refs));
    }

    #[test]
    fn bleu_ignores_sentence_order((hyps, refs) in corpus_pair(), rot in 0usize..8) {
        let k = rot % hyps.len();
        let (mut h2, mut r2) = (hyps.clone(), refs.clone());
        h2.rotate_left(k);
        r2.rotate_left(k);
        h2.reverse();
        r2.reverse();
        prop_assert_eq!(corpus_bleu(&hyps, &refs).unwrap().bleu, corpus_bleu(&h2, &r2).unwrap().bleu);
    }

    #[test]
    fn bleu_of_a_corpus_against_itself_is_one(refs in prop::collection::vec(prop::collection::vec(0u8..5, 1..9), 1..6)) {
        let b = corpus_bleu(&refs, &refs).unwrap();
        prop_assert!((b.bleu - 1.0).abs() < 1e-12);
        prop_assert_eq!(b.brevity_penalty, 1.0);
    }
}

#[test]
fn bleu_units() {
    let h = [words("the cat sat")];
    let r = [words("the cat sat down")];
    let b = corpus_bleu(&h, &r).unwrap();
    assert_eq!(&b.precisions[..3], &[1.0, 1.0, 1.0]);
    assert!((b.brevity_penalty - (1.0f64 - 4.0 / 3.0).exp()).abs() < 1e-15);
    assert!((b.bleu - 0.716531310573789).abs() < 1e-9);
    let empty: Vec<Vec<&str>> = vec![vec![], vec![]];
    assert_eq!(corpus_bleu(&empty, &[words("a b"), words("c")]).unwrap().bleu, 0.0);
    assert!(corpus_bleu::<&str, Vec<&str>, Vec<&str>>(&[], &[]).is_err());
    assert!(corpus_bleu(&[words("a")], &[words("a"), words("b")]).is_err());
}

#[test]
fn perplexities_follow_from_the_reported_bounds() {
    for (nelbo, ppl) in [(2.0426, 7.7103), (2.0397, 7.6879), (2.2273, 9.275)] {
        assert!((ppl_from_nelbo(nelbo) - ppl).abs() < 0.01);
    }
    assert_eq!(ppl_from_nelbo(0.0), 1.0);
    assert!((ppl_from_nelbo(20f64.ln()) - 20.0).abs() < 1e-9);
}

fn tiny_data(kind: SynthKind) -> ExperimentData {
    let train = synth_corpus(kind, 16, 8, 1).unwrap();
    let val = synth_corpus(kind, 6, 8, 2).unwrap();
    ExperimentData::from_text(&train, &val, 1).unwrap()
}

fn tiny_config(mode: ModelMode) -> TrainConfig {
    TrainConfig {
        mode,
        epochs: 2,
        batch_size: 4,
        lr: 0.01,
        d_emb: 6,
        d_hid: 6,
        layers: 1,
        d_z: 3,
        min_freq: 1,
        ..TrainConfig::default()
    }
}

#[test]
fn evaluation_rows_have_the_right_columns() {
    let data = tiny_data(SynthKind::Copy);
    let opts = EvalOptions { beam: Some(3), batch_size: 4, eval_seed: 7919 };
    let v = data.tgt_vocab.len();
    let cvae = toy_model::<f32>(ModelMode::Cvae, v.max(data.src_vocab.len()), 1);
    let seq = toy_model::<f32>(ModelMode::Seq2seq, v.max(data.src_vocab.len()), 1);
    let a = evaluate("CVAE", &cvae, &data.tgt_vocab, &data.val, opts).unwrap();
    let b = evaluate("Seq2seq", &seq, &data.tgt_vocab, &data.val, EvalOptions { beam: None, ..opts }).unwrap();
    assert!(a.re.is_some() && a.kl.is_some() && a.bleu_zero_latent.is_some() && a.bleu_beam.is_some());
    assert!((a.nelbo - a.re.unwrap() - a.kl.unwrap()).abs() < 1e-6);
    assert!(b.re.is_none() && b.kl.is_none() && b.bleu_zero_latent.is_none() && b.bleu_beam.is_none());
    assert_eq!(a.ppl, ppl_from_nelbo(a.nelbo));
    let t = eval_table(&[a.clone(), b]);
    assert_eq!(t.headers.len(), 8);
    assert!(t.rows[1].iter().filter(|c| c.as_str() == "NA").count() == 4);
    assert_eq!(a, evaluate("CVAE", &cvae, &data.tgt_vocab, &data.val, opts).unwrap());
    let zero = bleu_on_pairs(&cvae, &data.tgt_vocab, &data.val, LatentChoice::Zero, None).unwrap();
    assert_eq!(Some(zero), a.bleu_zero_latent);
}

#[test]
fn experiment_one_is_deterministic_and_keeps_alpha_at_zero() {
    let data = tiny_data(SynthKind::Multimodal);
    let (a, b) = (tiny_config(ModelMode::Cvae), tiny_config(ModelMode::CvaeMeanpool));
    let rows = experiment1_zeroed_kl(&a, &b, &data).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.alpha == 0.0));
    assert_eq!(rows[0].label, "Co-attention");
    let again = experiment1_zeroed_kl(&a, &b, &data).unwrap();
    assert_eq!(experiment1_table(&rows).to_csv(), experiment1_table(&again).to_csv());
    assert_eq!(rows, again);
    let mut c = b.clone();
    c.lr = 0.5;
    assert!(experiment1_zeroed_kl(&a, &c, &data).is_err());
    assert!(experiment1_zeroed_kl(&a, &tiny_config(ModelMode::Seq2seq), &data).is_err());
}

#[test]
fn experiment_two_rows_are_consistent_bounds() {
    let data = tiny_data(SynthKind::Multimodal);
    let entries: Vec<SweepEntry> = ["none", "kl_coeff:0.25", "kl_min:0.2", "word_dropout:0.1"]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect();
    assert_eq!(entries[1].mitigation, Mitigation::KlCoeff(0.25));
    let rows = experiment2_sweep(&tiny_config(ModelMode::Cvae), &entries, &data).unwrap();
    let labels: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(labels, ["CVAE - alpha = 1", "CVAE - KL coeff = 0.25", "CVAE - min KL = 0.2", "CVAE - word dropout = 0.1"]);
    for r in &rows {
        assert!((r.nelbo - r.re - r.kl).abs() < 1e-6);
        assert!((0.0..=1.0).contains(&r.bleu_greedy));
    }
    let again = experiment2_sweep(&tiny_config(ModelMode::Cvae), &entries, &data).unwrap();
    assert_eq!(experiment2_table(&rows).to_text(), experiment2_table(&again).to_text());
    assert!("word_dropout:2".parse::<SweepEntry>().is_err());
    assert!("kl_min:-1".parse::<SweepEntry>().is_err());
}
