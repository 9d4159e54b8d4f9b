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

//! BLEU, model scoring and the experiment harnesses.

mod bleu;
mod evaluate;
mod experiments;
mod table;

pub use bleu::{corpus_bleu, BleuReport, MAX_ORDER};
pub use evaluate::{bleu_on_pairs, eval_table, evaluate, latent_for, ppl_from_nelbo, translate_ids, EvalOptions, EvalRow, LatentChoice};
pub use experiments::{
    experiment1_table, experiment1_zeroed_kl, experiment2_sweep, experiment2_table, train_run, Experiment1Row, Experiment2Row,
    ExperimentData, SweepEntry,
};
pub use table::Table;
