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

//! Per-epoch metrics log in CSV form.

use std::fmt::Write as _;

use super::trainer::{EpochMetrics, EpochReport};

pub const METRICS_HEADER: &str = "epoch,split,re_per_word,kl_per_word,alpha,j_per_word,nelbo_per_word,ppl,lr,wall_clock_s";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Train row, then a validation row when present. KL prints `NA` for seq2seq.
pub fn metrics_rows(report: &EpochReport, wall_clock_s: f64) -> String {
    let t: &EpochMetrics = &report.train;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{},train,{},{},{},{},{},{},{},{}",
        t.epoch,
        t.re_per_word,
        opt(t.kl_per_word),
        t.alpha,
        t.j_per_word,
        t.nelbo_per_word,
        t.nelbo_per_word.exp(),
        t.lr,
        wall_clock_s
    );
    if let Some(v) = &report.validation {
        let alpha = if v.kl_per_word.is_some() { 1.0 } else { 0.0 };
        let _ = writeln!(
            s,
            "{},val,{},{},{},{},{},{},{},{}",
            t.epoch,
            v.re_per_word,
            opt(v.kl_per_word),
            alpha,
            v.nelbo_per_word,
            v.nelbo_per_word,
            v.ppl,
            t.lr,
            wall_clock_s
        );
    }
    s
}
