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

//! Synthetic parallel corpora for desk-scale experiments.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::corpus::TextPair;
use crate::error::{Error, Result};

pub const MIN_SENTENCE_LEN: usize = 3;
pub const MAX_SENTENCE_LEN: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    /// Target equals source.
    Copy,
    /// Each source has two targets: itself and its reversal.
    Multimodal,
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "copy" => Ok(SynthKind::Copy),
            "multimodal" => Ok(SynthKind::Multimodal),
            other => Err(Error::invalid(format!("unknown corpus kind `{other}` (expected copy|multimodal)"))),
        }
    }
}

impl std::fmt::Display for SynthKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SynthKind::Copy => "copy",
            SynthKind::Multimodal => "multimodal",
        })
    }
}

pub fn synth_token(i: usize) -> String {
    format!("w{i}")
}

fn random_sentence<R: Rng>(rng: &mut R, vocab_size: usize, no_palindromes: bool) -> Vec<String> {
    loop {
        let len = rng.random_range(MIN_SENTENCE_LEN..=MAX_SENTENCE_LEN);
        let ids: Vec<usize> = (0..len).map(|_| rng.random_range(0..vocab_size)).collect();
        let rev: Vec<usize> = ids.iter().rev().copied().collect();
        if !no_palindromes || rev != ids {
            return ids.into_iter().map(synth_token).collect();
        }
    }
}

/// Generates `size` pairs over `vocab_size` word types.
///
/// For `Multimodal`, sources are drawn in pairs of rows: one row keeps the
/// source order, the other reverses it. Which variant is emitted first is a
/// coin flip and the rows are shuffled afterwards, so nothing on the source
/// side reveals the variant. With an odd `size` the final source gets a single
/// coin-flipped variant.
pub fn synth_corpus(kind: SynthKind, size: usize, vocab_size: usize, seed: u64) -> Result<Vec<TextPair>> {
    if vocab_size < 8 {
        return Err(Error::invalid(format!("vocab_size must be at least 8, got {vocab_size}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        SynthKind::Copy => Ok((0..size)
            .map(|_| {
                let s = random_sentence(&mut rng, vocab_size, false);
                TextPair {
                    source: s.clone(),
                    target: s,
                }
            })
            .collect()),
        SynthKind::Multimodal => {
            let mut out = Vec::with_capacity(size);
            while out.len() < size {
                let src = random_sentence(&mut rng, vocab_size, true);
                let rev: Vec<String> = src.iter().rev().cloned().collect();
                let mut variants = [src.clone(), rev];
                if rng.random_bool(0.5) {
                    variants.swap(0, 1);
                }
                for v in variants {
                    if out.len() < size {
                        out.push(TextPair {
                            source: src.clone(),
                            target: v,
                        });
                    }
                }
            }
            out.shuffle(&mut rng);
            Ok(out)
        }
    }
}

/// True when the target is the reversed source (and not also the identity).
pub fn is_reversed(pair: &TextPair) -> bool {
    pair.target != pair.source && pair.target.iter().eq(pair.source.iter().rev())
}
