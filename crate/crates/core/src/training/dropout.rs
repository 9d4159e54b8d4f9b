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

use rand::Rng;

use crate::data::{is_special, Batch, UNK};
use crate::error::{Error, Result};

/// Replaces each non-special token by UNK with probability `rate`.
///
/// The returned batch feeds the encoder-decoder path only; the caller keeps
/// the original for the inference networks. One uniform draw is consumed per
/// real non-special token, source rows first, then target rows, row-major.
pub fn word_dropout<R: Rng>(batch: &Batch, rate: f64, rng: &mut R) -> Result<Batch> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::invalid(format!("word dropout rate must lie in [0, 1], got {rate}")));
    }
    let mut out = batch.clone();
    if rate == 0.0 {
        return Ok(out);
    }
    for side in [&mut out.src, &mut out.tgt] {
        for r in 0..side.batch() {
            for t in 0..side.lens[r] {
                let id = &mut side.ids[r * side.width + t];
                if !is_special(*id) && rng.random::<f64>() < rate {
                    *id = UNK;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SentencePair, BOS, EOS, PAD};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn batch(n: usize, len: usize) -> Batch {
        let pairs: Vec<SentencePair> = (0..n)
            .map(|i| {
                let words: Vec<usize> = (0..len - (i % 2)).map(|k| 4 + (k + i) % 20).collect();
                let mut target = vec![BOS];
                target.extend(&words);
                target.push(EOS);
                SentencePair { source: words, target }
            })
            .collect();
        Batch::from_pairs(&pairs).unwrap()
    }

    #[test]
    fn rate_zero_is_identity() {
        let b = batch(4, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(word_dropout(&b, 0.0, &mut rng).unwrap(), b);
    }

    #[test]
    fn rate_one_masks_every_word_but_not_specials() {
        let b = batch(4, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = word_dropout(&b, 1.0, &mut rng).unwrap();
        for (orig, new) in [(&b.src, &d.src), (&b.tgt, &d.tgt)] {
            for (&o, &n) in orig.ids.iter().zip(&new.ids) {
                match o {
                    PAD | BOS | EOS => assert_eq!(n, o),
                    _ => assert_eq!(n, UNK),
                }
            }
        }
        // the input batch is untouched
        assert!(b.src.ids.iter().all(|&i| i != UNK));
    }

    #[test]
    fn empirical_rate_concentrates() {
        let b = batch(200, 51);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let d = word_dropout(&b, 0.5, &mut rng).unwrap();
        let (mut total, mut masked) = (0usize, 0usize);
        for (orig, new) in [(&b.src, &d.src), (&b.tgt, &d.tgt)] {
            for (&o, &n) in orig.ids.iter().zip(&new.ids) {
                if !is_special(o) {
                    total += 1;
                    masked += usize::from(n == UNK);
                }
            }
        }
        assert!(total >= 10000, "{total}");
        let frac = masked as f64 / total as f64;
        assert!((frac - 0.5).abs() <= 0.02, "{frac}");
    }
}
