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

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::corpus::SentencePair;
use super::vocab::PAD;
use crate::error::{Error, Result};

/// Batches per length-sorting window.
pub const BUCKET_WINDOW_BATCHES: usize = 100;

/// Row-major `[batch, width]` id matrix padded with PAD.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaddedIds {
    pub ids: Vec<usize>,
    pub lens: Vec<usize>,
    pub width: usize,
}

impl PaddedIds {
    pub fn from_seqs<S: AsRef<[usize]>>(seqs: &[S]) -> Result<Self> {
        if seqs.is_empty() {
            return Err(Error::invalid("cannot pad an empty batch"));
        }
        let lens: Vec<usize> = seqs.iter().map(|s| s.as_ref().len()).collect();
        if lens.contains(&0) {
            return Err(Error::invalid("sequences in a batch must be non-empty"));
        }
        let width = *lens.iter().max().unwrap();
        let mut ids = vec![PAD; seqs.len() * width];
        for (r, s) in seqs.iter().enumerate() {
            ids[r * width..r * width + s.as_ref().len()].copy_from_slice(s.as_ref());
        }
        Ok(PaddedIds { ids, lens, width })
    }

    /// Like `from_seqs` but padded to at least `width` columns.
    pub fn from_seqs_with_width<S: AsRef<[usize]>>(seqs: &[S], width: usize) -> Result<Self> {
        let mut p = Self::from_seqs(seqs)?;
        if width > p.width {
            let mut ids = vec![PAD; p.batch() * width];
            for r in 0..p.batch() {
                ids[r * width..r * width + p.width].copy_from_slice(p.row(r));
            }
            p.ids = ids;
            p.width = width;
        }
        Ok(p)
    }

    pub fn batch(&self) -> usize {
        self.lens.len()
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.ids[r * self.width..(r + 1) * self.width]
    }

    /// Ids at time step `t` for every row.
    pub fn column(&self, t: usize) -> Vec<usize> {
        (0..self.batch()).map(|r| self.ids[r * self.width + t]).collect()
    }

    /// Rows that still have a real token at step `t`.
    pub fn valid_at(&self, t: usize) -> Vec<bool> {
        self.lens.iter().map(|&l| t < l).collect()
    }

    /// `batch * width` flags, true at non-PAD positions.
    pub fn mask(&self) -> Vec<bool> {
        let mut m = Vec::with_capacity(self.ids.len());
        for &l in &self.lens {
            m.extend((0..self.width).map(|t| t < l));
        }
        m
    }

    pub fn pad_count(&self) -> usize {
        self.batch() * self.width - self.lens.iter().sum::<usize>()
    }

    pub fn real_rows(&self) -> Vec<Vec<usize>> {
        (0..self.batch()).map(|r| self.row(r)[..self.lens[r]].to_vec()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub src: PaddedIds,
    pub tgt: PaddedIds,
    pub src_mask: Vec<bool>,
    pub tgt_mask: Vec<bool>,
}

impl Batch {
    pub fn from_pairs<P: std::borrow::Borrow<SentencePair>>(pairs: &[P]) -> Result<Self> {
        let src: Vec<&[usize]> = pairs.iter().map(|p| p.borrow().source.as_slice()).collect();
        let tgt: Vec<&[usize]> = pairs.iter().map(|p| p.borrow().target.as_slice()).collect();
        Self::from_padded(PaddedIds::from_seqs(&src)?, PaddedIds::from_seqs(&tgt)?)
    }

    pub fn from_padded(src: PaddedIds, tgt: PaddedIds) -> Result<Self> {
        if src.batch() != tgt.batch() {
            return Err(Error::invalid("source and target batch sizes differ"));
        }
        Ok(Batch {
            src_mask: src.mask(),
            tgt_mask: tgt.mask(),
            src,
            tgt,
        })
    }

    pub fn size(&self) -> usize {
        self.src.batch()
    }

    /// Predicted target tokens: everything after BOS, EOS included.
    pub fn target_words(&self) -> usize {
        self.tgt.lens.iter().map(|l| l - 1).sum()
    }
}

pub fn make_batches(pairs: &[SentencePair], batch_size: usize, seed: u64) -> Result<Vec<Batch>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    make_batches_with_rng(pairs, batch_size, &mut rng)
}

/// Shuffles, sorts windows of `BUCKET_WINDOW_BATCHES` batches by source
/// length, then cuts consecutive batches.
pub fn make_batches_with_rng<R: Rng>(pairs: &[SentencePair], batch_size: usize, rng: &mut R) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch_size must be at least 1"));
    }
    if pairs.is_empty() {
        return Err(Error::Data("no sentence pairs to batch".into()));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(rng);
    let window = batch_size * BUCKET_WINDOW_BATCHES;
    for chunk in order.chunks_mut(window) {
        chunk.sort_by_key(|&i| pairs[i].source.len());
    }
    order
        .chunks(batch_size)
        .map(|idx| {
            let members: Vec<&SentencePair> = idx.iter().map(|&i| &pairs[i]).collect();
            Batch::from_pairs(&members)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::vocab::{BOS, EOS};

    fn pair(src_len: usize, tgt_len: usize) -> SentencePair {
        let mut target = vec![BOS];
        target.extend(std::iter::repeat_n(5, tgt_len));
        target.push(EOS);
        SentencePair {
            source: vec![4; src_len],
            target,
        }
    }

    #[test]
    fn ten_pairs_in_fours() {
        let pairs: Vec<_> = (0..10).map(|i| pair(1 + i % 3, 2)).collect();
        let b = make_batches(&pairs, 4, 1).unwrap();
        assert_eq!(b.iter().map(Batch::size).collect::<Vec<_>>(), vec![4, 4, 2]);
    }

    #[test]
    fn equal_lengths_need_no_padding() {
        let pairs: Vec<_> = (0..9).map(|_| pair(4, 3)).collect();
        for b in make_batches(&pairs, 4, 3).unwrap() {
            assert_eq!(b.src.pad_count(), 0);
            assert_eq!(b.tgt.pad_count(), 0);
        }
    }

    #[test]
    fn masks_match_lengths() {
        let pairs: Vec<_> = (0..7).map(|i| pair(1 + i, 1 + (i * 3) % 5)).collect();
        for b in make_batches(&pairs, 3, 9).unwrap() {
            for (r, &l) in b.src.lens.iter().enumerate() {
                let row = &b.src_mask[r * b.src.width..(r + 1) * b.src.width];
                assert_eq!(row.iter().filter(|&&m| m).count(), l);
                for (t, &m) in row.iter().enumerate() {
                    assert_eq!(m, b.src.row(r)[t] != PAD);
                }
            }
        }
    }

    #[test]
    fn same_seed_same_batches() {
        let pairs: Vec<_> = (0..30).map(|i| pair(1 + i % 7, 1 + i % 4)).collect();
        assert_eq!(make_batches(&pairs, 4, 11).unwrap(), make_batches(&pairs, 4, 11).unwrap());
        assert!(make_batches(&pairs, 0, 1).is_err());
        assert!(make_batches(&[], 2, 1).is_err());
    }
}
