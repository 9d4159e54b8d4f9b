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

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const SPECIALS: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

pub fn is_special(id: usize) -> bool {
    id < SPECIALS.len()
}

/// Token/id bijection with the four reserved ids first.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    freqs: Vec<u64>,
    index: HashMap<String, usize>,
    min_freq: u64,
}

impl Vocabulary {
    fn from_entries(entries: Vec<(String, u64)>, min_freq: u64) -> Result<Self> {
        let mut tokens = Vec::with_capacity(entries.len() + SPECIALS.len());
        let mut freqs = Vec::with_capacity(tokens.capacity());
        for s in SPECIALS {
            tokens.push(s.to_string());
            freqs.push(0);
        }
        for (t, f) in entries {
            if SPECIALS.contains(&t.as_str()) {
                continue;
            }
            tokens.push(t);
            freqs.push(f);
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary entry `{t}`")));
            }
        }
        Ok(Vocabulary {
            tokens,
            freqs,
            index,
            min_freq,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == SPECIALS.len()
    }

    pub fn min_freq(&self) -> u64 {
        self.min_freq
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map(String::as_str).unwrap_or(SPECIALS[UNK])
    }

    pub fn frequency(&self, id: usize) -> u64 {
        self.freqs.get(id).copied().unwrap_or(0)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<&str> {
        ids.iter().map(|&i| self.token(i)).collect()
    }

    /// `token<TAB>frequency` per line, in id order.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for (t, f) in self.tokens.iter().zip(&self.freqs) {
            let _ = writeln!(out, "{t}\t{f}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let (t, f) = line
                .split_once('\t')
                .ok_or_else(|| Error::Data(format!("vocabulary line {}: expected token<TAB>frequency", n + 1)))?;
            let f: u64 = f
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("vocabulary line {}: bad frequency `{f}`", n + 1)))?;
            if n < SPECIALS.len() {
                if t != SPECIALS[n] {
                    return Err(Error::Data(format!(
                        "vocabulary line {}: expected reserved token `{}`, found `{t}`",
                        n + 1,
                        SPECIALS[n]
                    )));
                }
                continue;
            }
            entries.push((t.to_string(), f));
        }
        if entries.is_empty() && text.lines().count() < SPECIALS.len() {
            return Err(Error::Data("vocabulary file lacks reserved entries".into()));
        }
        let min_freq = entries.iter().map(|e| e.1).min().unwrap_or(1).max(1);
        Self::from_entries(entries, min_freq)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

/// Counts tokens and keeps those seen at least `min_freq` times, ordered by
/// descending frequency then lexicographically.
pub fn build_vocab<'a, I, S>(corpus: I, min_freq: u64) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a [S]>,
    S: AsRef<str> + 'a,
{
    if min_freq == 0 {
        return Err(Error::invalid("min_freq must be at least 1"));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    let mut sentences = 0usize;
    for sent in corpus {
        sentences += 1;
        for t in sent {
            *counts.entry(t.as_ref()).or_insert(0) += 1;
        }
    }
    if sentences == 0 || counts.is_empty() {
        return Err(Error::Data("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut entries: Vec<(String, u64)> = counts
        .into_iter()
        .filter(|&(t, c)| c >= min_freq && !SPECIALS.contains(&t))
        .map(|(t, c)| (t.to_string(), c))
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocabulary::from_entries(entries, min_freq)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(word: &str, n: usize) -> Vec<Vec<String>> {
        let mut c: Vec<Vec<String>> = (0..n).map(|_| vec![word.to_string(), "das".to_string()]).collect();
        c.push(vec!["ist".into(); 6]);
        c
    }

    #[test]
    fn threshold_excludes_rare_words() {
        let c = corpus("haus", 4);
        let v = build_vocab(c.iter().map(Vec::as_slice), 5).unwrap();
        assert!(!v.contains("haus"));
        assert_eq!(v.id("haus"), UNK);
        assert!(v.contains("ist"));
    }

    #[test]
    fn threshold_is_inclusive() {
        let c = corpus("haus", 5);
        let v = build_vocab(c.iter().map(Vec::as_slice), 5).unwrap();
        assert!(v.contains("haus"));
        assert_ne!(v.id("haus"), UNK);
    }

    #[test]
    fn min_freq_one_keeps_everything() {
        let c: Vec<Vec<&str>> = vec![vec!["a", "b", "c"], vec!["c", "d"]];
        let v = build_vocab(c.iter().map(Vec::as_slice), 1).unwrap();
        assert_eq!(v.len(), 4 + 4);
        // frequency desc, then lexicographic
        assert_eq!(v.decode(&[4, 5, 6, 7]), vec!["c", "a", "b", "d"]);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let c: Vec<Vec<String>> = vec![];
        assert!(build_vocab(c.iter().map(Vec::as_slice), 1).is_err());
        assert!(build_vocab([["x"].as_slice()], 0).is_err());
    }

    #[test]
    fn file_round_trip() {
        let c: Vec<Vec<&str>> = vec![vec!["a", "b", "b"]];
        let v = build_vocab(c.iter().map(Vec::as_slice), 1).unwrap();
        let text = v.to_file_string();
        assert!(text.starts_with("<pad>\t0\n<unk>\t0\n<s>\t0\n</s>\t0\nb\t2\na\t1\n"));
        let back = Vocabulary::parse(&text).unwrap();
        assert_eq!(back.decode(&[4, 5]), v.decode(&[4, 5]));
        assert_eq!(back.len(), v.len());
    }

    #[test]
    fn unk_replacement_is_idempotent() {
        let c: Vec<Vec<&str>> = vec![vec!["a", "b"]];
        let v = build_vocab(c.iter().map(Vec::as_slice), 1).unwrap();
        let once = v.decode(&v.encode(&["a", "zzz", "b"])).iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let twice = v.decode(&v.encode(&once)).iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(once, vec!["a", "<unk>", "b"]);
        assert_eq!(once, twice);
    }
}
