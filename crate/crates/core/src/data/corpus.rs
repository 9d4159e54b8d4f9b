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

use std::path::Path;

use super::vocab::{Vocabulary, BOS, EOS};
use crate::error::{Error, Result};

/// Whitespace-tokenized source/target sentence pair.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TextPair {
    pub source: Vec<String>,
    pub target: Vec<String>,
}

impl TextPair {
    pub fn new(source: &str, target: &str) -> Self {
        TextPair {
            source: tokenize(source),
            target: tokenize(target),
        }
    }
}

pub fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_string).collect()
}

/// Surviving pairs plus what was filtered out.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoadReport {
    pub pairs: Vec<TextPair>,
    pub dropped_empty: usize,
    pub dropped_long: usize,
}

/// Reads a UTF-8 file as lines, reporting the first undecodable line.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Vec::new();
    for (n, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        let line = std::str::from_utf8(raw)
            .map_err(|_| Error::Data(format!("{}: line {} is not valid UTF-8", path.display(), n + 1)))?;
        lines.push(line.to_string());
    }
    if bytes.ends_with(b"\n") {
        lines.pop();
    }
    Ok(lines)
}

/// Pairs aligned lines, dropping pairs with an empty side or a side longer than `max_len` tokens.
pub fn filter_pairs(src: &[String], tgt: &[String], max_len: usize) -> Result<LoadReport> {
    if src.len() != tgt.len() {
        return Err(Error::Data(format!(
            "line-count mismatch: source has {} lines, target has {}",
            src.len(),
            tgt.len()
        )));
    }
    let mut report = LoadReport::default();
    for (s, t) in src.iter().zip(tgt) {
        let pair = TextPair::new(s, t);
        if pair.source.is_empty() || pair.target.is_empty() {
            report.dropped_empty += 1;
        } else if pair.source.len() > max_len || pair.target.len() > max_len {
            report.dropped_long += 1;
        } else {
            report.pairs.push(pair);
        }
    }
    if report.dropped_empty > 0 {
        log::warn!("dropped {} pairs with an empty side", report.dropped_empty);
    }
    Ok(report)
}

pub fn load_parallel(src_path: &Path, tgt_path: &Path, max_len: usize) -> Result<LoadReport> {
    let src = read_lines(src_path)?;
    let tgt = read_lines(tgt_path)?;
    filter_pairs(&src, &tgt, max_len).map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{} / {}: {m}", src_path.display(), tgt_path.display())),
        other => other,
    })
}

/// Id-encoded pair; the target is wrapped in BOS/EOS, the source is not.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SentencePair {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

impl SentencePair {
    pub fn encode(pair: &TextPair, src_vocab: &Vocabulary, tgt_vocab: &Vocabulary) -> Self {
        SentencePair {
            source: src_vocab.encode(&pair.source),
            target: wrap_target(tgt_vocab.encode(&pair.target)),
        }
    }

    /// Target words without BOS/EOS.
    pub fn target_words(&self) -> &[usize] {
        &self.target[1..self.target.len() - 1]
    }
}

pub fn wrap_target(mut ids: Vec<usize>) -> Vec<usize> {
    ids.insert(0, BOS);
    ids.push(EOS);
    ids
}

pub fn encode_pairs(pairs: &[TextPair], src_vocab: &Vocabulary, tgt_vocab: &Vocabulary) -> Vec<SentencePair> {
    pairs.iter().map(|p| SentencePair::encode(p, src_vocab, tgt_vocab)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn length_filter_is_inclusive_at_the_limit() {
        let src = vec![words(101), words(100), words(3)];
        let tgt = vec![words(5), words(100), words(101)];
        let r = filter_pairs(&src, &tgt, 100).unwrap();
        assert_eq!(r.pairs.len(), 1);
        assert_eq!(r.pairs[0].source.len(), 100);
        assert_eq!(r.dropped_long, 2);
    }

    #[test]
    fn empty_lines_are_dropped_and_counted() {
        let src: Vec<String> = vec!["a b".into(), "".into(), "c".into(), "  ".into()];
        let tgt: Vec<String> = vec!["x".into(), "y".into(), "".into(), "z".into()];
        let r = filter_pairs(&src, &tgt, 100).unwrap();
        assert_eq!(r.pairs, vec![TextPair::new("a b", "x")]);
        assert_eq!(r.dropped_empty, 3);
    }

    #[test]
    fn line_count_mismatch_names_both_counts() {
        let err = filter_pairs(&["a".into()], &["b".into(), "c".into()], 10).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('1') && msg.contains('2'), "{msg}");
    }

    #[test]
    fn invalid_utf8_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.txt");
        std::fs::write(&p, b"ok line\n\xff\xfe broken\n").unwrap();
        let msg = read_lines(&p).unwrap_err().to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn survivors_keep_their_order() {
        let src: Vec<String> = vec!["a".into(), words(200), "b".into(), "c".into()];
        let tgt: Vec<String> = vec!["1".into(), "2".into(), "3".into(), "4".into()];
        let r = filter_pairs(&src, &tgt, 100).unwrap();
        let firsts: Vec<&str> = r.pairs.iter().map(|p| p.source[0].as_str()).collect();
        assert_eq!(firsts, vec!["a", "b", "c"]);
    }
}
