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

//! Checkpoint container.
//!
//! A UTF-8 header followed by raw little-endian `f32` data:
//!
//! ```text
//! CVNMT-CHECKPOINT 1
//! [config]
//! key=value ...
//! [state]
//! epoch=.. adam.* scheduler.* rng.*
//! [src_vocab <n>]
//! token<TAB>frequency ...
//! [tgt_vocab <n>]
//! ...
//! [tensors <n>]
//! name<TAB>d0,d1<TAB>offset<TAB>count ...
//! [data]
//! <floats in directory order>
//! ```
//!
//! Offsets and counts are in floats. The directory lists model parameters,
//! then Adam first moments (`adam.m.<name>`), then second moments (`adam.v.<name>`).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use super::config::TrainConfig;
use super::trainer::Trainer;
use crate::data::Vocabulary;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::{AdamState, PlateauScheduler, Tensor};

pub const CHECKPOINT_MAGIC: &str = "CVNMT-CHECKPOINT";
pub const CHECKPOINT_VERSION: u32 = 1;
const DATA_MARKER: &str = "[data]\n";

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn unhex(s: &str) -> Option<[u8; 32]> {
    if s.len() != 64 || !s.is_ascii() {
        return None;
    }
    let mut out = [0u8; 32];
    for (i, o) in out.iter_mut().enumerate() {
        *o = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).ok()?;
    }
    Some(out)
}

/// Serializes the full training state.
pub fn checkpoint_bytes(t: &Trainer) -> Vec<u8> {
    let mut h = format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n[config]\n");
    h.push_str(&t.config.to_text());
    h.push_str("[state]\n");
    let s = &t.scheduler;
    let history: Vec<String> = s.history.iter().map(f64::to_string).collect();
    let _ = write!(
        h,
        "epoch={}\nadam.step={}\nadam.lr={}\nadam.beta1={}\nadam.beta2={}\nadam.eps={}\n\
         scheduler.best={}\nscheduler.bad_epochs={}\nscheduler.history={}\n\
         rng.seed={}\nrng.stream={}\nrng.word_pos={}\n",
        t.epoch,
        t.adam.step,
        t.adam.lr,
        t.adam.beta1,
        t.adam.beta2,
        t.adam.eps,
        s.best.map_or_else(|| "none".to_string(), |b| b.to_string()),
        s.bad_epochs,
        history.join(","),
        hex(&t.rng.get_seed()),
        t.rng.get_stream(),
        t.rng.get_word_pos(),
    );
    for (label, v) in [("src_vocab", &t.src_vocab), ("tgt_vocab", &t.tgt_vocab)] {
        let _ = writeln!(h, "[{label} {}]", v.len());
        h.push_str(&v.to_file_string());
    }
    let params = &t.model.params;
    let mut entries: Vec<(String, &Tensor<f32>)> = Vec::new();
    for id in params.ids() {
        entries.push((params.name(id).to_string(), params.get(id)));
    }
    for (prefix, moments) in [("adam.m.", &t.adam.first_moment), ("adam.v.", &t.adam.second_moment)] {
        for (id, m) in params.ids().zip(moments) {
            entries.push((format!("{prefix}{}", params.name(id)), m));
        }
    }
    let _ = writeln!(h, "[tensors {}]", entries.len());
    let mut offset = 0usize;
    for (name, tensor) in &entries {
        let shape: Vec<String> = tensor.shape().iter().map(usize::to_string).collect();
        let _ = writeln!(h, "{name}\t{}\t{offset}\t{}", shape.join(","), tensor.numel());
        offset += tensor.numel();
    }
    h.push_str(DATA_MARKER);
    let mut out = h.into_bytes();
    out.reserve(offset * 4);
    for (_, tensor) in &entries {
        for v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Writes atomically: a sibling temporary file is renamed over `path`.
pub fn save_checkpoint(t: &Trainer, path: &Path) -> Result<()> {
    let bytes = checkpoint_bytes(t);
    let tmp = path.with_extension("ckpt.partial");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Trainer> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes).map_err(|e| match e {
        Error::Checkpoint { section, message } => Error::Checkpoint {
            section,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self, section: &str) -> Result<&'a str> {
        self.inner
            .next()
            .ok_or_else(|| Error::checkpoint(section, "unexpected end of header"))
    }

    /// Reads `[name]` or `[name <count>]`, returning the count if any.
    fn section(&mut self, name: &str) -> Result<Option<usize>> {
        let line = self.next(name)?;
        let inner = line
            .strip_prefix('[')
            .and_then(|l| l.strip_suffix(']'))
            .ok_or_else(|| Error::checkpoint(name, format!("expected section header, found `{line}`")))?;
        let mut parts = inner.split(' ');
        if parts.next() != Some(name) {
            return Err(Error::checkpoint(name, format!("expected `[{name}...]`, found `{line}`")));
        }
        match parts.next() {
            None => Ok(None),
            Some(n) => n
                .parse()
                .map(Some)
                .map_err(|_| Error::checkpoint(name, format!("bad entry count `{n}`"))),
        }
    }

    /// Lines up to (not including) the next section header.
    fn body(&mut self) -> Vec<&'a str> {
        let mut out = Vec::new();
        while let Some(l) = self.inner.peek() {
            if l.starts_with('[') {
                break;
            }
            out.push(*l);
            self.inner.next();
        }
        out
    }
}

fn parse_kv<'a>(section: &str, lines: &[&'a str]) -> Result<HashMap<&'a str, &'a str>> {
    lines
        .iter()
        .map(|l| {
            l.split_once('=')
                .ok_or_else(|| Error::checkpoint(section, format!("expected key=value, found `{l}`")))
        })
        .collect()
}

fn field<T: std::str::FromStr>(kv: &HashMap<&str, &str>, key: &str) -> Result<T> {
    let raw = kv
        .get(key)
        .ok_or_else(|| Error::checkpoint("state", format!("missing `{key}`")))?;
    raw.parse()
        .map_err(|_| Error::checkpoint("state", format!("cannot parse `{key}={raw}`")))
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<Trainer> {
    let split = bytes
        .windows(DATA_MARKER.len() + 1)
        .position(|w| w[0] == b'\n' && &w[1..] == DATA_MARKER.as_bytes())
        .ok_or_else(|| Error::checkpoint("header", "no `[data]` marker; file truncated or not a checkpoint"))?;
    let header = std::str::from_utf8(&bytes[..split + 1])
        .map_err(|_| Error::checkpoint("header", "header is not valid UTF-8"))?;
    let data = &bytes[split + 1 + DATA_MARKER.len()..];
    let mut lines = Lines {
        inner: header.lines().peekable(),
    };

    let magic = lines.next("header")?;
    let version = magic
        .strip_prefix(CHECKPOINT_MAGIC)
        .map(str::trim)
        .ok_or_else(|| Error::checkpoint("header", format!("not a checkpoint (first line `{magic}`)")))?;
    if version != CHECKPOINT_VERSION.to_string() {
        return Err(Error::checkpoint(
            "header",
            format!("unsupported format version `{version}` (this build reads version {CHECKPOINT_VERSION})"),
        ));
    }

    lines.section("config")?;
    let config = TrainConfig::parse(&lines.body().join("\n")).map_err(|e| Error::checkpoint("config", e.to_string()))?;

    lines.section("state")?;
    let kv = parse_kv("state", &lines.body())?;
    let best = match *kv.get("scheduler.best").unwrap_or(&"none") {
        "none" => None,
        b => Some(b.parse().map_err(|_| Error::checkpoint("state", format!("bad scheduler.best `{b}`")))?),
    };
    let history = match kv.get("scheduler.history").copied().unwrap_or("") {
        "" => Vec::new(),
        h => h
            .split(',')
            .map(|x| x.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::checkpoint("state", "bad scheduler.history"))?,
    };
    let seed_hex: String = field(&kv, "rng.seed")?;
    let seed = unhex(&seed_hex).ok_or_else(|| Error::checkpoint("state", "bad rng.seed"))?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(field(&kv, "rng.stream")?);
    rng.set_word_pos(field(&kv, "rng.word_pos")?);
    let epoch: usize = field(&kv, "epoch")?;
    let step: u64 = field(&kv, "adam.step")?;
    let lr: f64 = field(&kv, "adam.lr")?;
    let (beta1, beta2, eps): (f64, f64, f64) = (field(&kv, "adam.beta1")?, field(&kv, "adam.beta2")?, field(&kv, "adam.eps")?);
    let bad_epochs: usize = field(&kv, "scheduler.bad_epochs")?;

    let mut vocabs = Vec::new();
    for label in ["src_vocab", "tgt_vocab"] {
        let n = lines
            .section(label)?
            .ok_or_else(|| Error::checkpoint(label, "missing entry count"))?;
        let body = lines.body();
        if body.len() != n {
            return Err(Error::checkpoint(label, format!("declared {n} entries, found {}", body.len())));
        }
        let mut text = body.join("\n");
        text.push('\n');
        vocabs.push(Vocabulary::parse(&text).map_err(|e| Error::checkpoint(label, e.to_string()))?);
    }
    let tgt_vocab = vocabs.pop().expect("two vocabularies");
    let src_vocab = vocabs.pop().expect("two vocabularies");

    let n_tensors = lines
        .section("tensors")?
        .ok_or_else(|| Error::checkpoint("tensors", "missing entry count"))?;
    let body = lines.body();
    if body.len() != n_tensors {
        return Err(Error::checkpoint("tensors", format!("declared {n_tensors} entries, found {}", body.len())));
    }
    let mut directory: HashMap<&str, (Vec<usize>, usize, usize)> = HashMap::new();
    let mut total = 0usize;
    for line in &body {
        let bad = || Error::checkpoint("tensors", format!("malformed entry `{line}`"));
        let parts: Vec<&str> = line.split('\t').collect();
        let [name, shape, offset, count] = parts[..] else { return Err(bad()) };
        let shape: Vec<usize> = shape.split(',').map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
        let offset: usize = offset.parse().map_err(|_| bad())?;
        let count: usize = count.parse().map_err(|_| bad())?;
        if shape.iter().product::<usize>() != count {
            return Err(bad());
        }
        total = total.max(offset + count);
        if directory.insert(name, (shape, offset, count)).is_some() {
            return Err(Error::checkpoint("tensors", format!("duplicate entry `{name}`")));
        }
    }
    if data.len() != total * 4 {
        return Err(Error::checkpoint(
            "data",
            format!("expected {} bytes of tensor data, found {} (truncated or corrupt)", total * 4, data.len()),
        ));
    }
    let read = |name: &str, want: &[usize]| -> Result<Tensor<f32>> {
        let (shape, offset, count) = directory
            .get(name)
            .ok_or_else(|| Error::checkpoint("tensors", format!("missing tensor `{name}`")))?;
        if shape != want {
            return Err(Error::checkpoint(
                "tensors",
                format!("tensor `{name}` has shape {shape:?}, model expects {want:?}"),
            ));
        }
        let values = data[offset * 4..(offset + count) * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Tensor::new(shape.clone(), values).map_err(|e| Error::checkpoint("tensors", e.to_string()))
    };

    let mut model = Model::zeroed(config.model_config(src_vocab.len(), tgt_vocab.len()))
        .map_err(|e| Error::checkpoint("config", e.to_string()))?;
    let mut adam = AdamState::new(&model.params, lr);
    let ids: Vec<_> = model.params.ids().collect();
    for (i, id) in ids.into_iter().enumerate() {
        let name = model.params.name(id).to_string();
        let shape = model.params.get(id).shape().to_vec();
        *model.params.get_mut(id) = read(&name, &shape)?;
        adam.first_moment[i] = read(&format!("adam.m.{name}"), &shape)?;
        adam.second_moment[i] = read(&format!("adam.v.{name}"), &shape)?;
    }
    if directory.len() != 3 * model.params.len() {
        return Err(Error::checkpoint(
            "tensors",
            format!("{} entries, model has {} parameters", directory.len(), model.params.len()),
        ));
    }
    adam.step = step;
    adam.beta1 = beta1;
    adam.beta2 = beta2;
    adam.eps = eps;
    let mut scheduler = PlateauScheduler::new(config.lr_patience, config.lr_factor, config.lr_min);
    scheduler.best = best;
    scheduler.bad_epochs = bad_epochs;
    scheduler.history = history;
    Ok(Trainer {
        config,
        src_vocab,
        tgt_vocab,
        model,
        adam,
        scheduler,
        rng,
        epoch,
    })
}
