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

//! Flat `key=value` run configuration.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelMode};

/// Rate used when word dropout is switched on without an explicit value.
pub const DEFAULT_WORD_DROPOUT: f64 = 0.1;

/// How the KL term enters the training objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mitigation {
    /// Weight 0 for epochs 1-5, then a linear ramp to 1 over ten epochs.
    Warmup,
    /// `RE + max(KL, m)`.
    KlMin(f64),
    /// `RE + c * KL`.
    KlCoeff(f64),
    /// `RE + KL` from the first epoch.
    None,
}

impl FromStr for Mitigation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse_value = |v: &str| -> Result<f64> {
            let x: f64 = v
                .parse()
                .map_err(|_| Error::Config(format!("bad mitigation value `{v}` in `{s}`")))?;
            if !x.is_finite() || x < 0.0 {
                return Err(Error::Config(format!("mitigation value must be finite and non-negative, got `{s}`")));
            }
            Ok(x)
        };
        match s.split_once(':') {
            None if s == "warmup" => Ok(Mitigation::Warmup),
            None if s == "none" => Ok(Mitigation::None),
            Some(("kl_min", v)) => Ok(Mitigation::KlMin(parse_value(v)?)),
            Some(("kl_coeff", v)) => Ok(Mitigation::KlCoeff(parse_value(v)?)),
            _ => Err(Error::Config(format!(
                "unknown mitigation `{s}` (expected warmup|none|kl_min:<m>|kl_coeff:<c>)"
            ))),
        }
    }
}

impl fmt::Display for Mitigation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mitigation::Warmup => f.write_str("warmup"),
            Mitigation::None => f.write_str("none"),
            Mitigation::KlMin(m) => write!(f, "kl_min:{m}"),
            Mitigation::KlCoeff(c) => write!(f, "kl_coeff:{c}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub mode: ModelMode,
    pub mitigation: Mitigation,
    pub word_dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub d_emb: usize,
    pub d_hid: usize,
    pub layers: usize,
    pub d_z: usize,
    pub seed: u64,
    pub eval_seed: u64,
    pub max_len: usize,
    pub min_freq: u64,
    pub beam: usize,
    /// Max gradient L2 norm; 0 disables clipping.
    pub clip_norm: f64,
    /// Plateau patience in epochs; 0 disables decay.
    pub lr_patience: usize,
    pub lr_factor: f64,
    pub lr_min: f64,
    /// When false the metrics log writes 0 for wall-clock time, keeping logs byte-reproducible.
    pub record_wall_clock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: ModelMode::Cvae,
            mitigation: Mitigation::Warmup,
            word_dropout: 0.0,
            epochs: 20,
            batch_size: 32,
            lr: 0.002,
            d_emb: 300,
            d_hid: 300,
            layers: 2,
            d_z: 32,
            seed: 1,
            eval_seed: 7919,
            max_len: 100,
            min_freq: 5,
            beam: 10,
            clip_norm: 0.0,
            lr_patience: 1,
            lr_factor: 0.5,
            lr_min: 1e-5,
            record_wall_clock: false,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected true/false, got `{v}`"))),
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 20] = [
        "mode",
        "mitigation",
        "word_dropout",
        "epochs",
        "batch_size",
        "lr",
        "d_emb",
        "d_hid",
        "layers",
        "d_z",
        "seed",
        "eval_seed",
        "max_len",
        "min_freq",
        "beam",
        "clip_norm",
        "lr_patience",
        "lr_factor",
        "lr_min",
        "record_wall_clock",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "mode" => self.mode = v.parse()?,
            "mitigation" => self.mitigation = v.parse()?,
            "word_dropout" => {
                self.word_dropout = match v {
                    "on" | "true" => DEFAULT_WORD_DROPOUT,
                    "off" | "false" => 0.0,
                    _ => parse_num(key, v)?,
                }
            }
            "epochs" => self.epochs = parse_num(key, v)?,
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "lr" => self.lr = parse_num(key, v)?,
            "d_emb" => self.d_emb = parse_num(key, v)?,
            "d_hid" => self.d_hid = parse_num(key, v)?,
            "layers" => self.layers = parse_num(key, v)?,
            "d_z" => self.d_z = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "eval_seed" => self.eval_seed = parse_num(key, v)?,
            "max_len" => self.max_len = parse_num(key, v)?,
            "min_freq" => self.min_freq = parse_num(key, v)?,
            "beam" => self.beam = parse_num(key, v)?,
            "clip_norm" => self.clip_norm = parse_num(key, v)?,
            "lr_patience" => self.lr_patience = parse_num(key, v)?,
            "lr_factor" => self.lr_factor = parse_num(key, v)?,
            "lr_min" => self.lr_min = parse_num(key, v)?,
            "record_wall_clock" => self.record_wall_clock = parse_bool(key, v)?,
            other => return Err(Error::Config(format!("unknown configuration key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines over `self`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got `{line}`", n + 1)))?;
            self.set(k, v).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = TrainConfig::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.word_dropout) {
            return Err(Error::Config(format!("word_dropout must lie in [0, 1], got {}", self.word_dropout)));
        }
        if self.batch_size == 0 || self.max_len == 0 || self.min_freq == 0 || self.beam == 0 {
            return Err(Error::Config("batch_size, max_len, min_freq and beam must be positive".into()));
        }
        if !(self.lr > 0.0) || !(self.lr_factor > 0.0 && self.lr_factor < 1.0) || self.lr_min < 0.0 || self.clip_norm < 0.0 {
            return Err(Error::Config("lr must be positive, lr_factor in (0, 1), lr_min and clip_norm non-negative".into()));
        }
        Ok(())
    }

    /// Every key with its resolved value, one per line, in `KEYS` order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in Self::KEYS {
            let v = match key {
                "mode" => self.mode.to_string(),
                "mitigation" => self.mitigation.to_string(),
                "word_dropout" => self.word_dropout.to_string(),
                "epochs" => self.epochs.to_string(),
                "batch_size" => self.batch_size.to_string(),
                "lr" => self.lr.to_string(),
                "d_emb" => self.d_emb.to_string(),
                "d_hid" => self.d_hid.to_string(),
                "layers" => self.layers.to_string(),
                "d_z" => self.d_z.to_string(),
                "seed" => self.seed.to_string(),
                "eval_seed" => self.eval_seed.to_string(),
                "max_len" => self.max_len.to_string(),
                "min_freq" => self.min_freq.to_string(),
                "beam" => self.beam.to_string(),
                "clip_norm" => self.clip_norm.to_string(),
                "lr_patience" => self.lr_patience.to_string(),
                "lr_factor" => self.lr_factor.to_string(),
                "lr_min" => self.lr_min.to_string(),
                "record_wall_clock" => self.record_wall_clock.to_string(),
                _ => unreachable!(),
            };
            let _ = writeln!(s, "{key}={v}");
        }
        s
    }

    pub fn model_config(&self, src_vocab: usize, tgt_vocab: usize) -> ModelConfig {
        ModelConfig {
            mode: self.mode,
            d_emb: self.d_emb,
            d_hid: self.d_hid,
            layers: self.layers,
            d_z: self.d_z,
            src_vocab,
            tgt_vocab,
        }
    }
}
