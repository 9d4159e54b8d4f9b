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

//! Command-line interface.

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{build_vocab, encode_pairs, load_parallel, read_lines, synth_corpus, tokenize, SynthKind, TextPair};
use crate::error::{Error, Result};
use crate::evaluation::{
    eval_table, evaluate, experiment1_table, experiment1_zeroed_kl, experiment2_sweep, experiment2_table, latent_for,
    translate_ids, EvalOptions, ExperimentData, LatentChoice, SweepEntry, Table,
};
use crate::exploration::{format_lines, interpolate, sample_ranked, SampleOptions};
use crate::model::ModelMode;
use crate::training::{load_checkpoint, metrics_rows, save_checkpoint, TrainConfig, Trainer, METRICS_HEADER};

#[derive(Debug, Parser)]
#[command(name = "cvnmt", version, about = "Conditional variational neural machine translation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model; writes checkpoints, a metrics CSV and the resolved config to --out-dir.
    Train(TrainArgs),
    /// Translate one sentence per input line.
    Translate(TranslateArgs),
    /// Score a checkpoint on a parallel set (PPL, NELBO/NLL, RE, KL, BLEU).
    Eval(EvalArgs),
    /// Ranked prior samples for each input sentence.
    Sample(SampleArgs),
    /// Decodes along a line between two prior samples.
    Interpolate(InterpolateArgs),
    /// Write a synthetic parallel corpus.
    SynthData(SynthArgs),
    /// Zeroed-KL comparison of the co-attention and mean-pool posteriors.
    Experiment1(ExperimentArgs),
    /// Collapse-mitigation sweep.
    Experiment2(Experiment2Args),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// key=value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one configuration key (repeatable), e.g. `--set epochs=30`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    fn apply(&self, cfg: &mut TrainConfig) -> Result<()> {
        if let Some(p) = &self.config {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            cfg.apply_text(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
        }
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{o}`")))?;
            cfg.set(k, v)?;
        }
        cfg.validate()
    }

    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        self.apply(&mut cfg)?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub train_src: PathBuf,
    #[arg(long)]
    pub train_tgt: PathBuf,
    #[arg(long, requires = "val_tgt")]
    pub val_src: Option<PathBuf>,
    #[arg(long, requires = "val_src")]
    pub val_tgt: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Continue from a checkpoint; only `epochs` may differ from its stored configuration.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Beam width; greedy decoding when omitted.
    #[arg(long)]
    pub beam: Option<usize>,
    /// Decode with z = 0 instead of the prior mean.
    #[arg(long, conflicts_with = "sample_z")]
    pub zero_latent: bool,
    /// Decode with one prior sample per sentence.
    #[arg(long)]
    pub sample_z: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub beam: usize,
    /// Skip the beam-search BLEU column.
    #[arg(long)]
    pub no_beam: bool,
    /// Row label; defaults to the model mode.
    #[arg(long)]
    pub label: Option<String>,
    /// Also write the row as CSV here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub keep_duplicates: bool,
    /// Rank and print total rather than per-word log-probability.
    #[arg(long)]
    pub total: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InterpolateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub steps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub kind: SynthKind,
    #[arg(long)]
    pub size: usize,
    #[arg(long = "vocab")]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Writes `<prefix>.src`, `<prefix>.tgt` and `<prefix>.config.txt`.
    #[arg(long)]
    pub out_prefix: PathBuf,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long, requires_all = ["train_tgt", "val_src", "val_tgt"])]
    pub train_src: Option<PathBuf>,
    #[arg(long)]
    pub train_tgt: Option<PathBuf>,
    #[arg(long)]
    pub val_src: Option<PathBuf>,
    #[arg(long)]
    pub val_tgt: Option<PathBuf>,
    /// Synthetic corpus used when no files are given.
    #[arg(long, default_value = "multimodal")]
    pub synth_kind: SynthKind,
    #[arg(long, default_value_t = 512)]
    pub synth_size: usize,
    #[arg(long, default_value_t = 64)]
    pub synth_val_size: usize,
    #[arg(long, default_value_t = 30)]
    pub synth_vocab: usize,
    #[arg(long, default_value_t = 1)]
    pub data_seed: u64,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct Experiment2Args {
    #[command(flatten)]
    pub base: ExperimentArgs,
    /// Comma-separated entries: warmup, none, kl_min:<m>, kl_coeff:<c>, word_dropout:<rate>.
    #[arg(long, value_delimiter = ',', default_value = "warmup,kl_min:0.1,kl_min:0.2,kl_coeff:0.1,kl_coeff:0.25")]
    pub sweep: Vec<SweepEntry>,
}

/// Tracks files written by a command and undoes them unless the command succeeds.
#[derive(Default)]
struct Outputs {
    created: Vec<PathBuf>,
    /// Files that existed before, with their original length.
    appended: Vec<(PathBuf, u64)>,
    dirs: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    fn dir(&mut self, dir: &Path) -> Result<()> {
        if !dir.exists() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            self.dirs.push(dir.to_path_buf());
        }
        Ok(())
    }

    fn track(&mut self, path: &Path) {
        if !self.created.iter().any(|p| p == path) && !self.appended.iter().any(|(p, _)| p == path) {
            match fs::metadata(path) {
                Ok(m) => self.appended.push((path.to_path_buf(), m.len())),
                Err(_) => self.created.push(path.to_path_buf()),
            }
        }
    }

    fn write(&mut self, path: &Path, contents: &str) -> Result<()> {
        self.track(path);
        fs::write(path, contents).map_err(|e| Error::io(path, e))
    }

    fn append(&mut self, path: &Path, contents: &str) -> Result<()> {
        self.track(path);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        f.write_all(contents.as_bytes()).map_err(|e| Error::io(path, e))
    }

    fn checkpoint(&mut self, trainer: &Trainer, path: &Path) -> Result<()> {
        self.track(path);
        save_checkpoint(trainer, path)
    }

    fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in &self.created {
            let _ = fs::remove_file(p);
        }
        for (p, len) in &self.appended {
            if let Ok(f) = OpenOptions::new().write(true).open(p) {
                let _ = f.set_len(*len);
            }
        }
        for d in self.dirs.iter().rev() {
            let _ = fs::remove_dir(d);
        }
    }
}

/// Writes to `output` (tracked) or stdout.
fn emit(outputs: &mut Outputs, output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => outputs.write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".config.txt");
    PathBuf::from(s)
}

/// Resolved run configuration: command options followed by the model's training configuration.
fn run_config(options: &[(&str, String)], cfg: Option<&TrainConfig>) -> String {
    let mut s = String::new();
    for (k, v) in options {
        s.push_str(&format!("{k}={v}\n"));
    }
    if let Some(c) = cfg {
        s.push_str("# training configuration of the checkpoint\n");
        s.push_str(&c.to_text());
    }
    s
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Translate(a) => translate(a),
        Command::Eval(a) => eval(a),
        Command::Sample(a) => sample(a),
        Command::Interpolate(a) => interpolate_cmd(a),
        Command::SynthData(a) => synth(a),
        Command::Experiment1(a) => experiment1(a),
        Command::Experiment2(a) => experiment2(a),
    }
}

fn differing_keys(a: &TrainConfig, b: &TrainConfig) -> Vec<String> {
    let (ta, tb) = (a.to_text(), b.to_text());
    ta.lines()
        .zip(tb.lines())
        .filter(|(x, y)| x != y && !x.starts_with("epochs="))
        .map(|(x, _)| x.split('=').next().unwrap_or("").to_string())
        .collect()
}

fn train(a: TrainArgs) -> Result<()> {
    let mut out = Outputs::default();
    let mut trainer = match &a.resume {
        Some(ckpt) => {
            let mut t = load_checkpoint(ckpt)?;
            let mut cfg = t.config.clone();
            a.config.apply(&mut cfg)?;
            let diff = differing_keys(&cfg, &t.config);
            if !diff.is_empty() {
                return Err(Error::Config(format!(
                    "--resume: only `epochs` may change, but {} differ from the checkpoint",
                    diff.join(", ")
                )));
            }
            t.config.epochs = cfg.epochs;
            t
        }
        None => {
            let cfg = a.config.resolve()?;
            let report = load_parallel(&a.train_src, &a.train_tgt, cfg.max_len)?;
            let src_vocab = build_vocab(report.pairs.iter().map(|p| p.source.as_slice()), cfg.min_freq)?;
            let tgt_vocab = build_vocab(report.pairs.iter().map(|p| p.target.as_slice()), cfg.min_freq)?;
            Trainer::new(cfg, src_vocab, tgt_vocab)?
        }
    };
    let cfg = trainer.config.clone();
    let report = load_parallel(&a.train_src, &a.train_tgt, cfg.max_len)?;
    log::info!(
        "training pairs: {} (dropped {} empty, {} over {} tokens)",
        report.pairs.len(),
        report.dropped_empty,
        report.dropped_long,
        cfg.max_len
    );
    let train = encode_pairs(&report.pairs, &trainer.src_vocab, &trainer.tgt_vocab);
    let val = match (&a.val_src, &a.val_tgt) {
        (Some(s), Some(t)) => {
            let r = load_parallel(s, t, cfg.max_len)?;
            Some(encode_pairs(&r.pairs, &trainer.src_vocab, &trainer.tgt_vocab))
        }
        _ => None,
    };
    if val.as_ref().is_some_and(Vec::is_empty) {
        return Err(Error::Data("validation set is empty after filtering".into()));
    }

    out.dir(&a.out_dir)?;
    out.write(&a.out_dir.join("config.txt"), &cfg.to_text())?;
    out.write(&a.out_dir.join("vocab.src"), &trainer.src_vocab.to_file_string())?;
    out.write(&a.out_dir.join("vocab.tgt"), &trainer.tgt_vocab.to_file_string())?;
    let metrics = a.out_dir.join("metrics.csv");
    if a.resume.is_none() || !metrics.exists() {
        out.write(&metrics, &format!("{METRICS_HEADER}\n"))?;
    }
    let start = Instant::now();
    while trainer.epoch < cfg.epochs {
        let r = trainer.run_epoch(&train, val.as_deref())?;
        let wall = if cfg.record_wall_clock { start.elapsed().as_secs_f64() } else { 0.0 };
        out.append(&metrics, &metrics_rows(&r, wall))?;
        log::info!(
            "epoch {} train re {:.4} kl {} j {:.4}{} lr {}",
            r.train.epoch,
            r.train.re_per_word,
            r.train.kl_per_word.map_or("NA".into(), |k| format!("{k:.4}")),
            r.train.j_per_word,
            r.validation.map_or(String::new(), |v| format!(" | val nelbo {:.4} ppl {:.4}", v.nelbo_per_word, v.ppl)),
            r.next_lr
        );
        out.checkpoint(&trainer, &a.out_dir.join("last.ckpt"))?;
        if let Some(v) = r.validation {
            if trainer.scheduler.best == Some(v.nelbo_per_word) && trainer.scheduler.bad_epochs == 0 {
                out.checkpoint(&trainer, &a.out_dir.join("best.ckpt"))?;
            }
        }
    }
    out.commit();
    Ok(())
}

fn source_lines(path: &Path) -> Result<Vec<Vec<String>>> {
    Ok(read_lines(path)?.iter().map(|l| tokenize(l)).collect())
}

fn translate(a: TranslateArgs) -> Result<()> {
    let mut out = Outputs::default();
    let t = load_checkpoint(&a.ckpt)?;
    if a.beam == Some(0) {
        return Err(Error::invalid("--beam must be at least 1"));
    }
    let choice = if a.zero_latent {
        LatentChoice::Zero
    } else if a.sample_z {
        LatentChoice::Sample
    } else {
        LatentChoice::PriorMean
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut text = String::new();
    for words in source_lines(&a.input)? {
        if words.is_empty() {
            text.push('\n');
            continue;
        }
        let src = t.src_vocab.encode(&words);
        let z = latent_for(&t.model, &src, choice, &mut rng)?;
        let h = translate_ids(&t.model, &src, z.as_deref(), a.beam)?;
        text.push_str(&t.tgt_vocab.decode(&h.tokens).join(" "));
        text.push('\n');
    }
    if let Some(p) = &a.output {
        let opts = [
            ("ckpt", a.ckpt.display().to_string()),
            ("input", a.input.display().to_string()),
            ("beam", a.beam.map_or("greedy".into(), |b| b.to_string())),
            ("latent", format!("{choice:?}")),
            ("seed", a.seed.to_string()),
        ];
        out.write(&sidecar(p), &run_config(&opts, Some(&t.config)))?;
    }
    emit(&mut out, a.output.as_deref(), &text)?;
    out.commit();
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let mut out = Outputs::default();
    let t = load_checkpoint(&a.ckpt)?;
    let report = load_parallel(&a.src, &a.reference, usize::MAX)?;
    if report.pairs.is_empty() {
        return Err(Error::Data("evaluation set is empty".into()));
    }
    let pairs = encode_pairs(&report.pairs, &t.src_vocab, &t.tgt_vocab);
    let opts = EvalOptions {
        beam: (!a.no_beam).then_some(a.beam),
        batch_size: t.config.batch_size,
        eval_seed: t.config.eval_seed,
    };
    let label = a.label.clone().unwrap_or_else(|| t.config.mode.to_string());
    let row = evaluate(&label, &t.model, &t.tgt_vocab, &pairs, opts)?;
    let table = eval_table(&[row]);
    if let Some(p) = &a.csv {
        out.write(p, &table.to_csv())?;
        let opts = [
            ("ckpt", a.ckpt.display().to_string()),
            ("src", a.src.display().to_string()),
            ("ref", a.reference.display().to_string()),
            ("beam", if a.no_beam { "off".into() } else { a.beam.to_string() }),
        ];
        out.write(&sidecar(p), &run_config(&opts, Some(&t.config)))?;
    }
    print!("{}", table.to_text());
    out.commit();
    Ok(())
}

fn sample(a: SampleArgs) -> Result<()> {
    let mut out = Outputs::default();
    let t = load_checkpoint(&a.ckpt)?;
    let opts = SampleOptions {
        keep_duplicates: a.keep_duplicates,
        by_total: a.total,
    };
    let mut blocks = Vec::new();
    for words in source_lines(&a.input)? {
        let src = t.src_vocab.encode(&words);
        let ranked = sample_ranked(&t.model, &src, a.n, a.seed, opts)?;
        blocks.push(format_lines(&t.tgt_vocab, ranked.iter().map(|s| (s.score(a.total), s.tokens.as_slice()))));
    }
    if let Some(p) = &a.output {
        let o = [
            ("ckpt", a.ckpt.display().to_string()),
            ("input", a.input.display().to_string()),
            ("n", a.n.to_string()),
            ("seed", a.seed.to_string()),
            ("keep_duplicates", a.keep_duplicates.to_string()),
            ("score", if a.total { "total" } else { "per_word" }.to_string()),
        ];
        out.write(&sidecar(p), &run_config(&o, Some(&t.config)))?;
    }
    emit(&mut out, a.output.as_deref(), &blocks.join("\n"))?;
    out.commit();
    Ok(())
}

fn interpolate_cmd(a: InterpolateArgs) -> Result<()> {
    let mut out = Outputs::default();
    let t = load_checkpoint(&a.ckpt)?;
    if !t.model.config.mode.is_variational() {
        return Err(Error::invalid("interpolation needs a variational model"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut blocks = Vec::new();
    for words in source_lines(&a.input)? {
        let src = t.src_vocab.encode(&words);
        let z1 = latent_for(&t.model, &src, LatentChoice::Sample, &mut rng)?.expect("latent");
        let z2 = latent_for(&t.model, &src, LatentChoice::Sample, &mut rng)?.expect("latent");
        let hyps = interpolate(&t.model, &src, &z1, &z2, a.steps)?;
        blocks.push(format_lines(&t.tgt_vocab, hyps.iter().map(|h| (h.per_word_log_prob(), h.tokens.as_slice()))));
    }
    if let Some(p) = &a.output {
        let o = [
            ("ckpt", a.ckpt.display().to_string()),
            ("input", a.input.display().to_string()),
            ("steps", a.steps.to_string()),
            ("seed", a.seed.to_string()),
        ];
        out.write(&sidecar(p), &run_config(&o, Some(&t.config)))?;
    }
    emit(&mut out, a.output.as_deref(), &blocks.join("\n"))?;
    out.commit();
    Ok(())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut out = Outputs::default();
    let pairs = synth_corpus(a.kind, a.size, a.vocab_size, a.seed)?;
    if let Some(parent) = a.out_prefix.parent().filter(|p| !p.as_os_str().is_empty()) {
        out.dir(parent)?;
    }
    let join = |side: fn(&TextPair) -> &Vec<String>| {
        pairs.iter().map(|p| side(p).join(" ") + "\n").collect::<String>()
    };
    out.write(&with_suffix(&a.out_prefix, ".src"), &join(|p| &p.source))?;
    out.write(&with_suffix(&a.out_prefix, ".tgt"), &join(|p| &p.target))?;
    let o = [
        ("kind", a.kind.to_string()),
        ("size", a.size.to_string()),
        ("vocab", a.vocab_size.to_string()),
        ("seed", a.seed.to_string()),
    ];
    out.write(&with_suffix(&a.out_prefix, ".config.txt"), &run_config(&o, None))?;
    out.commit();
    Ok(())
}

/// Seed offset separating the synthetic validation draw from the training draw.
const VAL_SEED_OFFSET: u64 = 0x5eed_0001;

fn experiment_data(d: &DataArgs, cfg: &TrainConfig) -> Result<(ExperimentData, Vec<(&'static str, String)>)> {
    let (train, val, desc) = match (&d.train_src, &d.train_tgt, &d.val_src, &d.val_tgt) {
        (Some(ts), Some(tt), Some(vs), Some(vt)) => {
            let tr = load_parallel(ts, tt, cfg.max_len)?.pairs;
            let va = load_parallel(vs, vt, cfg.max_len)?.pairs;
            let desc = vec![
                ("train_src", ts.display().to_string()),
                ("train_tgt", tt.display().to_string()),
                ("val_src", vs.display().to_string()),
                ("val_tgt", vt.display().to_string()),
            ];
            (tr, va, desc)
        }
        (None, None, None, None) => {
            let tr = synth_corpus(d.synth_kind, d.synth_size, d.synth_vocab, d.data_seed)?;
            let va = synth_corpus(d.synth_kind, d.synth_val_size, d.synth_vocab, d.data_seed.wrapping_add(VAL_SEED_OFFSET))?;
            let desc = vec![
                ("synth_kind", d.synth_kind.to_string()),
                ("synth_size", d.synth_size.to_string()),
                ("synth_val_size", d.synth_val_size.to_string()),
                ("synth_vocab", d.synth_vocab.to_string()),
                ("data_seed", d.data_seed.to_string()),
            ];
            (tr, va, desc)
        }
        _ => return Err(Error::Config("give all of --train-src, --train-tgt, --val-src, --val-tgt or none".into())),
    };
    Ok((ExperimentData::from_text(&train, &val, cfg.min_freq)?, desc))
}

fn write_table(out: &mut Outputs, dir: &Path, stem: &str, table: &Table) -> Result<()> {
    out.write(&dir.join(format!("{stem}.csv")), &table.to_csv())?;
    out.write(&dir.join(format!("{stem}.txt")), &table.to_text())?;
    print!("{}", table.to_text());
    Ok(())
}

fn experiment1(a: ExperimentArgs) -> Result<()> {
    let mut out = Outputs::default();
    let cfg = a.config.resolve()?;
    let (data, desc) = experiment_data(&a.data, &cfg)?;
    let mut coatt = cfg.clone();
    coatt.mode = ModelMode::Cvae;
    let mut meanpool = cfg.clone();
    meanpool.mode = ModelMode::CvaeMeanpool;
    out.dir(&a.out_dir)?;
    let mut resolved = run_config(&desc, None);
    resolved.push_str(&cfg.to_text());
    out.write(&a.out_dir.join("config.txt"), &resolved)?;
    let rows = experiment1_zeroed_kl(&coatt, &meanpool, &data)?;
    write_table(&mut out, &a.out_dir, "experiment1", &experiment1_table(&rows))?;
    out.commit();
    Ok(())
}

fn experiment2(a: Experiment2Args) -> Result<()> {
    let mut out = Outputs::default();
    let cfg = a.base.config.resolve()?;
    let (data, mut desc) = experiment_data(&a.base.data, &cfg)?;
    let sweep: Vec<String> = a.sweep.iter().map(|e| e.to_string()).collect();
    desc.push(("sweep", sweep.join(";")));
    out.dir(&a.base.out_dir)?;
    let mut resolved = run_config(&desc, None);
    resolved.push_str(&cfg.to_text());
    out.write(&a.base.out_dir.join("config.txt"), &resolved)?;
    let rows = experiment2_sweep(&cfg, &a.sweep, &data)?;
    write_table(&mut out, &a.base.out_dir, "experiment2", &experiment2_table(&rows))?;
    out.commit();
    Ok(())
}
