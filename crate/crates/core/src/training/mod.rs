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

//! Objectives, KL schedules, word dropout, the epoch loop and checkpoints.

mod checkpoint;
mod config;
mod dropout;
mod metrics;
mod objective;
mod trainer;

pub use checkpoint::{checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{Mitigation, TrainConfig, DEFAULT_WORD_DROPOUT};
pub use dropout::word_dropout;
pub use metrics::{metrics_rows, METRICS_HEADER};
pub use objective::{kl_term, kl_warmup_alpha, objective, objective_on_tape, KlTerm, ObjectiveBreakdown, WARMUP_RAMP_EPOCHS, WARMUP_ZERO_EPOCHS};
pub use trainer::{batch_objective, validate, EpochMetrics, EpochReport, Trainer, ValidationMetrics};
