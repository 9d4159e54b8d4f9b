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

//! Conditional variational sequence-to-sequence translation with a
//! co-attention inference network.
//!
//! The crate is organised bottom-up: [`numerics`] provides the tensor tape
//! and optimiser, [`data`] turns parallel text into padded batches, the
//! [`encoder`], [`latent`] and [`decoder`] modules build the network on the
//! tape, [`training`] runs the objectives and checkpoints, and
//! [`evaluation`] / [`exploration`] consume trained models.

pub mod cli;
pub mod data;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod exploration;
pub mod latent;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
