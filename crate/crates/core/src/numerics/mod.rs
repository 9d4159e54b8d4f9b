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

//! Differentiable computation kernel: tensors, the reverse-mode tape,
//! parameter storage, Adam and the plateau learning-rate schedule.

mod adam;
mod gradcheck;
mod graph;
mod params;
mod scheduler;
mod tensor;

pub use adam::{clip_grad_norm, optimizer_step, AdamState};
pub use gradcheck::{grad_check, grad_check_params, relative_error, GradCheckReport, RELATIVE_ERROR_FLOOR};
pub use graph::{Gradients, Graph, Var};
pub use params::{ParamId, ParamStore};
pub use scheduler::PlateauScheduler;
pub use tensor::{Real, Tensor};
