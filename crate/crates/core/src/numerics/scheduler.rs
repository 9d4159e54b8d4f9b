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

/// Reduce-on-plateau learning-rate schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauScheduler {
    pub patience: usize,
    pub factor: f64,
    pub min_lr: f64,
    pub best: Option<f64>,
    pub bad_epochs: usize,
    pub history: Vec<f64>,
}

impl PlateauScheduler {
    pub fn new(patience: usize, factor: f64, min_lr: f64) -> Self {
        assert!(factor > 0.0 && factor < 1.0, "decay factor must lie in (0, 1)");
        PlateauScheduler {
            patience,
            factor,
            min_lr,
            best: None,
            bad_epochs: 0,
            history: Vec::new(),
        }
    }

    /// Records one epoch's monitored metric (lower is better) and returns the
    /// learning rate to use next. `patience == 0` disables decay.
    pub fn step(&mut self, metric: f64, lr: f64) -> f64 {
        self.history.push(metric);
        match self.best {
            Some(b) if metric >= b => self.bad_epochs += 1,
            _ => {
                self.best = Some(metric);
                self.bad_epochs = 0;
            }
        }
        if self.patience > 0 && self.bad_epochs >= self.patience {
            self.bad_epochs = 0;
            return (lr * self.factor).max(self.min_lr).min(lr);
        }
        lr
    }
}

impl Default for PlateauScheduler {
    fn default() -> Self {
        PlateauScheduler::new(1, 0.5, 1e-5)
    }
}
