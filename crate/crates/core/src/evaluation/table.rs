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

//! Result tables rendered as CSV or aligned text.

use std::fmt::Write as _;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Table {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.headers.len(), "row width must match header");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let quote = |c: &String| {
            if c.contains([',', '"', '\n']) {
                format!("\"{}\"", c.replace('"', "\"\""))
            } else {
                c.clone()
            }
        };
        let mut s = String::new();
        for line in std::iter::once(&self.headers).chain(&self.rows) {
            let cells: Vec<String> = line.iter().map(quote).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    /// Columns padded to equal width and separated by ` | `.
    pub fn to_text(&self) -> String {
        let widths: Vec<usize> = (0..self.headers.len())
            .map(|c| {
                std::iter::once(&self.headers)
                    .chain(&self.rows)
                    .map(|r| r[c].chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let render = |r: &Vec<String>| {
            let cells: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            cells.join(" | ").trim_end().to_string()
        };
        let mut s = String::new();
        let _ = writeln!(s, "{}", render(&self.headers));
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        let _ = writeln!(s, "{}", rule.join("-+-"));
        for r in &self.rows {
            let _ = writeln!(s, "{}", render(r));
        }
        s
    }
}

pub(crate) fn fmt4(x: f64) -> String {
    format!("{x:.4}")
}

pub(crate) fn fmt_opt4(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), fmt4)
}

/// BLEU in `[0, 1]` printed on the 0-100 scale.
pub(crate) fn fmt_bleu(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |b| format!("{:.2}", 100.0 * b))
}
