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

//! Reverse-mode tape.
//!
//! Every primitive appends a node holding its forward value. `backward` walks
//! the nodes in reverse insertion order, so gradient accumulation order is
//! fixed and runs are bitwise reproducible.

use std::collections::HashMap;

use super::params::{ParamId, ParamStore};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<F> {
    Leaf,
    MatMul(Var, Var),
    Bmm { a: Var, b: Var, trans_b: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, F),
    AddScalar(Var),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Softmax(Var),
    LogSoftmax(Var),
    SumAll(Var),
    Reduce { x: Var, axis: usize, mean: bool },
    MaskedMean { x: Var, mask: Vec<bool>, counts: Vec<usize> },
    Embedding { table: Var, ids: Vec<usize> },
    MaskedFill { x: Var, fill: Vec<bool> },
    WhereRows { keep: Vec<bool>, a: Var, b: Var },
    Gather { x: Var, ids: Vec<usize> },
    Reshape(Var),
    Clamp { x: Var, lo: F, hi: F },
}

#[derive(Clone, Debug)]
struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
    requires_grad: bool,
}

/// Tape of executed primitives. Confined to one thread.
#[derive(Clone, Debug, Default)]
pub struct Graph<F> {
    nodes: Vec<Node<F>>,
    param_vars: HashMap<ParamId, Var>,
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

/// Rows and width of a tensor viewed as `[rows, last_axis]`.
fn split_last(shape: &[usize]) -> (usize, usize) {
    let w = *shape.last().expect("tensor has at least one axis");
    (shape.iter().product::<usize>() / w, w)
}

impl<F: Real> Graph<F> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op_name: &'static str, value: Tensor<F>, op: Op<F>, requires_grad: bool) -> Result<Var> {
        if let Some(index) = value.first_non_finite() {
            return Err(Error::NonFinite { op: op_name, index });
        }
        Ok(self.push_unchecked(value, op, requires_grad))
    }

    fn push_unchecked(&mut self, value: Tensor<F>, op: Op<F>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Leaf that never receives a gradient. Unlike [`Graph::leaf`] the value is
    /// not checked; a non-finite entry is reported by the first op that reads it.
    pub fn constant(&mut self, t: Tensor<F>) -> Var {
        self.push_unchecked(t, Op::Leaf, false)
    }

    pub fn leaf(&mut self, t: Tensor<F>, requires_grad: bool) -> Result<Var> {
        self.push("leaf", t, Op::Leaf, requires_grad)
    }

    /// Leaf bound to a stored parameter. Repeated calls return the same node,
    /// so every use of a parameter accumulates into one gradient.
    pub fn param(&mut self, store: &ParamStore<F>, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        // Unchecked like `constant`: a corrupted parameter surfaces as an error from its first consumer.
        let v = self.push_unchecked(store.get(id).clone(), Op::Leaf, true);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![F::zero(); m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let av = ad[i * k + p];
                let brow = &bd[p * n..(p + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
        let rg = self.rg(&[a, b]);
        self.push("matmul", Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), rg)
    }

    /// Batched product of `[B, m, k]` with `[B, k, n]`, or with `[B, n, k]`
    /// transposed when `trans_b` is set.
    pub fn bmm(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let ok = sa.len() == 3
            && sb.len() == 3
            && sa[0] == sb[0]
            && if trans_b { sa[2] == sb[2] } else { sa[2] == sb[1] };
        if !ok {
            return Err(shape_err("bmm", &sa, &sb));
        }
        let (bs, m, k) = (sa[0], sa[1], sa[2]);
        let n = if trans_b { sb[1] } else { sb[2] };
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![F::zero(); bs * m * n];
        for bi in 0..bs {
            let ab = &ad[bi * m * k..(bi + 1) * m * k];
            let bb = &bd[bi * k * n..(bi + 1) * k * n];
            let ob = &mut out[bi * m * n..(bi + 1) * m * n];
            for i in 0..m {
                let arow = &ab[i * k..(i + 1) * k];
                let orow = &mut ob[i * n..(i + 1) * n];
                if trans_b {
                    for (j, o) in orow.iter_mut().enumerate() {
                        let brow = &bb[j * k..(j + 1) * k];
                        *o = arow.iter().zip(brow).map(|(&x, &y)| x * y).sum();
                    }
                } else {
                    for (p, &av) in arow.iter().enumerate() {
                        let brow = &bb[p * n..(p + 1) * n];
                        for (o, &bv) in orow.iter_mut().zip(brow) {
                            *o += av * bv;
                        }
                    }
                }
            }
        }
        let rg = self.rg(&[a, b]);
        self.push("bmm", Tensor::new(vec![bs, m, n], out)?, Op::Bmm { a, b, trans_b }, rg)
    }

    fn zip_same(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(F, F) -> F, op: Op<F>) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(name, self.shape(a), self.shape(b)));
        }
        let out: Vec<F> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor::new(self.shape(a).to_vec(), out)?;
        let rg = self.rg(&[a, b]);
        self.push(name, t, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// `x[..., n] + bias[n]`, broadcasting over leading axes.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sb.len() != 1 || sx.last() != Some(&sb[0]) {
            return Err(shape_err("add_bias", sx, sb));
        }
        let n = sb[0];
        let bd = self.value(bias).data();
        let out: Vec<F> = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bd[i % n])
            .collect();
        let t = Tensor::new(sx.to_vec(), out)?;
        let rg = self.rg(&[x, bias]);
        self.push("add_bias", t, Op::AddBias(x, bias), rg)
    }

    fn unary(&mut self, name: &'static str, x: Var, f: impl Fn(F) -> F, op: Op<F>) -> Result<Var> {
        let out: Vec<F> = self.value(x).data().iter().map(|&v| f(v)).collect();
        let t = Tensor::new(self.shape(x).to_vec(), out)?;
        let rg = self.rg(&[x]);
        self.push(name, t, op, rg)
    }

    pub fn scale(&mut self, x: Var, c: F) -> Result<Var> {
        self.unary("scale", x, |v| v * c, Op::Scale(x, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: F) -> Result<Var> {
        self.unary("add_scalar", x, |v| v + c, Op::AddScalar(x))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary("tanh", x, |v| v.tanh(), Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary("sigmoid", x, sigmoid, Op::Sigmoid(x))
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary("exp", x, |v| v.exp(), Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.unary("log", x, |v| v.ln(), Op::Log(x))
    }

    pub fn clamp(&mut self, x: Var, lo: F, hi: F) -> Result<Var> {
        self.unary("clamp", x, |v| v.max(lo).min(hi), Op::Clamp { x, lo, hi })
    }

    /// Concatenation along the last axis.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| Error::invalid("concat of zero tensors"))?;
        let lead = self.shape(first)[..self.shape(first).len() - 1].to_vec();
        let mut widths = Vec::with_capacity(xs.len());
        for &x in xs {
            let s = self.shape(x);
            if s[..s.len() - 1] != lead[..] {
                return Err(shape_err("concat", self.shape(first), s));
            }
            widths.push(s[s.len() - 1]);
        }
        let total: usize = widths.iter().sum();
        let rows: usize = lead.iter().product();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&x, &w) in xs.iter().zip(&widths) {
                out.extend_from_slice(&self.value(x).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let rg = self.rg(xs);
        self.push("concat", Tensor::new(shape, out)?, Op::Concat(xs.to_vec()), rg)
    }

    /// Columns `start..start + len` of the last axis.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let (rows, w) = split_last(&s);
        if len == 0 || start + len > w {
            return Err(shape_err("slice", &s, &[start, len]));
        }
        let d = self.value(x).data();
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&d[r * w + start..r * w + start + len]);
        }
        let mut shape = s;
        *shape.last_mut().unwrap() = len;
        let rg = self.rg(&[x]);
        self.push("slice", Tensor::new(shape, out)?, Op::Slice { x, start }, rg)
    }

    /// Splits the last axis into consecutive pieces of the given widths.
    pub fn split(&mut self, x: Var, widths: &[usize]) -> Result<Vec<Var>> {
        let mut start = 0;
        let mut out = Vec::with_capacity(widths.len());
        for &w in widths {
            out.push(self.slice(x, start, w)?);
            start += w;
        }
        if start != *self.shape(x).last().unwrap() {
            return Err(shape_err("split", self.shape(x), widths));
        }
        Ok(out)
    }

    /// Softmax over the last axis, max-subtracted.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let (rows, w) = split_last(&s);
        let d = self.value(x).data();
        let mut out = vec![F::zero(); d.len()];
        for r in 0..rows {
            softmax_row(&d[r * w..(r + 1) * w], &mut out[r * w..(r + 1) * w]);
        }
        let rg = self.rg(&[x]);
        self.push("softmax", Tensor::new(s, out)?, Op::Softmax(x), rg)
    }

    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let (rows, w) = split_last(&s);
        let d = self.value(x).data();
        let mut out = vec![F::zero(); d.len()];
        for r in 0..rows {
            let row = &d[r * w..(r + 1) * w];
            let lse = log_sum_exp(row);
            for (o, &v) in out[r * w..(r + 1) * w].iter_mut().zip(row) {
                *o = v - lse;
            }
        }
        let rg = self.rg(&[x]);
        self.push("log_softmax", Tensor::new(s, out)?, Op::LogSoftmax(x), rg)
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let total: F = self.value(x).data().iter().copied().sum();
        let rg = self.rg(&[x]);
        self.push("sum_all", Tensor::scalar(total), Op::SumAll(x), rg)
    }

    fn reduce(&mut self, x: Var, axis: usize, mean: bool) -> Result<Var> {
        let name = if mean { "mean_axis" } else { "sum_axis" };
        let s = self.shape(x).to_vec();
        if axis >= s.len() {
            return Err(shape_err(name, &s, &[axis]));
        }
        let outer: usize = s[..axis].iter().product();
        let n = s[axis];
        let inner: usize = s[axis + 1..].iter().product();
        let d = self.value(x).data();
        let mut out = vec![F::zero(); outer * inner];
        for o in 0..outer {
            for a in 0..n {
                let src = &d[(o * n + a) * inner..(o * n + a + 1) * inner];
                for (acc, &v) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *acc += v;
                }
            }
        }
        if mean {
            let inv = F::one() / F::lit(n as f64);
            out.iter_mut().for_each(|v| *v *= inv);
        }
        let mut shape: Vec<usize> = s[..axis].iter().chain(&s[axis + 1..]).copied().collect();
        if shape.is_empty() {
            shape.push(1);
        }
        let rg = self.rg(&[x]);
        self.push(name, Tensor::new(shape, out)?, Op::Reduce { x, axis, mean }, rg)
    }

    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.reduce(x, axis, true)
    }

    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.reduce(x, axis, false)
    }

    /// Mean of `x[B, T, D]` over the unmasked positions of axis 1.
    /// `mask` has `B * T` entries, true at real positions.
    pub fn masked_mean(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 || mask.len() != s[0] * s[1] {
            return Err(shape_err("masked_mean", &s, &[mask.len()]));
        }
        let (b, t, d) = (s[0], s[1], s[2]);
        let counts: Vec<usize> = (0..b).map(|bi| mask[bi * t..(bi + 1) * t].iter().filter(|&&m| m).count()).collect();
        if let Some(bi) = counts.iter().position(|&c| c == 0) {
            return Err(Error::invalid(format!("masked_mean: row {bi} has no unmasked positions")));
        }
        let xd = self.value(x).data();
        let mut out = vec![F::zero(); b * d];
        for bi in 0..b {
            let acc = &mut out[bi * d..(bi + 1) * d];
            for ti in 0..t {
                if mask[bi * t + ti] {
                    let row = &xd[(bi * t + ti) * d..(bi * t + ti + 1) * d];
                    for (a, &v) in acc.iter_mut().zip(row) {
                        *a += v;
                    }
                }
            }
            let inv = F::one() / F::lit(counts[bi] as f64);
            acc.iter_mut().for_each(|v| *v *= inv);
        }
        let rg = self.rg(&[x]);
        self.push(
            "masked_mean",
            Tensor::new(vec![b, d], out)?,
            Op::MaskedMean {
                x,
                mask: mask.to_vec(),
                counts,
            },
            rg,
        )
    }

    /// Rows of `table[V, D]` selected by `ids`, giving `[ids.len(), D]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let s = self.shape(table).to_vec();
        if s.len() != 2 {
            return Err(shape_err("embedding", &s, &[ids.len()]));
        }
        let (v, d) = (s[0], s[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::invalid(format!("embedding: id {bad} out of range for vocabulary of {v}")));
        }
        let td = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&td[i * d..(i + 1) * d]);
        }
        let rg = self.rg(&[table]);
        self.push(
            "embedding",
            Tensor::new(vec![ids.len(), d], out)?,
            Op::Embedding { table, ids: ids.to_vec() },
            rg,
        )
    }

    /// Replaces entries where `fill` is true by `value`.
    pub fn masked_fill(&mut self, x: Var, fill: &[bool], value: F) -> Result<Var> {
        if fill.len() != self.value(x).numel() {
            return Err(shape_err("masked_fill", self.shape(x), &[fill.len()]));
        }
        let out: Vec<F> = self
            .value(x)
            .data()
            .iter()
            .zip(fill)
            .map(|(&v, &f)| if f { value } else { v })
            .collect();
        let t = Tensor::new(self.shape(x).to_vec(), out)?;
        let rg = self.rg(&[x]);
        self.push("masked_fill", t, Op::MaskedFill { x, fill: fill.to_vec() }, rg)
    }

    /// Row-wise select along axis 0: row `r` comes from `a` when `keep[r]`, else from `b`.
    pub fn where_rows(&mut self, keep: &[bool], a: Var, b: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s != self.shape(b) || keep.len() != s[0] {
            return Err(shape_err("where_rows", &s, self.shape(b)));
        }
        let w = self.value(a).numel() / s[0];
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(ad.len());
        for (r, &k) in keep.iter().enumerate() {
            let src = if k { ad } else { bd };
            out.extend_from_slice(&src[r * w..(r + 1) * w]);
        }
        let rg = self.rg(&[a, b]);
        self.push(
            "where_rows",
            Tensor::new(s, out)?,
            Op::WhereRows {
                keep: keep.to_vec(),
                a,
                b,
            },
            rg,
        )
    }

    /// Picks `x[r, ids[r]]` from a `[N, V]` matrix, giving `[N]`.
    pub fn gather(&mut self, x: Var, ids: &[usize]) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 || s[0] != ids.len() || ids.iter().any(|&i| i >= s[1]) {
            return Err(shape_err("gather", &s, &[ids.len()]));
        }
        let d = self.value(x).data();
        let out: Vec<F> = ids.iter().enumerate().map(|(r, &i)| d[r * s[1] + i]).collect();
        let rg = self.rg(&[x]);
        self.push(
            "gather",
            Tensor::new(vec![ids.len()], out)?,
            Op::Gather { x, ids: ids.to_vec() },
            rg,
        )
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(&[x]);
        self.push("reshape", t, Op::Reshape(x), rg)
    }

    /// Gradients of the scalar `loss` with respect to every node that requires one.
    pub fn backward(&self, loss: Var) -> Result<Gradients<F>> {
        if self.value(loss).numel() != 1 {
            return Err(shape_err("backward", self.shape(loss), &[1]));
        }
        let mut grads: Vec<Option<Vec<F>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![F::one()]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let (lo, hi) = grads.split_at_mut(i);
            let Some(gout) = hi[0].as_deref() else { continue };
            if let Some(index) = gout.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { op: "backward", index });
            }
            self.backward_node(node, gout, lo);
        }
        Ok(Gradients { grads })
    }

    fn backward_node(&self, node: &Node<F>, gout: &[F], lo: &mut [Option<Vec<F>>]) {
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                if let Some(ga) = self.acc(lo, *a) {
                    for i in 0..m {
                        let grow = &gout[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &bd[p * n..(p + 1) * n];
                            ga[i * k + p] += dot(grow, brow);
                        }
                    }
                }
                if let Some(gb) = self.acc(lo, *b) {
                    for i in 0..m {
                        let grow = &gout[i * n..(i + 1) * n];
                        for p in 0..k {
                            let av = ad[i * k + p];
                            for (g, &go) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *g += av * go;
                            }
                        }
                    }
                }
            }
            Op::Bmm { a, b, trans_b } => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (bs, m, k) = (sa[0], sa[1], sa[2]);
                let n = if *trans_b { sb[1] } else { sb[2] };
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                if let Some(ga) = self.acc(lo, *a) {
                    for bi in 0..bs {
                        let bb = &bd[bi * k * n..(bi + 1) * k * n];
                        for i in 0..m {
                            let grow = &gout[(bi * m + i) * n..(bi * m + i + 1) * n];
                            let garow = &mut ga[(bi * m + i) * k..(bi * m + i + 1) * k];
                            if *trans_b {
                                for (j, &go) in grow.iter().enumerate() {
                                    for (g, &bv) in garow.iter_mut().zip(&bb[j * k..(j + 1) * k]) {
                                        *g += go * bv;
                                    }
                                }
                            } else {
                                for (p, g) in garow.iter_mut().enumerate() {
                                    *g += dot(grow, &bb[p * n..(p + 1) * n]);
                                }
                            }
                        }
                    }
                }
                if let Some(gb) = self.acc(lo, *b) {
                    for bi in 0..bs {
                        let ab = &ad[bi * m * k..(bi + 1) * m * k];
                        let gbb = &mut gb[bi * k * n..(bi + 1) * k * n];
                        for i in 0..m {
                            let grow = &gout[(bi * m + i) * n..(bi * m + i + 1) * n];
                            let arow = &ab[i * k..(i + 1) * k];
                            if *trans_b {
                                for (j, &go) in grow.iter().enumerate() {
                                    for (g, &av) in gbb[j * k..(j + 1) * k].iter_mut().zip(arow) {
                                        *g += go * av;
                                    }
                                }
                            } else {
                                for (p, &av) in arow.iter().enumerate() {
                                    for (g, &go) in gbb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                        *g += av * go;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                self.acc_map(lo, *a, gout, |g, _| g);
                self.acc_map(lo, *b, gout, |g, _| g);
            }
            Op::Sub(a, b) => {
                self.acc_map(lo, *a, gout, |g, _| g);
                self.acc_map(lo, *b, gout, |g, _| -g);
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                self.acc_map(lo, *a, gout, |g, i| g * bd[i]);
                self.acc_map(lo, *b, gout, |g, i| g * ad[i]);
            }
            Op::AddBias(x, bias) => {
                self.acc_map(lo, *x, gout, |g, _| g);
                if let Some(gb) = self.acc(lo, *bias) {
                    let n = gb.len();
                    for (i, &g) in gout.iter().enumerate() {
                        gb[i % n] += g;
                    }
                }
            }
            Op::Scale(x, c) => self.acc_map(lo, *x, gout, |g, _| g * *c),
            Op::AddScalar(x) | Op::Reshape(x) => self.acc_map(lo, *x, gout, |g, _| g),
            Op::Concat(xs) => {
                let widths: Vec<usize> = xs.iter().map(|&x| *self.shape(x).last().unwrap()).collect();
                let total: usize = widths.iter().sum();
                let rows = gout.len() / total;
                let mut off = 0;
                for (&x, &w) in xs.iter().zip(&widths) {
                    if let Some(gx) = self.acc(lo, x) {
                        for r in 0..rows {
                            for (g, &go) in gx[r * w..(r + 1) * w].iter_mut().zip(&gout[r * total + off..]) {
                                *g += go;
                            }
                        }
                    }
                    off += w;
                }
            }
            Op::Slice { x, start } => {
                let w = *self.shape(*x).last().unwrap();
                let len = *node.value.shape().last().unwrap();
                if let Some(gx) = self.acc(lo, *x) {
                    let rows = gout.len() / len;
                    for r in 0..rows {
                        for (g, &go) in gx[r * w + start..r * w + start + len].iter_mut().zip(&gout[r * len..(r + 1) * len]) {
                            *g += go;
                        }
                    }
                }
            }
            Op::Tanh(x) => self.acc_map(lo, *x, gout, |g, i| g * (F::one() - y[i] * y[i])),
            Op::Sigmoid(x) => self.acc_map(lo, *x, gout, |g, i| g * y[i] * (F::one() - y[i])),
            Op::Exp(x) => self.acc_map(lo, *x, gout, |g, i| g * y[i]),
            Op::Log(x) => {
                let xd = self.value(*x).data();
                self.acc_map(lo, *x, gout, |g, i| g / xd[i]);
            }
            Op::Clamp { x, lo: l, hi: h } => {
                let xd = self.value(*x).data();
                self.acc_map(lo, *x, gout, |g, i| if xd[i] >= *l && xd[i] <= *h { g } else { F::zero() });
            }
            Op::Softmax(x) => {
                let w = *node.value.shape().last().unwrap();
                if let Some(gx) = self.acc(lo, *x) {
                    for r in 0..gout.len() / w {
                        let (yr, gr) = (&y[r * w..(r + 1) * w], &gout[r * w..(r + 1) * w]);
                        let s = dot(yr, gr);
                        for ((g, &yv), &go) in gx[r * w..(r + 1) * w].iter_mut().zip(yr).zip(gr) {
                            *g += yv * (go - s);
                        }
                    }
                }
            }
            Op::LogSoftmax(x) => {
                let w = *node.value.shape().last().unwrap();
                if let Some(gx) = self.acc(lo, *x) {
                    for r in 0..gout.len() / w {
                        let (yr, gr) = (&y[r * w..(r + 1) * w], &gout[r * w..(r + 1) * w]);
                        let s: F = gr.iter().copied().sum();
                        for ((g, &yv), &go) in gx[r * w..(r + 1) * w].iter_mut().zip(yr).zip(gr) {
                            *g += go - yv.exp() * s;
                        }
                    }
                }
            }
            Op::SumAll(x) => {
                if let Some(gx) = self.acc(lo, *x) {
                    gx.iter_mut().for_each(|g| *g += gout[0]);
                }
            }
            Op::Reduce { x, axis, mean } => {
                let s = self.shape(*x);
                let outer: usize = s[..*axis].iter().product();
                let n = s[*axis];
                let inner: usize = s[axis + 1..].iter().product();
                let f = if *mean { F::one() / F::lit(n as f64) } else { F::one() };
                if let Some(gx) = self.acc(lo, *x) {
                    for o in 0..outer {
                        for a in 0..n {
                            let dst = &mut gx[(o * n + a) * inner..(o * n + a + 1) * inner];
                            for (g, &go) in dst.iter_mut().zip(&gout[o * inner..(o + 1) * inner]) {
                                *g += go * f;
                            }
                        }
                    }
                }
            }
            Op::MaskedMean { x, mask, counts } => {
                let s = self.shape(*x);
                let (t, d) = (s[1], s[2]);
                if let Some(gx) = self.acc(lo, *x) {
                    for (bi, &c) in counts.iter().enumerate() {
                        let inv = F::one() / F::lit(c as f64);
                        let grow = &gout[bi * d..(bi + 1) * d];
                        for ti in 0..t {
                            if mask[bi * t + ti] {
                                let dst = &mut gx[(bi * t + ti) * d..(bi * t + ti + 1) * d];
                                for (g, &go) in dst.iter_mut().zip(grow) {
                                    *g += go * inv;
                                }
                            }
                        }
                    }
                }
            }
            Op::Embedding { table, ids } => {
                let d = self.shape(*table)[1];
                if let Some(gt) = self.acc(lo, *table) {
                    for (r, &id) in ids.iter().enumerate() {
                        for (g, &go) in gt[id * d..(id + 1) * d].iter_mut().zip(&gout[r * d..(r + 1) * d]) {
                            *g += go;
                        }
                    }
                }
            }
            Op::MaskedFill { x, fill } => self.acc_map(lo, *x, gout, |g, i| if fill[i] { F::zero() } else { g }),
            Op::WhereRows { keep, a, b } => {
                let w = gout.len() / keep.len();
                self.acc_map(lo, *a, gout, |g, i| if keep[i / w] { g } else { F::zero() });
                self.acc_map(lo, *b, gout, |g, i| if keep[i / w] { F::zero() } else { g });
            }
            Op::Gather { x, ids } => {
                let v = self.shape(*x)[1];
                if let Some(gx) = self.acc(lo, *x) {
                    for (r, &id) in ids.iter().enumerate() {
                        gx[r * v + id] += gout[r];
                    }
                }
            }
        }
    }

    fn acc<'a>(&self, lo: &'a mut [Option<Vec<F>>], v: Var) -> Option<&'a mut Vec<F>> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        Some(lo[v.0].get_or_insert_with(|| vec![F::zero(); node.value.numel()]))
    }

    fn acc_map(&self, lo: &mut [Option<Vec<F>>], v: Var, gout: &[F], f: impl Fn(F, usize) -> F) {
        if let Some(gx) = self.acc(lo, v) {
            for (i, (g, &go)) in gx.iter_mut().zip(gout).enumerate() {
                *g += f(go, i);
            }
        }
    }
}

/// Result of one backward pass.
#[derive(Clone, Debug)]
pub struct Gradients<F> {
    grads: Vec<Option<Vec<F>>>,
}

impl<F: Real> Gradients<F> {
    /// Gradient of `v`, or zeros when the loss does not depend on it.
    pub fn wrt(&self, g: &Graph<F>, v: Var) -> Tensor<F> {
        match &self.grads[v.0] {
            Some(d) => Tensor::new(g.shape(v).to_vec(), d.clone()).expect("gradient shape"),
            None => Tensor::zeros(g.shape(v)),
        }
    }

    /// One gradient per stored parameter, zeros for parameters the graph never touched.
    pub fn params(&self, g: &Graph<F>, store: &ParamStore<F>) -> Vec<Tensor<F>> {
        store
            .ids()
            .map(|id| match g.param_vars.get(&id) {
                Some(&v) => self.wrt(g, v),
                None => Tensor::zeros(store.get(id).shape()),
            })
            .collect()
    }
}

fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub(crate) fn sigmoid<F: Real>(v: F) -> F {
    if v >= F::zero() {
        F::one() / (F::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (F::one() + e)
    }
}

pub(crate) fn log_sum_exp<F: Real>(row: &[F]) -> F {
    let m = row.iter().copied().fold(F::neg_infinity(), F::max);
    let s: F = row.iter().map(|&v| (v - m).exp()).sum();
    m + s.ln()
}

pub(crate) fn softmax_row<F: Real>(row: &[F], out: &mut [F]) {
    let m = row.iter().copied().fold(F::neg_infinity(), F::max);
    let mut s = F::zero();
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - m).exp();
        s += *o;
    }
    out.iter_mut().for_each(|o| *o /= s);
}
