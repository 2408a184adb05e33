// SPDX-License-Identifier: MIT OR Apache-2.0

//! Eager reverse-mode tape.
//!
//! Nodes are appended in evaluation order, so the node vector is already a
//! topological order and backward is a single reverse sweep.

use super::{check_finite, dims2, kernels, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    LayerNorm {
        x: Var,
        affine: Option<(Var, Var)>,
        normalized: Vec<f64>,
        rstd: Vec<f64>,
    },
    Softmax(Var),
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    Transpose(Var),
    Reshape(Var),
    Sum(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
        probs: Vec<f64>,
        count: usize,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        seq_len: usize,
        n_heads: usize,
        probs: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Records operations for one forward pass and computes gradients.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf: receives a gradient on backward.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-trainable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last backward pass w.r.t. `v`, if any flowed there.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<f64>> {
        self.nodes[v.0].grad.take()
    }

    /// Clears all gradients so that backward may run again.
    pub fn reset(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.backward_done = false;
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn record(&mut self, op_name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        check_finite(op_name, value.data())?;
        let rg = self.needs(inputs);
        Ok(self.push(value, op, rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.record("matmul", out, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Shape(format!(
                "add of {:?} and {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(ta.shape(), data)?;
        self.record("add", out, Op::Add(a, b), &[a, b])
    }

    /// Adds a `[d]` vector to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let d = tx.last_dim();
        if tb.shape() != [d] {
            return Err(Error::Shape(format!(
                "row bias {:?} for input {:?}",
                tb.shape(),
                tx.shape()
            )));
        }
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(d) {
            for (v, b) in row.iter_mut().zip(tb.data()) {
                *v += b;
            }
        }
        let out = Tensor::new(tx.shape(), data)?;
        self.record("add_row", out, Op::AddRow(x, bias), &[x, bias])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Shape(format!(
                "mul of {:?} and {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(ta.shape(), data)?;
        self.record("mul", out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let tx = self.value(x);
        let out = Tensor::new(tx.shape(), tx.data().iter().map(|v| v * c).collect())?;
        self.record("scale", out, Op::Scale(x, c), &[x])
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let out = Tensor::new(tx.shape(), tx.data().iter().map(|&v| kernels::gelu(v)).collect())?;
        self.record("gelu", out, Op::Gelu(x), &[x])
    }

    /// Row-wise layer norm with gain and bias over the last dimension.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let d = self.value(x).last_dim();
        for p in [gain, bias] {
            if self.value(p).shape() != [d] {
                return Err(Error::Shape(format!(
                    "layer_norm parameter {:?} for last dim {d}",
                    self.value(p).shape()
                )));
            }
        }
        self.layer_norm_impl(x, Some((gain, bias)), eps)
    }

    /// Layer norm without the affine part.
    pub fn normalize(&mut self, x: Var, eps: f64) -> Result<Var> {
        self.layer_norm_impl(x, None, eps)
    }

    fn layer_norm_impl(&mut self, x: Var, affine: Option<(Var, Var)>, eps: f64) -> Result<Var> {
        if eps <= 0.0 {
            return Err(Error::Config(format!("layer_norm eps must be > 0, got {eps}")));
        }
        let tx = self.value(x);
        let d = tx.last_dim();
        let (normalized, stats) = kernels::layer_norm(tx.data(), d, None, eps);
        let mut out = normalized.clone();
        if let Some((g, b)) = affine {
            let (g, b) = (self.value(g).data(), self.value(b).data());
            for row in out.chunks_mut(d) {
                for ((o, gv), bv) in row.iter_mut().zip(g).zip(b) {
                    *o = *o * gv + bv;
                }
            }
        }
        let out = Tensor::new(tx.shape(), out)?;
        let rstd = stats.iter().map(|s| s.1).collect();
        let mut inputs = vec![x];
        if let Some((g, b)) = affine {
            inputs.extend([g, b]);
        }
        self.record(
            "layer_norm",
            out,
            Op::LayerNorm {
                x,
                affine,
                normalized,
                rstd,
            },
            &inputs,
        )
    }

    /// Row-wise softmax over the last dimension.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let d = tx.last_dim();
        let mut data = vec![0.0; tx.numel()];
        for (src, dst) in tx.data().chunks(d).zip(data.chunks_mut(d)) {
            kernels::softmax_row(src, dst);
        }
        let out = Tensor::new(tx.shape(), data)?;
        self.record("softmax", out, Op::Softmax(x), &[x])
    }

    /// Gathers rows of a `[V×d]` table.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tt = self.value(table);
        let (v, d) = dims2(tt)?;
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(Error::Index(format!("embedding id {id} >= table size {v}")));
            }
            data.extend_from_slice(tt.row(id));
        }
        let out = Tensor::new(&[ids.len(), d], data)?;
        self.record(
            "embedding",
            out,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        )
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).transpose()?;
        self.record("transpose", out, Op::Transpose(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshape(shape)?;
        self.record("reshape", out, Op::Reshape(x), &[x])
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        self.record("sum", Tensor::vector(&[s]), Op::Sum(x), &[x])
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let t: Vec<Option<usize>> = targets.iter().map(|&t| Some(t)).collect();
        self.cross_entropy_masked(logits, &t)
    }

    /// Like [`Tape::cross_entropy`], skipping rows whose target is `None`.
    pub fn cross_entropy_masked(&mut self, logits: Var, targets: &[Option<usize>]) -> Result<Var> {
        let tl = self.value(logits);
        let (n, vocab) = dims2(tl)?;
        if targets.len() != n {
            return Err(Error::Shape(format!(
                "{} targets for {n} logit rows",
                targets.len()
            )));
        }
        let mut probs = vec![0.0; n * vocab];
        let mut total = 0.0;
        let mut count = 0;
        for (r, target) in targets.iter().enumerate() {
            let Some(t) = *target else { continue };
            if t >= vocab {
                return Err(Error::Index(format!("target {t} >= vocab {vocab}")));
            }
            let row = tl.row(r);
            total += kernels::log_sum_exp(row) - row[t];
            kernels::softmax_row(row, &mut probs[r * vocab..(r + 1) * vocab]);
            count += 1;
        }
        if count == 0 {
            return Err(Error::Shape("cross_entropy with no targets".into()));
        }
        let out = Tensor::vector(&[total / count as f64]);
        self.record(
            "cross_entropy",
            out,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
                count,
            },
            &[logits],
        )
    }

    /// Causal multi-head attention over packed sequences.
    ///
    /// `q`, `k`, `v` are `[n_seq*seq_len × d]`; position `i` of each
    /// sequence attends to positions `0..=i` of the same sequence.
    pub fn causal_attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        seq_len: usize,
        n_heads: usize,
    ) -> Result<Var> {
        let (rows, d) = dims2(self.value(q))?;
        for x in [k, v] {
            if self.value(x).shape() != [rows, d] {
                return Err(Error::Shape(format!(
                    "attention operands {:?} vs {:?}",
                    self.value(x).shape(),
                    [rows, d]
                )));
            }
        }
        if seq_len == 0 || rows % seq_len != 0 || n_heads == 0 || d % n_heads != 0 {
            return Err(Error::Shape(format!(
                "attention with {rows} rows, seq_len {seq_len}, d {d}, heads {n_heads}"
            )));
        }
        let (tq, tk, tv) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let mut out = vec![0.0; rows * d];
        let mut probs = vec![0.0; rows * n_heads * seq_len];
        for r in 0..rows {
            let base = (r / seq_len) * seq_len;
            let len = r - base + 1;
            let mut p = vec![0.0; n_heads * len];
            kernels::attention_row(
                &tq[r * d..(r + 1) * d],
                &tk[base * d..],
                &tv[base * d..],
                len,
                n_heads,
                &mut p,
                &mut out[r * d..(r + 1) * d],
            );
            for h in 0..n_heads {
                let dst = r * n_heads * seq_len + h * seq_len;
                probs[dst..dst + len].copy_from_slice(&p[h * len..(h + 1) * len]);
            }
        }
        let out = Tensor::new(&[rows, d], out)?;
        self.record(
            "attention",
            out,
            Op::Attention {
                q,
                k,
                v,
                seq_len,
                n_heads,
                probs,
            },
            &[q, k, v],
        )
    }

    /// Reverse sweep from a scalar loss.
    ///
    /// Fails if `loss` is not a scalar, does not depend on any trainable
    /// leaf, or if backward already ran since the last [`Tape::reset`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Tape("backward called twice without reset".into()));
        }
        let node = &self.nodes[loss.0];
        if node.value.numel() != 1 {
            return Err(Error::Tape(format!(
                "loss must be scalar, got shape {:?}",
                node.value.shape()
            )));
        }
        if !node.requires_grad {
            return Err(Error::Tape("loss is detached from every trainable leaf".into()));
        }
        self.backward_done = true;
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &rest[0];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = node.grad.as_deref() else {
                continue;
            };
            propagate(before, node, g);
        }
        Ok(())
    }
}

fn slot(nodes: &mut [Node], v: Var) -> Option<&mut Vec<f64>> {
    let n = &mut nodes[v.0];
    if !n.requires_grad {
        return None;
    }
    let len = n.value.numel();
    Some(n.grad.get_or_insert_with(|| vec![0.0; len]))
}

fn accumulate(nodes: &mut [Node], v: Var, contribution: &[f64]) {
    if let Some(g) = slot(nodes, v) {
        for (a, b) in g.iter_mut().zip(contribution) {
            *a += b;
        }
    }
}

fn propagate(nodes: &mut [Node], node: &Node, g: &[f64]) {
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (m, k) = dims2(&nodes[a.0].value).expect("matmul lhs is 2-D");
            let n = nodes[b.0].value.shape()[1];
            if nodes[a.0].requires_grad {
                let mut da = vec![0.0; m * k];
                kernels::gemm(m, n, k, g, false, nodes[b.0].value.data(), true, &mut da, false);
                accumulate(nodes, *a, &da);
            }
            if nodes[b.0].requires_grad {
                let mut db = vec![0.0; k * n];
                kernels::gemm(k, m, n, nodes[a.0].value.data(), true, g, false, &mut db, false);
                accumulate(nodes, *b, &db);
            }
        }
        Op::Add(a, b) => {
            accumulate(nodes, *a, g);
            accumulate(nodes, *b, g);
        }
        Op::AddRow(x, bias) => {
            accumulate(nodes, *x, g);
            if let Some(db) = slot(nodes, *bias) {
                let d = db.len();
                for row in g.chunks(d) {
                    for (acc, v) in db.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
            }
        }
        Op::Mul(a, b) => {
            let da: Vec<f64> = g.iter().zip(nodes[b.0].value.data()).map(|(g, y)| g * y).collect();
            let db: Vec<f64> = g.iter().zip(nodes[a.0].value.data()).map(|(g, x)| g * x).collect();
            accumulate(nodes, *a, &da);
            accumulate(nodes, *b, &db);
        }
        Op::Scale(x, c) => {
            let dx: Vec<f64> = g.iter().map(|v| v * c).collect();
            accumulate(nodes, *x, &dx);
        }
        Op::Gelu(x) => {
            let dx: Vec<f64> = g
                .iter()
                .zip(nodes[x.0].value.data())
                .map(|(g, &v)| g * kernels::gelu_grad(v))
                .collect();
            accumulate(nodes, *x, &dx);
        }
        Op::LayerNorm {
            x,
            affine,
            normalized,
            rstd,
        } => {
            let d = nodes[x.0].value.last_dim();
            let gain = affine.map(|(gv, _)| nodes[gv.0].value.data().to_vec());
            if nodes[x.0].requires_grad {
                let mut dx = vec![0.0; g.len()];
                let mut dyhat = vec![0.0; d];
                for (r, &rs) in rstd.iter().enumerate() {
                    let gr = &g[r * d..(r + 1) * d];
                    let xh = &normalized[r * d..(r + 1) * d];
                    for j in 0..d {
                        dyhat[j] = gr[j] * gain.as_ref().map_or(1.0, |gn| gn[j]);
                    }
                    let mean_dy = dyhat.iter().sum::<f64>() / d as f64;
                    let mean_dyx = dyhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                    for j in 0..d {
                        dx[r * d + j] = rs * (dyhat[j] - mean_dy - xh[j] * mean_dyx);
                    }
                }
                accumulate(nodes, *x, &dx);
            }
            if let Some((gv, bv)) = affine {
                if let Some(dg) = slot(nodes, *gv) {
                    for (row, xh) in g.chunks(d).zip(normalized.chunks(d)) {
                        for j in 0..d {
                            dg[j] += row[j] * xh[j];
                        }
                    }
                }
                if let Some(db) = slot(nodes, *bv) {
                    for row in g.chunks(d) {
                        for (acc, v) in db.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                }
            }
        }
        Op::Softmax(x) => {
            let y = node.value.data();
            let d = node.value.last_dim();
            let mut dx = vec![0.0; y.len()];
            for ((yr, gr), dr) in y.chunks(d).zip(g.chunks(d)).zip(dx.chunks_mut(d)) {
                let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                for ((o, yv), gv) in dr.iter_mut().zip(yr).zip(gr) {
                    *o = yv * (gv - dot);
                }
            }
            accumulate(nodes, *x, &dx);
        }
        Op::Embedding { table, ids } => {
            if let Some(dt) = slot(nodes, *table) {
                let d = g.len() / ids.len().max(1);
                for (r, &id) in ids.iter().enumerate() {
                    for j in 0..d {
                        dt[id * d + j] += g[r * d + j];
                    }
                }
            }
        }
        Op::Transpose(x) => {
            let (m, n) = dims2(&nodes[x.0].value).expect("transpose input is 2-D");
            // g is [n×m]
            let dx = kernels::transpose(g, n, m);
            accumulate(nodes, *x, &dx);
        }
        Op::Reshape(x) => accumulate(nodes, *x, g),
        Op::Sum(x) => {
            let dx = vec![g[0]; nodes[x.0].value.numel()];
            accumulate(nodes, *x, &dx);
        }
        Op::CrossEntropy {
            logits,
            targets,
            probs,
            count,
        } => {
            if let Some(dl) = slot(nodes, *logits) {
                let vocab = probs.len() / targets.len();
                let s = g[0] / *count as f64;
                for (r, target) in targets.iter().enumerate() {
                    let Some(t) = *target else { continue };
                    let row = &mut dl[r * vocab..(r + 1) * vocab];
                    for (acc, p) in row.iter_mut().zip(&probs[r * vocab..(r + 1) * vocab]) {
                        *acc += s * p;
                    }
                    row[t] -= s;
                }
            }
        }
        Op::Attention {
            q,
            k,
            v,
            seq_len,
            n_heads,
            probs,
        } => {
            let (rows, d) = dims2(&nodes[q.0].value).expect("attention operand is 2-D");
            let (seq_len, n_heads) = (*seq_len, *n_heads);
            let dh = d / n_heads;
            let scale = 1.0 / (dh as f64).sqrt();
            let (tq, tk, tv) = (
                nodes[q.0].value.data(),
                nodes[k.0].value.data(),
                nodes[v.0].value.data(),
            );
            let mut dq = vec![0.0; rows * d];
            let mut dk = vec![0.0; rows * d];
            let mut dv = vec![0.0; rows * d];
            let mut dp = vec![0.0; seq_len];
            for r in 0..rows {
                let base = (r / seq_len) * seq_len;
                let len = r - base + 1;
                for h in 0..n_heads {
                    let off = h * dh;
                    let p = &probs[r * n_heads * seq_len + h * seq_len..][..len];
                    let go = &g[r * d + off..r * d + off + dh];
                    for t in 0..len {
                        let src = (base + t) * d + off;
                        dp[t] = go.iter().zip(&tv[src..src + dh]).map(|(a, b)| a * b).sum();
                        for j in 0..dh {
                            dv[src + j] += p[t] * go[j];
                        }
                    }
                    let dot: f64 = p.iter().zip(&dp[..len]).map(|(a, b)| a * b).sum();
                    for t in 0..len {
                        let ds = p[t] * (dp[t] - dot) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        let src = (base + t) * d + off;
                        for j in 0..dh {
                            dq[r * d + off + j] += ds * tk[src + j];
                            dk[src + j] += ds * tq[r * d + off + j];
                        }
                    }
                }
            }
            accumulate(nodes, *q, &dq);
            accumulate(nodes, *k, &dk);
            accumulate(nodes, *v, &dv);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn matmul_identity_and_hand_cases() {
        let mut tape = Tape::new();
        let i = tape.constant(Tensor::matrix(&[&[1.0, 0.0], &[0.0, 1.0]]));
        let m = tape.constant(Tensor::matrix(&[&[3.0, 4.0], &[5.0, 6.0]]));
        let out = tape.matmul(i, m).unwrap();
        assert_eq!(tape.value(out).data(), &[3.0, 4.0, 5.0, 6.0]);

        let a = tape.constant(Tensor::matrix(&[&[1.0, 2.0]]));
        let b = tape.constant(Tensor::matrix(&[&[3.0], &[4.0]]));
        let out = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(out).shape(), &[1, 1]);
        assert_eq!(tape.value(out).data(), &[11.0]);
    }

    #[test]
    fn matmul_rejects_inner_mismatch() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(tape.matmul(a, b), Err(Error::Shape(_))));
    }

    #[test]
    fn matmul_grad_of_sum_is_ones_times_b_transpose() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::matrix(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]));
        let b = tape.constant(Tensor::matrix(&[&[1.0, -1.0], &[2.0, 0.5], &[0.0, 3.0]]));
        let c = tape.matmul(a, b).unwrap();
        let s = tape.sum(c).unwrap();
        tape.backward(s).unwrap();
        // row sums of b: [0, 2.5, 3]
        assert_eq!(tape.grad(a).unwrap(), &[0.0, 2.5, 3.0, 0.0, 2.5, 3.0]);
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[1, 4], 7.0));
        let g = tape.constant(Tensor::ones(&[4]));
        let b = tape.constant(Tensor::zeros(&[4]));
        let y = tape.layer_norm(x, g, b, kernels::LAYER_NORM_EPS).unwrap();
        assert!(tape.value(y).data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn layer_norm_symmetric_pair() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(&[&[1.0, 3.0]]));
        let g = tape.constant(Tensor::ones(&[2]));
        let b = tape.constant(Tensor::zeros(&[2]));
        let y = tape.layer_norm(x, g, b, 1e-12).unwrap();
        assert!(close(tape.value(y).data(), &[-1.0, 1.0], 1e-9));
    }

    #[test]
    fn layer_norm_rejects_bad_gain() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[2, 3]));
        let g = tape.constant(Tensor::ones(&[4]));
        let b = tape.constant(Tensor::zeros(&[3]));
        assert!(matches!(tape.layer_norm(x, g, b, 1e-5), Err(Error::Shape(_))));
    }

    #[test]
    fn softmax_cases() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(&[0.0, 0.0, 0.0]));
        let y = tape.softmax(x).unwrap();
        assert!(close(tape.value(y).data(), &[1.0 / 3.0; 3], 1e-15));

        let x = tape.constant(Tensor::vector(&[1000.0, 0.0]));
        let y = tape.softmax(x).unwrap();
        let p = tape.value(y).data();
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1] < 1e-300);

        let a = tape.constant(Tensor::vector(&[2.0, 1.0]));
        let b = tape.constant(Tensor::vector(&[102.0, 101.0]));
        let (ya, yb) = (tape.softmax(a).unwrap(), tape.softmax(b).unwrap());
        assert!(close(tape.value(ya).data(), tape.value(yb).data(), 1e-12));
    }

    #[test]
    fn cross_entropy_cases() {
        let mut tape = Tape::new();
        let uniform = tape.constant(Tensor::zeros(&[1, 4]));
        let l = tape.cross_entropy(uniform, &[2]).unwrap();
        assert!((tape.value(l).data()[0] - 4f64.ln()).abs() < 1e-12);

        let peaked = tape.constant(Tensor::matrix(&[&[10.0, -10.0]]));
        let l = tape.cross_entropy(peaked, &[0]).unwrap();
        let v = tape.value(l).data()[0];
        assert!((0.0..1e-8).contains(&v));
    }

    #[test]
    fn cross_entropy_rejects_out_of_range_target() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(tape.cross_entropy(x, &[0, 3]), Err(Error::Index(_))));
    }

    #[test]
    fn backward_of_sum_and_square() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(&[1.0, 2.0, 3.0]));
        let s = tape.sum(x).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0, 1.0, 1.0]);

        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(&[2.0, 3.0]));
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[4.0, 6.0]);
    }

    #[test]
    fn backward_twice_is_an_error_until_reset() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(&[1.0]));
        let s = tape.sum(x).unwrap();
        tape.backward(s).unwrap();
        assert!(matches!(tape.backward(s), Err(Error::Tape(_))));
        tape.reset();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_and_detached() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(&[1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::Tape(_))));
        let c = tape.constant(Tensor::vector(&[1.0, 2.0]));
        let s = tape.sum(c).unwrap();
        assert!(matches!(tape.backward(s), Err(Error::Tape(_))));
    }

    #[test]
    fn non_finite_results_are_errors() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(&[f64::MAX, f64::MAX]));
        assert!(matches!(tape.sum(x), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn embedding_scatters_gradient() {
        let mut tape = Tape::new();
        let t = tape.leaf(Tensor::matrix(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]));
        let e = tape.embedding(t, &[2, 0, 2]).unwrap();
        assert_eq!(tape.value(e).data(), &[5.0, 6.0, 1.0, 2.0, 5.0, 6.0]);
        let s = tape.sum(e).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(t).unwrap(), &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
        assert!(matches!(tape.embedding(t, &[3]), Err(Error::Index(_))));
    }

    #[test]
    fn ops_are_bit_deterministic() {
        let run = || {
            let mut tape = Tape::new();
            let a = tape.leaf(Tensor::matrix(&[&[0.3, -1.2, 2.0], &[0.7, 0.1, -0.4]]));
            let b = tape.leaf(Tensor::matrix(&[&[1.1, 0.2], &[-0.5, 0.9], &[0.4, -2.2]]));
            let c = tape.matmul(a, b).unwrap();
            let g = tape.gelu(c).unwrap();
            let l = tape.cross_entropy(g, &[1, 0]).unwrap();
            tape.backward(l).unwrap();
            (tape.value(l).data().to_vec(), tape.grad(a).unwrap().to_vec())
        };
        assert_eq!(run(), run());
    }
}
