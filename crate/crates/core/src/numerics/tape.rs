//! Single-use reverse-mode differentiation tape.
//!
//! A forward pass pushes value nodes onto the tape; `backward` consumes the
//! tape, walks the nodes in reverse, and accumulates gradients into the
//! `requires_grad` parameters that were loaded onto it. Higher-order
//! derivatives are unsupported.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::tensor::{Mask, ParamId, ParamSet, Tensor};

/// Handle to a node on one tape. Valid only for the tape that created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add { lhs: usize, rhs: usize },
    AddRow { lhs: usize, row: usize },
    Mul { lhs: usize, rhs: usize },
    MulScalar { input: usize, factor: f64 },
    MatMul { lhs: usize, rhs: usize },
    Transpose { input: usize },
    Relu { input: usize },
    Softmax { input: usize, axis: usize },
    LayerNorm { input: usize, gain: usize, bias: usize, eps: f64 },
    CrossEntropyMasked { logits: usize, targets: Vec<usize>, mask: Vec<bool> },
    Sum { input: usize },
    Mean { input: usize },
    SliceCols { input: usize, start: usize, len: usize },
    ConcatCols { parts: Vec<usize> },
    EmbedTokens { table: usize, tokens: Vec<usize> },
}

struct Node {
    op: Op,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_links: Vec<(usize, ParamId)>,
    param_cache: HashMap<ParamId, Var>,
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let a_ip = a[i * k + p];
            if a_ip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            let c_row = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                c_row[j] += a_ip * b_row[j];
            }
        }
    }
    c
}

fn transpose_raw(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.nodes.push(Node { op, shape, data });
        Var(self.nodes.len() - 1)
    }

    /// Loads a parameter. Trainable parameters are linked so `backward`
    /// writes their gradients; frozen ones enter as plain constants.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        if let Some(&v) = self.param_cache.get(&id) {
            return v;
        }
        let t = params.get(id);
        let v = self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf);
        if t.requires_grad() {
            self.param_links.push((v.0, id));
        }
        self.param_cache.insert(id, v);
        v
    }

    pub fn constant(&mut self, tensor: &Tensor) -> Var {
        self.push(tensor.shape().to_vec(), tensor.data().to_vec(), Op::Leaf)
    }

    pub fn constant_from(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape, data)?;
        Ok(self.constant(&t))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].data
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        assert_eq!(self.nodes[v.0].data.len(), 1, "scalar() on non-scalar node");
        self.nodes[v.0].data[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec()).unwrap()
    }

    fn dims2(&self, v: Var, what: &str) -> Result<(usize, usize)> {
        match self.nodes[v.0].shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            other => Err(Error::shape(format!("{what}: expected 2-D, got {other:?}"))),
        }
    }

    // ── Forward ops ─────────────────────────────────────────────────

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!(
                "add: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let data: Vec<f64> = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        Ok(self.push(self.nodes[a.0].shape.clone(), data, Op::Add { lhs: a.0, rhs: b.0 }))
    }

    /// Broadcast-add a `[d]` row vector onto every row of an `[n, d]` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (n, d) = self.dims2(a, "add_row")?;
        if self.shape(row) != [d] {
            return Err(Error::shape(format!(
                "add_row: row {:?} does not match width {d}",
                self.shape(row)
            )));
        }
        let mut data = self.value(a).to_vec();
        let r = self.value(row);
        for i in 0..n {
            for j in 0..d {
                data[i * d + j] += r[j];
            }
        }
        Ok(self.push(vec![n, d], data, Op::AddRow { lhs: a.0, row: row.0 }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!(
                "mul: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let data: Vec<f64> = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        Ok(self.push(self.nodes[a.0].shape.clone(), data, Op::Mul { lhs: a.0, rhs: b.0 }))
    }

    pub fn mul_scalar(&mut self, a: Var, factor: f64) -> Var {
        let data: Vec<f64> = self.value(a).iter().map(|x| x * factor).collect();
        self.push(self.nodes[a.0].shape.clone(), data, Op::MulScalar { input: a.0, factor })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul lhs")?;
        let (k2, n) = self.dims2(b, "matmul rhs")?;
        if k != k2 {
            return Err(Error::shape(format!("matmul: inner dims {k} vs {k2}")));
        }
        let data = matmul_raw(self.value(a), self.value(b), m, k, n);
        Ok(self.push(vec![m, n], data, Op::MatMul { lhs: a.0, rhs: b.0 }))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims2(a, "transpose")?;
        let data = transpose_raw(self.value(a), r, c);
        Ok(self.push(vec![c, r], data, Op::Transpose { input: a.0 }))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let data: Vec<f64> = self.value(a).iter().map(|&x| x.max(0.0)).collect();
        self.push(self.nodes[a.0].shape.clone(), data, Op::Relu { input: a.0 })
    }

    /// Numerically stable softmax along `axis` (max is subtracted per lane).
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.softmax_inner(a, axis, None)
    }

    /// Softmax over a 2-D tensor where only `mask`-visible entries compete;
    /// masked entries get exactly zero weight. Errors if any lane along the
    /// softmax axis is fully masked.
    pub fn masked_softmax(&mut self, a: Var, axis: usize, mask: &Mask) -> Result<Var> {
        let (r, c) = self.dims2(a, "masked_softmax")?;
        if (mask.rows(), mask.cols()) != (r, c) {
            return Err(Error::shape(format!(
                "masked_softmax: mask {}x{} vs tensor {r}x{c}",
                mask.rows(),
                mask.cols()
            )));
        }
        self.softmax_inner(a, axis, Some(mask.clone()))
    }

    fn softmax_inner(&mut self, a: Var, axis: usize, mask: Option<Mask>) -> Result<Var> {
        let shape = self.nodes[a.0].shape.clone();
        if axis >= shape.len() {
            return Err(Error::shape(format!(
                "softmax: axis {axis} out of range for {shape:?}"
            )));
        }
        if shape[axis] == 0 {
            return Err(Error::shape("softmax: empty axis".to_string()));
        }
        let axis_size = shape[axis];
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let x = self.value(a);
        let mut out = vec![0.0; x.len()];

        let visible = |flat: usize| -> bool {
            match &mask {
                None => true,
                Some(m) => {
                    // Mask only applies to 2-D tensors; flat index decomposes
                    // directly into (row, col).
                    let cols = m.cols();
                    m.visible(flat / cols, flat % cols)
                }
            }
        };

        for o in 0..outer {
            for i in 0..inner {
                let flat_of = |k: usize| o * axis_size * inner + k * inner + i;
                let mut max_val = f64::NEG_INFINITY;
                for k in 0..axis_size {
                    let f = flat_of(k);
                    if visible(f) {
                        max_val = max_val.max(x[f]);
                    }
                }
                if max_val == f64::NEG_INFINITY {
                    return Err(Error::shape("masked_softmax: fully masked lane".to_string()));
                }
                let mut denom = 0.0;
                for k in 0..axis_size {
                    let f = flat_of(k);
                    if visible(f) {
                        let e = (x[f] - max_val).exp();
                        out[f] = e;
                        denom += e;
                    }
                }
                for k in 0..axis_size {
                    let f = flat_of(k);
                    if visible(f) {
                        out[f] /= denom;
                    }
                }
            }
        }
        Ok(self.push(shape, out, Op::Softmax { input: a.0, axis }))
    }

    /// Layer normalization over the last dimension: per-row zero mean and
    /// unit variance (population variance, eps inside the square root),
    /// followed by the `gain`/`bias` affine map.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let shape = self.nodes[x.0].shape.clone();
        let d = *shape.last().ok_or_else(|| Error::shape("layer_norm: 0-rank input"))?;
        if self.shape(gain) != [d] || self.shape(bias) != [d] {
            return Err(Error::shape(format!(
                "layer_norm: gain {:?} / bias {:?} must be [{d}]",
                self.shape(gain),
                self.shape(bias)
            )));
        }
        if d == 1 && eps == 0.0 {
            return Err(Error::shape(
                "layer_norm: zero variance is certain for width-1 rows with eps = 0".to_string(),
            ));
        }
        let xv = self.value(x);
        let g = self.value(gain).to_vec();
        let b = self.value(bias).to_vec();
        let rows = xv.len() / d;
        let mut out = vec![0.0; xv.len()];
        for r in 0..rows {
            let row = &xv[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let denom = var + eps;
            if denom == 0.0 {
                return Err(Error::shape("layer_norm: zero variance with eps = 0".to_string()));
            }
            let inv_std = 1.0 / denom.sqrt();
            for j in 0..d {
                out[r * d + j] = (row[j] - mean) * inv_std * g[j] + b[j];
            }
        }
        Ok(self.push(shape, out, Op::LayerNorm { input: x.0, gain: gain.0, bias: bias.0, eps }))
    }

    /// Mean negative log-softmax probability of `targets` over unmasked
    /// positions of a `[K, W]` logit matrix.
    pub fn cross_entropy_masked(
        &mut self,
        logits: Var,
        targets: &[usize],
        mask: &[bool],
    ) -> Result<Var> {
        let (k, w) = self.dims2(logits, "cross_entropy_masked")?;
        if targets.len() != k || mask.len() != k {
            return Err(Error::shape(format!(
                "cross_entropy_masked: {k} rows vs {} targets / {} mask entries",
                targets.len(),
                mask.len()
            )));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= w) {
            return Err(Error::shape(format!(
                "cross_entropy_masked: target {t} out of range for vocabulary {w}"
            )));
        }
        let active = mask.iter().filter(|&&m| m).count();
        if active == 0 {
            return Err(Error::shape("cross_entropy_masked: all positions masked".to_string()));
        }
        let x = self.value(logits);
        let mut total = 0.0;
        for row in 0..k {
            if !mask[row] {
                continue;
            }
            let r = &x[row * w..(row + 1) * w];
            let max = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = r.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            total -= r[targets[row]] - lse;
        }
        let loss = total / active as f64;
        Ok(self.push(
            vec![1],
            vec![loss],
            Op::CrossEntropyMasked { logits: logits.0, targets: targets.to_vec(), mask: mask.to_vec() },
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).iter().sum();
        self.push(vec![1], vec![s], Op::Sum { input: a.0 })
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s: f64 = self.value(a).iter().sum();
        self.push(vec![1], vec![s / n], Op::Mean { input: a.0 })
    }

    /// Columns `start .. start+len` of a 2-D tensor.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.dims2(a, "slice_cols")?;
        if start + len > c || len == 0 {
            return Err(Error::shape(format!(
                "slice_cols: [{start}, {}) out of range for width {c}",
                start + len
            )));
        }
        let x = self.value(a);
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&x[i * c + start..i * c + start + len]);
        }
        Ok(self.push(vec![r, len], data, Op::SliceCols { input: a.0, start, len }))
    }

    /// Concatenate 2-D tensors with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat_cols: no parts".to_string()));
        }
        let (rows, _) = self.dims2(parts[0], "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.dims2(p, "concat_cols")?;
            if r != rows {
                return Err(Error::shape(format!("concat_cols: row counts {rows} vs {r}")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for (&p, &c) in parts.iter().zip(&widths) {
                let x = self.value(p);
                data.extend_from_slice(&x[i * c..(i + 1) * c]);
            }
        }
        Ok(self.push(
            vec![rows, total],
            data,
            Op::ConcatCols { parts: parts.iter().map(|p| p.0).collect() },
        ))
    }

    /// Token embedding lookup with the zero start row: row 0 is all zeros,
    /// row i+1 is the table row of `tokens[i]`. Gradients scatter back into
    /// the looked-up table rows.
    pub fn embed_tokens(&mut self, table: Var, tokens: &[usize]) -> Result<Var> {
        let (w, dim) = self.dims2(table, "embed_tokens")?;
        if let Some(&t) = tokens.iter().find(|&&t| t >= w) {
            return Err(Error::shape(format!(
                "embed_tokens: token index {t} out of range for table with {w} rows"
            )));
        }
        let tv = self.value(table);
        let mut data = vec![0.0; (tokens.len() + 1) * dim];
        for (i, &t) in tokens.iter().enumerate() {
            data[(i + 1) * dim..(i + 2) * dim].copy_from_slice(&tv[t * dim..(t + 1) * dim]);
        }
        Ok(self.push(
            vec![tokens.len() + 1, dim],
            data,
            Op::EmbedTokens { table: table.0, tokens: tokens.to_vec() },
        ))
    }

    // ── Backward ────────────────────────────────────────────────────

    /// Reverse pass from a scalar loss. Gradients of every trainable
    /// parameter loaded on this tape are accumulated into the `ParamSet`.
    /// Consumes the tape: it cannot be reused afterwards.
    pub fn backward(self, loss: Var, params: &mut ParamSet) -> Result<()> {
        let grads = self.backward_raw(loss)?;
        let (nodes, links) = (grads, &self.param_links);
        for &(node_idx, pid) in links {
            if let Some(g) = &nodes[node_idx] {
                params.get_mut(pid).accumulate_grad(g);
            }
        }
        Ok(())
    }

    fn backward_raw(&self, loss: Var) -> Result<Vec<Option<Vec<f64>>>> {
        if self.nodes[loss.0].data.len() != 1 {
            return Err(Error::shape(format!(
                "backward: loss must be scalar, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);

        fn accum(slot: &mut Option<Vec<f64>>, len: usize, f: impl FnOnce(&mut [f64])) {
            let buf = slot.get_or_insert_with(|| vec![0.0; len]);
            f(buf);
        }

        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g); // keep for param link collection
                    continue;
                }
                Op::Add { lhs, rhs } => {
                    accum(&mut grads[*lhs], g.len(), |b| {
                        b.iter_mut().zip(&g).for_each(|(a, v)| *a += v)
                    });
                    accum(&mut grads[*rhs], g.len(), |b| {
                        b.iter_mut().zip(&g).for_each(|(a, v)| *a += v)
                    });
                }
                Op::AddRow { lhs, row } => {
                    let d = self.nodes[*row].data.len();
                    accum(&mut grads[*lhs], g.len(), |b| {
                        b.iter_mut().zip(&g).for_each(|(a, v)| *a += v)
                    });
                    accum(&mut grads[*row], d, |b| {
                        for (idx, v) in g.iter().enumerate() {
                            b[idx % d] += v;
                        }
                    });
                }
                Op::Mul { lhs, rhs } => {
                    let lv = &self.nodes[*lhs].data;
                    let rv = &self.nodes[*rhs].data;
                    accum(&mut grads[*lhs], g.len(), |b| {
                        for (idx, v) in g.iter().enumerate() {
                            b[idx] += v * rv[idx];
                        }
                    });
                    accum(&mut grads[*rhs], g.len(), |b| {
                        for (idx, v) in g.iter().enumerate() {
                            b[idx] += v * lv[idx];
                        }
                    });
                }
                Op::MulScalar { input, factor } => {
                    accum(&mut grads[*input], g.len(), |b| {
                        for (idx, v) in g.iter().enumerate() {
                            b[idx] += v * factor;
                        }
                    });
                }
                Op::MatMul { lhs, rhs } => {
                    let (m, k) = (self.nodes[*lhs].shape[0], self.nodes[*lhs].shape[1]);
                    let nn = self.nodes[*rhs].shape[1];
                    let bt = transpose_raw(&self.nodes[*rhs].data, k, nn);
                    let da = matmul_raw(&g, &bt, m, nn, k);
                    let at = transpose_raw(&self.nodes[*lhs].data, m, k);
                    let db = matmul_raw(&at, &g, k, m, nn);
                    accum(&mut grads[*lhs], da.len(), |b| {
                        b.iter_mut().zip(&da).for_each(|(a, v)| *a += v)
                    });
                    accum(&mut grads[*rhs], db.len(), |b| {
                        b.iter_mut().zip(&db).for_each(|(a, v)| *a += v)
                    });
                }
                Op::Transpose { input } => {
                    let (r, c) = (node.shape[0], node.shape[1]);
                    let gt = transpose_raw(&g, r, c);
                    accum(&mut grads[*input], gt.len(), |b| {
                        b.iter_mut().zip(&gt).for_each(|(a, v)| *a += v)
                    });
                }
                Op::Relu { input } => {
                    let x = &self.nodes[*input].data;
                    accum(&mut grads[*input], g.len(), |b| {
                        for (idx, v) in g.iter().enumerate() {
                            if x[idx] > 0.0 {
                                b[idx] += v;
                            }
                        }
                    });
                }
                Op::Softmax { input, axis } => {
                    // Masked entries have zero output, so the Jacobian-vector
                    // product already sends them zero gradient.
                    let s = &node.data;
                    let shape = &node.shape;
                    let axis_size = shape[*axis];
                    let outer: usize = shape[..*axis].iter().product();
                    let inner: usize = shape[*axis + 1..].iter().product();
                    let mut dx = vec![0.0; s.len()];
                    for o in 0..outer {
                        for ii in 0..inner {
                            let flat_of = |k: usize| o * axis_size * inner + k * inner + ii;
                            let mut dot = 0.0;
                            for k in 0..axis_size {
                                let f = flat_of(k);
                                dot += g[f] * s[f];
                            }
                            for k in 0..axis_size {
                                let f = flat_of(k);
                                dx[f] = s[f] * (g[f] - dot);
                            }
                        }
                    }
                    accum(&mut grads[*input], dx.len(), |b| {
                        b.iter_mut().zip(&dx).for_each(|(a, v)| *a += v)
                    });
                }
                Op::LayerNorm { input, gain, bias, eps } => {
                    let x = &self.nodes[*input].data;
                    let gv = &self.nodes[*gain].data;
                    let d = *node.shape.last().unwrap();
                    let rows = x.len() / d;
                    let mut dx = vec![0.0; x.len()];
                    let mut dgain = vec![0.0; d];
                    let mut dbias = vec![0.0; d];
                    for r in 0..rows {
                        let row = &x[r * d..(r + 1) * d];
                        let grow = &g[r * d..(r + 1) * d];
                        let mean = row.iter().sum::<f64>() / d as f64;
                        let var =
                            row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                        let inv_std = 1.0 / (var + eps).sqrt();
                        let xhat: Vec<f64> = row.iter().map(|v| (v - mean) * inv_std).collect();
                        let mut dxhat = vec![0.0; d];
                        for j in 0..d {
                            dgain[j] += grow[j] * xhat[j];
                            dbias[j] += grow[j];
                            dxhat[j] = grow[j] * gv[j];
                        }
                        let sum_dxhat: f64 = dxhat.iter().sum();
                        let sum_dxhat_xhat: f64 =
                            dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum();
                        let df = d as f64;
                        for j in 0..d {
                            dx[r * d + j] = inv_std / df
                                * (df * dxhat[j] - sum_dxhat - xhat[j] * sum_dxhat_xhat);
                        }
                    }
                    accum(&mut grads[*input], dx.len(), |b| {
                        b.iter_mut().zip(&dx).for_each(|(a, v)| *a += v)
                    });
                    accum(&mut grads[*gain], d, |b| {
                        b.iter_mut().zip(&dgain).for_each(|(a, v)| *a += v)
                    });
                    accum(&mut grads[*bias], d, |b| {
                        b.iter_mut().zip(&dbias).for_each(|(a, v)| *a += v)
                    });
                }
                Op::CrossEntropyMasked { logits, targets, mask } => {
                    let x = &self.nodes[*logits].data;
                    let w = self.nodes[*logits].shape[1];
                    let k = self.nodes[*logits].shape[0];
                    let active = mask.iter().filter(|&&m| m).count() as f64;
                    let scale = g[0] / active;
                    let mut dl = vec![0.0; x.len()];
                    for row in 0..k {
                        if !mask[row] {
                            continue;
                        }
                        let r = &x[row * w..(row + 1) * w];
                        let max = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let exps: Vec<f64> = r.iter().map(|v| (v - max).exp()).collect();
                        let denom: f64 = exps.iter().sum();
                        for c in 0..w {
                            let p = exps[c] / denom;
                            let y = if c == targets[row] { 1.0 } else { 0.0 };
                            dl[row * w + c] = scale * (p - y);
                        }
                    }
                    accum(&mut grads[*logits], dl.len(), |b| {
                        b.iter_mut().zip(&dl).for_each(|(a, v)| *a += v)
                    });
                }
                Op::Sum { input } => {
                    let len = self.nodes[*input].data.len();
                    accum(&mut grads[*input], len, |b| {
                        b.iter_mut().for_each(|a| *a += g[0])
                    });
                }
                Op::Mean { input } => {
                    let len = self.nodes[*input].data.len();
                    let v = g[0] / len as f64;
                    accum(&mut grads[*input], len, |b| b.iter_mut().for_each(|a| *a += v));
                }
                Op::SliceCols { input, start, len } => {
                    let c = self.nodes[*input].shape[1];
                    let rows = node.shape[0];
                    let total = self.nodes[*input].data.len();
                    accum(&mut grads[*input], total, |b| {
                        for i in 0..rows {
                            for j in 0..*len {
                                b[i * c + start + j] += g[i * len + j];
                            }
                        }
                    });
                }
                Op::ConcatCols { parts } => {
                    let rows = node.shape[0];
                    let total = node.shape[1];
                    let mut offset = 0;
                    for &p in parts {
                        let c = self.nodes[p].shape[1];
                        let len = self.nodes[p].data.len();
                        let off = offset;
                        accum(&mut grads[p], len, |b| {
                            for i in 0..rows {
                                for j in 0..c {
                                    b[i * c + j] += g[i * total + off + j];
                                }
                            }
                        });
                        offset += c;
                    }
                }
                Op::EmbedTokens { table, tokens } => {
                    let dim = node.shape[1];
                    let total = self.nodes[*table].data.len();
                    accum(&mut grads[*table], total, |b| {
                        for (idx, &t) in tokens.iter().enumerate() {
                            let src = &g[(idx + 1) * dim..(idx + 2) * dim];
                            let dst = &mut b[t * dim..(t + 1) * dim];
                            for (a, v) in dst.iter_mut().zip(src) {
                                *a += v;
                            }
                        }
                    });
                }
            }
        }
        Ok(grads)
    }
}
