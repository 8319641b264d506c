use std::sync::Arc;

use super::{Result, Tensor, TensorError, MASK_NEG};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Grouped multi-head scaled dot-product attention.
///
/// Query rows are split into `groups` contiguous blocks of `q_rows`, key and
/// value rows into `groups` blocks of `kv_rows`; block `g` of the queries
/// attends only to block `g` of the keys. Columns are split evenly across
/// `heads`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionSpec {
    pub groups: usize,
    pub q_rows: usize,
    pub kv_rows: usize,
    pub heads: usize,
    pub scale: f64,
    /// Per-key additive mask shared by every group (`0` or [`MASK_NEG`]).
    pub key_mask: Option<Vec<f64>>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Concat { parts: Vec<usize>, axis: usize },
    SliceRows { src: usize, start: usize },
    GatherRows { src: usize, index: Vec<usize> },
    Transpose(usize),
    Softmax(usize),
    Sigmoid(usize),
    Tanh(usize),
    Log(usize),
    Sum(usize),
    SumAxis { src: usize, axis: usize },
    MaskedAdd(usize),
    Element { src: usize, index: usize },
    Attention {
        q: usize,
        k: usize,
        v: usize,
        spec: AttentionSpec,
        probs: Vec<f64>,
    },
    RowStandardize { src: usize, inv_std: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Arc<Tensor>,
    op: Op,
}

/// A dynamic computation tape. Build one per forward pass.
#[derive(Debug)]
pub struct Graph {
    nodes: Vec<Node>,
    record: bool,
    backward_done: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by leaf [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `var`, or zeros of length `len` if it was unreachable.
    pub fn get_or_zeros(&self, var: Var, len: usize) -> Vec<f64> {
        self.get(var).map_or_else(|| vec![0.0; len], <[f64]>::to_vec)
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn mat(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
    Tensor::new(vec![rows, cols], data).expect("internal shape bookkeeping")
}

fn softmax_rows(data: &mut [f64], cols: usize) {
    for row in data.chunks_mut(cols) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
    }
}

fn is_masked(m: f64) -> bool {
    m <= MASK_NEG * 0.5
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            record: true,
            backward_done: false,
        }
    }

    /// A graph that computes values only; `backward` yields no gradients.
    pub fn no_grad() -> Self {
        Self {
            nodes: Vec::new(),
            record: false,
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shared_value(&self, v: Var) -> Arc<Tensor> {
        Arc::clone(&self.nodes[v.0].value)
    }

    /// Drops every node and clears the backward flag.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.backward_done = false;
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let op = if self.record { op } else { Op::Leaf };
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Leaf sharing its buffer with a parameter store.
    pub fn param(&mut self, t: Arc<Tensor>) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.val(a), self.val(b));
        let (m, k) = ta.matrix_dims();
        let (k2, n) = tb.matrix_dims();
        if k != k2 {
            return Err(shape_err("matmul", ta, tb));
        }
        let mut out = vec![0.0; m * n];
        super::gemm(m, k, n, ta.data(), false, tb.data(), false, &mut out, false);
        Ok(self.push(mat(m, n, out), Op::MatMul(a.0, b.0)))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let (ta, tb) = (self.val(a), self.val(b));
        if ta.matrix_dims() != tb.matrix_dims() {
            return Err(shape_err(op, ta, tb));
        }
        Ok(ta.matrix_dims())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape("add", a, b)?;
        let out = self
            .val(a)
            .data()
            .iter()
            .zip(self.val(b).data())
            .map(|(x, y)| x + y)
            .collect();
        Ok(self.push(mat(r, c, out), Op::Add(a.0, b.0)))
    }

    /// Adds a length-`cols` row vector to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ta, tb) = (self.val(a), self.val(bias));
        let (r, c) = ta.matrix_dims();
        if tb.len() != c {
            return Err(shape_err("add_row", ta, tb));
        }
        let mut out = ta.data().to_vec();
        for row in out.chunks_mut(c.max(1)) {
            for (x, b) in row.iter_mut().zip(tb.data()) {
                *x += b;
            }
        }
        Ok(self.push(mat(r, c, out), Op::AddRow(a.0, bias.0)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape("mul", a, b)?;
        let out = self
            .val(a)
            .data()
            .iter()
            .zip(self.val(b).data())
            .map(|(x, y)| x * y)
            .collect();
        Ok(self.push(mat(r, c, out), Op::Mul(a.0, b.0)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let (r, c) = self.val(a).matrix_dims();
        let out = self.val(a).data().iter().map(|x| x * s).collect();
        self.push(mat(r, c, out), Op::Scale(a.0, s))
    }

    /// Concatenates rank-2 values along `axis` (0 = rows, 1 = columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = match parts.first() {
            Some(p) => self.val(*p),
            None => {
                return Err(TensorError::OutOfRange {
                    op: "concat",
                    index: 0,
                    extent: 0,
                })
            }
        };
        let (r0, c0) = first.matrix_dims();
        match axis {
            0 => {
                let mut rows = 0;
                let mut out = Vec::new();
                for p in parts {
                    let t = self.val(*p);
                    if t.cols() != c0 {
                        return Err(shape_err("concat", first, t));
                    }
                    rows += t.rows();
                    out.extend_from_slice(t.data());
                }
                Ok(self.push(
                    mat(rows, c0, out),
                    Op::Concat {
                        parts: parts.iter().map(|p| p.0).collect(),
                        axis,
                    },
                ))
            }
            1 => {
                let mut cols = 0;
                for p in parts {
                    let t = self.val(*p);
                    if t.rows() != r0 {
                        return Err(shape_err("concat", first, t));
                    }
                    cols += t.cols();
                }
                let mut out = Vec::with_capacity(r0 * cols);
                for r in 0..r0 {
                    for p in parts {
                        out.extend_from_slice(self.val(*p).row(r));
                    }
                }
                Ok(self.push(
                    mat(r0, cols, out),
                    Op::Concat {
                        parts: parts.iter().map(|p| p.0).collect(),
                        axis,
                    },
                ))
            }
            _ => Err(TensorError::OutOfRange {
                op: "concat",
                index: axis,
                extent: 2,
            }),
        }
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.val(a);
        let (r, c) = t.matrix_dims();
        if start + len > r {
            return Err(TensorError::OutOfRange {
                op: "slice_rows",
                index: start + len,
                extent: r,
            });
        }
        let out = t.data()[start * c..(start + len) * c].to_vec();
        Ok(self.push(mat(len, c, out), Op::SliceRows { src: a.0, start }))
    }

    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let t = self.val(a);
        let (r, c) = t.matrix_dims();
        let mut out = Vec::with_capacity(index.len() * c);
        for &i in index {
            if i >= r {
                return Err(TensorError::OutOfRange {
                    op: "gather_rows",
                    index: i,
                    extent: r,
                });
            }
            out.extend_from_slice(t.row(i));
        }
        Ok(self.push(
            mat(index.len(), c, out),
            Op::GatherRows {
                src: a.0,
                index: index.to_vec(),
            },
        ))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let t = self.val(a);
        let (r, c) = t.matrix_dims();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = t.data()[i * c + j];
            }
        }
        self.push(mat(c, r, out), Op::Transpose(a.0))
    }

    /// Row-wise softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let (r, c) = self.val(a).matrix_dims();
        let mut out = self.val(a).data().to_vec();
        softmax_rows(&mut out, c.max(1));
        self.push(mat(r, c, out), Op::Softmax(a.0))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (r, c) = self.val(a).matrix_dims();
        let out = self.val(a).data().iter().map(|&x| f(x)).collect();
        self.push(mat(r, c, out), op)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a.0))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a.0))
    }

    /// Sum of every entry, as a `1x1` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.val(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a.0))
    }

    /// Sum along `axis` (0 collapses rows, 1 collapses columns).
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let t = self.val(a);
        let (r, c) = t.matrix_dims();
        let out = match axis {
            0 => {
                let mut out = vec![0.0; c];
                for row in t.data().chunks(c.max(1)) {
                    for (o, x) in out.iter_mut().zip(row) {
                        *o += x;
                    }
                }
                mat(1, c, out)
            }
            1 => mat(r, 1, t.data().chunks(c.max(1)).map(|row| row.iter().sum()).collect()),
            _ => {
                return Err(TensorError::OutOfRange {
                    op: "sum_axis",
                    index: axis,
                    extent: 2,
                })
            }
        };
        Ok(self.push(out, Op::SumAxis { src: a.0, axis }))
    }

    /// Adds a per-column mask (entries `0` or [`MASK_NEG`]) to every row.
    pub fn masked_add(&mut self, a: Var, mask: &[f64]) -> Result<Var> {
        let t = self.val(a);
        let (r, c) = t.matrix_dims();
        if mask.len() != c {
            return Err(TensorError::ShapeMismatch {
                op: "masked_add",
                lhs: t.shape().to_vec(),
                rhs: vec![mask.len()],
            });
        }
        if mask.iter().all(|&m| is_masked(m)) {
            return Err(TensorError::FullyMasked);
        }
        let mut out = t.data().to_vec();
        for row in out.chunks_mut(c.max(1)) {
            for (x, m) in row.iter_mut().zip(mask) {
                *x += m;
            }
        }
        Ok(self.push(mat(r, c, out), Op::MaskedAdd(a.0)))
    }

    /// Single entry by flat index, as a `1x1` tensor.
    pub fn element(&mut self, a: Var, index: usize) -> Result<Var> {
        let t = self.val(a);
        if index >= t.len() {
            return Err(TensorError::OutOfRange {
                op: "element",
                index,
                extent: t.len(),
            });
        }
        let x = t.data()[index];
        Ok(self.push(Tensor::scalar(x), Op::Element { src: a.0, index }))
    }

    /// Standardizes each row to zero mean and unit variance.
    pub fn row_standardize(&mut self, a: Var) -> Var {
        const EPS: f64 = 1e-5;
        let (r, c) = self.val(a).matrix_dims();
        let mut out = self.val(a).data().to_vec();
        let mut inv_std = Vec::with_capacity(r);
        for row in out.chunks_mut(c.max(1)) {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let is = 1.0 / (var + EPS).sqrt();
            for x in row.iter_mut() {
                *x = (*x - mean) * is;
            }
            inv_std.push(is);
        }
        self.push(mat(r, c, out), Op::RowStandardize { src: a.0, inv_std })
    }

    pub fn attention(&mut self, q: Var, k: Var, v: Var, spec: AttentionSpec) -> Result<Var> {
        let (tq, tk, tv) = (self.val(q), self.val(k), self.val(v));
        let (qr, dq) = tq.matrix_dims();
        let (kr, dk) = tk.matrix_dims();
        let (vr, dv) = tv.matrix_dims();
        let h = spec.heads;
        if h == 0
            || dq != dk
            || dq % h != 0
            || dv % h != 0
            || kr != vr
            || qr != spec.groups * spec.q_rows
            || kr != spec.groups * spec.kv_rows
        {
            return Err(shape_err("attention", tq, tk));
        }
        if let Some(m) = &spec.key_mask {
            if m.len() != spec.kv_rows {
                return Err(TensorError::ShapeMismatch {
                    op: "attention mask",
                    lhs: vec![spec.kv_rows],
                    rhs: vec![m.len()],
                });
            }
            if m.iter().all(|&x| is_masked(x)) {
                return Err(TensorError::FullyMasked);
            }
        }
        let (nq, nk) = (spec.q_rows, spec.kv_rows);
        let (hk, hv) = (dq / h, dv / h);
        let mut probs = vec![0.0; spec.groups * h * nq * nk];
        let mut out = vec![0.0; qr * dv];
        let (qd, kd, vd) = (tq.data(), tk.data(), tv.data());
        for g in 0..spec.groups {
            for head in 0..h {
                let base = (g * h + head) * nq * nk;
                for i in 0..nq {
                    let qrow = &qd[(g * nq + i) * dq + head * hk..][..hk];
                    let prow = &mut probs[base + i * nk..base + (i + 1) * nk];
                    for (j, p) in prow.iter_mut().enumerate() {
                        let krow = &kd[(g * nk + j) * dk + head * hk..][..hk];
                        let dot: f64 = qrow.iter().zip(krow).map(|(a, b)| a * b).sum();
                        *p = spec.scale * dot + spec.key_mask.as_ref().map_or(0.0, |m| m[j]);
                    }
                    softmax_rows(prow, nk.max(1));
                    let orow = &mut out[(g * nq + i) * dv + head * hv..][..hv];
                    for (j, &p) in prow.iter().enumerate() {
                        if p == 0.0 {
                            continue;
                        }
                        let vrow = &vd[(g * nk + j) * dv + head * hv..][..hv];
                        for (o, x) in orow.iter_mut().zip(vrow) {
                            *o += p * x;
                        }
                    }
                }
            }
        }
        let value = mat(qr, dv, out);
        let op = Op::Attention {
            q: q.0,
            k: k.0,
            v: v.0,
            spec,
            probs: if self.record { probs } else { Vec::new() },
        };
        Ok(self.push(value, op))
    }

    /// Attention weights of the most recent evaluation of an attention node,
    /// laid out `[group][head][query][key]`. Empty on no-grad graphs.
    pub fn attention_weights(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    pub fn attention_spec(&self, v: Var) -> Option<&AttentionSpec> {
        match &self.nodes[v.0].op {
            Op::Attention { spec, .. } => Some(spec),
            _ => None,
        }
    }

    /// Every attention node on the graph, in creation order.
    pub fn attention_nodes(&self) -> Vec<Var> {
        (0..self.nodes.len())
            .filter(|&i| matches!(self.nodes[i].op, Op::Attention { .. }))
            .map(Var)
            .collect()
    }

    /// Reverse-mode sweep from a `1x1` loss. Fills gradients for every leaf
    /// reachable from `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.backward_done {
            return Err(TensorError::BackwardTwice);
        }
        let lt = self.val(loss);
        if lt.len() != 1 {
            return Err(TensorError::NonScalarLoss(lt.shape().to_vec()));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        fn acc<'a>(grads: &'a mut [Option<Vec<f64>>], id: usize, len: usize) -> &'a mut Vec<f64> {
            grads[id].get_or_insert_with(|| vec![0.0; len])
        }

        for n in (0..=loss.0).rev() {
            let node = &self.nodes[n];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(gy) = grads[n].take() else { continue };
            let y = &node.value;
            let nodes = &self.nodes;
            let len = |id: usize| nodes[id].value.len();
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (&nodes[*a].value, &nodes[*b].value);
                    let (m, k) = ta.matrix_dims();
                    let nn = tb.cols();
                    super::gemm(m, nn, k, &gy, false, tb.data(), true, acc(&mut grads, *a, m * k), true);
                    super::gemm(k, m, nn, ta.data(), true, &gy, false, acc(&mut grads, *b, k * nn), true);
                }
                Op::Add(a, b) => {
                    for id in [*a, *b] {
                        for (g, d) in acc(&mut grads, id, gy.len()).iter_mut().zip(&gy) {
                            *g += d;
                        }
                    }
                }
                Op::AddRow(a, b) => {
                    for (g, d) in acc(&mut grads, *a, gy.len()).iter_mut().zip(&gy) {
                        *g += d;
                    }
                    let c = len(*b);
                    let gb = acc(&mut grads, *b, c);
                    for row in gy.chunks(c.max(1)) {
                        for (g, d) in gb.iter_mut().zip(row) {
                            *g += d;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (nodes[*a].value.data(), nodes[*b].value.data());
                    let ga = acc(&mut grads, *a, gy.len());
                    for ((g, d), x) in ga.iter_mut().zip(&gy).zip(vb) {
                        *g += d * x;
                    }
                    let gb = acc(&mut grads, *b, gy.len());
                    for ((g, d), x) in gb.iter_mut().zip(&gy).zip(va) {
                        *g += d * x;
                    }
                }
                Op::Scale(a, s) => {
                    for (g, d) in acc(&mut grads, *a, gy.len()).iter_mut().zip(&gy) {
                        *g += d * s;
                    }
                }
                Op::Concat { parts, axis } => {
                    if *axis == 0 {
                        let mut off = 0;
                        for &p in parts {
                            let l = len(p);
                            for (g, d) in acc(&mut grads, p, l).iter_mut().zip(&gy[off..off + l]) {
                                *g += d;
                            }
                            off += l;
                        }
                    } else {
                        let cols = y.cols();
                        let mut col_off = 0;
                        for &p in parts {
                            let (pr, pc) = nodes[p].value.matrix_dims();
                            let gp = acc(&mut grads, p, pr * pc);
                            for r in 0..pr {
                                let src = &gy[r * cols + col_off..r * cols + col_off + pc];
                                for (g, d) in gp[r * pc..(r + 1) * pc].iter_mut().zip(src) {
                                    *g += d;
                                }
                            }
                            col_off += pc;
                        }
                    }
                }
                Op::SliceRows { src, start } => {
                    let c = y.cols();
                    let ga = acc(&mut grads, *src, len(*src));
                    for (g, d) in ga[start * c..].iter_mut().zip(&gy) {
                        *g += d;
                    }
                }
                Op::GatherRows { src, index } => {
                    let c = y.cols();
                    let ga = acc(&mut grads, *src, len(*src));
                    for (r, &i) in index.iter().enumerate() {
                        for (g, d) in ga[i * c..(i + 1) * c].iter_mut().zip(&gy[r * c..(r + 1) * c]) {
                            *g += d;
                        }
                    }
                }
                Op::Transpose(a) => {
                    let (r, c) = nodes[*a].value.matrix_dims();
                    let ga = acc(&mut grads, *a, r * c);
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] += gy[j * r + i];
                        }
                    }
                }
                Op::Softmax(a) => {
                    let c = y.cols().max(1);
                    let ga = acc(&mut grads, *a, gy.len());
                    for ((gr, dr), yr) in ga.chunks_mut(c).zip(gy.chunks(c)).zip(y.data().chunks(c)) {
                        let dot: f64 = dr.iter().zip(yr).map(|(d, p)| d * p).sum();
                        for ((g, d), p) in gr.iter_mut().zip(dr).zip(yr) {
                            *g += p * (d - dot);
                        }
                    }
                }
                Op::Sigmoid(a) => {
                    let ga = acc(&mut grads, *a, gy.len());
                    for ((g, d), s) in ga.iter_mut().zip(&gy).zip(y.data()) {
                        *g += d * s * (1.0 - s);
                    }
                }
                Op::Tanh(a) => {
                    let ga = acc(&mut grads, *a, gy.len());
                    for ((g, d), t) in ga.iter_mut().zip(&gy).zip(y.data()) {
                        *g += d * (1.0 - t * t);
                    }
                }
                Op::Log(a) => {
                    let x = nodes[*a].value.data();
                    let ga = acc(&mut grads, *a, gy.len());
                    for ((g, d), x) in ga.iter_mut().zip(&gy).zip(x) {
                        *g += d / x;
                    }
                }
                Op::Sum(a) => {
                    let l = len(*a);
                    for g in acc(&mut grads, *a, l).iter_mut() {
                        *g += gy[0];
                    }
                }
                Op::SumAxis { src, axis } => {
                    let (r, c) = nodes[*src].value.matrix_dims();
                    let ga = acc(&mut grads, *src, r * c);
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] += if *axis == 0 { gy[j] } else { gy[i] };
                        }
                    }
                }
                Op::MaskedAdd(a) => {
                    for (g, d) in acc(&mut grads, *a, gy.len()).iter_mut().zip(&gy) {
                        *g += d;
                    }
                }
                Op::Element { src, index } => {
                    let l = len(*src);
                    acc(&mut grads, *src, l)[*index] += gy[0];
                }
                Op::RowStandardize { src, inv_std } => {
                    let c = y.cols().max(1);
                    let ga = acc(&mut grads, *src, gy.len());
                    let n = c as f64;
                    for (r, ((gr, dr), yr)) in ga.chunks_mut(c).zip(gy.chunks(c)).zip(y.data().chunks(c)).enumerate() {
                        let sd: f64 = dr.iter().sum();
                        let sdy: f64 = dr.iter().zip(yr).map(|(d, y)| d * y).sum();
                        for ((g, d), yy) in gr.iter_mut().zip(dr).zip(yr) {
                            *g += inv_std[r] / n * (n * d - sd - yy * sdy);
                        }
                    }
                }
                Op::Attention { q, k, v, spec, probs } => {
                    let (tq, tk, tv) = (&nodes[*q].value, &nodes[*k].value, &nodes[*v].value);
                    let dq = tq.cols();
                    let dv = tv.cols();
                    let h = spec.heads;
                    let (hk, hv) = (dq / h, dv / h);
                    let (nq, nk) = (spec.q_rows, spec.kv_rows);
                    let mut gq = vec![0.0; tq.len()];
                    let mut gk = vec![0.0; tk.len()];
                    let mut gv = vec![0.0; tv.len()];
                    let mut dp = vec![0.0; nk];
                    let (qd, kd, vd) = (tq.data(), tk.data(), tv.data());
                    for g in 0..spec.groups {
                        for head in 0..h {
                            let base = (g * h + head) * nq * nk;
                            for i in 0..nq {
                                let prow = &probs[base + i * nk..base + (i + 1) * nk];
                                let dorow = &gy[(g * nq + i) * dv + head * hv..][..hv];
                                for j in 0..nk {
                                    let vrow = &vd[(g * nk + j) * dv + head * hv..][..hv];
                                    dp[j] = dorow.iter().zip(vrow).map(|(a, b)| a * b).sum();
                                    let gvrow = &mut gv[(g * nk + j) * dv + head * hv..][..hv];
                                    for (gvx, d) in gvrow.iter_mut().zip(dorow) {
                                        *gvx += prow[j] * d;
                                    }
                                }
                                let dot: f64 = dp.iter().zip(prow).map(|(a, b)| a * b).sum();
                                let qoff = (g * nq + i) * dq + head * hk;
                                for j in 0..nk {
                                    let ds = prow[j] * (dp[j] - dot) * spec.scale;
                                    if ds == 0.0 {
                                        continue;
                                    }
                                    let koff = (g * nk + j) * dq + head * hk;
                                    for d in 0..hk {
                                        gq[qoff + d] += ds * kd[koff + d];
                                        gk[koff + d] += ds * qd[qoff + d];
                                    }
                                }
                            }
                        }
                    }
                    for (id, gsrc) in [(*q, gq), (*k, gk), (*v, gv)] {
                        let l = gsrc.len();
                        for (g, d) in acc(&mut grads, id, l).iter_mut().zip(&gsrc) {
                            *g += d;
                        }
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}
