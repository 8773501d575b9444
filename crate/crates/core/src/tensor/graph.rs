use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use super::{gemm, Matrix, Scalar, View};

const LN_EPS: f64 = 1e-5;
const LOG_FLOOR: f64 = 1e-12;
const MASS_FLOOR: f64 = 1e-12;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Shape and masking of a fused multi-head attention.
#[derive(Debug, Clone)]
pub struct AttentionSpec {
    pub batch: usize,
    pub q_len: usize,
    pub k_len: usize,
    pub heads: usize,
    pub causal: bool,
    /// `batch * k_len` flags, false for padded keys.
    pub key_mask: Vec<bool>,
    /// Append the head-averaged probabilities as `k_len` extra columns.
    pub emit_average: bool,
}

enum Op<S> {
    Leaf,
    MatMul { a: usize, b: usize, tb: bool },
    BatchMatMul { a: usize, b: usize, batch: usize, tb: bool },
    Add(usize, usize),
    Mul(usize, usize),
    AddRow { a: usize, bias: usize },
    MulCol { a: usize, col: usize },
    Affine { a: usize, scale: S },
    Relu(usize),
    Sigmoid(usize),
    Softmax(usize),
    LayerNorm { x: usize, gamma: usize, beta: usize, xhat: Vec<S>, inv_std: Vec<S> },
    Gather { table: usize, ids: Vec<usize> },
    Concat(usize, usize),
    Slice { a: usize, start: usize },
    Dropout { a: usize, mask: Vec<S> },
    Attention { q: usize, k: usize, v: usize, spec: AttentionSpec, probs: Vec<S> },
    RowNormalize { a: usize, sums: Vec<S> },
    GroupSoftmax { a: usize, groups: Vec<Vec<Range<usize>>>, rows_per_block: usize },
    Combine { a: usize, b: usize, wa: Vec<S>, wb: Vec<S> },
    SelectRows { a: usize, b: usize, use_a: Vec<bool> },
    SmoothedNll { p: usize, targets: Vec<Option<usize>>, smoothing: S, count: usize },
}

struct Node<S> {
    value: Matrix<S>,
    op: Op<S>,
    needs_grad: bool,
}

/// Append-only tape of tensor operations supporting one reverse sweep.
///
/// Every operation is evaluated eagerly; `backward` walks the tape in
/// reverse creation order, so gradient accumulation order is fixed and
/// results are bitwise reproducible.
pub struct Graph<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients<S> {
    grads: Vec<Option<Matrix<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, v: Var) -> Option<&Matrix<S>> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix<S>> {
        self.grads[v.0].take()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix<S> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix<S>, op: Op<S>, inputs: &[usize]) -> Var {
        let needs_grad = inputs.iter().any(|&i| self.nodes[i].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; no gradient is tracked.
    pub fn constant(&mut self, value: Matrix<S>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// Trainable input; its gradient is reported by `backward`.
    pub fn param(&mut self, value: Matrix<S>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// `a * b`, or `a * b^T` when `transpose_b`.
    pub fn matmul(&mut self, a: Var, b: Var, transpose_b: bool) -> Var {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let bview = if transpose_b { bv.view().t() } else { bv.view() };
        let mut out = Matrix::zeros(av.rows(), bview.cols);
        gemm(av.view(), bview, out.data_mut(), false);
        self.push(out, Op::MatMul { a: a.0, b: b.0, tb: transpose_b }, &[a.0, b.0])
    }

    /// Block-wise product: `a` stacks `batch` blocks of `m x k`, `b` stacks
    /// `batch` blocks of `k x n` (or `n x k` when `transpose_b`).
    pub fn batch_matmul(&mut self, a: Var, b: Var, batch: usize, transpose_b: bool) -> Var {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert!(batch > 0 && av.rows() % batch == 0 && bv.rows() % batch == 0);
        let (m, k) = (av.rows() / batch, av.cols());
        let brows = bv.rows() / batch;
        let n = if transpose_b { brows } else { bv.cols() };
        let mut out = Matrix::zeros(batch * m, n);
        for blk in 0..batch {
            let a_blk = View::new(&av.data()[blk * m * k..(blk + 1) * m * k], m, k);
            let b_slice = &bv.data()[blk * brows * bv.cols()..(blk + 1) * brows * bv.cols()];
            let b_blk = View::new(b_slice, brows, bv.cols());
            let b_blk = if transpose_b { b_blk.t() } else { b_blk };
            gemm(a_blk, b_blk, &mut out.data_mut()[blk * m * n..(blk + 1) * m * n], false);
        }
        self.push(out, Op::BatchMatMul { a: a.0, b: b.0, batch, tb: transpose_b }, &[a.0, b.0])
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(S, S) -> S) -> Matrix<S> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.shape(), bv.shape(), "elementwise shape mismatch");
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Matrix::from_vec(av.rows(), av.cols(), data)
    }

    fn map(&self, a: Var, f: impl Fn(S) -> S) -> Matrix<S> {
        let av = &self.nodes[a.0].value;
        Matrix::from_vec(av.rows(), av.cols(), av.data().iter().map(|&x| f(x)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_with(a, b, |x, y| x + y);
        self.push(out, Op::Add(a.0, b.0), &[a.0, b.0])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip_with(a, b, |x, y| x * y);
        self.push(out, Op::Mul(a.0, b.0), &[a.0, b.0])
    }

    /// Adds a `1 x cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[bias.0].value);
        assert_eq!((1, av.cols()), bv.shape(), "bias shape");
        let mut out = av.clone();
        for r in 0..out.rows() {
            out.row_mut(r).iter_mut().zip(bv.data()).for_each(|(x, &b)| *x += b);
        }
        self.push(out, Op::AddRow { a: a.0, bias: bias.0 }, &[a.0, bias.0])
    }

    /// Scales row `r` of `a` by `col[r]` (`col` is `rows x 1`).
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let (av, cv) = (&self.nodes[a.0].value, &self.nodes[col.0].value);
        assert_eq!((av.rows(), 1), cv.shape(), "column shape");
        let mut out = av.clone();
        for r in 0..out.rows() {
            let g = cv.data()[r];
            out.row_mut(r).iter_mut().for_each(|x| *x *= g);
        }
        self.push(out, Op::MulCol { a: a.0, col: col.0 }, &[a.0, col.0])
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: S, shift: S) -> Var {
        let out = self.map(a, |x| scale * x + shift);
        self.push(out, Op::Affine { a: a.0, scale }, &[a.0])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.map(a, |x| x.max(S::zero()));
        self.push(out, Op::Relu(a.0), &[a.0])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.map(a, super::sigmoid);
        self.push(out, Op::Sigmoid(a.0), &[a.0])
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        for r in 0..out.rows() {
            super::softmax_in_place(out.row_mut(r));
        }
        self.push(out, Op::Softmax(a.0), &[a.0])
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = &self.nodes[x.0].value;
        let (gv, bv) = (&self.nodes[gamma.0].value, &self.nodes[beta.0].value);
        let (rows, cols) = xv.shape();
        let n = S::of(cols as f64);
        let mut xhat = vec![S::zero(); rows * cols];
        let mut inv_std = vec![S::zero(); rows];
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().fold(S::zero(), |a, &b| a + b) / n;
            let var = row.iter().fold(S::zero(), |a, &b| a + (b - mean) * (b - mean)) / n;
            let is = S::one() / (var + S::of(LN_EPS)).sqrt();
            inv_std[r] = is;
            for c in 0..cols {
                let h = (row[c] - mean) * is;
                xhat[r * cols + c] = h;
                out.data_mut()[r * cols + c] = h * gv.data()[c] + bv.data()[c];
            }
        }
        let op = Op::LayerNorm { x: x.0, gamma: gamma.0, beta: beta.0, xhat, inv_std };
        self.push(out, op, &[x.0, gamma.0, beta.0])
    }

    /// Row lookup: output row `r` is `table[ids[r]]`. Ids must be in range.
    pub fn gather(&mut self, table: Var, ids: Vec<usize>) -> Var {
        let tv = &self.nodes[table.0].value;
        let mut out = Matrix::zeros(ids.len(), tv.cols());
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).copy_from_slice(tv.row(id));
        }
        self.push(out, Op::Gather { table: table.0, ids }, &[table.0])
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.rows(), bv.rows());
        let out = Matrix::from_fn(av.rows(), av.cols() + bv.cols(), |r, c| {
            if c < av.cols() {
                av.get(r, c)
            } else {
                bv.get(r, c - av.cols())
            }
        });
        self.push(out, Op::Concat(a.0, b.0), &[a.0, b.0])
    }

    pub fn slice_cols(&mut self, a: Var, cols: Range<usize>) -> Var {
        let av = &self.nodes[a.0].value;
        let out = Matrix::from_fn(av.rows(), cols.len(), |r, c| av.get(r, cols.start + c));
        self.push(out, Op::Slice { a: a.0, start: cols.start }, &[a.0])
    }

    /// Elementwise product with a fixed mask (already scaled by 1/keep).
    pub fn dropout(&mut self, a: Var, mask: Vec<S>) -> Var {
        let av = &self.nodes[a.0].value;
        assert_eq!(mask.len(), av.data().len());
        let data = av.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        let out = Matrix::from_vec(av.rows(), av.cols(), data);
        self.push(out, Op::Dropout { a: a.0, mask }, &[a.0])
    }

    /// Scaled dot-product attention over stacked `batch` blocks, heads
    /// split across columns. Output is `batch * q_len x d`, with the
    /// head-averaged probabilities appended when `spec.emit_average`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, spec: AttentionSpec) -> Var {
        let (qv, kv, vv) = (&self.nodes[q.0].value, &self.nodes[k.0].value, &self.nodes[v.0].value);
        let d = qv.cols();
        let AttentionSpec { batch, q_len, k_len, heads, causal, .. } = spec;
        assert!(d % heads == 0);
        assert_eq!(qv.rows(), batch * q_len);
        assert_eq!(kv.rows(), batch * k_len);
        assert_eq!(spec.key_mask.len(), batch * k_len);
        let dh = d / heads;
        let scale = S::one() / S::of(dh as f64).sqrt();
        let extra = if spec.emit_average { k_len } else { 0 };
        let inv_heads = S::one() / S::of(heads as f64);
        let mut probs = vec![S::zero(); batch * heads * q_len * k_len];
        let mut out = Matrix::zeros(batch * q_len, d + extra);
        let width = d + extra;
        for b in 0..batch {
            let mask = &spec.key_mask[b * k_len..(b + 1) * k_len];
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                for i in 0..q_len {
                    let qrow = &qv.row(b * q_len + i)[cols.clone()];
                    let base = ((b * heads + h) * q_len + i) * k_len;
                    let p = &mut probs[base..base + k_len];
                    let limit = if causal { (i + 1).min(k_len) } else { k_len };
                    let mut max = S::neg_infinity();
                    for j in 0..limit {
                        if mask[j] {
                            let s = super::dot(qrow, &kv.row(b * k_len + j)[cols.clone()]) * scale;
                            p[j] = s;
                            max = max.max(s);
                        }
                    }
                    if max == S::neg_infinity() {
                        continue;
                    }
                    let mut total = S::zero();
                    for j in 0..limit {
                        if mask[j] {
                            p[j] = (p[j] - max).exp();
                            total += p[j];
                        }
                    }
                    let row = b * q_len + i;
                    let orow = &mut out.data_mut()[row * width..(row + 1) * width];
                    for j in 0..limit {
                        if !mask[j] {
                            continue;
                        }
                        p[j] /= total;
                        let pj = p[j];
                        let vrow = &vv.row(b * k_len + j)[cols.clone()];
                        for (o, &x) in orow[cols.clone()].iter_mut().zip(vrow) {
                            *o += pj * x;
                        }
                        if extra > 0 {
                            orow[d + j] += pj * inv_heads;
                        }
                    }
                }
            }
        }
        let op = Op::Attention { q: q.0, k: k.0, v: v.0, spec, probs };
        self.push(out, op, &[q.0, k.0, v.0])
    }

    /// Divides each row by its sum; rows with mass below 1e-12 become zero.
    pub fn row_normalize(&mut self, a: Var) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        let mut sums = Vec::with_capacity(out.rows());
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let s = row.iter().fold(S::zero(), |acc, &x| acc + x);
            if s.as_f64() < MASS_FLOOR {
                row.iter_mut().for_each(|x| *x = S::zero());
                sums.push(S::zero());
            } else {
                row.iter_mut().for_each(|x| *x /= s);
                sums.push(s);
            }
        }
        self.push(out, Op::RowNormalize { a: a.0, sums }, &[a.0])
    }

    /// Softmax over column groups. `a` stacks `groups.len()` blocks of
    /// `rows_per_block` rows; block `b` normalizes within each range of
    /// `groups[b]`. Columns outside every group are zero.
    pub fn group_softmax(
        &mut self,
        a: Var,
        groups: Vec<Vec<Range<usize>>>,
        rows_per_block: usize,
    ) -> Var {
        let av = &self.nodes[a.0].value;
        assert_eq!(av.rows(), groups.len() * rows_per_block);
        let mut out = Matrix::zeros(av.rows(), av.cols());
        for (b, block) in groups.iter().enumerate() {
            for r in b * rows_per_block..(b + 1) * rows_per_block {
                for g in block {
                    out.row_mut(r)[g.clone()].copy_from_slice(&av.row(r)[g.clone()]);
                    super::softmax_in_place(&mut out.row_mut(r)[g.clone()]);
                }
            }
        }
        self.push(out, Op::GroupSoftmax { a: a.0, groups, rows_per_block }, &[a.0])
    }

    /// Row-wise weighted sum `wa[r] * a[r] + wb[r] * b[r]` with fixed weights.
    pub fn combine(&mut self, a: Var, b: Var, wa: Vec<S>, wb: Vec<S>) -> Var {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.shape(), bv.shape());
        assert!(wa.len() == av.rows() && wb.len() == av.rows());
        let out = Matrix::from_fn(av.rows(), av.cols(), |r, c| {
            wa[r] * av.get(r, c) + wb[r] * bv.get(r, c)
        });
        self.push(out, Op::Combine { a: a.0, b: b.0, wa, wb }, &[a.0, b.0])
    }

    /// Row `r` is taken from `a` when `use_a[r]`, otherwise from `b`.
    pub fn select_rows(&mut self, a: Var, b: Var, use_a: Vec<bool>) -> Var {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.shape(), bv.shape());
        let mut out = bv.clone();
        for (r, &take) in use_a.iter().enumerate() {
            if take {
                out.row_mut(r).copy_from_slice(av.row(r));
            }
        }
        self.push(out, Op::SelectRows { a: a.0, b: b.0, use_a }, &[a.0, b.0])
    }

    /// Label-smoothed negative log-likelihood of row distributions `p`
    /// against `targets`, averaged over the non-`None` rows. The smoothed
    /// target puts `1 - smoothing` on the gold id and spreads `smoothing`
    /// uniformly over the other `V - 1` ids.
    pub fn smoothed_nll(&mut self, p: Var, targets: Vec<Option<usize>>, smoothing: S) -> Var {
        let pv = &self.nodes[p.0].value;
        assert_eq!(pv.rows(), targets.len());
        let v = pv.cols();
        let off = if v > 1 { smoothing / S::of((v - 1) as f64) } else { S::zero() };
        let on = S::one() - smoothing;
        let floor = S::of(LOG_FLOOR);
        let mut total = S::zero();
        let mut count = 0;
        for (r, t) in targets.iter().enumerate() {
            let Some(gold) = *t else { continue };
            count += 1;
            for (c, &x) in pv.row(r).iter().enumerate() {
                let q = if c == gold { on } else { off };
                if q != S::zero() {
                    total -= q * x.max(floor).ln();
                }
            }
        }
        let loss = if count == 0 { S::zero() } else { total / S::of(count as f64) };
        let op = Op::SmoothedNll { p: p.0, targets, smoothing, count };
        self.push(Matrix::from_vec(1, 1, vec![loss]), op, &[p.0])
    }

    /// Reverse sweep from a `1 x 1` node.
    pub fn backward(&self, loss: Var) -> Gradients<S> {
        assert_eq!(self.nodes[loss.0].value.shape(), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Matrix<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::from_vec(1, 1, vec![S::one()]));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(dy) = grads[idx].take() else { continue };
            self.backprop(idx, &dy, &mut grads);
            grads[idx] = Some(dy);
        }
        Gradients { grads }
    }

    fn wants(&self, i: usize) -> bool {
        self.nodes[i].needs_grad
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Matrix<S>>], i: usize) -> &'g mut Matrix<S> {
        let (r, c) = self.nodes[i].value.shape();
        grads[i].get_or_insert_with(|| Matrix::zeros(r, c))
    }

    fn backprop(&self, idx: usize, dy: &Matrix<S>, grads: &mut [Option<Matrix<S>>]) {
        let val = |i: usize| &self.nodes[i].value;
        let y = val(idx);
        match &self.nodes[idx].op {
            Op::Leaf => {}
            &Op::MatMul { a, b, tb } => {
                let (av, bv) = (val(a), val(b));
                if self.wants(a) {
                    // dA = dY * B^T  (or dY * B when b was transposed)
                    let bview = if tb { bv.view() } else { bv.view().t() };
                    gemm(dy.view(), bview, self.slot(grads, a).data_mut(), true);
                }
                if self.wants(b) {
                    if tb {
                        gemm(dy.view().t(), av.view(), self.slot(grads, b).data_mut(), true);
                    } else {
                        gemm(av.view().t(), dy.view(), self.slot(grads, b).data_mut(), true);
                    }
                }
            }
            &Op::BatchMatMul { a, b, batch, tb } => {
                let (av, bv) = (val(a), val(b));
                let (m, k) = (av.rows() / batch, av.cols());
                let (brows, bcols) = (bv.rows() / batch, bv.cols());
                let n = dy.cols();
                for blk in 0..batch {
                    let dy_blk = View::new(&dy.data()[blk * m * n..(blk + 1) * m * n], m, n);
                    let b_blk =
                        View::new(&bv.data()[blk * brows * bcols..(blk + 1) * brows * bcols], brows, bcols);
                    let a_blk = View::new(&av.data()[blk * m * k..(blk + 1) * m * k], m, k);
                    if self.wants(a) {
                        let bview = if tb { b_blk } else { b_blk.t() };
                        let ga = self.slot(grads, a);
                        gemm(dy_blk, bview, &mut ga.data_mut()[blk * m * k..(blk + 1) * m * k], true);
                    }
                    if self.wants(b) {
                        let gb = self.slot(grads, b);
                        let out = &mut gb.data_mut()[blk * brows * bcols..(blk + 1) * brows * bcols];
                        if tb {
                            gemm(dy_blk.t(), a_blk, out, true);
                        } else {
                            gemm(a_blk.t(), dy_blk, out, true);
                        }
                    }
                }
            }
            &Op::Add(a, b) => {
                for i in [a, b] {
                    if self.wants(i) {
                        add_into(self.slot(grads, i).data_mut(), dy.data());
                    }
                }
            }
            &Op::Mul(a, b) => {
                if self.wants(a) {
                    let g = self.slot(grads, a).data_mut();
                    for ((g, &d), &o) in g.iter_mut().zip(dy.data()).zip(val(b).data()) {
                        *g += d * o;
                    }
                }
                if self.wants(b) {
                    let g = self.slot(grads, b).data_mut();
                    for ((g, &d), &o) in g.iter_mut().zip(dy.data()).zip(val(a).data()) {
                        *g += d * o;
                    }
                }
            }
            &Op::AddRow { a, bias } => {
                if self.wants(a) {
                    add_into(self.slot(grads, a).data_mut(), dy.data());
                }
                if self.wants(bias) {
                    let g = self.slot(grads, bias).data_mut();
                    for r in 0..dy.rows() {
                        add_into(g, dy.row(r));
                    }
                }
            }
            &Op::MulCol { a, col } => {
                let (av, cv) = (val(a), val(col));
                if self.wants(a) {
                    let g = self.slot(grads, a);
                    for r in 0..dy.rows() {
                        let s = cv.data()[r];
                        for (g, &d) in g.row_mut(r).iter_mut().zip(dy.row(r)) {
                            *g += d * s;
                        }
                    }
                }
                if self.wants(col) {
                    let g = self.slot(grads, col).data_mut();
                    for r in 0..dy.rows() {
                        g[r] += super::dot(dy.row(r), av.row(r));
                    }
                }
            }
            &Op::Affine { a, scale } => {
                if self.wants(a) {
                    let g = self.slot(grads, a).data_mut();
                    g.iter_mut().zip(dy.data()).for_each(|(g, &d)| *g += d * scale);
                }
            }
            &Op::Relu(a) => {
                if self.wants(a) {
                    let g = self.slot(grads, a).data_mut();
                    for ((g, &d), &x) in g.iter_mut().zip(dy.data()).zip(val(a).data()) {
                        if x > S::zero() {
                            *g += d;
                        }
                    }
                }
            }
            &Op::Sigmoid(a) => {
                if self.wants(a) {
                    let g = self.slot(grads, a).data_mut();
                    for ((g, &d), &s) in g.iter_mut().zip(dy.data()).zip(y.data()) {
                        *g += d * s * (S::one() - s);
                    }
                }
            }
            &Op::Softmax(a) => {
                if self.wants(a) {
                    let g = self.slot(grads, a);
                    for r in 0..dy.rows() {
                        softmax_backward(y.row(r), dy.row(r), g.row_mut(r));
                    }
                }
            }
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                let (x, gamma, beta) = (*x, *gamma, *beta);
                let (rows, cols) = dy.shape();
                let gv = val(gamma);
                if self.wants(gamma) {
                    let g = self.slot(grads, gamma).data_mut();
                    for r in 0..rows {
                        for c in 0..cols {
                            g[c] += dy.get(r, c) * xhat[r * cols + c];
                        }
                    }
                }
                if self.wants(beta) {
                    let g = self.slot(grads, beta).data_mut();
                    for r in 0..rows {
                        add_into(g, dy.row(r));
                    }
                }
                if self.wants(x) {
                    let n = S::of(cols as f64);
                    let g = self.slot(grads, x);
                    let mut dxhat = vec![S::zero(); cols];
                    for r in 0..rows {
                        let xh = &xhat[r * cols..(r + 1) * cols];
                        for c in 0..cols {
                            dxhat[c] = dy.get(r, c) * gv.data()[c];
                        }
                        let mean_d = dxhat.iter().fold(S::zero(), |a, &b| a + b) / n;
                        let mean_dx = super::dot(&dxhat, xh) / n;
                        let gr = g.row_mut(r);
                        for c in 0..cols {
                            gr[c] += inv_std[r] * (dxhat[c] - mean_d - xh[c] * mean_dx);
                        }
                    }
                }
            }
            Op::Gather { table, ids } => {
                if self.wants(*table) {
                    let g = self.slot(grads, *table);
                    for (r, &id) in ids.iter().enumerate() {
                        add_into(g.row_mut(id), dy.row(r));
                    }
                }
            }
            &Op::Concat(a, b) => {
                let ac = val(a).cols();
                if self.wants(a) {
                    let g = self.slot(grads, a);
                    for r in 0..dy.rows() {
                        add_into(g.row_mut(r), &dy.row(r)[..ac]);
                    }
                }
                if self.wants(b) {
                    let g = self.slot(grads, b);
                    for r in 0..dy.rows() {
                        add_into(g.row_mut(r), &dy.row(r)[ac..]);
                    }
                }
            }
            &Op::Slice { a, start } => {
                if self.wants(a) {
                    let g = self.slot(grads, a);
                    let w = dy.cols();
                    for r in 0..dy.rows() {
                        add_into(&mut g.row_mut(r)[start..start + w], dy.row(r));
                    }
                }
            }
            Op::Dropout { a, mask } => {
                if self.wants(*a) {
                    let g = self.slot(grads, *a).data_mut();
                    for ((g, &d), &m) in g.iter_mut().zip(dy.data()).zip(mask) {
                        *g += d * m;
                    }
                }
            }
            Op::Attention { q, k, v, spec, probs } => {
                self.attention_backward((*q, *k, *v), spec, probs, dy, grads);
            }
            Op::RowNormalize { a, sums } => {
                if self.wants(*a) {
                    let g = self.slot(grads, *a);
                    for r in 0..dy.rows() {
                        let s = sums[r];
                        if s == S::zero() {
                            continue;
                        }
                        let inner = super::dot(dy.row(r), y.row(r));
                        for (g, &d) in g.row_mut(r).iter_mut().zip(dy.row(r)) {
                            *g += (d - inner) / s;
                        }
                    }
                }
            }
            Op::GroupSoftmax { a, groups, rows_per_block } => {
                if self.wants(*a) {
                    let g = self.slot(grads, *a);
                    for (b, block) in groups.iter().enumerate() {
                        for r in b * rows_per_block..(b + 1) * rows_per_block {
                            for rg in block {
                                softmax_backward(
                                    &y.row(r)[rg.clone()],
                                    &dy.row(r)[rg.clone()],
                                    &mut g.row_mut(r)[rg.clone()],
                                );
                            }
                        }
                    }
                }
            }
            Op::Combine { a, b, wa, wb } => {
                for (i, w) in [(*a, wa), (*b, wb)] {
                    if self.wants(i) {
                        let g = self.slot(grads, i);
                        for r in 0..dy.rows() {
                            let wr = w[r];
                            for (g, &d) in g.row_mut(r).iter_mut().zip(dy.row(r)) {
                                *g += wr * d;
                            }
                        }
                    }
                }
            }
            Op::SelectRows { a, b, use_a } => {
                for (i, want) in [(*a, true), (*b, false)] {
                    if self.wants(i) {
                        let g = self.slot(grads, i);
                        for (r, &take) in use_a.iter().enumerate() {
                            if take == want {
                                add_into(g.row_mut(r), dy.row(r));
                            }
                        }
                    }
                }
            }
            Op::SmoothedNll { p, targets, smoothing, count } => {
                if self.wants(*p) && *count > 0 {
                    let pv = val(*p);
                    let v = pv.cols();
                    let scale = dy.data()[0] / S::of(*count as f64);
                    let off = if v > 1 { *smoothing / S::of((v - 1) as f64) } else { S::zero() };
                    let on = S::one() - *smoothing;
                    let floor = S::of(LOG_FLOOR);
                    let g = self.slot(grads, *p);
                    for (r, t) in targets.iter().enumerate() {
                        let Some(gold) = *t else { continue };
                        for (c, (g, &x)) in g.row_mut(r).iter_mut().zip(pv.row(r)).enumerate() {
                            let q = if c == gold { on } else { off };
                            if x > floor {
                                *g -= scale * q / x;
                            }
                        }
                    }
                }
            }
        }
    }

    fn attention_backward(
        &self,
        (q, k, v): (usize, usize, usize),
        spec: &AttentionSpec,
        probs: &[S],
        dy: &Matrix<S>,
        grads: &mut [Option<Matrix<S>>],
    ) {
        let (qv, kv, vv) = (&self.nodes[q].value, &self.nodes[k].value, &self.nodes[v].value);
        let d = qv.cols();
        let AttentionSpec { batch, q_len, k_len, heads, .. } = *spec;
        let dh = d / heads;
        let scale = S::one() / S::of(dh as f64).sqrt();
        let inv_heads = S::one() / S::of(heads as f64);
        let mut dq = Matrix::zeros(qv.rows(), d);
        let mut dk = Matrix::zeros(kv.rows(), d);
        let mut dv = Matrix::zeros(vv.rows(), d);
        let mut dp = vec![S::zero(); k_len];
        for b in 0..batch {
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                for i in 0..q_len {
                    let row = b * q_len + i;
                    let base = ((b * heads + h) * q_len + i) * k_len;
                    let p = &probs[base..base + k_len];
                    let dctx = &dy.row(row)[cols.clone()];
                    let mut inner = S::zero();
                    for j in 0..k_len {
                        if p[j] == S::zero() {
                            dp[j] = S::zero();
                            continue;
                        }
                        let mut g = super::dot(dctx, &vv.row(b * k_len + j)[cols.clone()]);
                        if spec.emit_average {
                            g += dy.get(row, d + j) * inv_heads;
                        }
                        dp[j] = g;
                        inner += p[j] * g;
                    }
                    let qrow = &qv.row(row)[cols.clone()];
                    for j in 0..k_len {
                        let pj = p[j];
                        if pj == S::zero() {
                            continue;
                        }
                        let krow_idx = b * k_len + j;
                        for (o, &x) in dv.row_mut(krow_idx)[cols.clone()].iter_mut().zip(dctx) {
                            *o += pj * x;
                        }
                        let ds = pj * (dp[j] - inner) * scale;
                        let krow = &kv.row(krow_idx)[cols.clone()];
                        for (o, &x) in dq.row_mut(row)[cols.clone()].iter_mut().zip(krow) {
                            *o += ds * x;
                        }
                        for (o, &x) in dk.row_mut(krow_idx)[cols.clone()].iter_mut().zip(qrow) {
                            *o += ds * x;
                        }
                    }
                }
            }
        }
        for (i, m) in [(q, dq), (k, dk), (v, dv)] {
            if self.wants(i) {
                add_into(self.slot(grads, i).data_mut(), m.data());
            }
        }
    }
}

fn add_into<S: Scalar>(dst: &mut [S], src: &[S]) {
    dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
}

fn softmax_backward<S: Scalar>(y: &[S], dy: &[S], dx: &mut [S]) {
    let inner = super::dot(y, dy);
    for ((g, &yi), &di) in dx.iter_mut().zip(y).zip(dy) {
        *g += yi * (di - inner);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::boxed::Box;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type Build = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Var>;

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f64> {
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    /// Reduces an arbitrary output to a scalar through a fixed random
    /// projection, then compares analytic and central-difference gradients.
    fn check(shapes: &[(usize, usize)], build: Build) {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let inputs: Vec<Matrix<f64>> = shapes.iter().map(|&(r, c)| random(&mut rng, r, c)).collect();
        let eval = |inputs: &[Matrix<f64>], probe: Option<&Matrix<f64>>| {
            let mut g = Graph::new();
            let vars: Vec<Var> = inputs.iter().map(|m| g.param(m.clone())).collect();
            let out = build(&mut g, &vars);
            let (r, c) = g.value(out).shape();
            let w = match probe {
                Some(p) => p.clone(),
                None => Matrix::from_fn(r, c, |i, j| ((i * 31 + j * 17) % 13) as f64 / 13.0 - 0.4),
            };
            let wv = g.constant(w);
            let prod = g.mul(out, wv);
            let ones = g.constant(Matrix::from_vec(c, 1, vec![1.0; c]));
            let col = g.matmul(prod, ones, false);
            let ones_r = g.constant(Matrix::from_vec(1, r, vec![1.0; r]));
            let loss = g.matmul(ones_r, col, false);
            (g, vars, loss)
        };
        let (g, vars, loss) = eval(&inputs, None);
        let grads = g.backward(loss);
        let h = 1e-6;
        for (n, m) in inputs.iter().enumerate() {
            let analytic = grads.get(vars[n]).cloned().unwrap_or_else(|| Matrix::zeros(m.rows(), m.cols()));
            for idx in 0..m.data().len() {
                let mut plus = inputs.clone();
                plus[n].data_mut()[idx] += h;
                let mut minus = inputs.clone();
                minus[n].data_mut()[idx] -= h;
                let (gp, _, lp) = eval(&plus, None);
                let (gm, _, lm) = eval(&minus, None);
                let fd = (gp.value(lp).data()[0] - gm.value(lm).data()[0]) / (2.0 * h);
                let a = analytic.data()[idx];
                assert!(
                    (a - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "input {n} coord {idx}: analytic {a} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn matmul_grads() {
        check(&[(3, 4), (4, 2)], Box::new(|g, v| g.matmul(v[0], v[1], false)));
        check(&[(3, 4), (2, 4)], Box::new(|g, v| g.matmul(v[0], v[1], true)));
    }

    #[test]
    fn batch_matmul_grads() {
        check(&[(6, 4), (8, 2)], Box::new(|g, v| g.batch_matmul(v[0], v[1], 2, false)));
        check(&[(6, 4), (10, 4)], Box::new(|g, v| g.batch_matmul(v[0], v[1], 2, true)));
    }

    #[test]
    fn elementwise_grads() {
        check(&[(3, 4), (3, 4)], Box::new(|g, v| g.add(v[0], v[1])));
        check(&[(3, 4), (3, 4)], Box::new(|g, v| g.mul(v[0], v[1])));
        check(&[(3, 4), (1, 4)], Box::new(|g, v| g.add_row(v[0], v[1])));
        check(&[(3, 4), (3, 1)], Box::new(|g, v| g.mul_col(v[0], v[1])));
        check(&[(3, 4)], Box::new(|g, v| g.affine(v[0], -2.0, 1.0)));
        check(&[(3, 4)], Box::new(|g, v| g.relu(v[0])));
        check(&[(3, 4)], Box::new(|g, v| g.sigmoid(v[0])));
        check(&[(3, 4)], Box::new(|g, v| g.softmax(v[0])));
        check(&[(3, 4)], Box::new(|g, v| g.dropout(v[0], vec![0.0, 2.0, 2.0, 0.0, 2.0, 2.0, 2.0, 0.0, 0.0, 2.0, 2.0, 2.0])));
    }

    #[test]
    fn structural_grads() {
        check(&[(3, 4), (1, 4), (1, 4)], Box::new(|g, v| g.layer_norm(v[0], v[1], v[2])));
        check(&[(5, 3)], Box::new(|g, v| g.gather(v[0], vec![4, 0, 4, 2])));
        check(&[(3, 2), (3, 3)], Box::new(|g, v| g.concat_cols(v[0], v[1])));
        check(&[(3, 5)], Box::new(|g, v| g.slice_cols(v[0], 1..4)));
        check(
            &[(4, 3), (4, 3)],
            Box::new(|g, v| g.combine(v[0], v[1], vec![0.5, 0.0, 1.0, 0.3], vec![0.5, 1.0, 0.0, 0.7])),
        );
        check(
            &[(4, 3), (4, 3)],
            Box::new(|g, v| g.select_rows(v[0], v[1], vec![true, false, false, true])),
        );
    }

    #[test]
    fn normalizing_grads() {
        // keep the normalized rows positive
        check(
            &[(3, 4)],
            Box::new(|g, v| {
                let s = g.sigmoid(v[0]);
                g.row_normalize(s)
            }),
        );
        check(
            &[(4, 5)],
            Box::new(|g, v| g.group_softmax(v[0], vec![vec![0..2, 2..5], vec![1..4]], 2)),
        );
        check(
            &[(4, 5)],
            Box::new(|g, v| {
                let p = g.softmax(v[0]);
                g.smoothed_nll(p, vec![Some(1), None, Some(4), Some(0)], 0.1)
            }),
        );
    }

    #[test]
    fn attention_grads() {
        for (causal, emit) in [(false, false), (true, false), (false, true), (true, true)] {
            check(
                &[(6, 4), (6, 4), (6, 4)],
                Box::new(move |g, v| {
                    let spec = AttentionSpec {
                        batch: 2,
                        q_len: 3,
                        k_len: 3,
                        heads: 2,
                        causal,
                        key_mask: vec![true, true, false, true, true, true],
                        emit_average: emit,
                    };
                    g.attention(v[0], v[1], v[2], spec)
                }),
            );
        }
        // cross attention with different lengths
        check(
            &[(4, 4), (6, 4), (6, 4)],
            Box::new(|g, v| {
                let spec = AttentionSpec {
                    batch: 2,
                    q_len: 2,
                    k_len: 3,
                    heads: 1,
                    causal: false,
                    key_mask: vec![true; 6],
                    emit_average: true,
                };
                g.attention(v[0], v[1], v[2], spec)
            }),
        );
    }

    #[test]
    fn row_normalize_zero_mass_row_stays_zero() {
        let mut g = Graph::<f64>::new();
        let a = g.constant(Matrix::from_vec(2, 2, vec![0.0, 0.0, 1.0, 3.0]));
        let y = g.row_normalize(a);
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 0.25, 0.75]);
    }

    #[test]
    fn attention_masks_padded_keys() {
        let mut g = Graph::<f64>::new();
        let q = g.constant(Matrix::from_vec(1, 2, vec![1.0, 0.0]));
        let k = g.constant(Matrix::from_vec(2, 2, vec![1.0, 0.0, 5.0, 0.0]));
        let v = g.constant(Matrix::from_vec(2, 2, vec![1.0, 2.0, 100.0, 100.0]));
        let spec = AttentionSpec {
            batch: 1,
            q_len: 1,
            k_len: 2,
            heads: 1,
            causal: false,
            key_mask: vec![true, false],
            emit_average: true,
        };
        let out = g.attention(q, k, v, spec);
        assert_eq!(g.value(out).data(), &[1.0, 2.0, 1.0, 0.0]);
    }
}
