//! Recording tape for reverse-mode differentiation.
//!
//! Every op evaluates eagerly and appends a node holding its value. The
//! backward pass walks nodes in reverse, so a node's gradient is complete
//! before it is propagated to its inputs.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::params::{ParamId, ParameterStore};
use super::tensor::{gemm, Tensor};
use super::NnError;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Row index list shared between ops.
pub type Index = Arc<[usize]>;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Linear(Var, Var, Option<Var>),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Log(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    Mean(Var),
    Softmax(Var, usize),
    GatherRows(Var, Index),
    ScatterAddRows(Var, Index),
    GatherAdd(Var, Index, Var, Index, Option<Var>),
    GatherRowDot(Var, Index, Var),
    SegmentSoftmax(Var, Index),
    WeightedScatter(Var, Var, Index),
    Bce(Var, Arc<[f64]>, f64),
    BceWithLogits(Var, Arc<[f64]>, f64),
    CheckUpdate(Var, Index, Arc<[bool]>, f64),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Clamp bound applied to predictions inside [`Tape::bce`].
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

fn shape_err(op: &'static str, left: (usize, usize), right: (usize, usize)) -> NnError {
    NnError::ShapeMismatch { op, left, right }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    #[inline]
    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    #[inline]
    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last backward pass with respect to `v`, if it was reached.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, store: &ParameterStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    fn check_index(&self, op: &'static str, idx: &[usize], bound: usize) -> Result<(), NnError> {
        if idx.iter().any(|&i| i >= bound) {
            return Err(NnError::IndexOutOfRange { op, bound });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let ((m, k), (k2, n)) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(shape_err("matmul", (m, k), (k2, n)));
        }
        let mut out = Tensor::zeros(m, n);
        gemm(m, k, n, 1.0, self.value(a).data(), false, self.value(b).data(), false, 0.0, out.data_mut());
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let ((m, k), (n, k2)) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(shape_err("matmul_bt", (m, k), (n, k2)));
        }
        let mut out = Tensor::zeros(m, n);
        gemm(m, k, n, 1.0, self.value(a).data(), false, self.value(b).data(), true, 0.0, out.data_mut());
        Ok(self.push(out, Op::MatMulBt(a, b)))
    }

    /// `x · w + b` with `b` a `1 x n` row broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var, NnError> {
        let ((m, k), (k2, n)) = (self.shape(x), self.shape(w));
        if k != k2 {
            return Err(shape_err("linear", (m, k), (k2, n)));
        }
        let mut out = Tensor::zeros(m, n);
        if let Some(b) = b {
            if self.shape(b) != (1, n) {
                return Err(shape_err("linear(bias)", (1, n), self.shape(b)));
            }
            let bias = self.value(b).data();
            for r in 0..m {
                out.row_mut(r).copy_from_slice(bias);
            }
        }
        gemm(m, k, n, 1.0, self.value(x).data(), false, self.value(w).data(), false, 1.0, out.data_mut());
        Ok(self.push(out, Op::Linear(x, w, b)))
    }

    fn zip_same(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, NnError> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op, self.shape(a), self.shape(b)));
        }
        let (r, c) = self.shape(a);
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(Tensor::from_vec(r, c, data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let t = self.zip_same("add", a, b, |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let t = self.zip_same("sub", a, b, |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let t = self.zip_same("mul", a, b, |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    /// Adds a `1 x cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NnError> {
        let (r, c) = self.shape(a);
        if self.shape(row) != (1, c) {
            return Err(shape_err("add_row", (r, c), self.shape(row)));
        }
        let mut out = self.value(a).clone();
        let bias = self.value(row).data().to_vec();
        for i in 0..r {
            for (x, b) in out.row_mut(i).iter_mut().zip(&bias) {
                *x += b;
            }
        }
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let (r, c) = self.shape(a);
        Tensor::from_vec(r, c, self.value(a).data().iter().map(|&x| f(x)).collect())
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let t = self.map(a, |x| x * k);
        self.push(t, Op::Scale(a, k))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.map(a, libm::tanh);
        self.push(t, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.map(a, sigmoid);
        self.push(t, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.map(a, |x| x.max(0.0));
        self.push(t, Op::Relu(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let t = self.map(a, libm::log);
        self.push(t, Op::Log(a))
    }

    /// Clamps to `[lo, hi]`; gradient is zero where clamping was active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let t = self.map(a, |x| x.clamp(lo, hi));
        self.push(t, Op::Clamp(a, lo, hi))
    }

    /// Smallest distance from any recorded relu or clamp input to its
    /// breakpoint. Finite differences with a larger step are unreliable.
    pub fn kink_margin(&self) -> f64 {
        let dist = |a: Var, f: &dyn Fn(f64) -> f64| {
            self.value(a).data().iter().map(|&x| f(x)).fold(f64::INFINITY, f64::min)
        };
        self.nodes
            .iter()
            .map(|n| match n.op {
                Op::Relu(a) => dist(a, &|x| x.abs()),
                Op::Clamp(a, lo, hi) => dist(a, &|x| (x - lo).abs().min((x - hi).abs())),
                _ => f64::INFINITY,
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.len().max(1) as f64;
        self.push(Tensor::scalar(s), Op::Mean(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let rows = parts.first().map_or(0, |&p| self.shape(p).0);
        if let Some(&bad) = parts.iter().find(|&&p| self.shape(p).0 != rows) {
            return Err(shape_err("concat_cols", (rows, 0), self.shape(bad)));
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                out.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NnError> {
        let (r, c) = self.shape(a);
        if start + len > c {
            return Err(shape_err("slice_cols", (r, c), (start, len)));
        }
        let src = self.value(a);
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&src.row(i)[start..start + len]);
        }
        Ok(self.push(Tensor::from_vec(r, len, out), Op::SliceCols(a, start)))
    }

    /// Softmax along `axis` (0 = down columns, 1 = across rows).
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var, NnError> {
        let (r, c) = self.shape(a);
        if axis > 1 {
            return Err(shape_err("softmax(axis)", (r, c), (axis, 0)));
        }
        let src = self.value(a);
        let mut out = src.clone();
        let (outer, inner) = if axis == 1 { (r, c) } else { (c, r) };
        let at = |o: usize, i: usize| if axis == 1 { o * c + i } else { i * c + o };
        for o in 0..outer {
            let max = (0..inner).map(|i| src.data()[at(o, i)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for i in 0..inner {
                let e = libm::exp(src.data()[at(o, i)] - max);
                out.data_mut()[at(o, i)] = e;
                total += e;
            }
            for i in 0..inner {
                out.data_mut()[at(o, i)] /= total;
            }
        }
        Ok(self.push(out, Op::Softmax(a, axis)))
    }

    /// Row `i` of the result is row `idx[i]` of `a`.
    pub fn gather_rows(&mut self, a: Var, idx: Index) -> Result<Var, NnError> {
        let (r, c) = self.shape(a);
        self.check_index("gather_rows", &idx, r)?;
        let src = self.value(a);
        let mut out = Tensor::zeros(idx.len(), c);
        for (i, &j) in idx.iter().enumerate() {
            out.row_mut(i).copy_from_slice(src.row(j));
        }
        Ok(self.push(out, Op::GatherRows(a, idx)))
    }

    /// Adds row `i` of `a` into row `idx[i]` of an `n x cols` zero matrix.
    pub fn scatter_add_rows(&mut self, a: Var, idx: Index, n: usize) -> Result<Var, NnError> {
        let (r, c) = self.shape(a);
        if idx.len() != r {
            return Err(shape_err("scatter_add_rows", (r, c), (idx.len(), 1)));
        }
        self.check_index("scatter_add_rows", &idx, n)?;
        let src = self.value(a);
        let mut out = Tensor::zeros(n, c);
        for (i, &j) in idx.iter().enumerate() {
            for (o, x) in out.row_mut(j).iter_mut().zip(src.row(i)) {
                *o += x;
            }
        }
        Ok(self.push(out, Op::ScatterAddRows(a, idx)))
    }

    /// `a[ia[i]] + b[ib[i]] (+ bias)` for every `i`.
    pub fn gather_add(&mut self, a: Var, ia: Index, b: Var, ib: Index, bias: Option<Var>) -> Result<Var, NnError> {
        let ((ra, ca), (rb, cb)) = (self.shape(a), self.shape(b));
        if ca != cb || ia.len() != ib.len() {
            return Err(shape_err("gather_add", (ia.len(), ca), (ib.len(), cb)));
        }
        self.check_index("gather_add", &ia, ra)?;
        self.check_index("gather_add", &ib, rb)?;
        let mut out = Tensor::zeros(ia.len(), ca);
        if let Some(bias) = bias {
            if self.shape(bias) != (1, ca) {
                return Err(shape_err("gather_add(bias)", (1, ca), self.shape(bias)));
            }
            let bv = self.value(bias).data();
            for i in 0..ia.len() {
                out.row_mut(i).copy_from_slice(bv);
            }
        }
        let (av, bv) = (self.value(a), self.value(b));
        for i in 0..ia.len() {
            let (x, y) = (av.row(ia[i]), bv.row(ib[i]));
            for ((o, p), q) in out.row_mut(i).iter_mut().zip(x).zip(y) {
                *o += p + q;
            }
        }
        Ok(self.push(out, Op::GatherAdd(a, ia, b, ib, bias)))
    }

    /// `out[i] = <q[idx[i]], m[i]>`, an `E x 1` column.
    pub fn gather_rowdot(&mut self, q: Var, idx: Index, m: Var) -> Result<Var, NnError> {
        let ((rq, cq), (rm, cm)) = (self.shape(q), self.shape(m));
        if cq != cm || idx.len() != rm {
            return Err(shape_err("gather_rowdot", (rq, cq), (rm, cm)));
        }
        self.check_index("gather_rowdot", &idx, rq)?;
        let (qv, mv) = (self.value(q), self.value(m));
        let data = (0..rm)
            .map(|i| qv.row(idx[i]).iter().zip(mv.row(i)).map(|(a, b)| a * b).sum())
            .collect();
        Ok(self.push(Tensor::from_vec(rm, 1, data), Op::GatherRowDot(q, idx, m)))
    }

    /// Softmax of an `E x 1` score column within each group `idx[i]`.
    pub fn segment_softmax(&mut self, scores: Var, idx: Index, groups: usize) -> Result<Var, NnError> {
        let (r, c) = self.shape(scores);
        if c != 1 || idx.len() != r {
            return Err(shape_err("segment_softmax", (r, c), (idx.len(), 1)));
        }
        self.check_index("segment_softmax", &idx, groups)?;
        let s = self.value(scores).data();
        let mut max = vec![f64::NEG_INFINITY; groups];
        for (i, &g) in idx.iter().enumerate() {
            max[g] = max[g].max(s[i]);
        }
        let mut total = vec![0.0; groups];
        let mut out: Vec<f64> = idx
            .iter()
            .enumerate()
            .map(|(i, &g)| {
                let e = libm::exp(s[i] - max[g]);
                total[g] += e;
                e
            })
            .collect();
        for (o, &g) in out.iter_mut().zip(idx.iter()) {
            *o /= total[g];
        }
        Ok(self.push(Tensor::from_vec(r, 1, out), Op::SegmentSoftmax(scores, idx)))
    }

    /// `out[idx[i]] += alpha[i] * m[i]` into an `n x cols` zero matrix.
    pub fn weighted_scatter(&mut self, m: Var, alpha: Var, idx: Index, n: usize) -> Result<Var, NnError> {
        let (rm, cm) = self.shape(m);
        if self.shape(alpha) != (rm, 1) || idx.len() != rm {
            return Err(shape_err("weighted_scatter", (rm, cm), self.shape(alpha)));
        }
        self.check_index("weighted_scatter", &idx, n)?;
        let (mv, av) = (self.value(m), self.value(alpha));
        let mut out = Tensor::zeros(n, cm);
        for (i, &j) in idx.iter().enumerate() {
            let w = av.data()[i];
            for (o, x) in out.row_mut(j).iter_mut().zip(mv.row(i)) {
                *o += w * x;
            }
        }
        Ok(self.push(out, Op::WeightedScatter(m, alpha, idx)))
    }

    /// Mean binary cross-entropy of probabilities against 0/1 labels.
    ///
    /// Predictions are clamped to `[BCE_EPS, 1 - BCE_EPS]`; the gradient is
    /// evaluated at the clamped value and passed straight through.
    pub fn bce(&mut self, pred: Var, labels: Arc<[f64]>) -> Result<Var, NnError> {
        let (r, c) = self.shape(pred);
        if labels.len() != r * c {
            return Err(shape_err("bce", (r, c), (labels.len(), 1)));
        }
        let b = labels.len().max(1) as f64;
        let loss: f64 = self
            .value(pred)
            .data()
            .iter()
            .zip(labels.iter())
            .map(|(&p, &y)| {
                let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
                -(y * libm::log(p) + (1.0 - y) * libm::log(1.0 - p))
            })
            .sum::<f64>()
            / b;
        Ok(self.push(Tensor::scalar(loss), Op::Bce(pred, labels, b)))
    }

    /// `Σ [softplus(z) - y z] / normalizer`, the BCE of `sigmoid(z)`.
    pub fn bce_with_logits(&mut self, logits: Var, labels: Arc<[f64]>, normalizer: f64) -> Result<Var, NnError> {
        let (r, c) = self.shape(logits);
        if labels.len() != r * c {
            return Err(shape_err("bce_with_logits", (r, c), (labels.len(), 1)));
        }
        let loss: f64 = self
            .value(logits)
            .data()
            .iter()
            .zip(labels.iter())
            .map(|(&z, &y)| z.max(0.0) + libm::log1p(libm::exp(-z.abs())) - y * z)
            .sum::<f64>()
            / normalizer;
        Ok(self.push(Tensor::scalar(loss), Op::BceWithLogits(logits, labels, normalizer)))
    }

    /// Syndrome check-node update on an `E x 1` column of variable-to-check
    /// messages whose rows are grouped by check: check `c` owns rows
    /// `ptr[c]..ptr[c + 1]` and has syndrome bit `signs[c]`.
    pub fn check_update(&mut self, x: Var, ptr: Index, signs: Arc<[bool]>, clamp_limit: f64) -> Result<Var, NnError> {
        let (r, c) = self.shape(x);
        if c != 1 || ptr.len() != signs.len() + 1 || ptr.last().copied() != Some(r) {
            return Err(shape_err("check_update", (r, c), (ptr.len(), signs.len())));
        }
        let xs = self.value(x).data();
        let mut out = vec![0.0; r];
        for (k, &s) in signs.iter().enumerate() {
            let (lo, hi) = (ptr[k], ptr[k + 1]);
            crate::bp::leave_one_out_update(&xs[lo..hi], s, clamp_limit, &mut out[lo..hi]);
        }
        Ok(self.push(Tensor::from_vec(r, 1, out), Op::CheckUpdate(x, ptr, signs, clamp_limit)))
    }

    fn grad_slot(&mut self, v: Var) -> &mut Tensor {
        let (r, c) = self.nodes[v.0].value.shape();
        self.grads[v.0].get_or_insert_with(|| Tensor::zeros(r, c))
    }

    fn accumulate(&mut self, v: Var, g: Tensor) {
        match &mut self.grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Reverse pass from a scalar `loss`; parameter gradients are added to `store`.
    pub fn backward(&mut self, loss: Var, store: &mut ParameterStore) -> Result<(), NnError> {
        if self.shape(loss) != (1, 1) {
            return Err(NnError::NonScalarLoss(self.shape(loss)));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else { continue };
            let op = self.nodes[i].op.clone();
            self.propagate(i, &op, &g, store);
            // Leaves keep their gradient for inspection; intermediates are dropped.
            if matches!(op, Op::Leaf | Op::Param(_)) {
                self.grads[i] = Some(g);
            }
        }
        Ok(())
    }

    fn propagate(&mut self, node: usize, op: &Op, g: &Tensor, store: &mut ParameterStore) {
        match op {
            Op::Leaf => {}
            Op::Param(id) => store.grad_mut(*id).add_assign(g),
            &Op::MatMul(a, b) => {
                let ((m, k), (_, n)) = (self.shape(a), self.shape(b));
                self.backprop_matmul_parts(a, b, m, k, n, g);
            }
            &Op::MatMulBt(a, b) => {
                // C = A Bᵀ: dA = dC B, dB = dCᵀ A.
                let ((m, k), (n, _)) = (self.shape(a), self.shape(b));
                self.grad_slot(a);
                self.grad_slot(b);
                let (av, bv) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
                if a == b {
                    let mut da = self.grads[a.0].take().unwrap_or_default();
                    gemm(m, n, k, 1.0, g.data(), false, bv, false, 1.0, da.data_mut());
                    gemm(n, m, k, 1.0, g.data(), true, av, false, 1.0, da.data_mut());
                    self.grads[a.0] = Some(da);
                } else {
                    let [ga, gb] = self.grads.get_disjoint_mut([a.0, b.0]).expect("distinct operands");
                    let (ga, gb) = (ga.as_mut().expect("slot"), gb.as_mut().expect("slot"));
                    gemm(m, n, k, 1.0, g.data(), false, bv, false, 1.0, ga.data_mut());
                    gemm(n, m, k, 1.0, g.data(), true, av, false, 1.0, gb.data_mut());
                }
            }
            &Op::Linear(x, w, b) => {
                let ((m, k), (_, n)) = (self.shape(x), self.shape(w));
                self.backprop_matmul_parts(x, w, m, k, n, g);
                if let Some(b) = b {
                    let mut db = Tensor::zeros(1, n);
                    for r in 0..m {
                        for (d, v) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    self.accumulate(b, db);
                }
            }
            &Op::Add(a, b) => {
                self.accumulate(a, g.clone());
                self.accumulate(b, g.clone());
            }
            &Op::Sub(a, b) => {
                self.accumulate(a, g.clone());
                let neg = Tensor::from_vec(g.rows(), g.cols(), g.data().iter().map(|x| -x).collect());
                self.accumulate(b, neg);
            }
            &Op::Mul(a, b) => {
                let da = zip(g, self.value(b), |gi, bi| gi * bi);
                let db = zip(g, self.value(a), |gi, ai| gi * ai);
                self.accumulate(a, da);
                self.accumulate(b, db);
            }
            &Op::AddRow(a, row) => {
                let mut dr = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (d, v) in dr.data_mut().iter_mut().zip(g.row(r)) {
                        *d += v;
                    }
                }
                self.accumulate(a, g.clone());
                self.accumulate(row, dr);
            }
            &Op::Scale(a, k) => {
                let d = Tensor::from_vec(g.rows(), g.cols(), g.data().iter().map(|x| x * k).collect());
                self.accumulate(a, d);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let (r, c) = self.shape(p);
                    let mut d = Vec::with_capacity(r * c);
                    for i in 0..r {
                        d.extend_from_slice(&g.row(i)[off..off + c]);
                    }
                    self.accumulate(p, Tensor::from_vec(r, c, d));
                    off += c;
                }
            }
            &Op::SliceCols(a, start) => {
                let slot = self.grad_slot(a);
                let len = g.cols();
                for i in 0..g.rows() {
                    for (d, v) in slot.row_mut(i)[start..start + len].iter_mut().zip(g.row(i)) {
                        *d += v;
                    }
                }
            }
            &Op::Tanh(a) => {
                let d = zip(g, &self.nodes[node].value, |gi, y| gi * (1.0 - y * y));
                self.accumulate(a, d);
            }
            &Op::Sigmoid(a) => {
                let d = zip(g, &self.nodes[node].value, |gi, y| gi * y * (1.0 - y));
                self.accumulate(a, d);
            }
            &Op::Relu(a) => {
                let d = zip(g, self.value(a), |gi, x| if x > 0.0 { gi } else { 0.0 });
                self.accumulate(a, d);
            }
            &Op::Log(a) => {
                let d = zip(g, self.value(a), |gi, x| gi / x);
                self.accumulate(a, d);
            }
            &Op::Clamp(a, lo, hi) => {
                let d = zip(g, self.value(a), |gi, x| if x > lo && x < hi { gi } else { 0.0 });
                self.accumulate(a, d);
            }
            &Op::Sum(a) => {
                let (r, c) = self.shape(a);
                self.accumulate(a, Tensor::full(r, c, g.item()));
            }
            &Op::Mean(a) => {
                let (r, c) = self.shape(a);
                let n = (r * c).max(1) as f64;
                self.accumulate(a, Tensor::full(r, c, g.item() / n));
            }
            &Op::Softmax(a, axis) => {
                let y = &self.nodes[node].value;
                let (r, c) = y.shape();
                let mut d = Tensor::zeros(r, c);
                let (outer, inner) = if axis == 1 { (r, c) } else { (c, r) };
                let at = |o: usize, i: usize| if axis == 1 { o * c + i } else { i * c + o };
                for o in 0..outer {
                    let dot: f64 = (0..inner).map(|i| g.data()[at(o, i)] * y.data()[at(o, i)]).sum();
                    for i in 0..inner {
                        d.data_mut()[at(o, i)] = y.data()[at(o, i)] * (g.data()[at(o, i)] - dot);
                    }
                }
                self.accumulate(a, d);
            }
            Op::GatherRows(a, idx) => {
                let slot = self.grad_slot(*a);
                for (i, &j) in idx.iter().enumerate() {
                    for (d, v) in slot.row_mut(j).iter_mut().zip(g.row(i)) {
                        *d += v;
                    }
                }
            }
            Op::ScatterAddRows(a, idx) => {
                let slot = self.grad_slot(*a);
                for (i, &j) in idx.iter().enumerate() {
                    for (d, v) in slot.row_mut(i).iter_mut().zip(g.row(j)) {
                        *d += v;
                    }
                }
            }
            Op::GatherAdd(a, ia, b, ib, bias) => {
                {
                    let slot = self.grad_slot(*a);
                    for (i, &j) in ia.iter().enumerate() {
                        for (d, v) in slot.row_mut(j).iter_mut().zip(g.row(i)) {
                            *d += v;
                        }
                    }
                }
                {
                    let slot = self.grad_slot(*b);
                    for (i, &j) in ib.iter().enumerate() {
                        for (d, v) in slot.row_mut(j).iter_mut().zip(g.row(i)) {
                            *d += v;
                        }
                    }
                }
                if let Some(bias) = *bias {
                    let slot = self.grad_slot(bias);
                    for i in 0..g.rows() {
                        for (d, v) in slot.data_mut().iter_mut().zip(g.row(i)) {
                            *d += v;
                        }
                    }
                }
            }
            Op::GatherRowDot(q, idx, m) => {
                let (q, m) = (*q, *m);
                let mut dq = self.grads[q.0].take().unwrap_or_else(|| {
                    let (r, c) = self.shape(q);
                    Tensor::zeros(r, c)
                });
                let mut dm = self.grads[m.0].take().unwrap_or_else(|| {
                    let (r, c) = self.shape(m);
                    Tensor::zeros(r, c)
                });
                let (qv, mv) = (&self.nodes[q.0].value, &self.nodes[m.0].value);
                for (i, &j) in idx.iter().enumerate() {
                    let gi = g.data()[i];
                    if gi == 0.0 {
                        continue;
                    }
                    for (d, x) in dq.row_mut(j).iter_mut().zip(mv.row(i)) {
                        *d += gi * x;
                    }
                    for (d, x) in dm.row_mut(i).iter_mut().zip(qv.row(j)) {
                        *d += gi * x;
                    }
                }
                self.grads[q.0] = Some(dq);
                self.grads[m.0] = Some(dm);
            }
            Op::SegmentSoftmax(a, idx) => {
                let y = self.nodes[node].value.data();
                let groups = idx.iter().copied().max().map_or(0, |m| m + 1);
                let mut dot = vec![0.0; groups];
                for (i, &s) in idx.iter().enumerate() {
                    dot[s] += g.data()[i] * y[i];
                }
                let d: Vec<f64> = idx
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| y[i] * (g.data()[i] - dot[s]))
                    .collect();
                let r = d.len();
                self.accumulate(*a, Tensor::from_vec(r, 1, d));
            }
            Op::WeightedScatter(m, alpha, idx) => {
                let (m, alpha) = (*m, *alpha);
                let mut dm = self.grads[m.0].take().unwrap_or_else(|| {
                    let (r, c) = self.shape(m);
                    Tensor::zeros(r, c)
                });
                let mut da = self.grads[alpha.0].take().unwrap_or_else(|| {
                    let (r, c) = self.shape(alpha);
                    Tensor::zeros(r, c)
                });
                let (mv, av) = (&self.nodes[m.0].value, &self.nodes[alpha.0].value);
                for (i, &j) in idx.iter().enumerate() {
                    let w = av.data()[i];
                    let grow = g.row(j);
                    let mut acc = 0.0;
                    for ((d, &x), &gv) in dm.row_mut(i).iter_mut().zip(mv.row(i)).zip(grow) {
                        *d += w * gv;
                        acc += gv * x;
                    }
                    da.data_mut()[i] += acc;
                }
                self.grads[m.0] = Some(dm);
                self.grads[alpha.0] = Some(da);
            }
            Op::Bce(pred, labels, b) => {
                let gl = g.item();
                let d = Tensor::from_vec(
                    g.rows().max(self.shape(*pred).0),
                    self.shape(*pred).1,
                    self.value(*pred)
                        .data()
                        .iter()
                        .zip(labels.iter())
                        .map(|(&p, &y)| {
                            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
                            gl * (p - y) / (p * (1.0 - p) * b)
                        })
                        .collect(),
                );
                self.accumulate(*pred, d);
            }
            Op::BceWithLogits(z, labels, norm) => {
                let gl = g.item();
                let (r, c) = self.shape(*z);
                let d = Tensor::from_vec(
                    r,
                    c,
                    self.value(*z)
                        .data()
                        .iter()
                        .zip(labels.iter())
                        .map(|(&z, &y)| gl * (sigmoid(z) - y) / norm)
                        .collect(),
                );
                self.accumulate(*z, d);
            }
            Op::CheckUpdate(x, ptr, signs, lim) => {
                let d = check_update_grad(self.value(*x).data(), ptr, signs, *lim, g.data());
                let r = d.len();
                self.accumulate(*x, Tensor::from_vec(r, 1, d));
            }
        }
    }

    fn backprop_matmul_parts(&mut self, a: Var, b: Var, m: usize, k: usize, n: usize, g: &Tensor) {
        // C = A B: dA = dC Bᵀ, dB = Aᵀ dC.
        self.grad_slot(a);
        self.grad_slot(b);
        let (av, bv) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
        if a == b {
            let mut da = self.grads[a.0].take().unwrap_or_default();
            gemm(m, n, k, 1.0, g.data(), false, bv, true, 1.0, da.data_mut());
            gemm(k, m, n, 1.0, av, true, g.data(), false, 1.0, da.data_mut());
            self.grads[a.0] = Some(da);
        } else {
            let [ga, gb] = self.grads.get_disjoint_mut([a.0, b.0]).expect("distinct operands");
            let (ga, gb) = (ga.as_mut().expect("slot"), gb.as_mut().expect("slot"));
            gemm(m, n, k, 1.0, g.data(), false, bv, true, 1.0, ga.data_mut());
            gemm(k, m, n, 1.0, av, true, g.data(), false, 1.0, gb.data_mut());
        }
    }
}

impl Default for Tensor {
    fn default() -> Self {
        Tensor::zeros(0, 0)
    }
}

fn zip(g: &Tensor, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::from_vec(
        g.rows(),
        g.cols(),
        g.data().iter().zip(other.data()).map(|(&a, &b)| f(a, b)).collect(),
    )
}

/// Gradient of the clipped leave-one-out tanh product.
fn check_update_grad(x: &[f64], ptr: &[usize], signs: &[bool], lim: f64, g: &[f64]) -> Vec<f64> {
    let mut d = vec![0.0; x.len()];
    let mut t = Vec::new();
    let mut partial = Vec::new();
    for (k, &s) in signs.iter().enumerate() {
        let (lo, hi) = (ptr[k], ptr[k + 1]);
        let deg = hi - lo;
        t.clear();
        t.extend(x[lo..hi].iter().map(|&v| libm::tanh(v / 2.0)));
        let sign = if s { -1.0 } else { 1.0 };
        for j in 0..deg {
            let gj = g[lo + j];
            if gj == 0.0 {
                continue;
            }
            let p_j: f64 = (0..deg).filter(|&i| i != j).map(|i| t[i]).product();
            let raw = sign * 2.0 * libm::atanh(p_j);
            if !(raw > -lim && raw < lim) {
                continue;
            }
            let outer = gj * sign * 2.0 / (1.0 - p_j * p_j);
            // Products of all t except indices i and j, via prefix/suffix
            // over the list with j removed.
            partial.clear();
            partial.extend((0..deg).filter(|&i| i != j).map(|i| t[i]));
            let mut prefix = 1.0;
            let mut excl = vec![0.0; partial.len()];
            for (q, &v) in partial.iter().enumerate() {
                excl[q] = prefix;
                prefix *= v;
            }
            let mut suffix = 1.0;
            for q in (0..partial.len()).rev() {
                excl[q] *= suffix;
                suffix *= partial[q];
            }
            for (q, i) in (0..deg).filter(|&i| i != j).enumerate() {
                d[lo + i] += outer * excl[q] * (1.0 - t[i] * t[i]) / 2.0;
            }
        }
    }
    d
}
