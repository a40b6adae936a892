//! Minimal reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation as a node holding its forward value.
//! [`Tape::backward`] walks the nodes in reverse and accumulates adjoints.
//! The op set is exactly what the embedding models need; each op documents
//! its shape contract and panics on violation, since shapes are fixed by the
//! model code and a mismatch is a programming error.

use crate::error::{Error, Result};
use crate::numeric::linalg::sigmoid;
use crate::numeric::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Gather { src: Var, idx: Vec<usize> },
    Concat(Vec<Var>),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    ComplexMul(Var, Var),
    Scale(Var, f64),
    MatMulNt(Var, Var),
    AddRow(Var, Var),
    Tanh(Var),
    SegmentSum { src: Var, seg: Vec<usize> },
    SegmentMean { src: Var, seg: Vec<usize>, counts: Vec<usize> },
    Mix { a: Var, b: Var, alpha: f64, mask: Vec<bool> },
    BceLogits { logits: Var, targets: Tensor },
    Attention { x: Var, ranges: Vec<(usize, usize)>, wq: Var, wk: Var, wv: Var },
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for the leaf `v`, or `None` when `v` does not influence the
    /// output. Adjoints of intermediate nodes are not retained.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Input node (parameter or constant).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Rows `idx` of `src`, in order (repeats allowed).
    pub fn gather(&mut self, src: Var, idx: Vec<usize>) -> Var {
        let s = self.value(src);
        let cols = s.cols();
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in &idx {
            assert!(i < s.rows(), "gather index {i} out of range {}", s.rows());
            data.extend_from_slice(s.row(i));
        }
        let value = Tensor::from_vec(idx.len(), cols, data).expect("gather shape");
        self.push(value, Op::Gather { src, idx })
    }

    /// Vertical concatenation; all parts share a column count.
    pub fn concat(&mut self, parts: Vec<Var>) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let cols = self.value(parts[0]).cols();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in &parts {
            let t = self.value(p);
            assert_eq!(t.cols(), cols, "concat column mismatch");
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let value = Tensor::from_vec(rows, cols, data).expect("concat shape");
        self.push(value, Op::Concat(parts))
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        assert!(ta.same_shape(tb), "shape mismatch {:?} vs {:?}", ta.shape(), tb.shape());
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::from_vec(ta.rows(), ta.cols(), data).expect("zip shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_with(a, b, |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_with(a, b, |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_with(a, b, |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    /// Row-wise complex product where each row stores `[re | im]` halves.
    pub fn complex_mul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert!(ta.same_shape(tb), "complex_mul shape mismatch");
        assert!(ta.cols() % 2 == 0, "complex_mul needs an even width");
        let h = ta.cols() / 2;
        let mut out = Tensor::zeros(ta.rows(), ta.cols());
        for r in 0..ta.rows() {
            let (x, y) = (ta.row(r), tb.row(r));
            let o = out.row_mut(r);
            for i in 0..h {
                o[i] = x[i] * y[i] - x[h + i] * y[h + i];
                o[h + i] = x[i] * y[h + i] + x[h + i] * y[i];
            }
        }
        self.push(out, Op::ComplexMul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let t = self.value(a);
        let data = t.data().iter().map(|x| x * s).collect();
        let v = Tensor::from_vec(t.rows(), t.cols(), data).expect("scale shape");
        self.push(v, Op::Scale(a, s))
    }

    /// `a · bᵀ` for `a: n×k`, `b: m×k`; a linear layer when `b` is a weight.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.cols(), tb.cols(), "matmul_nt inner dimension");
        let (n, m) = (ta.rows(), tb.rows());
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let ai = ta.row(i);
            for (j, o) in out[i * m..(i + 1) * m].iter_mut().enumerate() {
                *o = dot_unrolled(ai, tb.row(j));
            }
        }
        let v = Tensor::from_vec(n, m, out).expect("matmul shape");
        self.push(v, Op::MatMulNt(a, b))
    }

    /// Adds the single row `b` to every row of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Var {
        let (tx, tb) = (self.value(x), self.value(b));
        assert_eq!(tb.rows(), 1, "add_row bias must be a single row");
        assert_eq!(tx.cols(), tb.cols(), "add_row width mismatch");
        let mut out = tx.clone();
        for r in 0..out.rows() {
            for (o, bb) in out.row_mut(r).iter_mut().zip(tb.row(0)) {
                *o += bb;
            }
        }
        self.push(out, Op::AddRow(x, b))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = t.data().iter().map(|x| x.tanh()).collect();
        let v = Tensor::from_vec(t.rows(), t.cols(), data).expect("tanh shape");
        self.push(v, Op::Tanh(a))
    }

    /// Sums row `i` of `src` into output row `seg[i]`; output has `n` rows.
    pub fn segment_sum(&mut self, src: Var, seg: Vec<usize>, n: usize) -> Var {
        let t = self.value(src);
        assert_eq!(t.rows(), seg.len(), "segment ids must cover every row");
        let mut out = Tensor::zeros(n, t.cols());
        for (i, &s) in seg.iter().enumerate() {
            assert!(s < n, "segment id {s} out of range {n}");
            for (o, x) in out.row_mut(s).iter_mut().zip(t.row(i)) {
                *o += x;
            }
        }
        self.push(out, Op::SegmentSum { src, seg })
    }

    /// Like [`Tape::segment_sum`] but divides each output row by its member
    /// count. Rows with no members stay zero.
    pub fn segment_mean(&mut self, src: Var, seg: Vec<usize>, n: usize) -> Var {
        let t = self.value(src);
        assert_eq!(t.rows(), seg.len(), "segment ids must cover every row");
        let mut counts = vec![0usize; n];
        for &s in &seg {
            assert!(s < n, "segment id {s} out of range {n}");
            counts[s] += 1;
        }
        let mut out = Tensor::zeros(n, t.cols());
        for (i, &s) in seg.iter().enumerate() {
            for (o, x) in out.row_mut(s).iter_mut().zip(t.row(i)) {
                *o += x;
            }
        }
        for (r, &c) in counts.iter().enumerate() {
            if c > 1 {
                let inv = 1.0 / c as f64;
                out.row_mut(r).iter_mut().for_each(|x| *x *= inv);
            }
        }
        self.push(out, Op::SegmentMean { src, seg, counts })
    }

    /// Row-wise `alpha * a + (1 - alpha) * b` where `mask` is set, and `a`
    /// copied verbatim elsewhere.
    pub fn mix(&mut self, a: Var, b: Var, alpha: f64, mask: Vec<bool>) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert!(ta.same_shape(tb), "mix shape mismatch");
        assert_eq!(mask.len(), ta.rows(), "mix mask length");
        let mut out = ta.clone();
        for (r, &m) in mask.iter().enumerate() {
            if m {
                for (o, y) in out.row_mut(r).iter_mut().zip(tb.row(r)) {
                    *o = alpha * *o + (1.0 - alpha) * y;
                }
            }
        }
        self.push(out, Op::Mix { a, b, alpha, mask })
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against `targets`,
    /// computed in the numerically stable logit form. Returns a `1×1` node.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Tensor) -> Var {
        let z = self.value(logits);
        assert!(z.same_shape(&targets), "bce target shape mismatch");
        let n = z.len().max(1) as f64;
        let total: f64 = z
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&x, &y)| x.max(0.0) - x * y + (-x.abs()).exp().ln_1p())
            .sum();
        let v = Tensor::row_vector(vec![total / n]);
        self.push(v, Op::BceLogits { logits, targets })
    }

    /// Single-head self-attention with a residual connection, applied
    /// independently inside each contiguous row range of `x`.
    pub fn self_attention(
        &mut self,
        x: Var,
        ranges: Vec<(usize, usize)>,
        wq: Var,
        wk: Var,
        wv: Var,
    ) -> Var {
        let tx = self.value(x);
        let d = tx.cols();
        for &w in &[wq, wk, wv] {
            assert_eq!(self.value(w).shape(), (d, d), "attention weight shape");
        }
        let mut out = tx.clone();
        for &(start, end) in &ranges {
            let fw = attention_forward(
                tx,
                start,
                end,
                self.value(wq),
                self.value(wk),
                self.value(wv),
            );
            for (li, r) in (start..end).enumerate() {
                for (o, a) in out.row_mut(r).iter_mut().zip(&fw.o[li * d..(li + 1) * d]) {
                    *o += a;
                }
            }
        }
        self.push(out, Op::Attention { x, ranges, wq, wk, wv })
    }

    /// Sum of all elements as a `1×1` node.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::row_vector(vec![s]), Op::Sum(a))
    }

    /// Reverse pass from the scalar node `out`.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        let ov = self.value(out);
        if ov.len() != 1 {
            return Err(Error::Dimension(format!(
                "backward needs a scalar output, got {:?}",
                ov.shape()
            )));
        }
        if !ov.is_finite() {
            return Err(Error::NonFinite("tape output".into()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(Tensor::row_vector(vec![1.0]));

        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Gather { src, idx: rows } => {
                    let s = self.value(*src);
                    let mut acc = Tensor::zeros(s.rows(), s.cols());
                    for (i, &r) in rows.iter().enumerate() {
                        for (a, x) in acc.row_mut(r).iter_mut().zip(g.row(i)) {
                            *a += x;
                        }
                    }
                    accumulate(&mut grads, *src, acc);
                }
                Op::Concat(parts) => {
                    let mut row = 0;
                    for &p in parts {
                        let t = self.value(p);
                        let n = t.rows();
                        let data = g.data()[row * t.cols()..(row + n) * t.cols()].to_vec();
                        row += n;
                        accumulate(&mut grads, p, Tensor::from_vec(n, t.cols(), data)?);
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    let neg = map(&g, |x| -x);
                    accumulate(&mut grads, *a, g);
                    accumulate(&mut grads, *b, neg);
                }
                Op::Mul(a, b) => {
                    let ga = zip(&g, self.value(*b), |x, y| x * y);
                    let gb = zip(&g, self.value(*a), |x, y| x * y);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::ComplexMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let h = ta.cols() / 2;
                    let mut ga = Tensor::zeros(ta.rows(), ta.cols());
                    let mut gb = Tensor::zeros(ta.rows(), ta.cols());
                    for r in 0..ta.rows() {
                        let (x, y, go) = (ta.row(r), tb.row(r), g.row(r));
                        let (mut gx, mut gy) = (vec![0.0; 2 * h], vec![0.0; 2 * h]);
                        for i in 0..h {
                            let (gr, gi) = (go[i], go[h + i]);
                            gx[i] = gr * y[i] + gi * y[h + i];
                            gx[h + i] = -gr * y[h + i] + gi * y[i];
                            gy[i] = gr * x[i] + gi * x[h + i];
                            gy[h + i] = -gr * x[h + i] + gi * x[i];
                        }
                        ga.row_mut(r).copy_from_slice(&gx);
                        gb.row_mut(r).copy_from_slice(&gy);
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, s) => {
                    let s = *s;
                    accumulate(&mut grads, *a, map(&g, |x| x * s));
                }
                Op::MatMulNt(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (n, m, k) = (ta.rows(), tb.rows(), ta.cols());
                    let mut ga = Tensor::zeros(n, k);
                    let mut gb = Tensor::zeros(m, k);
                    for i in 0..n {
                        let gi = g.row(i);
                        let ai = ta.row(i);
                        for j in 0..m {
                            let gij = gi[j];
                            if gij == 0.0 {
                                continue;
                            }
                            axpy(ga.row_mut(i), tb.row(j), gij);
                            axpy(gb.row_mut(j), ai, gij);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddRow(x, b) => {
                    let mut gb = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (a, v) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                            *a += v;
                        }
                    }
                    accumulate(&mut grads, *x, g);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Tanh(a) => {
                    let ga = zip(&g, &node.value, |x, y| x * (1.0 - y * y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::SegmentSum { src, seg } => {
                    let s = self.value(*src);
                    let mut gs = Tensor::zeros(s.rows(), s.cols());
                    for (i, &sg) in seg.iter().enumerate() {
                        gs.row_mut(i).copy_from_slice(g.row(sg));
                    }
                    accumulate(&mut grads, *src, gs);
                }
                Op::SegmentMean { src, seg, counts } => {
                    let s = self.value(*src);
                    let mut gs = Tensor::zeros(s.rows(), s.cols());
                    for (i, &sg) in seg.iter().enumerate() {
                        let inv = 1.0 / counts[sg] as f64;
                        for (o, x) in gs.row_mut(i).iter_mut().zip(g.row(sg)) {
                            *o = x * inv;
                        }
                    }
                    accumulate(&mut grads, *src, gs);
                }
                Op::Mix { a, b, alpha, mask } => {
                    let mut ga = g.clone();
                    let mut gb = Tensor::zeros(g.rows(), g.cols());
                    for (r, &m) in mask.iter().enumerate() {
                        if m {
                            for ((oa, ob), x) in
                                ga.row_mut(r).iter_mut().zip(gb.row_mut(r)).zip(g.row(r))
                            {
                                *oa = alpha * x;
                                *ob = (1.0 - alpha) * x;
                            }
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::BceLogits { logits, targets } => {
                    let z = self.value(*logits);
                    let scale = g.get(0, 0) / z.len().max(1) as f64;
                    let gz = zip(z, targets, |x, y| (sigmoid(x) - y) * scale);
                    accumulate(&mut grads, *logits, gz);
                }
                Op::Attention { x, ranges, wq, wk, wv } => {
                    let tx = self.value(*x);
                    let (mq, mk, mv) = (self.value(*wq), self.value(*wk), self.value(*wv));
                    let d = tx.cols();
                    let mut gx = g.clone();
                    let mut gq = Tensor::zeros(d, d);
                    let mut gk = Tensor::zeros(d, d);
                    let mut gv = Tensor::zeros(d, d);
                    for &(start, end) in ranges {
                        attention_backward(
                            tx, start, end, mq, mk, mv, &g, &mut gx, &mut gq, &mut gk, &mut gv,
                        );
                    }
                    accumulate(&mut grads, *x, gx);
                    accumulate(&mut grads, *wq, gq);
                    accumulate(&mut grads, *wk, gk);
                    accumulate(&mut grads, *wv, gv);
                }
                Op::Sum(a) => {
                    let t = self.value(*a);
                    let mut ga = Tensor::zeros(t.rows(), t.cols());
                    ga.fill(g.get(0, 0));
                    accumulate(&mut grads, *a, ga);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing
            .add_scaled(&g, 1.0)
            .expect("gradient shape is fixed by the forward pass"),
        slot @ None => *slot = Some(g),
    }
}

/// Dot product over four interleaved partial sums, combined in a fixed
/// order so results stay deterministic.
fn dot_unrolled(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn axpy(y: &mut [f64], x: &[f64], a: f64) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let data = t.data().iter().map(|x| f(*x)).collect();
    Tensor::from_vec(t.rows(), t.cols(), data).expect("map shape")
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data).expect("zip shape")
}

/// Intermediates of attention over rows `start..end`, all `L×d` or `L×L`
/// row-major buffers.
struct AttnForward {
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    p: Vec<f64>,
    o: Vec<f64>,
}

fn project(x: &Tensor, start: usize, end: usize, w: &Tensor) -> Vec<f64> {
    let d = x.cols();
    let mut out = vec![0.0; (end - start) * d];
    for (li, r) in (start..end).enumerate() {
        let xr = x.row(r);
        for a in 0..d {
            let wa = w.row(a);
            out[li * d + a] = xr.iter().zip(wa).map(|(p, q)| p * q).sum();
        }
    }
    out
}

fn attention_forward(
    x: &Tensor,
    start: usize,
    end: usize,
    wq: &Tensor,
    wk: &Tensor,
    wv: &Tensor,
) -> AttnForward {
    let d = x.cols();
    let l = end - start;
    let scale = 1.0 / (d as f64).sqrt();
    let q = project(x, start, end, wq);
    let k = project(x, start, end, wk);
    let v = project(x, start, end, wv);
    let mut p = vec![0.0; l * l];
    for i in 0..l {
        let mut maxv = f64::NEG_INFINITY;
        for j in 0..l {
            let s: f64 = (0..d).map(|t| q[i * d + t] * k[j * d + t]).sum::<f64>() * scale;
            p[i * l + j] = s;
            maxv = maxv.max(s);
        }
        let mut z = 0.0;
        for j in 0..l {
            let e = (p[i * l + j] - maxv).exp();
            p[i * l + j] = e;
            z += e;
        }
        for j in 0..l {
            p[i * l + j] /= z;
        }
    }
    let mut o = vec![0.0; l * d];
    for i in 0..l {
        for j in 0..l {
            let pij = p[i * l + j];
            for t in 0..d {
                o[i * d + t] += pij * v[j * d + t];
            }
        }
    }
    AttnForward { q, k, v, p, o }
}

#[allow(clippy::too_many_arguments)]
fn attention_backward(
    x: &Tensor,
    start: usize,
    end: usize,
    wq: &Tensor,
    wk: &Tensor,
    wv: &Tensor,
    g: &Tensor,
    gx: &mut Tensor,
    gq: &mut Tensor,
    gk: &mut Tensor,
    gv: &mut Tensor,
) {
    let d = x.cols();
    let l = end - start;
    let scale = 1.0 / (d as f64).sqrt();
    let fw = attention_forward(x, start, end, wq, wk, wv);
    // dO is the upstream gradient restricted to this block (residual path is
    // already in gx).
    let go: Vec<f64> = (start..end).flat_map(|r| g.row(r).to_vec()).collect();

    let mut dp = vec![0.0; l * l];
    let mut dv = vec![0.0; l * d];
    for i in 0..l {
        for j in 0..l {
            let mut acc = 0.0;
            for t in 0..d {
                acc += go[i * d + t] * fw.v[j * d + t];
                dv[j * d + t] += fw.p[i * l + j] * go[i * d + t];
            }
            dp[i * l + j] = acc;
        }
    }
    let mut ds = vec![0.0; l * l];
    for i in 0..l {
        let dot: f64 = (0..l).map(|j| fw.p[i * l + j] * dp[i * l + j]).sum();
        for j in 0..l {
            ds[i * l + j] = fw.p[i * l + j] * (dp[i * l + j] - dot) * scale;
        }
    }
    let mut dq = vec![0.0; l * d];
    let mut dk = vec![0.0; l * d];
    for i in 0..l {
        for j in 0..l {
            let s = ds[i * l + j];
            for t in 0..d {
                dq[i * d + t] += s * fw.k[j * d + t];
                dk[j * d + t] += s * fw.q[i * d + t];
            }
        }
    }
    // Projections are Y = X·Wᵀ: dW += dYᵀ·X and dX += dY·W.
    for (dy, w, gw) in [(&dq, wq, gq), (&dk, wk, gk), (&dv, wv, gv)] {
        for (li, r) in (start..end).enumerate() {
            let xr = x.row(r);
            for a in 0..d {
                let dya = dy[li * d + a];
                if dya == 0.0 {
                    continue;
                }
                let gwa = gw.row_mut(a);
                for b in 0..d {
                    gwa[b] += dya * xr[b];
                }
                let wa = w.row(a);
                let gxr = gx.row_mut(r);
                for b in 0..d {
                    gxr[b] += dya * wa[b];
                }
            }
        }
    }
}
