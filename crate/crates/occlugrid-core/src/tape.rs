//! Reverse-mode autodiff over a flat tape of dense `f64` tensors.
//!
//! A `Tape` records one forward pass eagerly: every op computes its value
//! at construction time and pushes a node. `backward` sweeps the nodes in
//! reverse, propagating adjoints and folding parameter gradients into a
//! [`GradStore`]. Parameter nodes are memoized, so every use of a
//! parameter accumulates into one adjoint.

use alloc::vec;
use alloc::vec::Vec;

use crate::fmath;
use crate::params::{GradStore, ModelParams};
use crate::tensor::{matmul, matmul_nt, matmul_tn, Tensor2};

/// Handle to a node on the tape.
pub type ValId = usize;

/// Predictions are clamped to this range inside the cross-entropy terms.
pub const BCE_CLAMP_LO: f64 = 1e-7;
pub const BCE_CLAMP_HI: f64 = 1.0 - 1e-7;

const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NnError {
    /// Two tensors met an op with incompatible shapes.
    ShapeMismatch { op: &'static str, lhs: (usize, usize), rhs: (usize, usize) },
    /// Attention requires `d_model` divisible by the head count.
    HeadsDontDivide { d_model: usize, heads: usize },
    /// Every key was masked out for some attention query.
    FullyMasked,
    /// A sample produced no polylines to encode.
    NoPolylines,
    /// A polyline with zero vectors reached the embedder.
    EmptyPolyline,
    /// More polylines than the configured capacity.
    TooManyPolylines { got: usize, max: usize },
    /// A polyline holds more vectors than the configured capacity.
    TooManyVectors { got: usize, max: usize },
    /// A configuration field is out of range.
    BadConfig { what: &'static str },
}

impl core::fmt::Display for NnError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            NnError::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: shape mismatch {}x{} vs {}x{}", lhs.0, lhs.1, rhs.0, rhs.1)
            }
            NnError::HeadsDontDivide { d_model, heads } => {
                write!(f, "d_model {d_model} not divisible by {heads} heads")
            }
            NnError::FullyMasked => write!(f, "attention row with every key masked"),
            NnError::NoPolylines => write!(f, "sample has no polylines"),
            NnError::EmptyPolyline => write!(f, "polyline has no vectors"),
            NnError::TooManyPolylines { got, max } => {
                write!(f, "{got} polylines exceed capacity {max}")
            }
            NnError::TooManyVectors { got, max } => {
                write!(f, "{got} vectors in one polyline exceed capacity {max}")
            }
            NnError::BadConfig { what } => write!(f, "bad config: {what}"),
        }
    }
}

/// The eight projection parameters of one attention block, as tape nodes.
#[derive(Clone, Copy, Debug)]
pub struct AttnWires {
    pub wq: ValId,
    pub bq: ValId,
    pub wk: ValId,
    pub bk: ValId,
    pub wv: ValId,
    pub bv: ValId,
    pub wo: ValId,
    pub bo: ValId,
}

/// Forward intermediates attention keeps for its backward pass.
struct AttnCache {
    q: Tensor2,
    k: Tensor2,
    v: Tensor2,
    /// Concatenated head outputs, before the output projection.
    o: Tensor2,
    /// Post-softmax weights per head, each `[m, n]`.
    a: Vec<Tensor2>,
}

enum Op {
    Param { index: usize },
    Const,
    Linear { x: ValId, w: ValId, b: ValId },
    Relu { x: ValId },
    Add { a: ValId, b: ValId },
    Scale { x: ValId, k: f64 },
    LayerNorm { x: ValId, gain: ValId, bias: ValId, stats: Vec<(f64, f64)> },
    // The key mask is not stored: masked weights are exactly zero in the
    // cached softmax, so their gradient contributions vanish on their own.
    Attn { q_src: ValId, kv_src: ValId, wires: AttnWires, heads: usize, cache: AttnCache },
    Sigmoid { x: ValId },
    BceMean { pred: ValId, target: Vec<f64>, support: Vec<usize> },
    Deficit { pred: ValId, indices: Vec<usize> },
    Permute { x: ValId, map: Vec<usize> },
    GatherRows { x: ValId, rows: Vec<usize> },
    ConcatRows { parts: Vec<ValId> },
    Sum { x: ValId },
    SumSquares { x: ValId },
}

/// One recorded forward pass.
pub struct Tape<'p> {
    params: &'p ModelParams,
    ops: Vec<Op>,
    vals: Vec<Tensor2>,
    param_nodes: Vec<Option<ValId>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ModelParams) -> Self {
        Tape {
            params,
            ops: Vec::new(),
            vals: Vec::new(),
            param_nodes: vec![None; params.len()],
        }
    }

    pub fn value(&self, id: ValId) -> &Tensor2 {
        &self.vals[id]
    }

    /// Value of a `[1,1]` node.
    pub fn scalar(&self, id: ValId) -> f64 {
        let v = &self.vals[id];
        assert_eq!(v.shape(), (1, 1), "scalar() on a {} node", v.shape_str());
        v.data[0]
    }

    pub fn node_count(&self) -> usize {
        self.ops.len()
    }

    fn push(&mut self, op: Op, val: Tensor2) -> ValId {
        self.ops.push(op);
        self.vals.push(val);
        self.vals.len() - 1
    }

    /// Node for a registered parameter; panics on an unknown name, which
    /// is a wiring bug rather than a data condition.
    pub fn param(&mut self, name: &str) -> ValId {
        let index = self
            .params
            .index_of(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"));
        if let Some(id) = self.param_nodes[index] {
            return id;
        }
        let val = self.params.tensor(index).clone();
        let id = self.push(Op::Param { index }, val);
        self.param_nodes[index] = Some(id);
        id
    }

    /// Leaf with no gradient.
    pub fn constant(&mut self, t: Tensor2) -> ValId {
        self.push(Op::Const, t)
    }

    /// `y = x·W + b` with `x [n,i]`, `W [i,o]`, `b [1,o]` broadcast over rows.
    pub fn linear(&mut self, x: ValId, w: ValId, b: ValId) -> Result<ValId, NnError> {
        let (xs, ws, bs) = (self.vals[x].shape(), self.vals[w].shape(), self.vals[b].shape());
        if xs.1 != ws.0 {
            return Err(NnError::ShapeMismatch { op: "linear", lhs: xs, rhs: ws });
        }
        if bs != (1, ws.1) {
            return Err(NnError::ShapeMismatch { op: "linear bias", lhs: ws, rhs: bs });
        }
        let mut y = matmul(&self.vals[x], &self.vals[w]);
        for r in 0..y.rows {
            let row = y.row_mut(r);
            for (c, v) in row.iter_mut().enumerate() {
                *v += self.vals[b].data[c];
            }
        }
        Ok(self.push(Op::Linear { x, w, b }, y))
    }

    pub fn relu(&mut self, x: ValId) -> ValId {
        let y = self.vals[x].map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(Op::Relu { x }, y)
    }

    pub fn add(&mut self, a: ValId, b: ValId) -> Result<ValId, NnError> {
        let (sa, sb) = (self.vals[a].shape(), self.vals[b].shape());
        if sa != sb {
            return Err(NnError::ShapeMismatch { op: "add", lhs: sa, rhs: sb });
        }
        let mut y = self.vals[a].clone();
        y.add_assign(&self.vals[b]);
        Ok(self.push(Op::Add { a, b }, y))
    }

    pub fn scale(&mut self, x: ValId, k: f64) -> ValId {
        let y = self.vals[x].map(|v| k * v);
        self.push(Op::Scale { x, k }, y)
    }

    /// Row-wise layer normalization with learned gain and bias, both `[1,d]`.
    pub fn layer_norm(&mut self, x: ValId, gain: ValId, bias: ValId) -> Result<ValId, NnError> {
        let xs = self.vals[x].shape();
        let gs = self.vals[gain].shape();
        let bs = self.vals[bias].shape();
        if gs != (1, xs.1) {
            return Err(NnError::ShapeMismatch { op: "layer_norm gain", lhs: xs, rhs: gs });
        }
        if bs != (1, xs.1) {
            return Err(NnError::ShapeMismatch { op: "layer_norm bias", lhs: xs, rhs: bs });
        }
        let d = xs.1 as f64;
        let mut y = Tensor2::zeros(xs.0, xs.1);
        let mut stats = Vec::with_capacity(xs.0);
        for r in 0..xs.0 {
            let row = self.vals[x].row(r);
            let mu = row.iter().sum::<f64>() / d;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d;
            let inv_std = 1.0 / fmath::sqrt(var + LAYER_NORM_EPS);
            stats.push((mu, inv_std));
            let g = self.vals[gain].row(0);
            let b = self.vals[bias].row(0);
            let out = y.row_mut(r);
            for c in 0..xs.1 {
                out[c] = (row[c] - mu) * inv_std * g[c] + b[c];
            }
        }
        Ok(self.push(Op::LayerNorm { x, gain, bias, stats }, y))
    }

    /// Multi-head attention with queries from `q_src` and keys/values from
    /// `kv_src`. `key_valid[j] == false` removes key `j` for every query;
    /// an all-false mask is an error.
    pub fn attention(
        &mut self,
        q_src: ValId,
        kv_src: ValId,
        wires: &AttnWires,
        heads: usize,
        key_valid: Option<Vec<bool>>,
    ) -> Result<ValId, NnError> {
        let d = self.vals[q_src].cols;
        let (m, n) = (self.vals[q_src].rows, self.vals[kv_src].rows);
        if self.vals[kv_src].cols != d {
            return Err(NnError::ShapeMismatch {
                op: "attention",
                lhs: self.vals[q_src].shape(),
                rhs: self.vals[kv_src].shape(),
            });
        }
        if heads == 0 || d % heads != 0 {
            return Err(NnError::HeadsDontDivide { d_model: d, heads });
        }
        for wid in [wires.wq, wires.wk, wires.wv, wires.wo] {
            if self.vals[wid].shape() != (d, d) {
                return Err(NnError::ShapeMismatch {
                    op: "attention weight",
                    lhs: (d, d),
                    rhs: self.vals[wid].shape(),
                });
            }
        }
        for bid in [wires.bq, wires.bk, wires.bv, wires.bo] {
            if self.vals[bid].shape() != (1, d) {
                return Err(NnError::ShapeMismatch {
                    op: "attention bias",
                    lhs: (1, d),
                    rhs: self.vals[bid].shape(),
                });
            }
        }
        if let Some(mask) = &key_valid {
            if mask.len() != n {
                return Err(NnError::ShapeMismatch {
                    op: "attention key mask",
                    lhs: (n, 1),
                    rhs: (mask.len(), 1),
                });
            }
            if !mask.iter().any(|&v| v) {
                return Err(NnError::FullyMasked);
            }
        }

        let dh = d / heads;
        let inv_sqrt_dh = 1.0 / fmath::sqrt(dh as f64);
        let q = add_bias(matmul(&self.vals[q_src], &self.vals[wires.wq]), &self.vals[wires.bq]);
        let k = add_bias(matmul(&self.vals[kv_src], &self.vals[wires.wk]), &self.vals[wires.bk]);
        let v = add_bias(matmul(&self.vals[kv_src], &self.vals[wires.wv]), &self.vals[wires.bv]);

        let mut o = Tensor2::zeros(m, d);
        let mut a_heads = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = head_slice(&q, h, dh);
            let kh = head_slice(&k, h, dh);
            let vh = head_slice(&v, h, dh);
            let mut s = matmul_nt(&qh, &kh);
            s.scale_assign(inv_sqrt_dh);
            softmax_rows_masked(&mut s, key_valid.as_deref());
            let oh = matmul(&s, &vh);
            for r in 0..m {
                o.row_mut(r)[h * dh..(h + 1) * dh].copy_from_slice(oh.row(r));
            }
            a_heads.push(s);
        }
        let y = add_bias(matmul(&o, &self.vals[wires.wo]), &self.vals[wires.bo]);
        let cache = AttnCache { q, k, v, o, a: a_heads };
        Ok(self.push(Op::Attn { q_src, kv_src, wires: *wires, heads, cache }, y))
    }

    pub fn self_attention(
        &mut self,
        x: ValId,
        wires: &AttnWires,
        heads: usize,
        key_valid: Option<Vec<bool>>,
    ) -> Result<ValId, NnError> {
        self.attention(x, x, wires, heads, key_valid)
    }

    pub fn sigmoid(&mut self, x: ValId) -> ValId {
        let y = self.vals[x].map(sigmoid_stable);
        self.push(Op::Sigmoid { x }, y)
    }

    /// Mean binary cross-entropy of `pred` (flat-indexed) against `target`
    /// over the `support` indices. Predictions are clamped to
    /// `[BCE_CLAMP_LO, BCE_CLAMP_HI]`; the clamped region has zero
    /// gradient. An empty support yields exactly 0.
    pub fn bce_mean(&mut self, pred: ValId, target: Vec<f64>, support: Vec<usize>) -> ValId {
        let p = &self.vals[pred];
        assert_eq!(p.len(), target.len(), "bce target length");
        assert!(support.iter().all(|&i| i < p.len()), "bce support out of range");
        let mut total = 0.0;
        for &i in &support {
            let ph = p.data[i].clamp(BCE_CLAMP_LO, BCE_CLAMP_HI);
            let t = target[i];
            total += -(t * fmath::ln(ph) + (1.0 - t) * fmath::ln(1.0 - ph));
        }
        let val = if support.is_empty() { 0.0 } else { total / support.len() as f64 };
        self.push(Op::BceMean { pred, target, support }, Tensor2::from_vec(1, 1, vec![val]))
    }

    /// `Σ (1 - pred[i])` over the given flat indices; an unnormalized
    /// push toward occupancy.
    pub fn occupancy_deficit(&mut self, pred: ValId, indices: Vec<usize>) -> ValId {
        let p = &self.vals[pred];
        assert!(indices.iter().all(|&i| i < p.len()), "deficit index out of range");
        let val: f64 = indices.iter().map(|&i| 1.0 - p.data[i]).sum();
        self.push(Op::Deficit { pred, indices }, Tensor2::from_vec(1, 1, vec![val]))
    }

    /// Reindexing: `y.data[j] = x.data[map[j]]` with the given output shape.
    pub fn permute(&mut self, x: ValId, rows: usize, cols: usize, map: Vec<usize>) -> ValId {
        let src = &self.vals[x];
        assert_eq!(map.len(), rows * cols, "permute map length");
        assert!(map.iter().all(|&i| i < src.len()), "permute index out of range");
        let data: Vec<f64> = map.iter().map(|&i| src.data[i]).collect();
        self.push(Op::Permute { x, map }, Tensor2::from_vec(rows, cols, data))
    }

    /// `y[i,:] = x[rows[i],:]`; rows may repeat.
    pub fn gather_rows(&mut self, x: ValId, rows: Vec<usize>) -> ValId {
        let src = &self.vals[x];
        assert!(!rows.is_empty(), "gather_rows needs at least one row");
        assert!(rows.iter().all(|&r| r < src.rows), "gather_rows row out of range");
        let mut y = Tensor2::zeros(rows.len(), src.cols);
        for (i, &r) in rows.iter().enumerate() {
            y.row_mut(i).copy_from_slice(src.row(r));
        }
        self.push(Op::GatherRows { x, rows }, y)
    }

    /// Stacks parts along rows; every part must share a column count.
    pub fn concat_rows(&mut self, parts: &[ValId]) -> Result<ValId, NnError> {
        let Some(&first) = parts.first() else {
            return Err(NnError::NoPolylines);
        };
        let cols = self.vals[first].cols;
        let mut total = 0;
        for &p in parts {
            if self.vals[p].cols != cols {
                return Err(NnError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: self.vals[first].shape(),
                    rhs: self.vals[p].shape(),
                });
            }
            total += self.vals[p].rows;
        }
        let mut data = Vec::with_capacity(total * cols);
        for &p in parts {
            data.extend_from_slice(&self.vals[p].data);
        }
        let val = Tensor2::from_vec(total, cols, data);
        Ok(self.push(Op::ConcatRows { parts: parts.to_vec() }, val))
    }

    pub fn sum(&mut self, x: ValId) -> ValId {
        let val: f64 = self.vals[x].data.iter().sum();
        self.push(Op::Sum { x }, Tensor2::from_vec(1, 1, vec![val]))
    }

    pub fn sum_squares(&mut self, x: ValId) -> ValId {
        let val: f64 = self.vals[x].data.iter().map(|v| v * v).sum();
        self.push(Op::SumSquares { x }, Tensor2::from_vec(1, 1, vec![val]))
    }

    /// Accumulates `d loss / d param` into `grads` for every parameter the
    /// tape touched. `loss` must be a `[1,1]` node. `grads` is not zeroed
    /// first, so calls across samples sum into a batch gradient.
    pub fn backward(&self, loss: ValId, grads: &mut GradStore) {
        assert_eq!(self.vals[loss].shape(), (1, 1), "backward needs a scalar loss");
        let mut adj: Vec<Option<Tensor2>> = (0..self.ops.len()).map(|_| None).collect();
        adj[loss] = Some(Tensor2::from_vec(1, 1, vec![1.0]));

        for id in (0..self.ops.len()).rev() {
            let Some(g) = adj[id].take() else { continue };
            match &self.ops[id] {
                Op::Param { index } => {
                    grads.grad_mut(*index).add_assign(&g);
                }
                Op::Const => {}
                Op::Linear { x, w, b } => {
                    let dx = matmul_nt(&g, &self.vals[*w]);
                    let dw = matmul_tn(&self.vals[*x], &g);
                    let db = col_sums(&g);
                    accumulate(&mut adj, *x, dx);
                    accumulate(&mut adj, *w, dw);
                    accumulate(&mut adj, *b, db);
                }
                Op::Relu { x } => {
                    let mut dx = g;
                    for (dv, &xv) in dx.data.iter_mut().zip(self.vals[*x].data.iter()) {
                        if xv <= 0.0 {
                            *dv = 0.0;
                        }
                    }
                    accumulate(&mut adj, *x, dx);
                }
                Op::Add { a, b } => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, g);
                }
                Op::Scale { x, k } => {
                    let mut dx = g;
                    dx.scale_assign(*k);
                    accumulate(&mut adj, *x, dx);
                }
                Op::LayerNorm { x, gain, bias, stats } => {
                    let xs = self.vals[*x].shape();
                    let d = xs.1 as f64;
                    let gain_row = self.vals[*gain].row(0);
                    let mut dx = Tensor2::zeros(xs.0, xs.1);
                    let mut dg = Tensor2::zeros(1, xs.1);
                    let mut db = Tensor2::zeros(1, xs.1);
                    for r in 0..xs.0 {
                        let (mu, inv_std) = stats[r];
                        let xrow = self.vals[*x].row(r);
                        let grow = g.row(r);
                        // xhat and the two row means the gradient needs.
                        let mut mean_dh = 0.0;
                        let mut mean_dh_xh = 0.0;
                        for c in 0..xs.1 {
                            let xh = (xrow[c] - mu) * inv_std;
                            let dh = grow[c] * gain_row[c];
                            mean_dh += dh;
                            mean_dh_xh += dh * xh;
                            dg.data[c] += grow[c] * xh;
                            db.data[c] += grow[c];
                        }
                        mean_dh /= d;
                        mean_dh_xh /= d;
                        let out = dx.row_mut(r);
                        for c in 0..xs.1 {
                            let xh = (xrow[c] - mu) * inv_std;
                            let dh = grow[c] * gain_row[c];
                            out[c] = (dh - mean_dh - xh * mean_dh_xh) * inv_std;
                        }
                    }
                    accumulate(&mut adj, *x, dx);
                    accumulate(&mut adj, *gain, dg);
                    accumulate(&mut adj, *bias, db);
                }
                Op::Attn { q_src, kv_src, wires, heads, cache } => {
                    let d = self.vals[*q_src].cols;
                    let dh = d / heads;
                    let inv_sqrt_dh = 1.0 / fmath::sqrt(dh as f64);
                    let m = self.vals[*q_src].rows;

                    let dwo = matmul_tn(&cache.o, &g);
                    let dbo = col_sums(&g);
                    let d_o = matmul_nt(&g, &self.vals[wires.wo]);

                    let mut dq = Tensor2::zeros(m, d);
                    let mut dk = Tensor2::zeros(cache.k.rows, d);
                    let mut dv = Tensor2::zeros(cache.v.rows, d);
                    for h in 0..*heads {
                        let a = &cache.a[h];
                        let qh = head_slice(&cache.q, h, dh);
                        let kh = head_slice(&cache.k, h, dh);
                        let vh = head_slice(&cache.v, h, dh);
                        let doh = head_slice(&d_o, h, dh);
                        let da = matmul_nt(&doh, &vh);
                        let dvh = matmul_tn(a, &doh);
                        // Softmax backward per row; masked entries have
                        // a == 0 and so contribute nothing.
                        let mut ds = Tensor2::zeros(a.rows, a.cols);
                        for r in 0..a.rows {
                            let arow = a.row(r);
                            let darow = da.row(r);
                            let dot: f64 =
                                arow.iter().zip(darow.iter()).map(|(x, y)| x * y).sum();
                            let out = ds.row_mut(r);
                            for c in 0..a.cols {
                                out[c] = arow[c] * (darow[c] - dot) * inv_sqrt_dh;
                            }
                        }
                        let dqh = matmul(&ds, &kh);
                        let dkh = matmul_tn(&ds, &qh);
                        write_head(&mut dq, h, dh, &dqh);
                        write_head(&mut dk, h, dh, &dkh);
                        write_head(&mut dv, h, dh, &dvh);
                    }

                    let dwq = matmul_tn(&self.vals[*q_src], &dq);
                    let dwk = matmul_tn(&self.vals[*kv_src], &dk);
                    let dwv = matmul_tn(&self.vals[*kv_src], &dv);
                    let (dbq, dbk, dbv) = (col_sums(&dq), col_sums(&dk), col_sums(&dv));
                    let dxq = matmul_nt(&dq, &self.vals[wires.wq]);
                    let dxk = matmul_nt(&dk, &self.vals[wires.wk]);
                    let dxv = matmul_nt(&dv, &self.vals[wires.wv]);

                    accumulate(&mut adj, *q_src, dxq);
                    accumulate(&mut adj, *kv_src, dxk);
                    accumulate(&mut adj, *kv_src, dxv);
                    accumulate(&mut adj, wires.wq, dwq);
                    accumulate(&mut adj, wires.wk, dwk);
                    accumulate(&mut adj, wires.wv, dwv);
                    accumulate(&mut adj, wires.wo, dwo);
                    accumulate(&mut adj, wires.bq, dbq);
                    accumulate(&mut adj, wires.bk, dbk);
                    accumulate(&mut adj, wires.bv, dbv);
                    accumulate(&mut adj, wires.bo, dbo);
                }
                Op::Sigmoid { x } => {
                    let y = &self.vals[id];
                    let mut dx = g;
                    for (dv, &yv) in dx.data.iter_mut().zip(y.data.iter()) {
                        *dv *= yv * (1.0 - yv);
                    }
                    accumulate(&mut adj, *x, dx);
                }
                Op::BceMean { pred, target, support } => {
                    if support.is_empty() {
                        continue;
                    }
                    let gs = g.data[0] / support.len() as f64;
                    let p = &self.vals[*pred];
                    let mut dp = Tensor2::zeros(p.rows, p.cols);
                    for &i in support {
                        let pv = p.data[i];
                        // Outside the clamp range the loss is locally
                        // constant in pv, so the gradient is zero there.
                        if pv < BCE_CLAMP_LO || pv > BCE_CLAMP_HI {
                            continue;
                        }
                        dp.data[i] += gs * (pv - target[i]) / (pv * (1.0 - pv));
                    }
                    accumulate(&mut adj, *pred, dp);
                }
                Op::Deficit { pred, indices } => {
                    let gs = g.data[0];
                    let p = &self.vals[*pred];
                    let mut dp = Tensor2::zeros(p.rows, p.cols);
                    for &i in indices {
                        dp.data[i] -= gs;
                    }
                    accumulate(&mut adj, *pred, dp);
                }
                Op::Permute { x, map } => {
                    let src = &self.vals[*x];
                    let mut dx = Tensor2::zeros(src.rows, src.cols);
                    for (j, &i) in map.iter().enumerate() {
                        dx.data[i] += g.data[j];
                    }
                    accumulate(&mut adj, *x, dx);
                }
                Op::GatherRows { x, rows } => {
                    let src = &self.vals[*x];
                    let mut dx = Tensor2::zeros(src.rows, src.cols);
                    for (i, &r) in rows.iter().enumerate() {
                        let grow = g.row(i);
                        let drow = dx.row_mut(r);
                        for c in 0..src.cols {
                            drow[c] += grow[c];
                        }
                    }
                    accumulate(&mut adj, *x, dx);
                }
                Op::ConcatRows { parts } => {
                    let mut offset = 0;
                    for &p in parts {
                        let rows = self.vals[p].rows;
                        let cols = self.vals[p].cols;
                        let mut dp = Tensor2::zeros(rows, cols);
                        dp.data
                            .copy_from_slice(&g.data[offset * cols..(offset + rows) * cols]);
                        accumulate(&mut adj, p, dp);
                        offset += rows;
                    }
                }
                Op::Sum { x } => {
                    let gs = g.data[0];
                    let src = &self.vals[*x];
                    let dx = Tensor2::from_vec(src.rows, src.cols, vec![gs; src.len()]);
                    accumulate(&mut adj, *x, dx);
                }
                Op::SumSquares { x } => {
                    let gs = g.data[0];
                    let dx = self.vals[*x].map(|v| 2.0 * gs * v);
                    accumulate(&mut adj, *x, dx);
                }
            }
        }
    }
}

fn accumulate(adj: &mut [Option<Tensor2>], id: ValId, delta: Tensor2) {
    if let Some(t) = &mut adj[id] {
        t.add_assign(&delta);
    } else {
        adj[id] = Some(delta);
    }
}

fn add_bias(mut y: Tensor2, b: &Tensor2) -> Tensor2 {
    for r in 0..y.rows {
        let row = y.row_mut(r);
        for (c, v) in row.iter_mut().enumerate() {
            *v += b.data[c];
        }
    }
    y
}

fn col_sums(g: &Tensor2) -> Tensor2 {
    let mut out = Tensor2::zeros(1, g.cols);
    for r in 0..g.rows {
        let row = g.row(r);
        for c in 0..g.cols {
            out.data[c] += row[c];
        }
    }
    out
}

fn head_slice(x: &Tensor2, h: usize, dh: usize) -> Tensor2 {
    let mut out = Tensor2::zeros(x.rows, dh);
    for r in 0..x.rows {
        out.row_mut(r).copy_from_slice(&x.row(r)[h * dh..(h + 1) * dh]);
    }
    out
}

fn write_head(dst: &mut Tensor2, h: usize, dh: usize, src: &Tensor2) {
    for r in 0..src.rows {
        dst.row_mut(r)[h * dh..(h + 1) * dh].copy_from_slice(src.row(r));
    }
}

/// In-place row softmax with max subtraction; invalid keys get weight 0.
fn softmax_rows_masked(s: &mut Tensor2, key_valid: Option<&[bool]>) {
    for r in 0..s.rows {
        let row = s.row_mut(r);
        let mut max = f64::NEG_INFINITY;
        for (c, &v) in row.iter().enumerate() {
            if key_valid.map_or(true, |m| m[c]) && v > max {
                max = v;
            }
        }
        let mut denom = 0.0;
        for (c, v) in row.iter_mut().enumerate() {
            if key_valid.map_or(true, |m| m[c]) {
                *v = fmath::exp(*v - max);
                denom += *v;
            } else {
                *v = 0.0;
            }
        }
        let inv = 1.0 / denom;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
}

fn sigmoid_stable(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + fmath::exp(-x))
    } else {
        let e = fmath::exp(x);
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_diff, compare};
    use crate::params::Init;

    fn small_params(seed: u64, shapes: &[(&str, usize, usize)]) -> ModelParams {
        let mut p = ModelParams::new(seed);
        for &(name, r, c) in shapes {
            let bound = 1.0 / fmath::sqrt(r as f64);
            p.register(name, r, c, Init::Uniform { bound });
        }
        p
    }

    fn check_against_fd(
        params: &mut ModelParams,
        tol: f64,
        build: &dyn Fn(&mut Tape<'_>) -> ValId,
    ) {
        let mut tape = Tape::new(params);
        let loss = build(&mut tape);
        let mut grads = GradStore::zeros_like(params);
        tape.backward(loss, &mut grads);
        let analytic = grads.flatten();
        drop(tape);
        let numeric = central_diff(params, 1e-5, |p| {
            let mut t = Tape::new(p);
            let l = build(&mut t);
            t.scalar(l)
        });
        // Floor above central-difference cancellation noise (~|f|·1e-16/eps),
        // which otherwise dominates coordinates whose true gradient is ~0.
        let rep = compare(&analytic, &numeric, 1e-5);
        assert!(
            rep.max_rel_err < tol,
            "worst coord {}: analytic {} vs numeric {} (rel {})",
            rep.worst_index,
            rep.analytic,
            rep.numeric,
            rep.max_rel_err
        );
    }

    fn fixed_input(rows: usize, cols: usize, salt: u64) -> Tensor2 {
        let mut s = crate::rng::ParamStream::new(salt, "input");
        Tensor2::from_vec(rows, cols, (0..rows * cols).map(|_| s.next_symmetric(0.8)).collect())
    }

    #[test]
    fn linear_relu_chain_matches_fd() {
        let mut params =
            small_params(7, &[("w1", 5, 4), ("b1", 1, 4), ("w2", 4, 3), ("b2", 1, 3)]);
        // Pin biases away from zero so relu kinks sit off the FD path.
        for name in ["b1", "b2"] {
            let idx = params.index_of(name).unwrap();
            for v in params.tensor_mut(idx).data.iter_mut() {
                *v = 0.3;
            }
        }
        check_against_fd(&mut params, 1e-6, &|t| {
            let x = t.constant(fixed_input(6, 5, 1));
            let w1 = t.param("w1");
            let b1 = t.param("b1");
            let w2 = t.param("w2");
            let b2 = t.param("b2");
            let h = t.linear(x, w1, b1).unwrap();
            let h = t.relu(h);
            let y = t.linear(h, w2, b2).unwrap();
            t.sum_squares(y)
        });
    }

    #[test]
    fn layer_norm_matches_fd() {
        let mut params = small_params(3, &[("w", 6, 6), ("g", 1, 6), ("b", 1, 6)]);
        check_against_fd(&mut params, 1e-6, &|t| {
            let x = t.constant(fixed_input(4, 6, 2));
            let w = t.param("w");
            let zero = t.constant(Tensor2::zeros(1, 6));
            let h = t.linear(x, w, zero).unwrap();
            let g = t.param("g");
            let b = t.param("b");
            let y = t.layer_norm(h, g, b).unwrap();
            t.sum_squares(y)
        });
    }

    fn attn_param_set(seed: u64, d: usize) -> ModelParams {
        let mut p = ModelParams::new(seed);
        let bound = 1.0 / fmath::sqrt(d as f64);
        for name in ["wq", "wk", "wv", "wo"] {
            p.register(name, d, d, Init::Uniform { bound });
        }
        for name in ["bq", "bk", "bv", "bo"] {
            p.register(name, 1, d, Init::Uniform { bound });
        }
        p
    }

    fn wires(t: &mut Tape<'_>) -> AttnWires {
        AttnWires {
            wq: t.param("wq"),
            bq: t.param("bq"),
            wk: t.param("wk"),
            bk: t.param("bk"),
            wv: t.param("wv"),
            bv: t.param("bv"),
            wo: t.param("wo"),
            bo: t.param("bo"),
        }
    }

    #[test]
    fn self_attention_matches_fd() {
        let mut params = attn_param_set(11, 6);
        check_against_fd(&mut params, 1e-5, &|t| {
            let x = t.constant(fixed_input(5, 6, 3));
            let w = wires(t);
            let y = t.self_attention(x, &w, 2, None).unwrap();
            t.sum_squares(y)
        });
    }

    #[test]
    fn masked_cross_attention_matches_fd() {
        let mut params = attn_param_set(13, 6);
        check_against_fd(&mut params, 1e-5, &|t| {
            let q = t.constant(fixed_input(3, 6, 4));
            let kv = t.constant(fixed_input(5, 6, 5));
            let w = wires(t);
            let mask = vec![true, false, true, true, false];
            let y = t.attention(q, kv, &w, 3, Some(mask)).unwrap();
            t.sum_squares(y)
        });
    }

    #[test]
    fn masked_keys_get_zero_weight() {
        let params = attn_param_set(17, 4);
        let mut t = Tape::new(&params);
        let q = t.constant(fixed_input(2, 4, 6));
        let kv = t.constant(fixed_input(4, 4, 7));
        let w = wires(&mut t);
        let masked = t.attention(q, kv, &w, 2, Some(vec![true, true, false, true])).unwrap();

        // Replacing the masked key's features must not change the output.
        let mut t2 = Tape::new(&params);
        let q2 = t2.constant(fixed_input(2, 4, 6));
        let mut kv_data = fixed_input(4, 4, 7);
        for v in kv_data.row_mut(2) {
            *v = 99.0;
        }
        let kv2 = t2.constant(kv_data);
        let w2 = wires(&mut t2);
        let masked2 =
            t2.attention(q2, kv2, &w2, 2, Some(vec![true, true, false, true])).unwrap();
        assert_eq!(t.value(masked).data, t2.value(masked2).data);
    }

    #[test]
    fn fully_masked_is_an_error() {
        let params = attn_param_set(19, 4);
        let mut t = Tape::new(&params);
        let x = t.constant(fixed_input(2, 4, 8));
        let w = wires(&mut t);
        let err = t.self_attention(x, &w, 2, Some(vec![false, false])).unwrap_err();
        assert_eq!(err, NnError::FullyMasked);
    }

    #[test]
    fn indivisible_heads_is_an_error() {
        let params = attn_param_set(23, 6);
        let mut t = Tape::new(&params);
        let x = t.constant(fixed_input(2, 6, 9));
        let w = wires(&mut t);
        let err = t.self_attention(x, &w, 4, None).unwrap_err();
        assert_eq!(err, NnError::HeadsDontDivide { d_model: 6, heads: 4 });
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let params = attn_param_set(29, 6);
        let mut t = Tape::new(&params);
        let x = t.constant(fixed_input(4, 6, 10));
        let w = wires(&mut t);
        let _ = t.self_attention(x, &w, 2, None).unwrap();
        let Op::Attn { cache, .. } = t.ops.last().unwrap() else { panic!() };
        for a in &cache.a {
            for r in 0..a.rows {
                let s: f64 = a.row(r).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bce_and_deficit_match_fd() {
        let mut params = small_params(31, &[("w", 4, 6), ("b", 1, 6)]);
        let target = vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        check_against_fd(&mut params, 1e-6, &|t| {
            let x = t.constant(fixed_input(1, 4, 11));
            let w = t.param("w");
            let b = t.param("b");
            let z = t.linear(x, w, b).unwrap();
            let p = t.sigmoid(z);
            let lg = t.bce_mean(p, target.clone(), (0..6).collect());
            let lm = t.bce_mean(p, target.clone(), vec![0, 2, 3]);
            let locc = t.occupancy_deficit(p, vec![0, 2, 3]);
            let lm_s = t.scale(lm, 1.0);
            let locc_s = t.scale(locc, 0.1);
            let partial = t.add(lg, lm_s).unwrap();
            t.add(partial, locc_s).unwrap()
        });
    }

    #[test]
    fn empty_support_bce_is_zero_with_zero_grad() {
        let params = small_params(37, &[("w", 2, 3), ("b", 1, 3)]);
        let mut t = Tape::new(&params);
        let x = t.constant(fixed_input(1, 2, 12));
        let w = t.param("w");
        let b = t.param("b");
        let z = t.linear(x, w, b).unwrap();
        let p = t.sigmoid(z);
        let l = t.bce_mean(p, vec![0.0, 0.0, 0.0], vec![]);
        assert_eq!(t.scalar(l), 0.0);
        let mut grads = GradStore::zeros_like(&params);
        t.backward(l, &mut grads);
        assert!(grads.flatten().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn bce_known_value() {
        // Uniform 0.5 prediction against any binary target: ln 2 per cell.
        let params = ModelParams::new(0);
        let mut t = Tape::new(&params);
        let p = t.constant(Tensor2::from_vec(1, 4, vec![0.5; 4]));
        let l = t.bce_mean(p, vec![1.0, 0.0, 1.0, 0.0], (0..4).collect());
        assert!((t.scalar(l) - core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn deficit_known_value() {
        // Two target cells predicted at 0.25 leave a deficit of 1.5.
        let params = ModelParams::new(0);
        let mut t = Tape::new(&params);
        let p = t.constant(Tensor2::from_vec(1, 3, vec![0.25, 0.9, 0.25]));
        let l = t.occupancy_deficit(p, vec![0, 2]);
        assert!((t.scalar(l) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn gather_concat_permute_match_fd() {
        let mut params = small_params(41, &[("e", 5, 4)]);
        check_against_fd(&mut params, 1e-6, &|t| {
            let e = t.param("e");
            let g1 = t.gather_rows(e, vec![0, 2, 2, 4]);
            let g2 = t.gather_rows(e, vec![1, 3]);
            let cat = t.concat_rows(&[g1, g2]).unwrap();
            let perm = t.permute(cat, 4, 6, (0..24).rev().collect());
            t.sum_squares(perm)
        });
    }

    #[test]
    fn shared_parameter_accumulates_both_uses() {
        let mut params = small_params(43, &[("w", 3, 3), ("b", 1, 3)]);
        check_against_fd(&mut params, 1e-6, &|t| {
            let x = t.constant(fixed_input(2, 3, 13));
            let w = t.param("w");
            let b = t.param("b");
            let h1 = t.linear(x, w, b).unwrap();
            let h2 = t.linear(h1, w, b).unwrap();
            t.sum_squares(h2)
        });
    }

    #[test]
    fn scalar_panics_on_matrix() {
        let params = ModelParams::new(0);
        let mut t = Tape::new(&params);
        let c = t.constant(Tensor2::zeros(2, 2));
        let r = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| t.scalar(c)));
        assert!(r.is_err());
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid_stable(800.0), 1.0);
        assert_eq!(sigmoid_stable(-800.0), 0.0);
        assert!((sigmoid_stable(0.0) - 0.5).abs() < 1e-15);
    }
}
