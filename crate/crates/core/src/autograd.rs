//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records every operation of one forward pass in creation order,
//! so the node list is already topologically sorted. [`Tape::backward`] walks
//! it once in reverse and accumulates gradients additively across fan-out.
//!
//! Every operation checks its output for NaN/Inf and fails with
//! [`TensorError::NonFinite`] instead of propagating the value.

use std::cell::RefCell;
use std::sync::Arc;

use rand::Rng;

use crate::error::TensorError;
use crate::tensor::{Real, Tensor};

type TResult<T> = std::result::Result<T, TensorError>;

/// Numerically stable logistic function.
pub fn sigmoid<R: Real>(x: R) -> R {
    if x >= R::zero() {
        R::one() / (R::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (R::one() + e)
    }
}

/// `ln(1 + e^x)` without overflow for large `|x|`.
pub fn softplus<R: Real>(x: R) -> R {
    x.max(R::zero()) + (-x.abs()).exp().ln_1p()
}

/// Assignment of each edge (row) to one of `count` segments.
#[derive(Debug, Clone)]
pub struct Segments {
    ids: Arc<[usize]>,
    count: usize,
}

impl Segments {
    pub fn new(ids: impl Into<Arc<[usize]>>, count: usize) -> TResult<Self> {
        let ids = ids.into();
        if let Some(&bad) = ids.iter().find(|&&s| s >= count) {
            return Err(TensorError::Index {
                op: "segments",
                index: bad,
                bound: count,
            });
        }
        Ok(Self { ids, count })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
enum Unary<R> {
    Relu,
    Sigmoid,
    Softplus,
    /// `a·x + b`
    Affine(R, R),
}

impl<R: Real> Unary<R> {
    fn name(self) -> &'static str {
        match self {
            Unary::Relu => "relu",
            Unary::Sigmoid => "sigmoid",
            Unary::Softplus => "softplus",
            Unary::Affine(..) => "affine",
        }
    }

    fn apply(self, x: R) -> R {
        match self {
            Unary::Relu => x.max(R::zero()),
            Unary::Sigmoid => sigmoid(x),
            Unary::Softplus => softplus(x),
            Unary::Affine(a, b) => a * x + b,
        }
    }

    /// Local derivative given input `x` and output `y`.
    fn derivative(self, x: R, y: R) -> R {
        match self {
            Unary::Relu => {
                if x > R::zero() {
                    R::one()
                } else {
                    R::zero()
                }
            }
            Unary::Sigmoid => y * (R::one() - y),
            Unary::Softplus => sigmoid(x),
            Unary::Affine(a, _) => a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone)]
enum Op<R> {
    Leaf,
    MatMul(usize, usize),
    Binary(Binary, usize, usize),
    Unary(Unary<R>, usize),
    AddRow(usize, usize),
    MulCol(usize, usize),
    RowPairDistance {
        points: usize,
        src: Arc<[usize]>,
        dst: Arc<[usize]>,
    },
    GatherRows(usize, Arc<[usize]>),
    SegmentSoftmax(usize, Segments),
    /// Messages are `values[gather[e]]` when `gather` is set, else row `e`.
    SegmentWeightedSum {
        weights: usize,
        values: usize,
        segments: Segments,
        gather: Option<Arc<[usize]>>,
    },
    ConcatCols(Vec<usize>),
    SliceCols {
        x: usize,
        start: usize,
    },
    RowSoftmax(usize),
    Mask(usize, Arc<[R]>),
    CrossEntropy {
        logits: usize,
        rows: Arc<[usize]>,
        labels: Arc<[usize]>,
    },
    Sum(usize),
    Mean(usize),
}

impl<R> Op<R> {
    fn inputs(&self) -> Vec<usize> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::Binary(_, a, b)
            | Op::AddRow(a, b)
            | Op::MulCol(a, b)
            | Op::SegmentWeightedSum {
                weights: a,
                values: b,
                ..
            } => vec![*a, *b],
            Op::Unary(_, x)
            | Op::GatherRows(x, _)
            | Op::SegmentSoftmax(x, _)
            | Op::SliceCols { x, .. }
            | Op::RowSoftmax(x)
            | Op::Mask(x, _)
            | Op::Sum(x)
            | Op::Mean(x) => vec![*x],
            Op::RowPairDistance { points, .. } => vec![*points],
            Op::CrossEntropy { logits, .. } => vec![*logits],
            Op::ConcatCols(xs) => xs.clone(),
        }
    }
}

struct Node<R> {
    value: Tensor<R>,
    op: Op<R>,
    requires_grad: bool,
}

/// Records the operations of one forward pass.
pub struct Tape<R> {
    nodes: RefCell<Vec<Node<R>>>,
}

impl<R: Real> Default for Tape<R> {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, R> {
    tape: &'t Tape<R>,
    id: usize,
}

impl<R> std::fmt::Debug for Var<'_, R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}", self.id)
    }
}

/// Gradients produced by [`Tape::backward`], indexed by node.
pub struct Gradients<R> {
    grads: Vec<Option<Tensor<R>>>,
}

impl<R: Real> Gradients<R> {
    /// Gradient of the loss with respect to `var`, or `None` if `var` does not
    /// require gradients or does not influence the loss.
    pub fn get(&self, var: Var<'_, R>) -> Option<&Tensor<R>> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    /// Like [`Gradients::get`] but returns zeros of the right shape when the
    /// loss does not depend on `var`.
    pub fn get_or_zeros(&self, var: Var<'_, R>) -> Tensor<R> {
        self.get(var).cloned().unwrap_or_else(|| {
            let (r, c) = var.shape();
            Tensor::zeros(r, c)
        })
    }
}

fn check_finite<R: Real>(op: &'static str, t: &Tensor<R>) -> TResult<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}

fn check_indices(op: &'static str, idx: &[usize], bound: usize) -> TResult<()> {
    match idx.iter().find(|&&i| i >= bound) {
        Some(&bad) => Err(TensorError::Index {
            op,
            index: bad,
            bound,
        }),
        None => Ok(()),
    }
}

impl<R: Real> Tape<R> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn leaf(&self, value: Tensor<R>, requires_grad: bool) -> Var<'_, R> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// A leaf that receives gradients.
    pub fn param(&self, value: Tensor<R>) -> Var<'_, R> {
        self.leaf(value, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&self, value: Tensor<R>) -> Var<'_, R> {
        self.leaf(value, false)
    }

    fn record(&self, name: &'static str, value: Tensor<R>, op: Op<R>) -> TResult<Var<'_, R>> {
        check_finite(name, &value)?;
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = op.inputs().iter().any(|&i| nodes[i].requires_grad);
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var {
            tape: self,
            id: nodes.len() - 1,
        })
    }

    fn with_value<T>(&self, id: usize, f: impl FnOnce(&Tensor<R>) -> T) -> T {
        f(&self.nodes.borrow()[id].value)
    }

    fn own<'t>(&'t self, v: Var<'t, R>) -> usize {
        assert!(
            std::ptr::eq(self, v.tape),
            "variable belongs to a different tape"
        );
        v.id
    }

    /// Per-edge Euclidean distance `‖P[src] − P[dst]‖₂` as an `|E|×1` column.
    pub fn row_pair_distance<'t>(
        &'t self,
        points: Var<'t, R>,
        src: impl Into<Arc<[usize]>>,
        dst: impl Into<Arc<[usize]>>,
    ) -> TResult<Var<'t, R>> {
        let p = self.own(points);
        let (src, dst) = (src.into(), dst.into());
        if src.len() != dst.len() {
            return Err(TensorError::Shape {
                op: "row_pair_distance",
                left: (src.len(), 1),
                right: (dst.len(), 1),
            });
        }
        let value = self.with_value(p, |pt| -> TResult<Tensor<R>> {
            check_indices("row_pair_distance", &src, pt.rows())?;
            check_indices("row_pair_distance", &dst, pt.rows())?;
            let out = src
                .iter()
                .zip(dst.iter())
                .map(|(&i, &j)| {
                    pt.row(i)
                        .iter()
                        .zip(pt.row(j))
                        .map(|(&a, &b)| (a - b) * (a - b))
                        .sum::<R>()
                        .sqrt()
                })
                .collect::<Vec<_>>();
            Ok(Tensor::column(&out))
        })?;
        self.record(
            "row_pair_distance",
            value,
            Op::RowPairDistance {
                points: p,
                src,
                dst,
            },
        )
    }

    /// Exp-normalizes `values` within each segment.
    pub fn segment_softmax<'t>(
        &'t self,
        values: Var<'t, R>,
        segments: &Segments,
    ) -> TResult<Var<'t, R>> {
        let x = self.own(values);
        let value = self.with_value(x, |v| -> TResult<Tensor<R>> {
            if v.cols() != 1 || v.rows() != segments.len() {
                return Err(TensorError::Shape {
                    op: "segment_softmax",
                    left: v.shape(),
                    right: (segments.len(), 1),
                });
            }
            let ids = segments.ids();
            let mut max = vec![R::neg_infinity(); segments.count()];
            for (e, &s) in ids.iter().enumerate() {
                max[s] = max[s].max(v.data()[e]);
            }
            let mut exps: Vec<R> = ids
                .iter()
                .enumerate()
                .map(|(e, &s)| (v.data()[e] - max[s]).exp())
                .collect();
            let mut denom = vec![R::zero(); segments.count()];
            for (e, &s) in ids.iter().enumerate() {
                denom[s] = denom[s] + exps[e];
            }
            for (e, &s) in ids.iter().enumerate() {
                exps[e] = exps[e] / denom[s];
            }
            Ok(Tensor::column(&exps))
        })?;
        self.record(
            "segment_softmax",
            value,
            Op::SegmentSoftmax(x, segments.clone()),
        )
    }

    /// `out[s] = Σ_{e: seg(e)=s} w_e · msg_e`, an `n_segments × d` matrix.
    pub fn segment_weighted_sum<'t>(
        &'t self,
        weights: Var<'t, R>,
        messages: Var<'t, R>,
        segments: &Segments,
    ) -> TResult<Var<'t, R>> {
        self.weighted_sum(weights, messages, segments, None)
    }

    /// Fused `segment_weighted_sum(weights, values.gather_rows(rows))` that
    /// never materialises the `|E| × d` message matrix.
    pub fn segment_gather_sum<'t>(
        &'t self,
        weights: Var<'t, R>,
        values: Var<'t, R>,
        rows: impl Into<Arc<[usize]>>,
        segments: &Segments,
    ) -> TResult<Var<'t, R>> {
        self.weighted_sum(weights, values, segments, Some(rows.into()))
    }

    fn weighted_sum<'t>(
        &'t self,
        weights: Var<'t, R>,
        values: Var<'t, R>,
        segments: &Segments,
        gather: Option<Arc<[usize]>>,
    ) -> TResult<Var<'t, R>> {
        let (w, m) = (self.own(weights), self.own(values));
        let value = {
            let nodes = self.nodes.borrow();
            let (wv, mv) = (&nodes[w].value, &nodes[m].value);
            let msg_rows = gather.as_ref().map_or(mv.rows(), |g| g.len());
            if wv.cols() != 1 || wv.rows() != segments.len() || msg_rows != segments.len() {
                return Err(TensorError::Shape {
                    op: "segment_weighted_sum",
                    left: wv.shape(),
                    right: (msg_rows, mv.cols()),
                });
            }
            if let Some(g) = &gather {
                check_indices("segment_gather_sum", g, mv.rows())?;
            }
            let mut out = Tensor::zeros(segments.count(), mv.cols());
            for (e, &s) in segments.ids().iter().enumerate() {
                let we = wv.data()[e];
                let src = gather.as_ref().map_or(e, |g| g[e]);
                for (o, &x) in out.row_mut(s).iter_mut().zip(mv.row(src)) {
                    *o = *o + we * x;
                }
            }
            out
        };
        self.record(
            "segment_weighted_sum",
            value,
            Op::SegmentWeightedSum {
                weights: w,
                values: m,
                segments: segments.clone(),
                gather,
            },
        )
    }

    /// Horizontal concatenation of equally tall matrices.
    pub fn concat_cols<'t>(&'t self, parts: &[Var<'t, R>]) -> TResult<Var<'t, R>> {
        let ids: Vec<usize> = parts.iter().map(|&v| self.own(v)).collect();
        let value = {
            let nodes = self.nodes.borrow();
            let rows = ids.first().map_or(0, |&i| nodes[i].value.rows());
            let cols: usize = ids.iter().map(|&i| nodes[i].value.cols()).sum();
            let mut out = Tensor::zeros(rows, cols);
            let mut offset = 0;
            for &i in &ids {
                let part = &nodes[i].value;
                if part.rows() != rows {
                    return Err(TensorError::Shape {
                        op: "concat_cols",
                        left: (rows, offset),
                        right: part.shape(),
                    });
                }
                for r in 0..rows {
                    out.row_mut(r)[offset..offset + part.cols()].copy_from_slice(part.row(r));
                }
                offset += part.cols();
            }
            out
        };
        self.record("concat_cols", value, Op::ConcatCols(ids))
    }

    /// Computes `d loss / d leaf` for every leaf that requires gradients.
    pub fn backward(&self, loss: Var<'_, R>) -> TResult<Gradients<R>> {
        let root = self.own(loss);
        let nodes = self.nodes.borrow();
        if nodes[root].value.shape() != (1, 1) {
            return Err(TensorError::NotScalar {
                shape: nodes[root].value.shape(),
            });
        }
        let mut grads: Vec<Option<Tensor<R>>> = vec![None; nodes.len()];
        if !nodes[root].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[root] = Some(Tensor::scalar(R::one()));
        for id in (0..=root).rev() {
            let node = &nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            for (input, contribution) in local_gradients(&nodes, node, &g)? {
                if !nodes[input].requires_grad {
                    continue;
                }
                match &mut grads[input] {
                    Some(acc) => acc.add_assign(&contribution),
                    slot @ None => *slot = Some(contribution),
                }
            }
        }
        // Interior nodes had their gradients consumed; only leaves remain.
        Ok(Gradients { grads })
    }
}

fn broadcast_pair<R: Real>(
    op: &'static str,
    a: &Tensor<R>,
    b: &Tensor<R>,
    f: impl Fn(R, R) -> R,
) -> TResult<Tensor<R>> {
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(a.rows(), a.cols(), data)
    } else if b.shape() == (1, 1) {
        let y = b.data()[0];
        Ok(a.map(|x| f(x, y)))
    } else if a.shape() == (1, 1) {
        let x = a.data()[0];
        Ok(b.map(|y| f(x, y)))
    } else {
        Err(TensorError::Shape {
            op,
            left: a.shape(),
            right: b.shape(),
        })
    }
}

/// Reduces a gradient computed at the broadcast shape back to `shape`.
fn unbroadcast<R: Real>(g: Tensor<R>, shape: (usize, usize)) -> Tensor<R> {
    if g.shape() == shape {
        g
    } else {
        Tensor::scalar(g.sum())
    }
}

fn local_gradients<R: Real>(
    nodes: &[Node<R>],
    node: &Node<R>,
    g: &Tensor<R>,
) -> TResult<Vec<(usize, Tensor<R>)>> {
    let val = |i: usize| &nodes[i].value;
    Ok(match &node.op {
        Op::Leaf => vec![],
        Op::MatMul(a, b) => vec![
            (*a, g.matmul_nt(val(*b))?),
            (*b, val(*a).matmul_tn(g)?),
        ],
        Op::Binary(kind, a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let (ga, gb) = match kind {
                Binary::Add => (g.clone(), g.clone()),
                Binary::Sub => (g.clone(), g.map(|x| -x)),
                Binary::Mul => (
                    broadcast_pair("mul", g, bv, |x, y| x * y)?,
                    broadcast_pair("mul", g, av, |x, y| x * y)?,
                ),
            };
            vec![
                (*a, unbroadcast(ga, av.shape())),
                (*b, unbroadcast(gb, bv.shape())),
            ]
        }
        Op::Unary(kind, x) => {
            let xv = val(*x);
            let data = xv
                .data()
                .iter()
                .zip(node.value.data())
                .zip(g.data())
                .map(|((&xi, &yi), &gi)| gi * kind.derivative(xi, yi))
                .collect();
            vec![(*x, Tensor::from_vec(xv.rows(), xv.cols(), data)?)]
        }
        Op::AddRow(x, b) => {
            let mut gb = Tensor::zeros(1, g.cols());
            for r in 0..g.rows() {
                for (o, &v) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                    *o = *o + v;
                }
            }
            vec![(*x, g.clone()), (*b, gb)]
        }
        Op::MulCol(x, c) => {
            let (xv, cv) = (val(*x), val(*c));
            let gx = Tensor::from_fn(g.rows(), g.cols(), |i, j| g.get(i, j) * cv.get(i, 0));
            let gc = Tensor::from_fn(g.rows(), 1, |i, _| {
                g.row(i).iter().zip(xv.row(i)).map(|(&a, &b)| a * b).sum()
            });
            vec![(*x, gx), (*c, gc)]
        }
        Op::RowPairDistance { points, src, dst } => {
            let pv = val(*points);
            let mut gp = Tensor::zeros(pv.rows(), pv.cols());
            for (e, (&i, &j)) in src.iter().zip(dst.iter()).enumerate() {
                let dist = node.value.data()[e];
                if dist == R::zero() {
                    continue;
                }
                let coef = g.data()[e] / dist;
                let c = pv.cols();
                let (pi, pj) = (pv.row(i), pv.row(j));
                let out = gp.data_mut();
                for k in 0..c {
                    let diff = coef * (pi[k] - pj[k]);
                    out[i * c + k] = out[i * c + k] + diff;
                    out[j * c + k] = out[j * c + k] - diff;
                }
            }
            vec![(*points, gp)]
        }
        Op::GatherRows(x, idx) => {
            let xv = val(*x);
            let mut gx = Tensor::zeros(xv.rows(), xv.cols());
            for (e, &i) in idx.iter().enumerate() {
                for (o, &v) in gx.row_mut(i).iter_mut().zip(g.row(e)) {
                    *o = *o + v;
                }
            }
            vec![(*x, gx)]
        }
        Op::SegmentSoftmax(x, segments) => {
            let y = node.value.data();
            let mut dot = vec![R::zero(); segments.count()];
            for (e, &s) in segments.ids().iter().enumerate() {
                dot[s] = dot[s] + g.data()[e] * y[e];
            }
            let data: Vec<R> = segments
                .ids()
                .iter()
                .enumerate()
                .map(|(e, &s)| y[e] * (g.data()[e] - dot[s]))
                .collect();
            vec![(*x, Tensor::column(&data))]
        }
        Op::SegmentWeightedSum {
            weights: w,
            values: m,
            segments,
            gather,
        } => {
            let (wv, mv) = (val(*w), val(*m));
            let mut gw = Tensor::zeros(wv.rows(), 1);
            let mut gm = Tensor::zeros(mv.rows(), mv.cols());
            for (e, &s) in segments.ids().iter().enumerate() {
                let gs = g.row(s);
                let src = gather.as_ref().map_or(e, |idx| idx[e]);
                gw.data_mut()[e] = gs.iter().zip(mv.row(src)).map(|(&a, &b)| a * b).sum();
                let we = wv.data()[e];
                for (o, &v) in gm.row_mut(src).iter_mut().zip(gs) {
                    *o = *o + we * v;
                }
            }
            vec![(*w, gw), (*m, gm)]
        }
        Op::ConcatCols(parts) => {
            let mut offset = 0;
            let mut out = Vec::with_capacity(parts.len());
            for &p in parts {
                let cols = val(p).cols();
                let gp = Tensor::from_fn(g.rows(), cols, |i, j| g.get(i, offset + j));
                out.push((p, gp));
                offset += cols;
            }
            out
        }
        Op::SliceCols { x, start } => {
            let xv = val(*x);
            let mut gx = Tensor::zeros(xv.rows(), xv.cols());
            for i in 0..g.rows() {
                gx.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
            }
            vec![(*x, gx)]
        }
        Op::RowSoftmax(x) => {
            let y = &node.value;
            let gx = Tensor::from_fn(y.rows(), y.cols(), |i, j| {
                let dot: R = g.row(i).iter().zip(y.row(i)).map(|(&a, &b)| a * b).sum();
                y.get(i, j) * (g.get(i, j) - dot)
            });
            vec![(*x, gx)]
        }
        Op::Mask(x, mask) => {
            let data = g.data().iter().zip(mask.iter()).map(|(&a, &m)| a * m).collect();
            vec![(*x, Tensor::from_vec(g.rows(), g.cols(), data)?)]
        }
        Op::CrossEntropy {
            logits,
            rows,
            labels,
        } => {
            let lv = val(*logits);
            let scale = g.data()[0] / R::from_usize(rows.len()).unwrap_or_else(R::one);
            let mut gl = Tensor::zeros(lv.rows(), lv.cols());
            for (&r, &label) in rows.iter().zip(labels.iter()) {
                let probs = softmax_row(lv.row(r));
                for (c, p) in probs.into_iter().enumerate() {
                    let target = if c == label { R::one() } else { R::zero() };
                    let cur = gl.get(r, c);
                    gl.set(r, c, cur + scale * (p - target));
                }
            }
            vec![(*logits, gl)]
        }
        Op::Sum(x) => {
            let (r, c) = val(*x).shape();
            vec![(*x, Tensor::full(r, c, g.data()[0]))]
        }
        Op::Mean(x) => {
            let (r, c) = val(*x).shape();
            let n = R::from_usize((r * c).max(1)).unwrap_or_else(R::one);
            vec![(*x, Tensor::full(r, c, g.data()[0] / n))]
        }
    })
}

pub(crate) fn softmax_row<R: Real>(row: &[R]) -> Vec<R> {
    let max = row.iter().copied().fold(R::neg_infinity(), R::max);
    let exps: Vec<R> = row.iter().map(|&v| (v - max).exp()).collect();
    let total: R = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl<'t, R: Real> Var<'t, R> {
    pub fn tape(&self) -> &'t Tape<R> {
        self.tape
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.with_value(self.id, Tensor::shape)
    }

    /// Copy of the forward value.
    pub fn value(&self) -> Tensor<R> {
        self.tape.with_value(self.id, Clone::clone)
    }

    pub fn item(&self) -> TResult<R> {
        self.tape.with_value(self.id, Tensor::item)
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    fn binary(self, kind: Binary, name: &'static str, other: Self) -> TResult<Self> {
        let (a, b) = (self.id, self.tape.own(other));
        let value = {
            let nodes = self.tape.nodes.borrow();
            let f = match kind {
                Binary::Add => |x: R, y: R| x + y,
                Binary::Sub => |x: R, y: R| x - y,
                Binary::Mul => |x: R, y: R| x * y,
            };
            broadcast_pair(name, &nodes[a].value, &nodes[b].value, f)?
        };
        self.tape.record(name, value, Op::Binary(kind, a, b))
    }

    fn unary(self, kind: Unary<R>) -> TResult<Self> {
        let value = self.tape.with_value(self.id, |x| x.map(|v| kind.apply(v)));
        self.tape.record(kind.name(), value, Op::Unary(kind, self.id))
    }

    pub fn matmul(self, other: Self) -> TResult<Self> {
        let b = self.tape.own(other);
        let value = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.id].value.matmul(&nodes[b].value)?
        };
        self.tape.record("matmul", value, Op::MatMul(self.id, b))
    }

    /// Elementwise sum; a 1x1 operand broadcasts.
    pub fn add(self, other: Self) -> TResult<Self> {
        self.binary(Binary::Add, "add", other)
    }

    pub fn sub(self, other: Self) -> TResult<Self> {
        self.binary(Binary::Sub, "sub", other)
    }

    /// Elementwise product; a 1x1 operand broadcasts.
    pub fn mul(self, other: Self) -> TResult<Self> {
        self.binary(Binary::Mul, "mul", other)
    }

    pub fn scale(self, factor: R) -> TResult<Self> {
        self.unary(Unary::Affine(factor, R::zero()))
    }

    /// `scale·x + shift`, elementwise.
    pub fn affine(self, scale: R, shift: R) -> TResult<Self> {
        self.unary(Unary::Affine(scale, shift))
    }

    pub fn relu(self) -> TResult<Self> {
        self.unary(Unary::Relu)
    }

    pub fn sigmoid(self) -> TResult<Self> {
        self.unary(Unary::Sigmoid)
    }

    pub fn softplus(self) -> TResult<Self> {
        self.unary(Unary::Softplus)
    }

    pub fn square(self) -> TResult<Self> {
        self.mul(self)
    }

    /// Adds a `1×d` bias row to every row.
    pub fn add_row(self, bias: Self) -> TResult<Self> {
        let b = self.tape.own(bias);
        let value = {
            let nodes = self.tape.nodes.borrow();
            let (x, bv) = (&nodes[self.id].value, &nodes[b].value);
            if bv.rows() != 1 || bv.cols() != x.cols() {
                return Err(TensorError::Shape {
                    op: "add_row",
                    left: x.shape(),
                    right: bv.shape(),
                });
            }
            Tensor::from_fn(x.rows(), x.cols(), |i, j| x.get(i, j) + bv.get(0, j))
        };
        self.tape.record("add_row", value, Op::AddRow(self.id, b))
    }

    /// Scales row `i` by `col[i]`.
    pub fn mul_col(self, col: Self) -> TResult<Self> {
        let c = self.tape.own(col);
        let value = {
            let nodes = self.tape.nodes.borrow();
            let (x, cv) = (&nodes[self.id].value, &nodes[c].value);
            if cv.cols() != 1 || cv.rows() != x.rows() {
                return Err(TensorError::Shape {
                    op: "mul_col",
                    left: x.shape(),
                    right: cv.shape(),
                });
            }
            Tensor::from_fn(x.rows(), x.cols(), |i, j| x.get(i, j) * cv.get(i, 0))
        };
        self.tape.record("mul_col", value, Op::MulCol(self.id, c))
    }

    /// Row `e` of the output is row `idx[e]` of the input.
    pub fn gather_rows(self, idx: impl Into<Arc<[usize]>>) -> TResult<Self> {
        let idx = idx.into();
        let value = self.tape.with_value(self.id, |x| -> TResult<Tensor<R>> {
            check_indices("gather_rows", &idx, x.rows())?;
            let mut data = Vec::with_capacity(idx.len() * x.cols());
            for &i in idx.iter() {
                data.extend_from_slice(x.row(i));
            }
            Tensor::from_vec(idx.len(), x.cols(), data)
        })?;
        self.tape
            .record("gather_rows", value, Op::GatherRows(self.id, idx))
    }

    pub fn slice_cols(self, start: usize, len: usize) -> TResult<Self> {
        let value = self.tape.with_value(self.id, |x| -> TResult<Tensor<R>> {
            if start + len > x.cols() {
                return Err(TensorError::Index {
                    op: "slice_cols",
                    index: start + len,
                    bound: x.cols(),
                });
            }
            Ok(Tensor::from_fn(x.rows(), len, |i, j| x.get(i, start + j)))
        })?;
        self.tape.record(
            "slice_cols",
            value,
            Op::SliceCols {
                x: self.id,
                start,
            },
        )
    }

    pub fn row_softmax(self) -> TResult<Self> {
        let value = self.tape.with_value(self.id, |x| {
            let mut out = Tensor::zeros(x.rows(), x.cols());
            for i in 0..x.rows() {
                out.row_mut(i).copy_from_slice(&softmax_row(x.row(i)));
            }
            out
        });
        self.tape.record("row_softmax", value, Op::RowSoftmax(self.id))
    }

    /// Multiplies by a fixed elementwise mask.
    pub fn mask(self, mask: impl Into<Arc<[R]>>) -> TResult<Self> {
        let mask = mask.into();
        let value = self.tape.with_value(self.id, |x| -> TResult<Tensor<R>> {
            if mask.len() != x.len() {
                return Err(TensorError::Shape {
                    op: "mask",
                    left: x.shape(),
                    right: (mask.len(), 1),
                });
            }
            let data = x.data().iter().zip(mask.iter()).map(|(&a, &m)| a * m).collect();
            Tensor::from_vec(x.rows(), x.cols(), data)
        })?;
        self.tape.record("mask", value, Op::Mask(self.id, mask))
    }

    /// Inverted dropout: keeps each entry with probability `1 − rate` and
    /// rescales kept entries by `1/(1 − rate)`. Identity when `rate == 0`.
    pub fn dropout(self, rate: f64, rng: &mut impl Rng) -> TResult<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::Contract(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        if rate == 0.0 {
            return Ok(self);
        }
        let keep = R::from_f64_lossy(1.0 / (1.0 - rate));
        let len = self.tape.with_value(self.id, Tensor::len);
        let mask: Vec<R> = (0..len)
            .map(|_| {
                if rng.random::<f64>() < rate {
                    R::zero()
                } else {
                    keep
                }
            })
            .collect();
        self.mask(mask)
    }

    /// Mean negative log-likelihood of `labels` over the selected `rows`.
    pub fn cross_entropy(
        self,
        rows: impl Into<Arc<[usize]>>,
        labels: impl Into<Arc<[usize]>>,
    ) -> TResult<Self> {
        let (rows, labels) = (rows.into(), labels.into());
        if rows.len() != labels.len() || rows.is_empty() {
            return Err(TensorError::Contract(format!(
                "cross_entropy needs equal, non-empty rows/labels ({} vs {})",
                rows.len(),
                labels.len()
            )));
        }
        let value = self.tape.with_value(self.id, |x| -> TResult<Tensor<R>> {
            check_indices("cross_entropy", &rows, x.rows())?;
            check_indices("cross_entropy", &labels, x.cols())?;
            let mut total = R::zero();
            for (&r, &label) in rows.iter().zip(labels.iter()) {
                let row = x.row(r);
                let max = row.iter().copied().fold(R::neg_infinity(), R::max);
                let lse = row.iter().map(|&v| (v - max).exp()).sum::<R>().ln() + max;
                total = total + lse - row[label];
            }
            Ok(Tensor::scalar(
                total / R::from_usize(rows.len()).unwrap_or_else(R::one),
            ))
        })?;
        self.tape.record(
            "cross_entropy",
            value,
            Op::CrossEntropy {
                logits: self.id,
                rows,
                labels,
            },
        )
    }

    pub fn sum(self) -> TResult<Self> {
        let value = self.tape.with_value(self.id, |x| Tensor::scalar(x.sum()));
        self.tape.record("sum", value, Op::Sum(self.id))
    }

    /// Mean of all entries; 0 for an empty tensor.
    pub fn mean(self) -> TResult<Self> {
        let value = self.tape.with_value(self.id, |x| {
            if x.is_empty() {
                Tensor::scalar(R::zero())
            } else {
                Tensor::scalar(x.sum() / R::from_usize(x.len()).unwrap_or_else(R::one))
            }
        });
        self.tape.record("mean", value, Op::Mean(self.id))
    }
}
