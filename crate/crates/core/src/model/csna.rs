//! Cost-sensitive neighborhood aggregation layer.
//!
//! Per directed edge the layer measures a cost (distance between endpoint
//! projections, optionally plus a learned asymmetric term), turns it into a
//! concordance score `s = σ(−cost/τ)`, and routes the neighbor message through
//! a concordant channel weighted by `softmax(s)` and a discordant channel
//! weighted by `softmax(1 − s)`, each softmax taken over the aggregating
//! node's edges. A per-node gate mixes the two channels with an ego
//! transform.

use serde::{Deserialize, Serialize};

use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::model::context::EdgeIndex;
use crate::tensor::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Cost is the projected distance only.
    #[default]
    Lite,
    /// Cost adds `softplus(aᵀ[P_i ‖ P_j])` to the distance.
    Extended,
}

/// Channel order of the gate columns.
pub const CHANNELS: [&str; 3] = ["con", "dis", "self"];

/// Initial gate bias, favouring the ego channel.
pub const GATE_BIAS_INIT: [f64; 3] = [0.0, 0.0, 1.0];

/// Learnable tensors of one layer. Weights are stored `[in × out]` and applied
/// as `H·W`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsnaLayerParams<T> {
    pub w_g: T,
    pub w_con: T,
    pub w_dis: T,
    pub w_self: T,
    /// `[3d' × 3]`
    pub w_gate: T,
    /// `[1 × 3]`
    pub b_gate: T,
    /// `[2d' × 1]`, extended variant only.
    pub a: Option<T>,
}

impl<T> CsnaLayerParams<T> {
    pub fn variant(&self) -> Variant {
        if self.a.is_some() {
            Variant::Extended
        } else {
            Variant::Lite
        }
    }
}

/// Per-edge routing quantities of one layer, aligned with the layer's
/// [`EdgeIndex`].
#[derive(Debug, Clone, Copy)]
pub struct EdgeRouting<'t, R> {
    /// `g` (lite) or `g + h` (extended), `|E|×1`.
    pub cost: Var<'t, R>,
    /// `s ∈ (0, 1)`.
    pub concordance: Var<'t, R>,
    /// `s̃`, sums to 1 over each aggregating node's edges.
    pub con_weights: Var<'t, R>,
    /// `d̃`, sums to 1 over each aggregating node's edges.
    pub dis_weights: Var<'t, R>,
}

#[derive(Debug, Clone, Copy)]
pub struct CsnaLayerOutput<'t, R> {
    pub output: Var<'t, R>,
    pub routing: EdgeRouting<'t, R>,
    /// `n × 3` convex weights in [`CHANNELS`] order.
    pub gates: Var<'t, R>,
    pub h_con: Var<'t, R>,
    pub h_dis: Var<'t, R>,
    pub h_self: Var<'t, R>,
}

pub fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::contract(format!("temperature must be positive, got {tau}")))
    }
}

/// Per-edge routing cost from node states `h`.
pub fn edge_costs<'t, R: Real>(
    h: Var<'t, R>,
    edges: &EdgeIndex,
    params: &CsnaLayerParams<Var<'t, R>>,
) -> Result<Var<'t, R>> {
    let tape = h.tape();
    let projected = h.matmul(params.w_g)?;
    let g = tape.row_pair_distance(projected, edges.src().clone(), edges.dst().clone())?;
    let Some(a) = params.a else {
        return Ok(g);
    };
    let pair = tape.concat_cols(&[
        projected.gather_rows(edges.src().clone())?,
        projected.gather_rows(edges.dst().clone())?,
    ])?;
    let learned = pair.matmul(a)?.softplus()?;
    Ok(g.add(learned)?)
}

/// `s = σ(−cost/τ)`.
pub fn concordance<'t, R: Real>(cost: Var<'t, R>, tau: f64) -> Result<Var<'t, R>> {
    check_tau(tau)?;
    Ok(cost.scale(R::from_f64_lossy(-1.0 / tau))?.sigmoid()?)
}

pub fn csna_layer<'t, R: Real>(
    h: Var<'t, R>,
    edges: &EdgeIndex,
    params: &CsnaLayerParams<Var<'t, R>>,
    tau: f64,
) -> Result<CsnaLayerOutput<'t, R>> {
    check_tau(tau)?;
    let tape = h.tape();
    let segments = edges.segments();

    let cost = edge_costs(h, edges, params)?;
    let s = concordance(cost, tau)?;
    let con_weights = tape.segment_softmax(s, segments)?;
    let dis_weights = tape.segment_softmax(s.affine(-R::one(), R::one())?, segments)?;

    let neighbor = edges.neighbor().clone();
    let h_con = tape.segment_gather_sum(con_weights, h.matmul(params.w_con)?, neighbor.clone(), segments)?;
    let h_dis = tape.segment_gather_sum(dis_weights, h.matmul(params.w_dis)?, neighbor, segments)?;
    let h_self = h.matmul(params.w_self)?;

    let gates = tape
        .concat_cols(&[h_con, h_dis, h_self])?
        .matmul(params.w_gate)?
        .add_row(params.b_gate)?
        .row_softmax()?;
    let output = h_con
        .mul_col(gates.slice_cols(0, 1)?)?
        .add(h_dis.mul_col(gates.slice_cols(1, 1)?)?)?
        .add(h_self.mul_col(gates.slice_cols(2, 1)?)?)?;

    Ok(CsnaLayerOutput {
        output,
        routing: EdgeRouting {
            cost,
            concordance: s,
            con_weights,
            dis_weights,
        },
        gates,
        h_con,
        h_dis,
        h_self,
    })
}

/// Mean squared hinge `ReLU(cost − 1[y_i ≠ y_j])²` over non-self-loop edges
/// whose endpoints are both training nodes; zero when there are none.
pub fn calibration_loss<'t, R: Real>(
    cost: Var<'t, R>,
    edges: &EdgeIndex,
    labels: &[usize],
    is_train: &[bool],
) -> Result<Var<'t, R>> {
    let tape = cost.tape();
    let mut selected = Vec::new();
    let mut disagree = Vec::new();
    for (e, (i, j)) in edges.pairs().enumerate() {
        if i != j && is_train[i] && is_train[j] {
            selected.push(e);
            disagree.push(if labels[i] != labels[j] { R::one() } else { R::zero() });
        }
    }
    if selected.is_empty() {
        return Ok(tape.constant(crate::tensor::Tensor::scalar(R::zero())));
    }
    let target = tape.constant(crate::tensor::Tensor::column(&disagree));
    Ok(cost
        .gather_rows(selected)?
        .sub(target)?
        .relu()?
        .square()?
        .mean()?)
}
