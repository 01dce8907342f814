//! Network assembly: input MLP, stacked graph layers with identity residuals,
//! and a linear classifier head.
//!
//! ```text
//! X ─ Linear ─ ReLU ─ dropout ─┬─ layer ─ ReLU ─ dropout ─(+)─ … ─ Linear ─ logits
//!                              └──────────────────────────┘
//! ```
//!
//! The MLP kind has no graph layers.

pub mod context;
pub mod csna;

use rand::Rng;
use rand::distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{Real, Tensor};

pub use context::{EdgeIndex, GraphContext, Normalization};
pub use csna::{
    calibration_loss, concordance, csna_layer, edge_costs, CsnaLayerOutput, CsnaLayerParams,
    EdgeRouting, Variant,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mlp,
    Gcn,
    Csna,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Gcn => "gcn",
            ModelKind::Csna => "csna",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(ModelKind::Mlp),
            "gcn" => Ok(ModelKind::Gcn),
            "csna" => Ok(ModelKind::Csna),
            other => Err(Error::contract(format!("unknown model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub variant: Variant,
    pub in_dim: usize,
    pub hidden: usize,
    pub num_classes: usize,
    /// Graph layers after the input MLP.
    pub layers: usize,
    pub dropout: f64,
    pub tau: f64,
    /// Per-epoch probability of dropping an undirected edge while training.
    pub edge_sampling: f64,
    pub normalization: Normalization,
    pub lambda_cal: f64,
}

impl ModelConfig {
    pub const DEFAULT_LAYERS: usize = 2;
    pub const DEFAULT_DROPOUT: f64 = 0.5;
    pub const DEFAULT_LAMBDA_CAL: f64 = 0.1;

    pub fn new(kind: ModelKind, in_dim: usize, hidden: usize, num_classes: usize) -> Self {
        Self {
            kind,
            variant: Variant::Lite,
            in_dim,
            hidden,
            num_classes,
            layers: Self::DEFAULT_LAYERS,
            dropout: Self::DEFAULT_DROPOUT,
            tau: 1.0,
            edge_sampling: 0.0,
            normalization: Normalization::PerSource,
            lambda_cal: Self::DEFAULT_LAMBDA_CAL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.hidden == 0 || self.num_classes == 0 {
            return Err(Error::contract("model dimensions must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::contract(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(0.0..1.0).contains(&self.edge_sampling) {
            return Err(Error::contract(format!(
                "edge sampling rate {} outside [0, 1)",
                self.edge_sampling
            )));
        }
        if self.lambda_cal < 0.0 {
            return Err(Error::contract("calibration weight must be non-negative"));
        }
        csna::check_tau(self.tau)
    }

    fn graph_layers(&self) -> usize {
        match self.kind {
            ModelKind::Mlp => 0,
            _ => self.layers,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    /// `[in × out]`
    pub weight: T,
    /// `[1 × out]`
    pub bias: T,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams<T> {
    Csna(CsnaLayerParams<T>),
    /// `H' = Ã H W`, no bias.
    Gcn { weight: T },
}

/// All learnable tensors of a network. `T` is [`Tensor`] for stored
/// parameters and [`Var`] once registered on a tape.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub input: Linear<T>,
    pub layers: Vec<LayerParams<T>>,
    pub head: Linear<T>,
}

impl<T> ModelParams<T> {
    /// Parameters in a fixed order with stable names.
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = vec![
            ("input.weight".to_string(), &self.input.weight),
            ("input.bias".to_string(), &self.input.bias),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerParams::Csna(p) => {
                    for (name, t) in [
                        ("w_g", &p.w_g),
                        ("w_con", &p.w_con),
                        ("w_dis", &p.w_dis),
                        ("w_self", &p.w_self),
                        ("w_gate", &p.w_gate),
                        ("b_gate", &p.b_gate),
                    ] {
                        out.push((format!("layers.{l}.{name}"), t));
                    }
                    if let Some(a) = &p.a {
                        out.push((format!("layers.{l}.a"), a));
                    }
                }
                LayerParams::Gcn { weight } => out.push((format!("layers.{l}.weight"), weight)),
            }
        }
        out.push(("head.weight".to_string(), &self.head.weight));
        out.push(("head.bias".to_string(), &self.head.bias));
        out
    }

    /// Mutable references in the same order as [`ModelParams::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut T> {
        let mut out = vec![&mut self.input.weight, &mut self.input.bias];
        for layer in &mut self.layers {
            match layer {
                LayerParams::Csna(p) => {
                    out.extend([
                        &mut p.w_g,
                        &mut p.w_con,
                        &mut p.w_dis,
                        &mut p.w_self,
                        &mut p.w_gate,
                        &mut p.b_gate,
                    ]);
                    if let Some(a) = &mut p.a {
                        out.push(a);
                    }
                }
                LayerParams::Gcn { weight } => out.push(weight),
            }
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    /// Applies `f` to every tensor, visiting them in [`ModelParams::named`] order.
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> ModelParams<U> {
        let input = Linear {
            weight: f(&self.input.weight),
            bias: f(&self.input.bias),
        };
        let layers: Vec<_> = self
            .layers
            .iter()
            .map(|layer| match layer {
                LayerParams::Csna(p) => LayerParams::Csna(CsnaLayerParams {
                    w_g: f(&p.w_g),
                    w_con: f(&p.w_con),
                    w_dis: f(&p.w_dis),
                    w_self: f(&p.w_self),
                    w_gate: f(&p.w_gate),
                    b_gate: f(&p.b_gate),
                    a: p.a.as_ref().map(&mut f),
                }),
                LayerParams::Gcn { weight } => LayerParams::Gcn { weight: f(weight) },
            })
            .collect();
        let head = Linear {
            weight: f(&self.head.weight),
            bias: f(&self.head.bias),
        };
        ModelParams {
            input,
            layers,
            head,
        }
    }
}

impl<R: Real> ModelParams<Tensor<R>> {
    /// Fresh parameters. Weight matrices are Glorot-uniform, each drawn from
    /// its own `(seed, name)` substream, so models that share a component
    /// (input MLP, head) start from identical values for that component.
    /// Biases and the gate weights start at zero, the gate bias at `[0, 0, 1]`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (d, h, c) = (config.in_dim, config.hidden, config.num_classes);
        let glorot = |name: &str, rows: usize, cols: usize| {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("valid bound");
            let mut rng = rng::substream(seed, &format!("init/{name}"));
            Tensor::from_fn(rows, cols, |_, _| R::from_f64_lossy(dist.sample(&mut rng)))
        };
        let layers = (0..config.graph_layers())
            .map(|l| match config.kind {
                ModelKind::Csna => LayerParams::Csna(CsnaLayerParams {
                    w_g: glorot(&format!("layers.{l}.w_g"), h, h),
                    w_con: glorot(&format!("layers.{l}.w_con"), h, h),
                    w_dis: glorot(&format!("layers.{l}.w_dis"), h, h),
                    w_self: glorot(&format!("layers.{l}.w_self"), h, h),
                    w_gate: Tensor::zeros(3 * h, 3),
                    b_gate: Tensor::from_fn(1, 3, |_, k| R::from_f64_lossy(csna::GATE_BIAS_INIT[k])),
                    a: (config.variant == Variant::Extended)
                        .then(|| glorot(&format!("layers.{l}.a"), 2 * h, 1)),
                }),
                _ => LayerParams::Gcn {
                    weight: glorot(&format!("layers.{l}.weight"), h, h),
                },
            })
            .collect();
        Ok(Self {
            input: Linear {
                weight: glorot("input.weight", d, h),
                bias: Tensor::zeros(1, h),
            },
            layers,
            head: Linear {
                weight: glorot("head.weight", h, c),
                bias: Tensor::zeros(1, c),
            },
        })
    }

    /// Checks that the tensor layout matches `config`.
    pub fn check(&self, config: &ModelConfig) -> Result<()> {
        let expected = Self::zeros_like(config)?;
        let (have, want) = (self.named(), expected.named());
        if have.len() != want.len() {
            return Err(Error::contract(format!(
                "parameter count {} does not match config ({})",
                have.len(),
                want.len()
            )));
        }
        for ((name, t), (wname, w)) in have.iter().zip(&want) {
            if name != wname || t.shape() != w.shape() {
                return Err(Error::contract(format!(
                    "parameter {name} {:?} does not match config ({wname} {:?})",
                    t.shape(),
                    w.shape()
                )));
            }
        }
        Ok(())
    }

    /// Same layout as [`ModelParams::init`] with every entry zero.
    pub fn zeros_like(config: &ModelConfig) -> Result<Self> {
        Ok(Self::init(config, 0)?.map(|t| Tensor::zeros(t.rows(), t.cols())))
    }

    pub fn num_scalars(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    /// Registers every tensor as a gradient-tracking leaf.
    pub fn on_tape<'t>(&self, tape: &'t Tape<R>) -> ModelParams<Var<'t, R>> {
        self.map(|t| tape.param(t.clone()))
    }
}

/// `Ã H W` with the symmetric normalization stored in `edges`.
pub fn gcn_layer<'t, R: Real>(h: Var<'t, R>, edges: &EdgeIndex, weight: Var<'t, R>) -> Result<Var<'t, R>> {
    let tape = h.tape();
    let norm: Vec<R> = edges.sym_norm().iter().map(|&w| R::from_f64_lossy(w)).collect();
    let alpha = tape.constant(Tensor::column(&norm));
    Ok(tape.segment_gather_sum(alpha, h.matmul(weight)?, edges.neighbor().clone(), edges.segments())?)
}

/// Intermediate results of one graph layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerTrace<'t, R> {
    /// Routing and gates for CSNA layers.
    pub csna: Option<CsnaLayerOutput<'t, R>>,
}

#[derive(Debug)]
pub struct ForwardOutput<'t, R> {
    pub logits: Var<'t, R>,
    pub layers: Vec<LayerTrace<'t, R>>,
}

/// Runs the network. In training mode dropout is active and draws its masks
/// from `rng`; in evaluation mode `rng` is untouched.
pub fn forward<'t, R: Real>(
    config: &ModelConfig,
    params: &ModelParams<Var<'t, R>>,
    ctx: &GraphContext<R>,
    edges: &EdgeIndex,
    train: bool,
    rng: &mut impl Rng,
) -> Result<ForwardOutput<'t, R>> {
    let tape = params.input.weight.tape();
    if ctx.features().cols() != config.in_dim {
        return Err(Error::contract(format!(
            "graph has {} features, model expects {}",
            ctx.features().cols(),
            config.in_dim
        )));
    }
    if params.layers.len() != config.graph_layers() {
        return Err(Error::contract("parameters do not match the configured layer count"));
    }
    let rate = if train { config.dropout } else { 0.0 };
    let x = tape.constant(ctx.features().clone());
    let mut h = x
        .matmul(params.input.weight)?
        .add_row(params.input.bias)?
        .relu()?
        .dropout(rate, rng)?;
    let mut traces = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let (z, trace) = match (layer, config.kind) {
            (LayerParams::Csna(p), ModelKind::Csna) => {
                if p.variant() != config.variant {
                    return Err(Error::contract("layer parameters do not match the configured variant"));
                }
                let out = csna_layer(h, edges, p, config.tau)?;
                (out.output, LayerTrace { csna: Some(out) })
            }
            (LayerParams::Gcn { weight }, ModelKind::Gcn) => {
                (gcn_layer(h, edges, *weight)?, LayerTrace { csna: None })
            }
            _ => return Err(Error::contract("layer parameters do not match the model kind")),
        };
        h = z.relu()?.dropout(rate, rng)?.add(h)?;
        traces.push(trace);
    }
    let logits = h.matmul(params.head.weight)?.add_row(params.head.bias)?;
    Ok(ForwardOutput {
        logits,
        layers: traces,
    })
}

/// Argmax per row; ties go to the lower class index.
pub fn predict<R: Real>(logits: &Tensor<R>) -> Vec<usize> {
    (0..logits.rows())
        .map(|i| {
            let row = logits.row(i);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Fraction of `nodes` whose prediction matches the label; 0 for no nodes.
pub fn accuracy(predictions: &[usize], labels: &[usize], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let correct = nodes.iter().filter(|&&i| predictions[i] == labels[i]).count();
    correct as f64 / nodes.len() as f64
}

/// A network together with its configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<R> {
    pub config: ModelConfig,
    pub params: ModelParams<Tensor<R>>,
}

impl<R: Real> Model<R> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        Ok(Self {
            params: ModelParams::init(&config, seed)?,
            config,
        })
    }

    /// Evaluation-mode logits on the full edge set.
    pub fn logits(&self, ctx: &GraphContext<R>) -> Result<Tensor<R>> {
        let tape = Tape::new();
        let vars = self.params.on_tape(&tape);
        let mut unused = rng::substream(0, "eval");
        Ok(forward(&self.config, &vars, ctx, ctx.edges(), false, &mut unused)?
            .logits
            .value())
    }

    /// Evaluation-mode routing per CSNA layer: concordance scores and gates.
    pub fn routing(&self, ctx: &GraphContext<R>) -> Result<Vec<LayerRouting>> {
        let tape = Tape::new();
        let vars = self.params.on_tape(&tape);
        let mut unused = rng::substream(0, "eval");
        let out = forward(&self.config, &vars, ctx, ctx.edges(), false, &mut unused)?;
        let to_f64 = |t: Tensor<R>| -> Vec<f64> { t.data().iter().map(|v| v.to_f64_lossless()).collect() };
        Ok(out
            .layers
            .iter()
            .filter_map(|t| t.csna)
            .map(|o| LayerRouting {
                edges: ctx.edges().pairs().collect(),
                cost: to_f64(o.routing.cost.value()),
                concordance: to_f64(o.routing.concordance.value()),
                gates: o.gates.value().cast(),
            })
            .collect())
    }
}

/// Plain-value routing snapshot of one CSNA layer.
#[derive(Debug, Clone)]
pub struct LayerRouting {
    /// Directed edges `(i, j)` including self-loops.
    pub edges: Vec<(usize, usize)>,
    pub cost: Vec<f64>,
    pub concordance: Vec<f64>,
    /// `n × 3` in (con, dis, self) order.
    pub gates: Tensor<f64>,
}
