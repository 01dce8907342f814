//! Edge-routing diagnostics: how well concordance scores separate
//! same-class from cross-class edges, average gate weights, and score
//! histograms by edge type.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{GraphContext, Model, ModelKind};
use crate::tensor::{Real, Tensor};

/// Mann–Whitney AUC of `scores` with `positive[e]` marking the positive
/// class: the probability that a random positive outscores a random
/// negative, ties counting one half. `None` when either class is empty.
pub fn concordance_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positive.len(), "one label per score");
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Average 1-based ranks over tie groups.
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let avg = (start + 1 + end) as f64 / 2.0;
        rank_sum_pos += avg * order[start..end].iter().filter(|&&e| positive[e]).count() as f64;
        start = end;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Some((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Column means of an `n × 3` gate matrix, in (con, dis, self) order.
pub fn gate_summary(gates: &Tensor<f64>) -> [f64; 3] {
    assert_eq!(gates.cols(), 3, "gate matrix has three channels");
    let mut out = [0.0; 3];
    if gates.rows() == 0 {
        return out;
    }
    for i in 0..gates.rows() {
        for (o, &g) in out.iter_mut().zip(gates.row(i)) {
            *o += g;
        }
    }
    out.map(|s| s / gates.rows() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostHistogram {
    /// `bins + 1` boundaries evenly spaced over `[0, 1]`.
    pub edges: Vec<f64>,
    pub same: Vec<usize>,
    pub diff: Vec<usize>,
}

impl CostHistogram {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,same_count,diff_count\n");
        for (b, (s, d)) in self.same.iter().zip(&self.diff).enumerate() {
            out.push_str(&format!("{b},{s},{d}\n"));
        }
        out
    }
}

/// Bin index of `v` among `bins` equal-width bins over `[0, 1]`; the last
/// bin is closed and values outside the range are clamped.
pub fn bin_of(v: f64, bins: usize) -> usize {
    let v = v.clamp(0.0, 1.0);
    ((v * bins as f64) as usize).min(bins - 1)
}

/// Histograms of `scores` split by `same_class`.
pub fn cost_histogram(scores: &[f64], same_class: &[bool], bins: usize) -> Result<CostHistogram> {
    if bins < 2 {
        return Err(Error::contract(format!("need at least 2 bins, got {bins}")));
    }
    if scores.len() != same_class.len() {
        return Err(Error::contract("one edge label per score"));
    }
    let mut same = vec![0; bins];
    let mut diff = vec![0; bins];
    for (&s, &is_same) in scores.iter().zip(same_class) {
        let b = bin_of(s, bins);
        if is_same {
            same[b] += 1;
        } else {
            diff[b] += 1;
        }
    }
    Ok(CostHistogram {
        edges: (0..=bins).map(|k| k as f64 / bins as f64).collect(),
        same,
        diff,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeSubset {
    /// Every non-self-loop edge.
    #[default]
    All,
    /// Edges with at least one endpoint in the given node set.
    Incident,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDiagnostics {
    pub layer: usize,
    pub auc: Option<f64>,
    pub gate_means: [f64; 3],
    pub same_edges: usize,
    pub diff_edges: usize,
    pub mean_concordance_same: Option<f64>,
    pub mean_concordance_diff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub model: ModelKind,
    pub edge_subset: EdgeSubset,
    /// Empty for models without routing.
    pub layers: Vec<LayerDiagnostics>,
    /// Concordance histogram of the first routed layer.
    pub histogram: Option<CostHistogram>,
}

impl DiagnosticsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

pub const DEFAULT_BINS: usize = 20;

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, k) = v.fold((0.0, 0usize), |(s, k), x| (s + x, k + 1));
    (k > 0).then(|| s / k as f64)
}

/// Runs the trained `model` in evaluation mode and summarises routing per
/// layer. With [`EdgeSubset::Incident`] only edges touching `nodes` count;
/// gate means always cover every node.
pub fn diagnose<R: Real>(
    model: &Model<R>,
    graph: &Graph,
    subset: EdgeSubset,
    nodes: &[usize],
    bins: usize,
) -> Result<DiagnosticsReport> {
    if graph.feature_dim() != model.config.in_dim {
        return Err(Error::contract(format!(
            "graph has {} features, checkpoint expects {}",
            graph.feature_dim(),
            model.config.in_dim
        )));
    }
    if graph.num_classes() > model.config.num_classes {
        return Err(Error::contract(format!(
            "graph has {} classes, checkpoint predicts {}",
            graph.num_classes(),
            model.config.num_classes
        )));
    }
    if model.config.kind != ModelKind::Csna {
        return Ok(DiagnosticsReport {
            model: model.config.kind,
            edge_subset: subset,
            layers: Vec::new(),
            histogram: None,
        });
    }
    let ctx = GraphContext::<R>::new(graph, model.config.normalization)?;
    let mut in_subset = vec![subset == EdgeSubset::All; graph.num_nodes()];
    if subset == EdgeSubset::Incident {
        for &i in nodes {
            if i >= graph.num_nodes() {
                return Err(Error::contract(format!("node {i} out of range")));
            }
            in_subset[i] = true;
        }
    }
    let labels = graph.labels();
    let mut layers = Vec::new();
    let mut histogram = None;
    for (l, routing) in model.routing(&ctx)?.into_iter().enumerate() {
        let (mut scores, mut same) = (Vec::new(), Vec::new());
        for (&(i, j), &s) in routing.edges.iter().zip(&routing.concordance) {
            if i != j && (in_subset[i] || in_subset[j]) {
                scores.push(s);
                same.push(labels[i] == labels[j]);
            }
        }
        if l == 0 {
            histogram = Some(cost_histogram(&scores, &same, bins)?);
        }
        let pick = |want: bool| mean(scores.iter().zip(&same).filter(|p| *p.1 == want).map(|p| *p.0));
        layers.push(LayerDiagnostics {
            layer: l,
            auc: concordance_auc(&scores, &same),
            gate_means: gate_summary(&routing.gates),
            same_edges: same.iter().filter(|&&s| s).count(),
            diff_edges: same.iter().filter(|&&s| !s).count(),
            mean_concordance_same: pick(true),
            mean_concordance_diff: pick(false),
        });
    }
    Ok(DiagnosticsReport {
        model: model.config.kind,
        edge_subset: subset,
        layers,
        histogram,
    })
}
