use std::collections::HashSet;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Segments;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tensor::{Real, Tensor};

/// Which endpoint of a directed edge `(i, j)` owns it during aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Node `i` aggregates messages from `j`; softmax runs over `j ∈ N(i)`.
    #[default]
    PerSource,
    /// Node `j` aggregates messages from `i`.
    PerDestination,
}

/// Index arrays for one edge set, shared by every layer of a forward pass.
#[derive(Debug, Clone)]
pub struct EdgeIndex {
    src: Arc<[usize]>,
    dst: Arc<[usize]>,
    /// Aggregating node of each edge.
    segments: Segments,
    /// Message-sending node of each edge.
    neighbor: Arc<[usize]>,
    self_loop: Arc<[bool]>,
    /// `1/√(d_i d_j)` with degrees counted inside this edge set.
    sym_norm: Arc<[f64]>,
}

impl EdgeIndex {
    pub fn new(n: usize, edges: &[(usize, usize)], side: Normalization) -> Result<Self> {
        let src: Arc<[usize]> = edges.iter().map(|e| e.0).collect();
        let dst: Arc<[usize]> = edges.iter().map(|e| e.1).collect();
        let (seg, neighbor) = match side {
            Normalization::PerSource => (src.clone(), dst.clone()),
            Normalization::PerDestination => (dst.clone(), src.clone()),
        };
        let segments = Segments::new(seg, n)?;
        if let Some(&bad) = neighbor.iter().find(|&&j| j >= n) {
            return Err(Error::contract(format!("edge endpoint {bad} >= n = {n}")));
        }
        let mut degree = vec![0usize; n];
        for &s in segments.ids() {
            degree[s] += 1;
        }
        let sym_norm = segments
            .ids()
            .iter()
            .zip(neighbor.iter())
            .map(|(&i, &j)| 1.0 / ((degree[i] * degree[j].max(1)) as f64).sqrt())
            .collect();
        let self_loop = edges.iter().map(|&(i, j)| i == j).collect();
        Ok(Self {
            src,
            dst,
            segments,
            neighbor,
            self_loop,
            sym_norm,
        })
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn src(&self) -> &Arc<[usize]> {
        &self.src
    }

    pub fn dst(&self) -> &Arc<[usize]> {
        &self.dst
    }

    pub fn segments(&self) -> &Segments {
        &self.segments
    }

    pub fn neighbor(&self) -> &Arc<[usize]> {
        &self.neighbor
    }

    pub fn is_self_loop(&self, e: usize) -> bool {
        self.self_loop[e]
    }

    pub fn sym_norm(&self) -> &[f64] {
        &self.sym_norm
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.src.iter().copied().zip(self.dst.iter().copied())
    }
}

/// A graph prepared for model evaluation at precision `R`: self-loops added,
/// features cast, and the full edge index built once.
#[derive(Debug, Clone)]
pub struct GraphContext<R> {
    graph: Graph,
    features: Tensor<R>,
    labels: Arc<[usize]>,
    side: Normalization,
    edges: EdgeIndex,
}

impl<R: Real> GraphContext<R> {
    pub fn new(graph: &Graph, side: Normalization) -> Result<Self> {
        let graph = graph.with_self_loops();
        let edges = EdgeIndex::new(graph.num_nodes(), graph.edges(), side)?;
        Ok(Self {
            features: graph.features().cast(),
            labels: graph.labels().into(),
            graph,
            side,
            edges,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn features(&self) -> &Tensor<R> {
        &self.features
    }

    pub fn labels(&self) -> &Arc<[usize]> {
        &self.labels
    }

    pub fn edges(&self) -> &EdgeIndex {
        &self.edges
    }

    pub fn normalization(&self) -> Normalization {
        self.side
    }

    /// Edge index keeping each undirected pair with probability `1 − rate`;
    /// both directions are kept or dropped together and self-loops always stay.
    pub fn sample_edges(&self, rate: f64, rng: &mut impl Rng) -> Result<EdgeIndex> {
        if rate == 0.0 {
            return Ok(self.edges.clone());
        }
        let dropped: HashSet<(usize, usize)> = self
            .graph
            .undirected_edges()
            .filter(|_| rng.random::<f64>() < rate)
            .collect();
        let kept: Vec<_> = self
            .graph
            .edges()
            .iter()
            .copied()
            .filter(|&(i, j)| !dropped.contains(&(i.min(j), i.max(j))))
            .collect();
        EdgeIndex::new(self.num_nodes(), &kept, self.side)
    }
}
