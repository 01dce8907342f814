//! Graph data model: features, labels and a directed edge list in which
//! every undirected edge appears in both directions.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    name: String,
    num_nodes: usize,
    /// Sorted, duplicate-free directed edges.
    edges: Vec<(usize, usize)>,
    features: Tensor<f64>,
    labels: Vec<usize>,
    num_classes: usize,
    has_self_loops: bool,
}

impl Graph {
    /// Builds a graph from undirected edges. Each pair `(i, j)` with `i != j`
    /// is stored as `(i, j)` and `(j, i)`; pairs may be given in either
    /// orientation but only once.
    pub fn from_undirected(
        name: impl Into<String>,
        features: Tensor<f64>,
        labels: Vec<usize>,
        num_classes: usize,
        undirected: &[(usize, usize)],
    ) -> Result<Self> {
        let mut edges = Vec::with_capacity(undirected.len() * 2);
        for &(i, j) in undirected {
            if i == j {
                return Err(Error::contract(format!("self-loop ({i},{i}) in undirected edge list")));
            }
            edges.push((i, j));
            edges.push((j, i));
        }
        Self::from_directed(name, features, labels, num_classes, edges)
    }

    /// Builds a graph from an already symmetric directed edge list.
    pub fn from_directed(
        name: impl Into<String>,
        features: Tensor<f64>,
        labels: Vec<usize>,
        num_classes: usize,
        mut edges: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let n = features.rows();
        if labels.len() != n {
            return Err(Error::contract(format!(
                "{} labels for {n} feature rows",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::contract(format!(
                "label {bad} outside 0..{num_classes}"
            )));
        }
        if !features.is_finite() {
            return Err(Error::contract("features contain non-finite values"));
        }
        if let Some(&(i, j)) = edges.iter().find(|&&(i, j)| i >= n || j >= n) {
            return Err(Error::contract(format!(
                "edge ({i},{j}) references a node >= {n}"
            )));
        }
        edges.sort_unstable();
        if let Some(w) = edges.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::contract(format!(
                "duplicate directed edge ({},{})",
                w[0].0, w[0].1
            )));
        }
        if let Some(&(i, j)) = edges
            .iter()
            .find(|&&(i, j)| i != j && edges.binary_search(&(j, i)).is_err())
        {
            return Err(Error::contract(format!(
                "edge ({i},{j}) has no reverse edge"
            )));
        }
        let loops = edges.iter().filter(|&&(i, j)| i == j).count();
        let has_self_loops = loops == n && n > 0;
        if loops != 0 && !has_self_loops {
            return Err(Error::contract(format!(
                "{loops} self-loops on {n} nodes; expected none or one per node"
            )));
        }
        Ok(Self {
            name: name.into(),
            num_nodes: n,
            edges,
            features,
            labels,
            num_classes,
            has_self_loops,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Tensor<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_self_loops(&self) -> bool {
        self.has_self_loops
    }

    /// Number of undirected non-self-loop edges.
    pub fn undirected_edge_count(&self) -> usize {
        self.edges.iter().filter(|&&(i, j)| i < j).count()
    }

    /// Undirected non-self-loop edges as `(i, j)` with `i < j`.
    pub fn undirected_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied().filter(|&(i, j)| i < j)
    }

    /// Degree including a self-loop when present.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &(i, _) in &self.edges {
            deg[i] += 1;
        }
        deg
    }

    /// Copy with exactly one `(i, i)` per node. Idempotent.
    pub fn with_self_loops(&self) -> Self {
        if self.has_self_loops {
            return self.clone();
        }
        let mut edges = self.edges.clone();
        edges.extend((0..self.num_nodes).map(|i| (i, i)));
        edges.sort_unstable();
        Self {
            edges,
            has_self_loops: self.num_nodes > 0,
            ..self.clone()
        }
    }

    /// Copy restricted to the directed edges for which `keep` returns true.
    /// The predicate must be symmetric for the result to stay undirected.
    pub fn filter_edges(&self, mut keep: impl FnMut(usize, usize) -> bool) -> Self {
        let edges: Vec<_> = self
            .edges
            .iter()
            .copied()
            .filter(|&(i, j)| keep(i, j))
            .collect();
        let loops = edges.iter().filter(|&&(i, j)| i == j).count();
        Self {
            edges,
            has_self_loops: loops == self.num_nodes && self.num_nodes > 0,
            ..self.clone()
        }
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes;
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::contract("not a permutation of the node set"));
        }
        let mut features = Tensor::zeros(n, self.feature_dim());
        let mut labels = vec![0; n];
        for i in 0..n {
            features.row_mut(perm[i]).copy_from_slice(self.features.row(i));
            labels[perm[i]] = self.labels[i];
        }
        let edges = self.edges.iter().map(|&(i, j)| (perm[i], perm[j])).collect();
        Self::from_directed(self.name.clone(), features, labels, self.num_classes, edges)
    }
}

/// Self-loop-free graph with `(i, i)` inserted once per node.
pub fn add_self_loops(g: &Graph) -> Graph {
    g.with_self_loops()
}

/// Fraction of undirected non-self-loop edges joining same-label nodes.
/// Returns 1.0 for a graph without such edges.
pub fn edge_homophily(g: &Graph) -> f64 {
    let (mut same, mut total) = (0usize, 0usize);
    for (i, j) in g.undirected_edges() {
        total += 1;
        if g.labels[i] == g.labels[j] {
            same += 1;
        }
    }
    if total == 0 {
        1.0
    } else {
        same as f64 / total as f64
    }
}
