//! On-disk dataset directories.
//!
//! A dataset directory holds four text files:
//!
//! | file           | content                                              |
//! |----------------|------------------------------------------------------|
//! | `meta.json`    | `{"n": .., "d": .., "C": .., "name": ".."}`          |
//! | `features.csv` | `n` rows of `d` comma-separated reals                |
//! | `labels.csv`   | `n` rows, one integer class id in `0..C` per row     |
//! | `edges.csv`    | one undirected edge `i,j` per line, `i < j`, no self-loops |
//!
//! Blank lines are ignored. Errors carry the 1-based line number.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n: usize,
    pub d: usize,
    #[serde(rename = "C")]
    pub classes: usize,
    pub name: String,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

pub fn read_meta(dir: impl AsRef<Path>) -> Result<DatasetMeta> {
    let path = dir.as_ref().join("meta.json");
    let text = read(&path)?;
    serde_json::from_str(&text).map_err(|e| Error::parse(&path, Some(e.line()), e.to_string()))
}

/// Loads and validates a dataset directory.
pub fn load_graph(dir: impl AsRef<Path>) -> Result<Graph> {
    let dir = dir.as_ref();
    let meta = read_meta(dir)?;

    let path = dir.join("features.csv");
    let text = read(&path)?;
    let mut data = Vec::with_capacity(meta.n * meta.d);
    let mut rows = 0;
    for (line, row) in data_lines(&text) {
        let before = data.len();
        for field in row.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::parse(&path, Some(line), format!("bad number {field:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(&path, Some(line), "non-finite feature"));
            }
            data.push(v);
        }
        if data.len() - before != meta.d {
            return Err(Error::parse(
                &path,
                Some(line),
                format!("expected {} features, found {}", meta.d, data.len() - before),
            ));
        }
        rows += 1;
    }
    if rows != meta.n {
        return Err(Error::parse(&path, None, format!("expected {} rows, found {rows}", meta.n)));
    }
    let features = Tensor::from_vec(meta.n, meta.d, data)?;

    let path = dir.join("labels.csv");
    let text = read(&path)?;
    let mut labels = Vec::with_capacity(meta.n);
    for (line, row) in data_lines(&text) {
        let y: usize = row
            .parse()
            .map_err(|_| Error::parse(&path, Some(line), format!("bad label {row:?}")))?;
        if y >= meta.classes {
            return Err(Error::parse(
                &path,
                Some(line),
                format!("label {y} outside 0..{}", meta.classes),
            ));
        }
        labels.push(y);
    }
    if labels.len() != meta.n {
        return Err(Error::parse(
            &path,
            None,
            format!("expected {} labels, found {}", meta.n, labels.len()),
        ));
    }

    let path = dir.join("edges.csv");
    let text = read(&path)?;
    let mut edges = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (line, row) in data_lines(&text) {
        let mut parts = row.split(',').map(str::trim);
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::parse(&path, Some(line), format!("expected \"i,j\", got {row:?}")));
        };
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::parse(&path, Some(line), format!("bad node index {s:?}")))
        };
        let (i, j) = (parse(a)?, parse(b)?);
        if i >= meta.n || j >= meta.n {
            return Err(Error::parse(
                &path,
                Some(line),
                format!("node index {} >= n = {}", i.max(j), meta.n),
            ));
        }
        if i == j {
            return Err(Error::parse(&path, Some(line), format!("self-loop ({i},{j})")));
        }
        if i > j {
            return Err(Error::parse(&path, Some(line), format!("edge ({i},{j}) must satisfy i < j")));
        }
        if !seen.insert((i, j)) {
            return Err(Error::parse(&path, Some(line), format!("duplicate edge ({i},{j})")));
        }
        edges.push((i, j));
    }
    Graph::from_undirected(meta.name, features, labels, meta.classes, &edges)
}

/// Writes `g` (self-loops dropped) in the dataset directory format.
pub fn save_graph(g: &Graph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = DatasetMeta {
        n: g.num_nodes(),
        d: g.feature_dim(),
        classes: g.num_classes(),
        name: g.name().to_string(),
    };
    write(&dir.join("meta.json"), &(serde_json::to_string_pretty(&meta)? + "\n"))?;

    let mut text = String::new();
    for i in 0..g.num_nodes() {
        let row: Vec<String> = g.features().row(i).iter().map(|v| format!("{v:?}")).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    write(&dir.join("features.csv"), &text)?;

    let text: String = g.labels().iter().map(|y| format!("{y}\n")).collect();
    write(&dir.join("labels.csv"), &text)?;

    let text: String = g.undirected_edges().map(|(i, j)| format!("{i},{j}\n")).collect();
    write(&dir.join("edges.csv"), &text)
}

pub(crate) fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(PathBuf::from(path), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(dir: &Path, edges: &str) {
        write(&dir.join("meta.json"), r#"{"n": 2, "d": 2, "C": 2, "name": "pair"}"#).unwrap();
        write(&dir.join("features.csv"), "1.0,0.5\n-1,2e-3\n").unwrap();
        write(&dir.join("labels.csv"), "0\n1\n").unwrap();
        write(&dir.join("edges.csv"), edges).unwrap();
    }

    #[test]
    fn loads_two_node_fixture() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path(), "0,1\n");
        let g = load_graph(dir.path()).unwrap();
        assert_eq!(g.num_nodes(), 2);
        assert_eq!(g.edges().len(), 2);
        assert_eq!(g.name(), "pair");
        assert_eq!(g.features().get(1, 1), 2e-3);
    }

    #[test]
    fn edge_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        for (edges, needle) in [
            ("0,2\n", ":1:"),
            ("0,1\n0,1\n", ":2:"),
            ("\n1,0\n", ":2:"),
            ("0,0\n", "self-loop"),
            ("0;1\n", ":1:"),
        ] {
            fixture(dir.path(), edges);
            let err = load_graph(dir.path()).unwrap_err().to_string();
            assert!(err.contains(needle), "{edges:?} -> {err}");
        }
    }

    #[test]
    fn feature_and_label_errors() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path(), "0,1\n");
        write(&dir.path().join("features.csv"), "1.0\n1.0,2.0\n").unwrap();
        assert!(load_graph(dir.path()).unwrap_err().to_string().contains(":1:"));
        fixture(dir.path(), "0,1\n");
        write(&dir.path().join("labels.csv"), "0\n2\n").unwrap();
        assert!(load_graph(dir.path()).unwrap_err().to_string().contains(":2:"));
        fixture(dir.path(), "0,1\n");
        std::fs::remove_file(dir.path().join("labels.csv")).unwrap();
        assert!(matches!(load_graph(dir.path()), Err(Error::Io { .. })));
    }

    #[test]
    fn save_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let features = Tensor::from_fn(4, 3, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0));
        let g = Graph::from_undirected("rt", features, vec![0, 1, 2, 1], 3, &[(0, 1), (2, 3), (0, 3)]).unwrap();
        save_graph(&g, dir.path()).unwrap();
        assert_eq!(load_graph(dir.path()).unwrap(), g);
    }
}
