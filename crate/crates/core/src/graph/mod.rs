//! Graph data model, loaders, synthetic generators and edge splits.

mod io;
mod split;
mod synthetic;

use crate::diffcore::Mat;
use crate::error::{invalid, Result};

pub use io::{load_graph, load_graph_json, load_node_csv, save_graph_json, save_node_csv, Dataset, GraphFormat};
pub use split::{sample_negatives, split_edges, EdgeSplit};
pub use synthetic::{generate_graph_dataset, generate_sbm, karate_club, stratified_masks, SbmConfig};

/// A graph with node features, a directed edge list (`(src, dst)`; both
/// orientations are stored for undirected data), node labels and
/// transductive masks.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    pub num_nodes: usize,
    pub features: Mat,
    pub edges: Vec<(usize, usize)>,
    /// Node labels; empty for graph-level datasets.
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub train_mask: Vec<bool>,
    pub val_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
    pub graph_label: Option<usize>,
}

impl Graph {
    /// Builds a graph with all-false masks, checking edge endpoints and
    /// label count.
    pub fn new(features: Mat, edges: Vec<(usize, usize)>, labels: Vec<usize>) -> Result<Self> {
        let n = features.rows;
        if let Some(&(u, v)) = edges.iter().find(|&&(u, v)| u >= n || v >= n) {
            return Err(invalid(format!("edge ({u}, {v}) out of range for {n} nodes")));
        }
        if !labels.is_empty() && labels.len() != n {
            return Err(invalid(format!("{} labels for {n} nodes", labels.len())));
        }
        let num_classes = labels.iter().max().map_or(0, |m| m + 1);
        Ok(Self {
            num_nodes: n,
            features,
            edges,
            labels,
            num_classes,
            train_mask: vec![false; n],
            val_mask: vec![false; n],
            test_mask: vec![false; n],
            graph_label: None,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols
    }

    pub fn sources(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.0).collect()
    }

    pub fn targets(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.1).collect()
    }

    /// Installs masks after checking they are disjoint and sized to the graph.
    pub fn set_masks(&mut self, train: Vec<bool>, val: Vec<bool>, test: Vec<bool>) -> Result<()> {
        let n = self.num_nodes;
        if train.len() != n || val.len() != n || test.len() != n {
            return Err(invalid(format!("masks must have {n} entries")));
        }
        if let Some(i) = (0..n).find(|&i| (train[i] as u8 + val[i] as u8 + test[i] as u8) > 1) {
            return Err(invalid(format!("node {i} appears in more than one mask")));
        }
        self.train_mask = train;
        self.val_mask = val;
        self.test_mask = test;
        Ok(())
    }

    /// Each undirected edge once, as `(min, max)`, in first-seen order.
    /// Self-loops are dropped.
    pub fn undirected_edges(&self) -> Vec<(usize, usize)> {
        let mut seen = std::collections::HashSet::new();
        self.edges
            .iter()
            .filter(|(u, v)| u != v)
            .map(|&(u, v)| (u.min(v), u.max(v)))
            .filter(|e| seen.insert(*e))
            .collect()
    }

    pub fn is_symmetric(&self) -> bool {
        let set: std::collections::HashSet<_> = self.edges.iter().copied().collect();
        self.edges.iter().all(|&(u, v)| set.contains(&(v, u)))
    }

    /// Subgraph on `nodes` (relabelled in the given order), keeping features,
    /// labels, masks and edges with both ends inside.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Result<Graph> {
        let mut map = vec![usize::MAX; self.num_nodes];
        for (new, &old) in nodes.iter().enumerate() {
            if old >= self.num_nodes {
                return Err(invalid(format!("node {old} out of range for {} nodes", self.num_nodes)));
            }
            if map[old] != usize::MAX {
                return Err(invalid(format!("node {old} listed twice")));
            }
            map[old] = new;
        }
        let f = self.features.cols;
        let data = nodes
            .iter()
            .flat_map(|&i| self.features.row(i).iter().copied())
            .collect();
        let edges = self
            .edges
            .iter()
            .filter(|&&(u, v)| map[u] != usize::MAX && map[v] != usize::MAX)
            .map(|&(u, v)| (map[u], map[v]))
            .collect();
        let pick = |m: &[bool]| nodes.iter().map(|&i| m[i]).collect::<Vec<_>>();
        Ok(Graph {
            num_nodes: nodes.len(),
            features: Mat::new(nodes.len(), f, data)?,
            edges,
            labels: if self.labels.is_empty() {
                Vec::new()
            } else {
                nodes.iter().map(|&i| self.labels[i]).collect()
            },
            num_classes: self.num_classes,
            train_mask: pick(&self.train_mask),
            val_mask: pick(&self.val_mask),
            test_mask: pick(&self.test_mask),
            graph_label: self.graph_label,
        })
    }
}

/// Symmetrises a directed list and drops duplicates, keeping first-seen
/// order: each `(u, v)` is followed by `(v, u)` unless already present.
pub fn symmetrize(edges: impl IntoIterator<Item = (usize, usize)>) -> Vec<(usize, usize)> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (u, v) in edges {
        if seen.insert((u, v)) {
            out.push((u, v));
        }
        if seen.insert((v, u)) {
            out.push((v, u));
        }
    }
    out
}

/// `(1 / 2|E|) Σ_(u,v)∈E ‖x_u − x_v‖²` over the stored directed edges.
pub fn dirichlet_energy(x: &Mat, edges: &[(usize, usize)]) -> Result<f64> {
    if edges.is_empty() {
        return Err(invalid("Dirichlet energy is undefined without edges"));
    }
    let mut total = 0.0;
    for &(u, v) in edges {
        if u >= x.rows || v >= x.rows {
            return Err(invalid(format!("edge ({u}, {v}) out of range for {} rows", x.rows)));
        }
        total += x
            .row(u)
            .iter()
            .zip(x.row(v))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(total / (2.0 * edges.len() as f64))
}
