use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{symmetrize, Graph};
use crate::error::{invalid, Result};

const MAX_REJECTIONS: usize = 1_000_000;

/// Link-prediction split over undirected edges, each stored once as
/// `(min, max)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeSplit {
    pub train_pos: Vec<(usize, usize)>,
    pub val_pos: Vec<(usize, usize)>,
    pub test_pos: Vec<(usize, usize)>,
    pub val_neg: Vec<(usize, usize)>,
    pub test_neg: Vec<(usize, usize)>,
}

impl EdgeSplit {
    /// `g` restricted to the training edges, both orientations.
    pub fn train_graph(&self, g: &Graph) -> Graph {
        Graph {
            edges: symmetrize(self.train_pos.iter().copied()),
            ..g.clone()
        }
    }
}

/// Shuffles the undirected edges of `g` into train/val/test and samples an
/// equal number of non-edges for val and test.
pub fn split_edges(g: &Graph, val_ratio: f64, test_ratio: f64, seed: u64) -> Result<EdgeSplit> {
    if !(val_ratio > 0.0 && val_ratio < 1.0 && test_ratio > 0.0 && test_ratio < 1.0 && val_ratio + test_ratio < 1.0) {
        return Err(invalid(format!(
            "split ratios must lie in (0, 1) and sum below 1, got {val_ratio} and {test_ratio}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = g.undirected_edges();
    edges.shuffle(&mut rng);
    let n_val = (edges.len() as f64 * val_ratio).round() as usize;
    let n_test = (edges.len() as f64 * test_ratio).round() as usize;
    if n_val + n_test >= edges.len() {
        return Err(invalid(format!("{} edges are too few to split", edges.len())));
    }
    let test_pos = edges[..n_test].to_vec();
    let val_pos = edges[n_test..n_test + n_val].to_vec();
    let train_pos = edges[n_test + n_val..].to_vec();

    let known: HashSet<(usize, usize)> = edges.iter().copied().collect();
    let negatives = sample_negatives(g.num_nodes, &known, n_val + n_test, &mut rng)?;
    Ok(EdgeSplit {
        train_pos,
        val_pos,
        test_pos,
        val_neg: negatives[..n_val].to_vec(),
        test_neg: negatives[n_val..].to_vec(),
    })
}

/// Draws `count` distinct node pairs `(min, max)`, `u != v`, that are not
/// in `forbidden` (also stored as `(min, max)`), by rejection.
pub fn sample_negatives<R: Rng>(
    num_nodes: usize,
    forbidden: &HashSet<(usize, usize)>,
    count: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    if count > 0 && num_nodes < 2 {
        return Err(invalid("need at least two nodes to sample non-edges"));
    }
    let mut chosen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    let mut rejections = 0;
    while out.len() < count {
        let u = rng.random_range(0..num_nodes);
        let v = rng.random_range(0..num_nodes);
        let pair = (u.min(v), u.max(v));
        if u == v || forbidden.contains(&pair) || !chosen.insert(pair) {
            rejections += 1;
            if rejections > MAX_REJECTIONS {
                return Err(invalid(format!(
                    "graph too dense: {MAX_REJECTIONS} rejections while sampling {count} non-edges"
                )));
            }
            continue;
        }
        out.push(pair);
    }
    Ok(out)
}
