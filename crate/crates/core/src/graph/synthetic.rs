use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{symmetrize, Graph};
use crate::diffcore::Mat;
use crate::error::{invalid, Result};

/// Stochastic block model parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmConfig {
    pub n_per_block: usize,
    pub num_blocks: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Mean offset of a block's feature group; see [`generate_sbm`].
    pub feature_shift: f64,
    pub seed: u64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            n_per_block: 100,
            num_blocks: 2,
            p_in: 0.1,
            p_out: 0.01,
            feature_dim: 16,
            feature_shift: 1.0,
            seed: 0,
        }
    }
}

/// Samples an SBM graph. Node features are `N(μ_b, I)`, where `μ_b` puts
/// `feature_shift` on the `feature_dim / num_blocks` coordinates owned by
/// block `b` and zero elsewhere (a one-hot direction when the two sizes
/// match). Masks are a stratified 60/20/20 split.
pub fn generate_sbm(c: &SbmConfig) -> Result<Graph> {
    if !(0.0 <= c.p_out && c.p_out < c.p_in && c.p_in <= 1.0) {
        return Err(invalid(format!(
            "need 0 <= p_out < p_in <= 1, got p_in={} p_out={}",
            c.p_in, c.p_out
        )));
    }
    if c.num_blocks == 0 || c.n_per_block == 0 || c.feature_dim == 0 {
        return Err(invalid("SBM needs at least one block, node and feature"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let n = c.n_per_block * c.num_blocks;
    let labels: Vec<usize> = (0..n).map(|i| i / c.n_per_block).collect();

    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] { c.p_in } else { c.p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
                edges.push((v, u));
            }
        }
    }

    let group = (c.feature_dim / c.num_blocks).max(1);
    let mut data = Vec::with_capacity(n * c.feature_dim);
    for &b in &labels {
        let start = (b * group) % c.feature_dim;
        for j in 0..c.feature_dim {
            let mean = if (start..start + group).contains(&j) {
                c.feature_shift
            } else {
                0.0
            };
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push(mean + z);
        }
    }

    let mut g = Graph::new(Mat::new(n, c.feature_dim, data)?, edges, labels)?;
    let (train, val, test) = stratified_masks(&g.labels, &mut rng);
    g.set_masks(train, val, test)?;
    Ok(g)
}

/// Per-class 60/20/20 split of node indices.
pub fn stratified_masks<R: Rng>(labels: &[usize], rng: &mut R) -> (Vec<bool>, Vec<bool>, Vec<bool>) {
    let n = labels.len();
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let (mut train, mut val, mut test) = (vec![false; n], vec![false; n], vec![false; n]);
    for c in 0..classes {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        members.shuffle(rng);
        let n_train = (members.len() as f64 * 0.6).round() as usize;
        let n_val = (members.len() as f64 * 0.2).round() as usize;
        for (rank, &i) in members.iter().enumerate() {
            if rank < n_train {
                train[i] = true;
            } else if rank < n_train + n_val {
                val[i] = true;
            } else {
                test[i] = true;
            }
        }
    }
    (train, val, test)
}

const KARATE_EDGES: [(usize, usize); 78] = [
    (0, 1),
    (0, 2),
    (0, 3),
    (0, 4),
    (0, 5),
    (0, 6),
    (0, 7),
    (0, 8),
    (0, 10),
    (0, 11),
    (0, 12),
    (0, 13),
    (0, 17),
    (0, 19),
    (0, 21),
    (0, 31),
    (1, 2),
    (1, 3),
    (1, 7),
    (1, 13),
    (1, 17),
    (1, 19),
    (1, 21),
    (1, 30),
    (2, 3),
    (2, 7),
    (2, 8),
    (2, 9),
    (2, 13),
    (2, 27),
    (2, 28),
    (2, 32),
    (3, 7),
    (3, 12),
    (3, 13),
    (4, 6),
    (4, 10),
    (5, 6),
    (5, 10),
    (5, 16),
    (6, 16),
    (8, 30),
    (8, 32),
    (8, 33),
    (9, 33),
    (13, 33),
    (14, 32),
    (14, 33),
    (15, 32),
    (15, 33),
    (18, 32),
    (18, 33),
    (19, 33),
    (20, 32),
    (20, 33),
    (22, 32),
    (22, 33),
    (23, 25),
    (23, 27),
    (23, 29),
    (23, 32),
    (23, 33),
    (24, 25),
    (24, 27),
    (24, 31),
    (25, 31),
    (26, 29),
    (26, 33),
    (27, 33),
    (28, 31),
    (28, 33),
    (29, 32),
    (29, 33),
    (30, 32),
    (30, 33),
    (31, 32),
    (31, 33),
    (32, 33),
];

/// Zachary's karate club: 34 members, split into the instructor's (0) and
/// the officers' (1) factions. Features are one-hot node degrees; masks are
/// a fixed stratified 60/20/20 split.
pub fn karate_club() -> Graph {
    const OFFICERS: [usize; 17] = [9, 14, 15, 18, 20, 22, 23, 24, 25, 26, 27, 28, 29, 30, 31, 32, 33];
    let n = 34;
    let edges = symmetrize(KARATE_EDGES);
    let mut degree = vec![0; n];
    for &(u, _) in &edges {
        degree[u] += 1;
    }
    let f = degree.iter().max().copied().unwrap_or(0) + 1;
    let mut features = Mat::zeros(n, f);
    for (i, &d) in degree.iter().enumerate() {
        features.data[i * f + d] = 1.0;
    }
    let labels = (0..n).map(|i| OFFICERS.contains(&i) as usize).collect();
    let mut g = Graph::new(features, edges, labels).expect("fixture is consistent");
    let (train, val, test) = stratified_masks(&g.labels, &mut ChaCha8Rng::seed_from_u64(0));
    g.set_masks(train, val, test).expect("stratified masks are disjoint");
    g
}

/// Small two-class graph-classification set: class 0 graphs are cycles,
/// class 1 graphs are cycles with a hub joined to every node. Features are
/// one-hot degrees capped at `max_degree`.
pub fn generate_graph_dataset(num_graphs: usize, seed: u64) -> Vec<Graph> {
    const MAX_DEGREE: usize = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..num_graphs)
        .map(|i| {
            let label = i % 2;
            let ring = rng.random_range(5..=10);
            let mut edges: Vec<(usize, usize)> = (0..ring).map(|u| (u, (u + 1) % ring)).collect();
            // a random chord keeps class 0 from being perfectly regular
            let a = rng.random_range(0..ring);
            let b = (a + 2 + rng.random_range(0..ring - 3)) % ring;
            edges.push((a, b));
            let n = if label == 1 {
                edges.extend((0..ring).map(|u| (ring, u)));
                ring + 1
            } else {
                ring
            };
            let edges = symmetrize(edges);
            let mut degree = vec![0; n];
            for &(u, _) in &edges {
                degree[u] += 1;
            }
            let mut features = Mat::zeros(n, MAX_DEGREE + 1);
            for (u, &d) in degree.iter().enumerate() {
                features.data[u * (MAX_DEGREE + 1) + d.min(MAX_DEGREE)] = 1.0;
            }
            let mut g = Graph::new(features, edges, Vec::new()).expect("generated graph is consistent");
            g.graph_label = Some(label);
            g.num_classes = 2;
            g
        })
        .collect()
}
