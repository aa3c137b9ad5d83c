use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{DatasetKind, TrainConfig};
use crate::error::{invalid, Result};
use crate::graph::{
    generate_graph_dataset, generate_sbm, karate_club, load_graph_json, load_node_csv, split_edges, EdgeSplit, Graph,
    SbmConfig,
};
use crate::model::Task;

/// Data prepared for one task. Building it is kept out of every timing.
#[derive(Clone, Debug)]
pub enum TaskData {
    Node(Graph),
    Link {
        graph: Graph,
        /// `graph` with only the training edges.
        train_graph: Graph,
        split: EdgeSplit,
    },
    Graphs {
        graphs: Vec<Graph>,
        train: Vec<usize>,
        val: Vec<usize>,
        test: Vec<usize>,
    },
}

impl TaskData {
    pub fn feature_dim(&self) -> usize {
        match self {
            TaskData::Node(g) | TaskData::Link { graph: g, .. } => g.feature_dim(),
            TaskData::Graphs { graphs, .. } => graphs[0].feature_dim(),
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            TaskData::Node(g) => g.num_classes,
            TaskData::Link { .. } => 0,
            TaskData::Graphs { graphs, .. } => graphs[0].num_classes,
        }
    }
}

pub fn sbm_config(c: &TrainConfig) -> SbmConfig {
    SbmConfig {
        n_per_block: c.sbm_n_per_block,
        num_blocks: c.sbm_blocks,
        p_in: c.sbm_p_in,
        p_out: c.sbm_p_out,
        feature_dim: c.sbm_feature_dim,
        feature_shift: c.sbm_feature_shift,
        seed: c.data_seed,
    }
}

/// Loads or generates the dataset named by `c` and shapes it for `c.task`.
pub fn load_data(c: &TrainConfig) -> Result<TaskData> {
    c.validate()?;
    let path = || c.data_path.clone().unwrap_or_default();
    match c.dataset {
        DatasetKind::GraphJson | DatasetKind::GraphSynthetic => {
            let graphs = match c.dataset {
                DatasetKind::GraphJson => load_graph_json(path())?,
                _ => generate_graph_dataset(c.num_graphs, c.data_seed),
            };
            graph_split(graphs, c.data_seed)
        }
        kind => {
            let g = match kind {
                DatasetKind::Sbm => generate_sbm(&sbm_config(c))?,
                DatasetKind::Karate => karate_club(),
                _ => load_node_csv(path())?,
            };
            prepare_node_graph(g, c)
        }
    }
}

/// Shapes an already-built graph for a node or link task.
pub fn prepare_node_graph(g: Graph, c: &TrainConfig) -> Result<TaskData> {
    match c.task {
        Task::NodeCls => {
            if g.labels.is_empty() {
                return Err(invalid("node classification needs node labels"));
            }
            if !g.train_mask.iter().any(|&m| m) || !g.val_mask.iter().any(|&m| m) {
                return Err(invalid("node classification needs non-empty train and val masks"));
            }
            Ok(TaskData::Node(g))
        }
        Task::LinkPred => {
            let split = split_edges(&g, c.lp_val_ratio, c.lp_test_ratio, c.data_seed)?;
            Ok(TaskData::Link {
                train_graph: split.train_graph(&g),
                graph: g,
                split,
            })
        }
        Task::GraphCls => Err(invalid("graph classification needs a graph-list dataset")),
    }
}

/// 80/10/10 split of graph indices.
pub fn graph_split(graphs: Vec<Graph>, seed: u64) -> Result<TaskData> {
    if graphs.len() < 3 {
        return Err(invalid(format!(
            "need at least 3 graphs to split, got {}",
            graphs.len()
        )));
    }
    if graphs.iter().any(|g| g.graph_label.is_none()) {
        return Err(invalid("every graph needs a label"));
    }
    let f = graphs[0].feature_dim();
    if graphs.iter().any(|g| g.feature_dim() != f) {
        return Err(invalid("graphs disagree on feature width"));
    }
    let mut idx: Vec<usize> = (0..graphs.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((graphs.len() as f64 * 0.1).round() as usize).max(1);
    let n_test = n_val;
    let test = idx[..n_test].to_vec();
    let val = idx[n_test..n_test + n_val].to_vec();
    let train = idx[n_test + n_val..].to_vec();
    Ok(TaskData::Graphs {
        graphs,
        train,
        val,
        test,
    })
}
