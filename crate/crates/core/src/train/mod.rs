//! Optimisation, training loops, metrics and experiment drivers.

mod config;
mod data;
pub mod experiments;
mod metrics;
mod optim;
mod trainer;

pub use config::{DatasetKind, TrainConfig};
pub use data::{graph_split, load_data, prepare_node_graph, sbm_config, TaskData};
pub use metrics::{evaluate_accuracy, evaluate_auc, mean_std};
pub use optim::AdamW;
pub use trainer::{
    build_model, derive_seed, embedding_energy, eval_embeddings, eval_node_logits, evaluate, train, train_with_hook,
    EpochRecord, LabelAudit, RunHistory, TrainOutcome, HISTORY_HEADER,
};
