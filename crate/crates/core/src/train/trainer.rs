use std::cell::Cell;
use std::collections::HashSet;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::data::TaskData;
use super::metrics::{evaluate_accuracy, evaluate_auc};
use super::optim::AdamW;
use crate::diffcore::{DTensor, ParamStore, Session, Tape};
use crate::error::{invalid, Error, Result};
use crate::graph::{dirichlet_energy, sample_negatives, Graph};
use crate::model::{binary_cross_entropy, pair_logits, KangModel, Task};

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: f64,
    /// Forward, backward and optimizer step; evaluation is excluded.
    pub epoch_time_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunHistory {
    pub records: Vec<EpochRecord>,
    /// 1-based epoch of the best validation metric (earliest on ties).
    pub best_epoch: usize,
    pub best_val: f64,
    /// Test metric of the restored best-validation parameters.
    pub test_metric: f64,
    /// Test-label accesses made before final reporting; always 0 for a
    /// correct trainer.
    pub test_label_reads_before_final: usize,
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_metric,epoch_time_s";

impl RunHistory {
    pub fn mean_epoch_time(&self) -> f64 {
        self.records.iter().map(|r| r.epoch_time_s).sum::<f64>() / self.records.len().max(1) as f64
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, with_time: bool) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "{HISTORY_HEADER}")?;
        for r in &self.records {
            let t = if with_time { r.epoch_time_s } else { 0.0 };
            writeln!(w, "{},{},{},{}", r.epoch, r.train_loss, r.val_metric, t)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub struct TrainOutcome {
    pub history: RunHistory,
    /// Parameters restored to the best validation epoch.
    pub model: KangModel,
}

/// Guards test labels: reads made while sealed are counted.
#[derive(Default)]
pub struct LabelAudit {
    sealed: Cell<bool>,
    early_reads: Cell<usize>,
}

impl LabelAudit {
    pub fn sealed() -> Self {
        let a = Self::default();
        a.sealed.set(true);
        a
    }

    pub fn unseal(&self) {
        self.sealed.set(false);
    }

    pub fn read_test<T>(&self, f: impl FnOnce() -> T) -> T {
        if self.sealed.get() {
            self.early_reads.set(self.early_reads.get() + 1);
        }
        f()
    }

    pub fn early_reads(&self) -> usize {
        self.early_reads.get()
    }
}

/// SplitMix64 finaliser, used to derive per-epoch seeds.
pub fn derive_seed(seed: u64, stream: u64, epoch: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(epoch.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const DROPOUT_STREAM: u64 = 1;
const NEGATIVE_STREAM: u64 = 2;

pub fn build_model(c: &TrainConfig, data: &TaskData) -> Result<KangModel> {
    KangModel::new(c.model_config(data.feature_dim(), data.num_classes()))
}

pub fn train(c: &TrainConfig, data: &TaskData) -> Result<TrainOutcome> {
    train_with_hook(c, data, |_, _| Ok(()))
}

/// Full-batch training with early stopping. `hook(epoch, model)` runs once
/// before training (epoch 0) and after every optimizer step.
pub fn train_with_hook(
    c: &TrainConfig,
    data: &TaskData,
    mut hook: impl FnMut(usize, &KangModel) -> Result<()>,
) -> Result<TrainOutcome> {
    c.validate()?;
    let task = match data {
        TaskData::Node(_) => Task::NodeCls,
        TaskData::Link { .. } => Task::LinkPred,
        TaskData::Graphs { .. } => Task::GraphCls,
    };
    if task != c.task {
        return Err(invalid(format!(
            "config task {:?} does not match {task:?} data",
            c.task
        )));
    }
    let mut model = build_model(c, data)?;
    let mut opt = AdamW::new(c.lr, c.wd);
    let audit = LabelAudit::sealed();
    let runner = Runner::new(data);

    hook(0, &model)?;
    let mut records = Vec::new();
    let mut best: Option<(usize, f64, ParamStore)> = None;
    for epoch in 1..=c.max_epochs {
        let start = Instant::now();
        let loss = {
            let tape = Tape::new();
            let s = Session::new(
                &tape,
                &model.store,
                true,
                derive_seed(c.seed, DROPOUT_STREAM, epoch as u64),
            );
            let loss = runner.train_loss(&model, &s, derive_seed(c.seed, NEGATIVE_STREAM, epoch as u64))?;
            let value = loss.item();
            if !value.is_finite() {
                return Err(Error::NonFinite { epoch, value });
            }
            let grads = tape.backward(loss)?;
            let grads = s.param_grads(&grads);
            opt.step(&mut model.store, &grads)?;
            value
        };
        let epoch_time_s = start.elapsed().as_secs_f64();
        hook(epoch, &model)?;

        let val = runner.val_metric(&model)?;
        records.push(EpochRecord {
            epoch,
            train_loss: loss,
            val_metric: val,
            epoch_time_s,
        });
        match &best {
            Some((_, b, _)) if val <= *b => {}
            _ => best = Some((epoch, val, model.store.clone())),
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.0);
        if epoch - best_epoch >= c.patience {
            log::debug!("early stop at epoch {epoch}, best {best_epoch}");
            break;
        }
    }

    let (best_epoch, best_val, store) = best.expect("at least one epoch ran");
    model.store = store;
    audit.unseal();
    let test_metric = runner.test_metric(&model, &audit)?;
    Ok(TrainOutcome {
        history: RunHistory {
            records,
            best_epoch,
            best_val,
            test_metric,
            test_label_reads_before_final: audit.early_reads(),
        },
        model,
    })
}

/// Task-specific loss and metrics. Training and validation see masked label
/// copies only; test labels are reached through [`LabelAudit`].
struct Runner<'d> {
    data: &'d TaskData,
    train_targets: Vec<usize>,
    val_targets: Vec<usize>,
    train_forbidden: HashSet<(usize, usize)>,
}

fn masked(labels: &[usize], mask: &[bool]) -> Vec<usize> {
    labels.iter().zip(mask).map(|(&l, &m)| if m { l } else { 0 }).collect()
}

impl<'d> Runner<'d> {
    fn new(data: &'d TaskData) -> Self {
        let (train_targets, val_targets) = match data {
            TaskData::Node(g) => (masked(&g.labels, &g.train_mask), masked(&g.labels, &g.val_mask)),
            _ => (Vec::new(), Vec::new()),
        };
        let train_forbidden = match data {
            TaskData::Link { split, .. } => split.train_pos.iter().copied().collect(),
            _ => HashSet::new(),
        };
        Self {
            data,
            train_targets,
            val_targets,
            train_forbidden,
        }
    }

    fn train_loss<'t>(&self, model: &KangModel, s: &Session<'t>, neg_seed: u64) -> Result<DTensor<'t>> {
        match self.data {
            TaskData::Node(g) => model
                .node_logits(s, g)?
                .softmax_cross_entropy(&self.train_targets, &g.train_mask),
            TaskData::Link { train_graph, split, .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(neg_seed);
                let negs = sample_negatives(
                    train_graph.num_nodes,
                    &self.train_forbidden,
                    split.train_pos.len(),
                    &mut rng,
                )?;
                let mut pairs = split.train_pos.clone();
                pairs.extend(negs);
                let targets: Vec<bool> = (0..pairs.len()).map(|i| i < split.train_pos.len()).collect();
                let z = model.node_embeddings(s, train_graph)?;
                binary_cross_entropy(pair_logits(z, &pairs)?, &targets)
            }
            TaskData::Graphs { graphs, train, .. } => {
                let batch: Vec<&Graph> = train.iter().map(|&i| &graphs[i]).collect();
                let labels: Vec<usize> = batch.iter().map(|g| g.graph_label.unwrap_or(0)).collect();
                model
                    .graph_logits(s, &batch)?
                    .softmax_cross_entropy(&labels, &vec![true; labels.len()])
            }
        }
    }

    fn val_metric(&self, model: &KangModel) -> Result<f64> {
        match self.data {
            TaskData::Node(g) => {
                let logits = eval_node_logits(model, g)?;
                evaluate_accuracy(&logits, g.num_classes, &self.val_targets, &g.val_mask)
            }
            TaskData::Link { train_graph, split, .. } => link_auc(model, train_graph, &split.val_pos, &split.val_neg),
            TaskData::Graphs { graphs, val, .. } => graph_accuracy(model, graphs, val),
        }
    }

    fn test_metric(&self, model: &KangModel, audit: &LabelAudit) -> Result<f64> {
        match self.data {
            TaskData::Node(g) => {
                let logits = eval_node_logits(model, g)?;
                audit.read_test(|| evaluate_accuracy(&logits, g.num_classes, &g.labels, &g.test_mask))
            }
            TaskData::Link { train_graph, split, .. } => {
                audit.read_test(|| link_auc(model, train_graph, &split.test_pos, &split.test_neg))
            }
            TaskData::Graphs { graphs, test, .. } => audit.read_test(|| graph_accuracy(model, graphs, test)),
        }
    }
}

/// Validation and test metric of an already trained model on `data`. This is
/// an explicit evaluation request, so test labels are read openly.
pub fn evaluate(model: &KangModel, data: &TaskData) -> Result<(f64, f64)> {
    let runner = Runner::new(data);
    let audit = LabelAudit::sealed();
    audit.unseal();
    Ok((runner.val_metric(model)?, runner.test_metric(model, &audit)?))
}

pub fn eval_node_logits(model: &KangModel, g: &Graph) -> Result<Vec<f64>> {
    let tape = Tape::new();
    let s = Session::new(&tape, &model.store, false, 0);
    Ok(model.node_logits(&s, g)?.value())
}

/// Final-layer node embeddings in evaluation mode.
pub fn eval_embeddings(model: &KangModel, g: &Graph) -> Result<crate::diffcore::Mat> {
    let tape = Tape::new();
    let s = Session::new(&tape, &model.store, false, 0);
    let h = model.node_embeddings(&s, g)?;
    crate::diffcore::Mat::new(h.rows(), h.cols(), h.value())
}

/// Dirichlet energy of the final-layer embeddings over `g`'s edges.
pub fn embedding_energy(model: &KangModel, g: &Graph) -> Result<f64> {
    dirichlet_energy(&eval_embeddings(model, g)?, &g.edges)
}

fn link_auc(model: &KangModel, g: &Graph, pos: &[(usize, usize)], neg: &[(usize, usize)]) -> Result<f64> {
    let mut pairs = pos.to_vec();
    pairs.extend_from_slice(neg);
    let scores = model.link_scores(g, &pairs)?;
    let labels: Vec<bool> = (0..pairs.len()).map(|i| i < pos.len()).collect();
    evaluate_auc(&scores, &labels)
}

fn graph_accuracy(model: &KangModel, graphs: &[Graph], idx: &[usize]) -> Result<f64> {
    let batch: Vec<&Graph> = idx.iter().map(|&i| &graphs[i]).collect();
    let labels: Vec<usize> = batch.iter().map(|g| g.graph_label.unwrap_or(0)).collect();
    let tape = Tape::new();
    let s = Session::new(&tape, &model.store, false, 0);
    let logits = model.graph_logits(&s, &batch)?.value();
    evaluate_accuracy(&logits, model.config.num_classes, &labels, &vec![true; labels.len()])
}
