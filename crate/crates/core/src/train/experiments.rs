//! Multi-seed ablations, sweeps, and the oversmoothing and scaling studies.

use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::TrainConfig;
use super::data::{prepare_node_graph, TaskData};
use super::metrics::mean_std;
use super::trainer::{build_model, embedding_energy, eval_node_logits, train, RunHistory};
use crate::basis::{BasisKind, InitStrategy};
use crate::error::{invalid, Result};
use crate::graph::{stratified_masks, Graph};
use crate::model::Task;
use crate::train::metrics::evaluate_accuracy;

/// One aggregated setting; `mean` and `std` are over seeds (sample std).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub setting: String,
    pub mean: f64,
    pub std: f64,
    pub n_seeds: usize,
}

impl AblationRow {
    pub fn new(setting: impl Into<String>, values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        Self {
            setting: setting.into(),
            mean,
            std,
            n_seeds: values.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OversmoothRow {
    pub depth: usize,
    pub residual: bool,
    pub dirichlet_energy: f64,
    pub test_metric: f64,
    pub n_seeds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub ratio: f64,
    pub nodes: usize,
    pub mean_epoch_time_s: f64,
    pub std_epoch_time_s: f64,
    pub repeats: usize,
}

/// Writes rows with a header taken from the row's field names.
pub fn write_rows<T: Serialize>(rows: &[T], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Trains once per seed, reusing `data`.
pub fn run_seeds(c: &TrainConfig, data: &TaskData, seeds: &[u64]) -> Result<Vec<RunHistory>> {
    seeds
        .iter()
        .map(|&seed| {
            let c = TrainConfig { seed, ..c.clone() };
            let h = train(&c, data)?.history;
            log::info!("seed {seed}: test {:.4} (best epoch {})", h.test_metric, h.best_epoch);
            Ok(h)
        })
        .collect()
}

fn test_metrics(runs: &[RunHistory]) -> Vec<f64> {
    runs.iter().map(|h| h.test_metric).collect()
}

fn epoch_times(runs: &[RunHistory]) -> Vec<f64> {
    runs.iter().map(RunHistory::mean_epoch_time).collect()
}

/// The four control-point strategies: Evenly spaced or Gaussian, Trainable
/// or fixed (`!T`).
pub const INIT_STRATEGIES: [(&str, InitStrategy, bool); 4] = [
    ("ET", InitStrategy::EvenlySpaced, true),
    ("E!T", InitStrategy::EvenlySpaced, false),
    ("G!T", InitStrategy::Gaussian, false),
    ("GT", InitStrategy::Gaussian, true),
];

pub fn ablate_init(c: &TrainConfig, data: &TaskData, seeds: &[u64]) -> Result<Vec<AblationRow>> {
    INIT_STRATEGIES
        .iter()
        .map(|&(name, init, trainable)| {
            let c = TrainConfig {
                init,
                trainable_positions: trainable,
                ..c.clone()
            };
            Ok(AblationRow::new(name, &test_metrics(&run_seeds(&c, data, seeds)?)))
        })
        .collect()
}

/// Test metric and mean epoch time for B-spline and RBF bases.
pub fn ablate_basis(c: &TrainConfig, data: &TaskData, seeds: &[u64]) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for (name, kind) in [("bspline", BasisKind::Bspline), ("rbf", BasisKind::Rbf)] {
        let c = TrainConfig {
            basis: kind,
            ..c.clone()
        };
        let runs = run_seeds(&c, data, seeds)?;
        rows.push(AblationRow::new(format!("{name}/test_metric"), &test_metrics(&runs)));
        rows.push(AblationRow::new(format!("{name}/epoch_time_s"), &epoch_times(&runs)));
    }
    Ok(rows)
}

pub fn sweep_knots(c: &TrainConfig, data: &TaskData, knots: &[usize], seeds: &[u64]) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for &k in knots {
        let c = TrainConfig { knots: k, ..c.clone() };
        let runs = run_seeds(&c, data, seeds)?;
        rows.push(AblationRow::new(format!("knots={k}/test_metric"), &test_metrics(&runs)));
        rows.push(AblationRow::new(format!("knots={k}/epoch_time_s"), &epoch_times(&runs)));
    }
    Ok(rows)
}

pub fn sweep_grid(c: &TrainConfig, data: &TaskData, grids: &[(f64, f64)], seeds: &[u64]) -> Result<Vec<AblationRow>> {
    grids
        .iter()
        .map(|&(grid_min, grid_max)| {
            let c = TrainConfig {
                grid_min,
                grid_max,
                ..c.clone()
            };
            c.validate()?;
            let runs = run_seeds(&c, data, seeds)?;
            Ok(AblationRow::new(
                format!("grid=[{grid_min},{grid_max}]"),
                &test_metrics(&runs),
            ))
        })
        .collect()
}

/// Final-layer Dirichlet energy and test accuracy per depth, averaged over
/// seeds. With `trained` false the freshly initialised models are measured.
pub fn oversmoothing_experiment(
    c: &TrainConfig,
    g: &Graph,
    depths: &[usize],
    residual: bool,
    trained: bool,
    seeds: &[u64],
) -> Result<Vec<OversmoothRow>> {
    if c.task != Task::NodeCls {
        return Err(invalid("the oversmoothing study runs node classification"));
    }
    let data = prepare_node_graph(g.clone(), c)?;
    depths
        .iter()
        .map(|&depth| {
            let (mut energies, mut metrics) = (Vec::new(), Vec::new());
            for &seed in seeds {
                let c = TrainConfig {
                    layers: depth,
                    residual: Some(residual),
                    seed,
                    ..c.clone()
                };
                let (model, metric) = if trained {
                    let out = train(&c, &data)?;
                    (out.model, out.history.test_metric)
                } else {
                    let model = build_model(&c, &data)?;
                    let logits = eval_node_logits(&model, g)?;
                    let acc = evaluate_accuracy(&logits, g.num_classes, &g.labels, &g.test_mask)?;
                    (model, acc)
                };
                energies.push(embedding_energy(&model, g)?);
                metrics.push(metric);
            }
            Ok(OversmoothRow {
                depth,
                residual,
                dirichlet_energy: mean_std(&energies).0,
                test_metric: mean_std(&metrics).0,
                n_seeds: seeds.len(),
            })
        })
        .collect()
}

/// Mean training-epoch time on uniform node samples of `g`, one row per
/// ratio in ascending order. Sampling and subgraph construction are not
/// timed.
pub fn scaling_experiment(c: &TrainConfig, g: &Graph, ratios: &[f64], repeats: usize) -> Result<Vec<ScalingRow>> {
    if repeats == 0 {
        return Err(invalid("scaling needs at least one timed epoch"));
    }
    let mut ratios = ratios.to_vec();
    if ratios.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
        return Err(invalid("subgraph ratios must lie in (0, 1]"));
    }
    ratios.sort_by(f64::total_cmp);
    let mut rng = ChaCha8Rng::seed_from_u64(c.data_seed);
    ratios
        .iter()
        .map(|&ratio| {
            let n = ((g.num_nodes as f64 * ratio).round() as usize).clamp(1, g.num_nodes);
            let mut nodes = sample(&mut rng, g.num_nodes, n).into_vec();
            nodes.sort_unstable();
            let mut sub = g.induced_subgraph(&nodes)?;
            if c.task == Task::NodeCls {
                let (tr, va, te) = stratified_masks(&sub.labels, &mut rng);
                sub.set_masks(tr, va, te)?;
            }
            let data = prepare_node_graph(sub, c)?;
            let run = TrainConfig {
                max_epochs: repeats,
                patience: repeats,
                ..c.clone()
            };
            let times: Vec<f64> = train(&run, &data)?
                .history
                .records
                .iter()
                .map(|r| r.epoch_time_s)
                .collect();
            let (mean, std) = mean_std(&times);
            Ok(ScalingRow {
                ratio,
                nodes: n,
                mean_epoch_time_s: mean,
                std_epoch_time_s: std,
                repeats,
            })
        })
        .collect()
}
