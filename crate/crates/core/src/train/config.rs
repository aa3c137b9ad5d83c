use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::basis::{BasisKind, BasisSpec, GammaMode, InitStrategy};
use crate::error::{invalid, Error, Result};
use crate::model::{ModelConfig, Task};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    /// Stochastic block model built from the `sbm_*` keys.
    Sbm,
    Karate,
    /// Directory of CSVs at `data_path`.
    NodeCsv,
    /// Graph list JSON at `data_path`.
    GraphJson,
    /// Cycle-vs-wheel graph classification set of `num_graphs` graphs.
    GraphSynthetic,
}

/// Every knob of a training run, as one flat JSON object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub task: Task,
    pub dataset: DatasetKind,
    pub data_path: Option<String>,
    /// Seed for synthetic data and data splits; the model uses `seed`.
    pub data_seed: u64,
    pub sbm_n_per_block: usize,
    pub sbm_blocks: usize,
    pub sbm_p_in: f64,
    pub sbm_p_out: f64,
    pub sbm_feature_dim: usize,
    pub sbm_feature_shift: f64,
    pub num_graphs: usize,
    pub lp_val_ratio: f64,
    pub lp_test_ratio: f64,

    pub hidden: usize,
    pub dropout: f64,
    pub lr: f64,
    pub wd: f64,
    pub grid_min: f64,
    pub grid_max: f64,
    pub knots: usize,
    pub degree: usize,
    pub layers: usize,
    pub basis: BasisKind,
    pub init: InitStrategy,
    pub init_random_gaussian: bool,
    pub trainable_positions: bool,
    pub gamma_mode: GammaMode,
    pub use_base_branch: bool,
    /// `null` enables residuals for models deeper than two layers.
    pub residual: Option<bool>,
    pub ln_affine: bool,

    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Write wall-clock epoch times to history.csv. Off by default: the
    /// column is then all zeros and the file is reproducible bit for bit.
    pub record_epoch_time: bool,
}

impl TrainConfig {
    /// Tuned settings per task: hidden width, dropout, learning rate, weight
    /// decay, grid range, control points and depth.
    pub fn preset(task: Task) -> Self {
        let (hidden, dropout, lr, wd, grid_min, grid_max, knots, layers) = match task {
            Task::NodeCls => (32, 0.1, 0.001, 4e-4, -15.0, 20.0, 4, 2),
            Task::LinkPred => (8, 0.1, 0.008, 5e-4, -12.0, 11.0, 7, 2),
            Task::GraphCls => (32, 0.1, 0.004, 0.005, -10.0, 3.0, 6, 2),
        };
        Self {
            task,
            dataset: match task {
                Task::GraphCls => DatasetKind::GraphSynthetic,
                _ => DatasetKind::Sbm,
            },
            data_path: None,
            data_seed: 0,
            sbm_n_per_block: 100,
            sbm_blocks: 2,
            sbm_p_in: 0.1,
            sbm_p_out: 0.01,
            sbm_feature_dim: 16,
            sbm_feature_shift: 1.0,
            num_graphs: 200,
            lp_val_ratio: 0.1,
            lp_test_ratio: 0.1,
            hidden,
            dropout,
            lr,
            wd,
            grid_min,
            grid_max,
            knots,
            degree: 3,
            layers,
            basis: BasisKind::Rbf,
            init: InitStrategy::Gaussian,
            init_random_gaussian: false,
            trainable_positions: true,
            gamma_mode: GammaMode::FromSpacing,
            use_base_branch: true,
            residual: None,
            ln_affine: false,
            max_epochs: 1000,
            patience: 300,
            seed: 0,
            record_epoch_time: false,
        }
    }

    /// Layers `file` and then `overrides` (`key=value`) over the preset of
    /// the resolved task. Override values are read as JSON when they parse
    /// and as strings otherwise.
    pub fn resolve(file: Option<Value>, overrides: &[String]) -> Result<Self> {
        let mut keys = match file {
            None | Some(Value::Null) => Map::new(),
            Some(Value::Object(m)) => m,
            Some(other) => return Err(invalid(format!("config must be a JSON object, got {other}"))),
        };
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| invalid(format!("override `{o}` is not key=value")))?;
            let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
            keys.insert(k.trim().to_string(), value);
        }

        let task = match keys.get("task") {
            None => Task::NodeCls,
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::ConfigType {
                key: "task".into(),
                msg: e.to_string(),
            })?,
        };
        let Value::Object(mut merged) = serde_json::to_value(Self::preset(task))? else {
            unreachable!("a struct serialises to an object")
        };
        let valid: Vec<String> = merged.keys().cloned().collect();
        for (k, v) in keys {
            if !merged.contains_key(&k) {
                return Err(Error::UnknownKey {
                    key: k,
                    valid: valid.join(", "),
                });
            }
            // type-check each key on its own so the error can name it
            let mut probe = merged.clone();
            probe.insert(k.clone(), v.clone());
            if let Err(e) = serde_json::from_value::<Self>(Value::Object(probe)) {
                return Err(Error::ConfigType {
                    key: k,
                    msg: e.to_string(),
                });
            }
            merged.insert(k, v);
        }
        let config: Self = serde_json::from_value(Value::Object(merged))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.basis_spec().validate()?;
        if self.hidden == 0 || self.layers == 0 {
            return Err(invalid("hidden and layers must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if !(self.lr >= 0.0 && self.wd >= 0.0) {
            return Err(invalid("lr and wd must be non-negative"));
        }
        if self.max_epochs == 0 {
            return Err(invalid("max_epochs must be positive"));
        }
        let data_task_ok = match self.dataset {
            DatasetKind::GraphJson | DatasetKind::GraphSynthetic => self.task == Task::GraphCls,
            _ => self.task != Task::GraphCls,
        };
        if !data_task_ok {
            return Err(invalid(format!(
                "dataset {:?} does not fit task {:?}",
                self.dataset, self.task
            )));
        }
        if matches!(self.dataset, DatasetKind::NodeCsv | DatasetKind::GraphJson) && self.data_path.is_none() {
            return Err(invalid(format!("dataset {:?} needs data_path", self.dataset)));
        }
        Ok(())
    }

    pub fn use_residual(&self) -> bool {
        self.residual.unwrap_or(self.layers > 2)
    }

    pub fn basis_spec(&self) -> BasisSpec {
        BasisSpec {
            kind: self.basis,
            knots: self.knots,
            degree: self.degree,
            grid_min: self.grid_min,
            grid_max: self.grid_max,
            init: self.init,
            random_init: self.init_random_gaussian,
            trainable_positions: self.trainable_positions,
            gamma_mode: self.gamma_mode,
        }
    }

    pub fn model_config(&self, in_dim: usize, num_classes: usize) -> ModelConfig {
        ModelConfig {
            task: self.task,
            in_dim,
            hidden: self.hidden,
            num_classes,
            layers: self.layers,
            dropout: self.dropout,
            basis: self.basis_spec(),
            use_base_branch: self.use_base_branch,
            use_residual: self.use_residual(),
            ln_affine: self.ln_affine,
            seed: self.seed,
        }
    }
}
