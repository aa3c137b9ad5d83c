use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{KangModel, ModelConfig};
use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SavedParam {
    pub name: String,
    pub shape: [usize; 2],
    pub trainable: bool,
    pub values: Vec<f64>,
}

/// The config that built a model plus every parameter value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: Vec<SavedParam>,
}

impl Checkpoint {
    pub fn from_model(model: &KangModel) -> Self {
        Self {
            config: model.config.clone(),
            params: model
                .store
                .iter()
                .map(|(_, p)| SavedParam {
                    name: p.name.clone(),
                    shape: [p.value.rows, p.value.cols],
                    trainable: p.trainable,
                    values: p.value.data.clone(),
                })
                .collect(),
        }
    }

    /// Rebuilds the model from its config and overwrites every parameter.
    pub fn into_model(self) -> Result<KangModel> {
        let mut model = KangModel::new(self.config)?;
        if self.params.len() != model.store.len() {
            return Err(invalid(format!(
                "checkpoint has {} parameters, model has {}",
                self.params.len(),
                model.store.len()
            )));
        }
        for saved in self.params {
            let id = model
                .store
                .find(&saved.name)
                .ok_or_else(|| invalid(format!("checkpoint parameter `{}` not in model", saved.name)))?;
            let p = model.store.get_mut(id);
            if [p.value.rows, p.value.cols] != saved.shape || saved.values.len() != p.value.len() {
                return Err(invalid(format!(
                    "checkpoint parameter `{}` has shape {:?}, model expects {}x{}",
                    saved.name, saved.shape, p.value.rows, p.value.cols
                )));
            }
            p.value.data = saved.values;
        }
        Ok(model)
    }
}

pub fn save_checkpoint(model: &KangModel, path: impl AsRef<Path>) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(w, &Checkpoint::from_model(model))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<KangModel> {
    let r = BufReader::new(File::open(path)?);
    let ckpt: Checkpoint = serde_json::from_reader(r)?;
    ckpt.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisSpec;
    use crate::model::Task;

    #[test]
    fn round_trip_is_exact() {
        let config = ModelConfig {
            task: Task::NodeCls,
            in_dim: 3,
            hidden: 4,
            num_classes: 2,
            layers: 2,
            dropout: 0.1,
            basis: BasisSpec::default(),
            use_base_branch: true,
            use_residual: false,
            ln_affine: false,
            seed: 11,
        };
        let mut model = KangModel::new(config).unwrap();
        // values that only survive an exact float round trip
        for (_, p) in model.store.iter_mut() {
            p.value.data.iter_mut().for_each(|v| *v = *v / 3.0 + 1e-17);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        save_checkpoint(&model, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.store, model.store);
    }
}
