use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::{DTensor, Gradients, Tape};
use crate::error::{invalid, Result};

/// Plain row-major matrix, used for parameter storage and data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Mat,
    pub trainable: bool,
}

/// Owns every parameter of a model; layers refer to entries by [`ParamId`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat, trainable: bool) -> Result<ParamId> {
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return Err(invalid(format!("duplicate parameter name `{name}`")));
        }
        self.params.push(Param { name, value, trainable });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Mat {
        &self.params[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Param)> {
        self.params.iter_mut().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Total element count of trainable parameters.
    pub fn trainable_count(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }

    /// Copies values from `other`, which must have the same layout.
    pub fn load_values(&mut self, other: &ParamStore) -> Result<()> {
        if other.params.len() != self.params.len() {
            return Err(invalid("parameter stores differ in length"));
        }
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            if dst.name != src.name || dst.value.rows != src.value.rows || dst.value.cols != src.value.cols {
                return Err(invalid(format!(
                    "parameter `{}` does not match `{}`",
                    dst.name, src.name
                )));
            }
            dst.value.data.copy_from_slice(&src.value.data);
        }
        Ok(())
    }
}

/// Binds a [`ParamStore`] to a [`Tape`] for one forward pass.
///
/// Every parameter is recorded as a leaf when the session opens, so each
/// one has a single node and its gradient accumulates in one place.
pub struct Session<'t> {
    tape: &'t Tape,
    leaves: RefCell<Vec<DTensor<'t>>>,
    trainable: Vec<bool>,
    training: bool,
    rng: RefCell<ChaCha8Rng>,
}

impl<'t> Session<'t> {
    pub fn new(tape: &'t Tape, store: &ParamStore, training: bool, seed: u64) -> Self {
        let leaves = store
            .params
            .iter()
            .map(|p| {
                tape.leaf(p.value.rows, p.value.cols, p.value.data.clone(), p.trainable)
                    .expect("stored parameter has a consistent shape")
            })
            .collect();
        Self {
            tape,
            leaves: RefCell::new(leaves),
            trainable: store.params.iter().map(|p| p.trainable).collect(),
            training,
            rng: RefCell::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn training(&self) -> bool {
        self.training
    }

    pub fn param(&self, id: ParamId) -> DTensor<'t> {
        self.leaves.borrow()[id.0]
    }

    /// Overrides the leaf used for `id`; the shape must match.
    pub fn bind(&self, id: ParamId, t: DTensor<'t>) -> Result<()> {
        let mut leaves = self.leaves.borrow_mut();
        let current = leaves[id.0];
        if t.shape() != current.shape() {
            return Err(invalid(format!(
                "binding {t:?} to parameter {id:?} of shape {:?}",
                current.shape()
            )));
        }
        leaves[id.0] = t;
        Ok(())
    }

    /// Gradients for each parameter, indexed by [`ParamId`]; `None` for
    /// frozen parameters.
    pub fn param_grads(&self, grads: &Gradients) -> Vec<Option<Vec<f64>>> {
        self.leaves
            .borrow()
            .iter()
            .zip(&self.trainable)
            .map(|(t, &trainable)| trainable.then(|| grads.wrt(t)))
            .collect()
    }

    /// Inverted dropout: zeroes entries with probability `rate` and scales
    /// survivors by `1 / (1 - rate)`. Identity outside training.
    pub fn dropout(&self, x: DTensor<'t>, rate: f64) -> Result<DTensor<'t>> {
        if !self.training || rate <= 0.0 {
            return Ok(x);
        }
        if rate >= 1.0 {
            return Err(invalid(format!("dropout rate {rate} must be < 1")));
        }
        let keep = 1.0 / (1.0 - rate);
        let mut rng = self.rng.borrow_mut();
        let mask = (0..x.len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        x.dropout_mask(mask)
    }
}
