//! KAND blocks: basis expansion with learnable control points, a linear
//! mixing map, an optional SiLU base branch, and an optional output
//! layer norm.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{self, expand_features, BasisKind, BasisParams, BasisSpec, GammaMode};
use crate::diffcore::{DTensor, Mat, ParamId, ParamStore, Session, LN_EPS};
use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KandConfig {
    pub in_dim: usize,
    pub out_dim: usize,
    pub basis: BasisSpec,
    pub use_base_branch: bool,
    pub apply_output_ln: bool,
    /// Learnable gain and shift after the output norm.
    pub ln_affine: bool,
}

impl KandConfig {
    pub fn new(in_dim: usize, out_dim: usize, basis: BasisSpec) -> Self {
        Self {
            in_dim,
            out_dim,
            basis,
            use_base_branch: true,
            apply_output_ln: true,
            ln_affine: false,
        }
    }
}

/// One KAND block. Parameters live in a [`ParamStore`]; the layer only
/// remembers their ids.
#[derive(Clone, Debug)]
pub struct KandLayer {
    pub config: KandConfig,
    pub name: String,
    pub mix: ParamId,
    pub bias: ParamId,
    pub positions: ParamId,
    pub log_gamma: ParamId,
    pub spline_scale: ParamId,
    /// `(base_weight, base_scale)`, present when the base branch is on.
    pub base: Option<(ParamId, ParamId)>,
    /// `(gain, shift)` of the optional LN affine.
    pub affine: Option<(ParamId, ParamId)>,
}

impl KandLayer {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, config: KandConfig, rng: &mut R) -> Result<Self> {
        let (n, m) = (config.in_dim, config.out_dim);
        if n == 0 || m == 0 {
            return Err(invalid(format!(
                "KAND layer `{name}` needs non-zero dims, got {n}->{m}"
            )));
        }
        let spec = &config.basis;
        spec.validate()?;
        let nb = spec.num_basis();

        let bound = 1.0 / ((n * nb) as f64).sqrt();
        let mix = uniform(rng, n * nb, m, bound);
        let positions = basis::init_positions(spec, rng.random())?;
        let gamma = basis::initial_gamma(spec, &positions);
        let learn_gamma = spec.kind == BasisKind::Rbf && spec.gamma_mode == GammaMode::Learnable;
        let k = positions.len();

        let p = |s: &str| format!("{name}.{s}");
        let mix = store.add(p("mix"), mix, true)?;
        let bias = store.add(p("bias"), Mat::zeros(1, m), true)?;
        let positions = store.add(p("positions"), Mat::new(1, k, positions)?, spec.trainable_positions)?;
        let log_gamma = store.add(p("log_gamma"), Mat::filled(1, 1, gamma.ln()), learn_gamma)?;
        let spline_scale = store.add(p("spline_scale"), Mat::filled(1, 1, 1.0), true)?;
        let base = if config.use_base_branch {
            let w = uniform(rng, n, m, 1.0 / (n as f64).sqrt());
            Some((
                store.add(p("base_weight"), w, true)?,
                store.add(p("base_scale"), Mat::filled(1, 1, 1.0), true)?,
            ))
        } else {
            None
        };
        let affine = if config.apply_output_ln && config.ln_affine {
            Some((
                store.add(p("ln_gain"), Mat::filled(1, m, 1.0), true)?,
                store.add(p("ln_shift"), Mat::zeros(1, m), true)?,
            ))
        } else {
            None
        };

        Ok(Self {
            config,
            name: name.to_string(),
            mix,
            bias,
            positions,
            log_gamma,
            spline_scale,
            base,
            affine,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.config.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.config.out_dim
    }

    /// Every parameter id owned by this layer.
    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.mix, self.bias, self.positions, self.log_gamma, self.spline_scale];
        if let Some((w, s)) = self.base {
            ids.extend([w, s]);
        }
        if let Some((g, b)) = self.affine {
            ids.extend([g, b]);
        }
        ids
    }

    /// `y₀ = w_s·(expand(x)·mix) + w_b·(silu(x)·base_weight) + bias`,
    /// then layer norm when enabled.
    pub fn forward<'t>(&self, s: &Session<'t>, x: DTensor<'t>) -> Result<DTensor<'t>> {
        if x.cols() != self.config.in_dim {
            return Err(Error::Shape {
                op: "kand_forward",
                left: x.shape(),
                right: (self.config.in_dim, self.config.out_dim),
            });
        }
        let params = BasisParams {
            positions: s.param(self.positions),
            log_gamma: s.param(self.log_gamma),
        };
        let expanded = expand_features(x, &params, &self.config.basis)?;
        let mut y = expanded
            .matmul(&s.param(self.mix))?
            .scale_by(&s.param(self.spline_scale))?;
        if let Some((w, scale)) = self.base {
            let base = x.silu().matmul(&s.param(w))?.scale_by(&s.param(scale))?;
            y = y.add(&base)?;
        }
        y = y.add_row(&s.param(self.bias))?;
        if self.config.apply_output_ln {
            y = y.layer_norm(LN_EPS)?;
            if let Some((gain, shift)) = self.affine {
                y = y.mul_row(&s.param(gain))?.add_row(&s.param(shift))?;
            }
        }
        Ok(y)
    }

    /// Samples the learned univariate map from input `feature` to output
    /// `unit` at `steps` evenly spaced points of `[lo, hi]`, with every other
    /// input held at zero. Bias and the output norm are not included.
    pub fn snapshot_activation(
        &self,
        store: &ParamStore,
        feature: usize,
        unit: usize,
        lo: f64,
        hi: f64,
        steps: usize,
    ) -> Result<Vec<(f64, f64)>> {
        let (n, m) = (self.config.in_dim, self.config.out_dim);
        if feature >= n || unit >= m {
            return Err(invalid(format!(
                "snapshot index ({feature}, {unit}) out of range for a {n}->{m} layer"
            )));
        }
        if steps < 2 {
            return Err(invalid(format!("snapshot needs at least 2 steps, got {steps}")));
        }
        let spec = &self.config.basis;
        let nb = spec.num_basis();
        let mix = store.value(self.mix);
        let positions = &store.value(self.positions).data;
        let gamma = store.value(self.log_gamma).data[0].exp();
        let ws = store.value(self.spline_scale).data[0];
        let base = self
            .base
            .map(|(w, s)| store.value(w).get(feature, unit) * store.value(s).data[0]);

        (0..steps)
            .map(|i| {
                let t = lo + (hi - lo) * i as f64 / (steps - 1) as f64;
                let b = basis::basis_values(spec, t, positions, gamma)?;
                let spline: f64 = b
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v * mix.get(feature * nb + j, unit))
                    .sum();
                let silu = t / (1.0 + (-t).exp());
                Ok((t, ws * spline + base.map_or(0.0, |wb| wb * silu)))
            })
            .collect()
    }
}

fn uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize, bound: f64) -> Mat {
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    Mat { rows, cols, data }
}

/// Chain of KAND blocks; an empty stack is the identity.
#[derive(Clone, Debug, Default)]
pub struct KandStack {
    pub layers: Vec<KandLayer>,
}

impl KandStack {
    pub fn new(layers: Vec<KandLayer>) -> Result<Self> {
        for w in layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(invalid(format!(
                    "KAND stack breaks between `{}` (out {}) and `{}` (in {})",
                    w[0].name,
                    w[0].out_dim(),
                    w[1].name,
                    w[1].in_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn forward<'t>(&self, s: &Session<'t>, x: DTensor<'t>) -> Result<DTensor<'t>> {
        self.layers.iter().try_fold(x, |h, layer| layer.forward(s, h))
    }
}
