//! Univariate basis families with learnable control points.
//!
//! Two kinds are supported: clamped B-splines evaluated with the Cox–de Boor
//! recursion, and Gaussian radial basis functions `exp(-γ (t - c)²)`.
//! Control-point positions are initialised either evenly over the grid or at
//! standard-normal quantiles, and may be frozen or trained.

mod bspline;
mod expand;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Result};

pub use bspline::{bspline_basis, MAX_DEGREE};
pub use expand::{expand_features, BasisParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisKind {
    Bspline,
    Rbf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    EvenlySpaced,
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaMode {
    FromSpacing,
    Learnable,
}

/// Describes one basis family and how its control points start out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub kind: BasisKind,
    /// Number of control points `K`.
    pub knots: usize,
    /// Polynomial degree, B-splines only.
    pub degree: usize,
    pub grid_min: f64,
    pub grid_max: f64,
    pub init: InitStrategy,
    /// Draw Gaussian positions at random instead of at quantiles.
    pub random_init: bool,
    pub trainable_positions: bool,
    pub gamma_mode: GammaMode,
}

impl Default for BasisSpec {
    fn default() -> Self {
        Self {
            kind: BasisKind::Rbf,
            knots: 4,
            degree: 3,
            grid_min: -15.0,
            grid_max: 20.0,
            init: InitStrategy::Gaussian,
            random_init: false,
            trainable_positions: true,
            gamma_mode: GammaMode::FromSpacing,
        }
    }
}

impl BasisSpec {
    pub fn validate(&self) -> Result<()> {
        if self.knots == 0 {
            return Err(invalid("basis needs at least one control point"));
        }
        if !(self.grid_min < self.grid_max) {
            return Err(invalid(format!(
                "grid_min ({}) must be below grid_max ({})",
                self.grid_min, self.grid_max
            )));
        }
        if self.kind == BasisKind::Bspline {
            if self.degree > MAX_DEGREE {
                return Err(invalid(format!("spline degree {} exceeds {MAX_DEGREE}", self.degree)));
            }
            if self.knots < (self.degree + 1).max(2) {
                return Err(invalid(format!(
                    "degree-{} B-spline needs at least {} control points, got {}",
                    self.degree,
                    (self.degree + 1).max(2),
                    self.knots
                )));
            }
        }
        Ok(())
    }

    /// Basis responses emitted per input feature.
    pub fn num_basis(&self) -> usize {
        match self.kind {
            BasisKind::Rbf => self.knots,
            BasisKind::Bspline => self.knots + self.degree - 1,
        }
    }
}

/// Initial control-point positions, sorted ascending and inside the grid.
pub fn init_positions(spec: &BasisSpec, seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    let k = spec.knots;
    let (lo, hi) = (spec.grid_min, spec.grid_max);
    let mut positions: Vec<f64> = match spec.init {
        InitStrategy::EvenlySpaced if k == 1 => vec![(lo + hi) / 2.0],
        InitStrategy::EvenlySpaced => (0..k).map(|i| lo + i as f64 * (hi - lo) / (k - 1) as f64).collect(),
        InitStrategy::Gaussian if spec.random_init => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..k).map(|_| StandardNormal.sample(&mut rng)).collect()
        }
        InitStrategy::Gaussian => {
            let normal = Normal::standard();
            (0..k)
                .map(|i| normal.inverse_cdf((i as f64 + 0.5) / k as f64))
                .collect()
        }
    };
    positions.iter_mut().for_each(|p| *p = p.clamp(lo, hi));
    positions.sort_by(f64::total_cmp);
    Ok(positions)
}

/// RBF width from the mean spacing of the initial positions: `γ = 1 / (2 s²)`.
///
/// Falls back to the grid width when the positions do not spread.
pub fn initial_gamma(spec: &BasisSpec, positions: &[f64]) -> f64 {
    let k = positions.len();
    let spread = if k > 1 {
        let (min, max) = positions
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &p| (a.min(p), b.max(p)));
        (max - min) / (k - 1) as f64
    } else {
        0.0
    };
    let s = if spread > 0.0 {
        spread
    } else {
        spec.grid_max - spec.grid_min
    };
    1.0 / (2.0 * s * s)
}

/// Gaussian RBF responses `exp(-γ (t - c_i)²)`.
pub fn rbf_basis(t: f64, centers: &[f64], gamma: f64) -> Vec<f64> {
    centers.iter().map(|c| (-gamma * (t - c) * (t - c)).exp()).collect()
}

/// Basis values for one scalar under either kind; B-spline positions need
/// not be sorted.
pub fn basis_values(spec: &BasisSpec, t: f64, positions: &[f64], gamma: f64) -> Result<Vec<f64>> {
    match spec.kind {
        BasisKind::Rbf => Ok(rbf_basis(t, positions, gamma)),
        BasisKind::Bspline => {
            let mut sorted = positions.to_vec();
            sorted.sort_by(f64::total_cmp);
            bspline_basis(t, &sorted, spec.degree)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec(kind: BasisKind, init: InitStrategy, k: usize) -> BasisSpec {
        BasisSpec {
            kind,
            knots: k,
            grid_min: -2.0,
            grid_max: 2.0,
            init,
            ..BasisSpec::default()
        }
    }

    #[test]
    fn evenly_spaced_positions() {
        let p = init_positions(&spec(BasisKind::Rbf, InitStrategy::EvenlySpaced, 5), 0).unwrap();
        assert_eq!(p, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn gaussian_quantile_positions() {
        let p = init_positions(&spec(BasisKind::Rbf, InitStrategy::Gaussian, 2), 0).unwrap();
        // standard-normal quantiles at 0.25 and 0.75
        assert_abs_diff_eq!(p[0], -0.674_489_750_196_081_7, epsilon = 1e-9);
        assert_abs_diff_eq!(p[1], 0.674_489_750_196_081_7, epsilon = 1e-9);
    }

    #[test]
    fn single_point_positions() {
        let mut s = spec(BasisKind::Rbf, InitStrategy::EvenlySpaced, 1);
        s.grid_min = -1.0;
        s.grid_max = 3.0;
        assert_eq!(init_positions(&s, 0).unwrap(), vec![1.0]);
        s.init = InitStrategy::Gaussian;
        assert_eq!(init_positions(&s, 0).unwrap(), vec![0.0]);
    }

    #[test]
    fn gaussian_positions_clamp_to_grid() {
        let mut s = spec(BasisKind::Rbf, InitStrategy::Gaussian, 10);
        s.grid_min = -0.5;
        s.grid_max = 0.5;
        let p = init_positions(&s, 0).unwrap();
        assert!(p.iter().all(|x| (-0.5..=0.5).contains(x)));
        assert!(p.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn random_gaussian_is_seeded() {
        let mut s = spec(BasisKind::Rbf, InitStrategy::Gaussian, 6);
        s.random_init = true;
        assert_eq!(init_positions(&s, 3).unwrap(), init_positions(&s, 3).unwrap());
        assert_ne!(init_positions(&s, 3).unwrap(), init_positions(&s, 4).unwrap());
    }

    #[test]
    fn invalid_specs() {
        let mut s = spec(BasisKind::Rbf, InitStrategy::Gaussian, 0);
        assert!(init_positions(&s, 0).is_err());
        s.knots = 3;
        s.grid_min = 2.0;
        assert!(s.validate().is_err());
        let s = spec(BasisKind::Bspline, InitStrategy::Gaussian, 3);
        assert!(s.validate().is_err(), "cubic spline with 3 points");
    }

    #[test]
    fn rbf_values() {
        assert_eq!(rbf_basis(0.3, &[0.3], 2.0), vec![1.0]);
        assert_abs_diff_eq!(rbf_basis(1.0, &[0.0], 1.0)[0], 0.367_879_441_171_442_3, epsilon = 1e-15);
        let v = rbf_basis(0.5, &[-1.0, 0.0, 1.0], 0.5);
        let expected = [(-1.125f64).exp(), (-0.125f64).exp(), (-0.125f64).exp()];
        for (a, e) in v.iter().zip(expected) {
            assert_abs_diff_eq!(*a, e, epsilon = 1e-15);
        }
    }

    #[test]
    fn gamma_follows_spacing() {
        let s = spec(BasisKind::Rbf, InitStrategy::EvenlySpaced, 5);
        assert_abs_diff_eq!(initial_gamma(&s, &[-2.0, -1.0, 0.0, 1.0, 2.0]), 0.5);
        assert_abs_diff_eq!(initial_gamma(&s, &[0.0]), 1.0 / 32.0);
    }
}
