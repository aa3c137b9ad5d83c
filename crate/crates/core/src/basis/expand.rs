use super::bspline::{self, Dual, Scalar, MAX_DEGREE};
use super::{BasisKind, BasisSpec};
use crate::diffcore::{CustomOp, DTensor};
use crate::error::{invalid, Error, Result};

/// Tape handles for one layer's basis parameters.
#[derive(Clone, Copy, Debug)]
pub struct BasisParams<'t> {
    /// `1 x K` control-point positions.
    pub positions: DTensor<'t>,
    /// `1 x 1` log of the RBF width; unused by B-splines.
    pub log_gamma: DTensor<'t>,
}

/// Expands every feature of `x` (`m x n`) into its basis responses.
///
/// The output is `m x (n · B)` in feature-major order: columns
/// `f·B .. f·B + B` hold feature `f`, with `B = spec.num_basis()`.
pub fn expand_features<'t>(x: DTensor<'t>, params: &BasisParams<'t>, spec: &BasisSpec) -> Result<DTensor<'t>> {
    let k = spec.knots;
    if params.positions.shape() != (1, k) {
        return Err(Error::Shape {
            op: "expand_features(positions)",
            left: (1, k),
            right: params.positions.shape(),
        });
    }
    if params.log_gamma.shape() != (1, 1) {
        return Err(Error::Shape {
            op: "expand_features(log_gamma)",
            left: (1, 1),
            right: params.log_gamma.shape(),
        });
    }
    let (m, n) = x.shape();
    let positions = params.positions.value();
    let xs = x.value();
    let tape = x.tape();

    match spec.kind {
        BasisKind::Rbf => {
            let gamma = params.log_gamma.item().exp();
            let mut out = Vec::with_capacity(m * n * k);
            for &v in &xs {
                out.extend(positions.iter().map(|c| (-gamma * (v - c) * (v - c)).exp()));
            }
            let op = RbfExpand { k, gamma };
            tape.custom(&[x, params.positions, params.log_gamma], m, n * k, out, Box::new(op))
        }
        BasisKind::Bspline => {
            let degree = spec.degree;
            if degree > MAX_DEGREE {
                return Err(invalid(format!("spline degree {degree} exceeds {MAX_DEGREE}")));
            }
            let mut perm: Vec<usize> = (0..k).collect();
            perm.sort_by(|&a, &b| positions[a].total_cmp(&positions[b]));
            let sorted: Vec<f64> = perm.iter().map(|&i| positions[i]).collect();
            bspline::check_knots(&sorted, degree)?;
            let ext = bspline::extended_knots(&sorted, degree);
            let nb = k + degree - 1;
            let (lo, hi) = (sorted[0], sorted[k - 1]);

            let mut out = vec![0.0; m * n * nb];
            let mut local = [0.0; MAX_DEGREE + 1];
            for (e, &v) in xs.iter().enumerate() {
                let t = v.clamp(lo, hi);
                let s = bspline::find_span(&ext, degree, t).expect("span exists for checked knots");
                bspline::span_basis(s, t, degree, |i| ext[i], &mut local);
                let base = e * nb + s - degree;
                out[base..=base + degree].copy_from_slice(&local[..=degree]);
            }
            let op = BsplineExpand {
                k,
                degree,
                perm,
                ext,
                lo,
                hi,
            };
            tape.custom(&[x, params.positions], m, n * nb, out, Box::new(op))
        }
    }
}

struct RbfExpand {
    k: usize,
    gamma: f64,
}

impl CustomOp for RbfExpand {
    fn name(&self) -> &'static str {
        "rbf_expand"
    }

    fn backward(&self, inputs: &[&[f64]], grad_out: &[f64], needs: &[bool]) -> Vec<Option<Vec<f64>>> {
        let (xs, centers) = (inputs[0], inputs[1]);
        let (k, gamma) = (self.k, self.gamma);
        let mut gx = vec![0.0; xs.len()];
        let mut gc = vec![0.0; k];
        let mut g_log_gamma = 0.0;
        for (e, &v) in xs.iter().enumerate() {
            let g = &grad_out[e * k..(e + 1) * k];
            for (i, &c) in centers.iter().enumerate() {
                let d = v - c;
                let y = (-gamma * d * d).exp();
                let gy = g[i] * y;
                gx[e] -= 2.0 * gamma * d * gy;
                gc[i] += 2.0 * gamma * d * gy;
                // d/d(log γ) = γ · d/dγ
                g_log_gamma -= gamma * d * d * gy;
            }
        }
        vec![
            needs[0].then_some(gx),
            needs[1].then_some(gc),
            needs[2].then_some(vec![g_log_gamma]),
        ]
    }
}

struct BsplineExpand {
    k: usize,
    degree: usize,
    /// `perm[j]` is the parameter index of the j-th smallest position.
    perm: Vec<usize>,
    ext: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl CustomOp for BsplineExpand {
    fn name(&self) -> &'static str {
        "bspline_expand"
    }

    fn backward(&self, inputs: &[&[f64]], grad_out: &[f64], needs: &[bool]) -> Vec<Option<Vec<f64>>> {
        let xs = inputs[0];
        let (k, p) = (self.k, self.degree);
        let nb = k + p - 1;
        let mut gx = vec![0.0; xs.len()];
        let mut g_sorted = vec![0.0; k];
        let mut duals = [Dual::zero(); MAX_DEGREE + 1];
        let sorted_index = |ext_index: usize| ext_index.saturating_sub(p).min(k - 1);

        for (e, &v) in xs.iter().enumerate() {
            let t = v.clamp(self.lo, self.hi);
            let s = bspline::find_span(&self.ext, p, t).expect("span exists for checked knots");
            bspline::span_basis_dual(s, t, p, &self.ext, &mut duals);
            let g = &grad_out[e * nb + s - p..=e * nb + s];

            let mut dt = 0.0;
            for r in 0..=p {
                dt += g[r] * duals[r].d[0];
            }
            // A clamped input sits on the boundary knot and moves with it.
            if v < self.lo {
                g_sorted[0] += dt;
            } else if v > self.hi {
                g_sorted[k - 1] += dt;
            } else {
                gx[e] += dt;
            }

            for q in 1..=2 * p {
                let mut dk = 0.0;
                for r in 0..=p {
                    dk += g[r] * duals[r].d[1 + q];
                }
                g_sorted[sorted_index(s - p + q)] += dk;
            }
        }

        let mut g_pos = vec![0.0; k];
        for (j, &i) in self.perm.iter().enumerate() {
            g_pos[i] = g_sorted[j];
        }
        vec![needs[0].then_some(gx), needs[1].then_some(g_pos)]
    }
}
