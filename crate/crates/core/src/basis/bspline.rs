//! Cox–de Boor evaluation on a clamped knot vector.
//!
//! Control-point positions `k_0 ≤ … ≤ k_{K-1}` are extended by repeating
//! each endpoint `p` more times, giving `K + 2p` knots and `K + p - 1`
//! basis functions of degree `p`. Only the `p + 1` functions that are
//! non-zero on the active knot span are evaluated; the rest are exactly 0.

use std::ops::{Add, Div, Mul, Sub};

use crate::error::{invalid, Result};

/// Highest supported spline degree.
pub const MAX_DEGREE: usize = 5;

const TANGENTS: usize = 2 * MAX_DEGREE + 3;

pub(crate) trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn val(&self) -> f64;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn val(&self) -> f64 {
        *self
    }
}

/// Forward-mode number carrying derivatives w.r.t. `t` (slot 0) and the
/// local knots (slots `1..`).
#[derive(Clone, Copy, Debug)]
pub(crate) struct Dual {
    pub v: f64,
    pub d: [f64; TANGENTS],
}

impl Dual {
    fn constant(v: f64) -> Self {
        Self { v, d: [0.0; TANGENTS] }
    }

    fn variable(v: f64, slot: usize) -> Self {
        let mut d = [0.0; TANGENTS];
        d[slot] = 1.0;
        Self { v, d }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(mut self, o: Dual) -> Dual {
        self.v += o.v;
        self.d.iter_mut().zip(o.d).for_each(|(a, b)| *a += b);
        self
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(mut self, o: Dual) -> Dual {
        self.v -= o.v;
        self.d.iter_mut().zip(o.d).for_each(|(a, b)| *a -= b);
        self
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        let mut d = [0.0; TANGENTS];
        for i in 0..TANGENTS {
            d[i] = self.d[i] * o.v + self.v * o.d[i];
        }
        Dual { v: self.v * o.v, d }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let inv = 1.0 / o.v;
        let v = self.v * inv;
        let mut d = [0.0; TANGENTS];
        for i in 0..TANGENTS {
            d[i] = (self.d[i] - v * o.d[i]) * inv;
        }
        Dual { v, d }
    }
}

impl Scalar for Dual {
    fn zero() -> Self {
        Dual::constant(0.0)
    }
    fn one() -> Self {
        Dual::constant(1.0)
    }
    fn val(&self) -> f64 {
        self.v
    }
}

/// Clamped extension of sorted control points.
pub(crate) fn extended_knots(sorted: &[f64], degree: usize) -> Vec<f64> {
    let (first, last) = (sorted[0], sorted[sorted.len() - 1]);
    let mut ext = Vec::with_capacity(sorted.len() + 2 * degree);
    ext.extend(std::iter::repeat_n(first, degree));
    ext.extend_from_slice(sorted);
    ext.extend(std::iter::repeat_n(last, degree));
    ext
}

/// Index `s` of the non-degenerate span `[ext[s], ext[s+1])` containing `t`;
/// `t` equal to the last knot resolves to the last non-degenerate span.
pub(crate) fn find_span(ext: &[f64], degree: usize, t: f64) -> Option<usize> {
    let num_basis = ext.len() - degree - 1;
    (degree..num_basis).rev().find(|&i| ext[i] <= t && ext[i] < ext[i + 1])
}

/// Non-zero basis values on span `s`: `out[r] = B_{s-p+r, p}(t)`.
///
/// `knot(i)` must return the extended knot `i` for `s+1-p ≤ i ≤ s+p`.
pub(crate) fn span_basis<T: Scalar>(s: usize, t: T, degree: usize, knot: impl Fn(usize) -> T, out: &mut [T]) {
    let mut left = [T::zero(); MAX_DEGREE + 1];
    let mut right = [T::zero(); MAX_DEGREE + 1];
    out[0] = T::one();
    for j in 1..=degree {
        left[j] = t - knot(s + 1 - j);
        right[j] = knot(s + j) - t;
        let mut saved = T::zero();
        for r in 0..j {
            // denominator is the knot difference ext[s+r+1] - ext[s+r+1-j]; 0/0 → 0
            let denom = right[r + 1] + left[j - r];
            let temp = if denom.val() == 0.0 { T::zero() } else { out[r] / denom };
            out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        out[j] = saved;
    }
}

/// Values and derivatives of the non-zero basis functions on span `s`.
///
/// Tangent slot 0 is `t`; slot `1 + q` is extended knot `s - p + q`.
pub(crate) fn span_basis_dual(s: usize, t: f64, degree: usize, ext: &[f64], out: &mut [Dual]) {
    let base = s - degree;
    span_basis(
        s,
        Dual::variable(t, 0),
        degree,
        |i| Dual::variable(ext[i], 1 + i - base),
        out,
    );
}

pub(crate) fn check_knots(knots: &[f64], degree: usize) -> Result<()> {
    if degree > MAX_DEGREE {
        return Err(invalid(format!("spline degree {degree} exceeds {MAX_DEGREE}")));
    }
    if knots.len() < 2 {
        return Err(invalid(format!("B-spline needs at least 2 knots, got {}", knots.len())));
    }
    if knots.iter().any(|k| !k.is_finite()) {
        return Err(invalid("knots must be finite"));
    }
    if knots.windows(2).any(|w| w[0] > w[1]) {
        return Err(invalid("knots must be sorted ascending"));
    }
    if knots[0] == knots[knots.len() - 1] {
        return Err(invalid("knots span an empty interval"));
    }
    Ok(())
}

/// All `K + p - 1` B-spline basis values at `t` for sorted `knots`.
///
/// `t` outside `[knots[0], knots[K-1]]` is clamped to the nearest end.
pub fn bspline_basis(t: f64, knots: &[f64], degree: usize) -> Result<Vec<f64>> {
    check_knots(knots, degree)?;
    let ext = extended_knots(knots, degree);
    let t = t.clamp(knots[0], knots[knots.len() - 1]);
    let s = find_span(&ext, degree, t).expect("non-empty knot range has a span");
    let mut local = [0.0; MAX_DEGREE + 1];
    span_basis(s, t, degree, |i| ext[i], &mut local);
    let mut out = vec![0.0; knots.len() + degree - 1];
    out[s - degree..=s].copy_from_slice(&local[..=degree]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Textbook recursion over the full extended knot vector.
    fn naive(i: usize, p: usize, t: f64, ext: &[f64]) -> f64 {
        if p == 0 {
            return if ext[i] <= t && t < ext[i + 1] { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        let d1 = ext[i + p] - ext[i];
        if d1 != 0.0 {
            v += (t - ext[i]) / d1 * naive(i, p - 1, t, ext);
        }
        let d2 = ext[i + p + 1] - ext[i + 1];
        if d2 != 0.0 {
            v += (ext[i + p + 1] - t) / d2 * naive(i + 1, p - 1, t, ext);
        }
        v
    }

    #[test]
    fn degree_zero_indicator() {
        assert_eq!(bspline_basis(0.5, &[0.0, 1.0, 2.0], 0).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn quadratic_midpoint_pattern() {
        let knots: Vec<f64> = (0..7).map(f64::from).collect();
        let b = bspline_basis(3.5, &knots, 2).unwrap();
        let ext = extended_knots(&knots, 2);
        for (i, v) in b.iter().enumerate() {
            assert!((v - naive(i, 2, 3.5, &ext)).abs() < 1e-14);
        }
        let nz: Vec<f64> = b.iter().copied().filter(|v| *v != 0.0).collect();
        assert_eq!(nz.len(), 3);
        for (a, e) in nz.iter().zip([0.125, 0.75, 0.125]) {
            assert!((a - e).abs() < 1e-14);
        }
    }

    #[test]
    fn matches_naive_recursion_on_irregular_knots() {
        let knots = [-1.3, -0.2, 0.0, 0.45, 1.7, 2.0];
        for p in 0..=3 {
            let ext = extended_knots(&knots, p);
            for step in 0..200 {
                let t = -1.3 + 3.3 * step as f64 / 200.0;
                let b = bspline_basis(t, &knots, p).unwrap();
                for (i, v) in b.iter().enumerate() {
                    assert!((v - naive(i, p, t, &ext)).abs() < 1e-12, "p={p} t={t} i={i}");
                }
            }
        }
    }

    #[test]
    fn right_endpoint_and_clamping() {
        let knots = [0.0, 1.0, 2.0, 3.0];
        let at_end = bspline_basis(3.0, &knots, 3).unwrap();
        assert_eq!(at_end.last().copied(), Some(1.0));
        assert_eq!(bspline_basis(10.0, &knots, 3).unwrap(), at_end);
        let below = bspline_basis(-4.0, &knots, 3).unwrap();
        assert_eq!(below[0], 1.0);
    }

    #[test]
    fn malformed_knots_are_rejected() {
        assert!(bspline_basis(0.0, &[1.0, 0.0], 1).is_err());
        assert!(bspline_basis(0.0, &[1.0], 1).is_err());
        assert!(bspline_basis(0.0, &[1.0, 1.0], 1).is_err());
        assert!(bspline_basis(0.0, &[0.0, 1.0], MAX_DEGREE + 1).is_err());
    }

    #[test]
    fn dual_derivatives_match_differences() {
        let knots = [-1.0, -0.3, 0.4, 1.1, 2.0];
        let p = 3;
        let ext = extended_knots(&knots, p);
        let t = 0.61;
        let s = find_span(&ext, p, t).unwrap();
        let mut duals = [Dual::zero(); MAX_DEGREE + 1];
        span_basis_dual(s, t, p, &ext, &mut duals);
        let h = 1e-6;
        let eval = |t: f64, ext: &[f64]| {
            let mut out = [0.0; MAX_DEGREE + 1];
            span_basis(s, t, p, |i| ext[i], &mut out);
            out
        };
        let plus = eval(t + h, &ext);
        let minus = eval(t - h, &ext);
        for r in 0..=p {
            let fd = (plus[r] - minus[r]) / (2.0 * h);
            assert!((duals[r].d[0] - fd).abs() < 1e-7);
        }
        // knot slot for the interior knot at ext index s
        let mut e1 = ext.clone();
        e1[s] += h;
        let mut e2 = ext.clone();
        e2[s] -= h;
        let (plus, minus) = (eval(t, &e1), eval(t, &e2));
        for r in 0..=p {
            let fd = (plus[r] - minus[r]) / (2.0 * h);
            assert!((duals[r].d[1 + p] - fd).abs() < 1e-7);
        }
    }
}
