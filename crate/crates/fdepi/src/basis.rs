//! Cubic B-spline bases and roughness penalties.
//!
//! Two constructors cover every use in the crate: [`BSplineBasis::on_grid`]
//! places one knot per day (the smoothing-spline basis, dimension `T + 2`),
//! while [`BSplineBasis::with_dimension`] spreads a requested number of
//! basis functions uniformly over an interval (coefficient bases for
//! regression terms).
//!
//! The roughness penalty is the Gram matrix of second derivatives,
//! `R[i][j] = ∫ B_i''(u) B_j''(u) du`. For cubic splines the integrand is
//! piecewise quadratic, so two-point Gauss-Legendre per knot interval is
//! exact.

use crate::error::{FdaError, Result};
use crate::grid::TimeGrid;
use nalgebra::DMatrix;

const ORDER: usize = 4; // cubic

#[derive(Debug, Clone, PartialEq)]
pub struct BSplineBasis {
    /// Full knot vector including repeated boundary knots.
    knots: Vec<f64>,
    dim: usize,
    lo: f64,
    hi: f64,
}

impl BSplineBasis {
    /// Smoothing basis with an interior knot at each grid day; dimension `T + 2`.
    pub fn on_grid(grid: &TimeGrid) -> Result<Self> {
        if grid.len() < ORDER {
            return Err(FdaError::invalid(
                "insufficient grid for cubic basis".to_string(),
            ));
        }
        let t = grid.len();
        let interior: Vec<f64> = (1..=t - 2).map(|i| i as f64).collect();
        Ok(Self::from_interior(0.0, (t - 1) as f64, &interior))
    }

    /// Basis of `dim` functions with uniformly spaced interior knots on `[lo, hi]`.
    pub fn with_dimension(lo: f64, hi: f64, dim: usize) -> Result<Self> {
        if dim < ORDER {
            return Err(FdaError::invalid(format!(
                "cubic basis needs dimension >= {ORDER}, got {dim}"
            )));
        }
        if !(hi > lo) {
            return Err(FdaError::invalid(format!(
                "basis interval [{lo}, {hi}] is empty"
            )));
        }
        let m = dim - ORDER;
        let interior: Vec<f64> = (1..=m)
            .map(|j| lo + (hi - lo) * j as f64 / (m + 1) as f64)
            .collect();
        Ok(Self::from_interior(lo, hi, &interior))
    }

    fn from_interior(lo: f64, hi: f64, interior: &[f64]) -> Self {
        let mut knots = Vec::with_capacity(interior.len() + 2 * ORDER);
        knots.extend(std::iter::repeat(lo).take(ORDER));
        knots.extend_from_slice(interior);
        knots.extend(std::iter::repeat(hi).take(ORDER));
        let dim = interior.len() + ORDER;
        BSplineBasis { knots, dim, lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Index of the knot interval containing `x` (clamped to the domain).
    fn interval_of(&self, x: f64) -> usize {
        let x = x.clamp(self.lo, self.hi);
        // rightmost i with knots[i] <= x < knots[i+1]; at x == hi, the last
        // non-degenerate interval.
        let last = self.knots.len() - ORDER; // index of the first `hi` knot
        if x >= self.hi {
            // last interval with positive width
            let mut i = last - 1;
            while self.knots[i + 1] <= self.knots[i] {
                i -= 1;
            }
            return i;
        }
        let mut lo = ORDER - 1;
        let mut hi = last;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.knots[mid] <= x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Values of all basis functions at `x` (a dense row of length `dim`).
    pub fn eval(&self, x: f64) -> Vec<f64> {
        self.eval_degree(x, 3)
    }

    /// Values of all B-splines of the given degree (<= 3) built on the same
    /// knot vector. Used internally by the derivative routines.
    fn eval_degree(&self, x: f64, degree: usize) -> Vec<f64> {
        let k = degree + 1;
        let nb = self.knots.len() - k;
        let mut out = vec![0.0; nb];
        let x = x.clamp(self.lo, self.hi);
        let ell = self.interval_of(x);
        // Cox–de Boor triangle local to the containing interval.
        let mut vals = vec![0.0; k];
        vals[0] = 1.0;
        for d in 1..k {
            let mut saved = 0.0;
            for r in 0..d {
                let j = ell - d + 1 + r; // basis index of entry r at this level
                let den = self.knots[j + d] - self.knots[j];
                let term = if den > 0.0 { vals[r] / den } else { 0.0 };
                vals[r] = saved + (self.knots[j + d] - x) * term;
                saved = (x - self.knots[j]) * term;
            }
            vals[d] = saved;
        }
        for (r, v) in vals.iter().enumerate() {
            let idx = ell - degree + r;
            if idx < nb {
                out[idx] = *v;
            }
        }
        out
    }

    /// Second derivatives of all basis functions at `x`.
    pub fn eval_second_derivative(&self, x: f64) -> Vec<f64> {
        // B''_{j,4} in terms of degree-1 B-splines on the same knots.
        let lower = self.eval_degree(x, 1);
        let mut out = vec![0.0; self.dim];
        for (j, o) in out.iter_mut().enumerate() {
            // first derivative coefficients: 3 * (c_{j} level shift)
            // second derivative: apply the difference formula twice.
            let d2 = self.second_derivative_from_lower(j, &lower);
            *o = d2;
        }
        out
    }

    fn second_derivative_from_lower(&self, j: usize, lower: &[f64]) -> f64 {
        let t = &self.knots;
        // B''_{j,k} = (k-1)(k-2) * sum of degree k-2 B-splines with divided
        // difference weights; expanded for k = 4 (cubic).
        let k = ORDER;
        let a = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
        // first level: B'_{j,4} = 3 [ B_{j,3}/(t_{j+3}-t_j) - B_{j+1,3}/(t_{j+4}-t_{j+1}) ]
        // second level applied to each degree-3 term.
        let c1 = (k - 1) as f64;
        let c2 = (k - 2) as f64;
        let b = |i: usize| -> f64 {
            if i < lower.len() {
                lower[i]
            } else {
                0.0
            }
        };
        let term1 = a(1.0, t[j + 3] - t[j])
            * (a(b(j), t[j + 2] - t[j]) - a(b(j + 1), t[j + 3] - t[j + 1]));
        let term2 = a(1.0, t[j + 4] - t[j + 1])
            * (a(b(j + 1), t[j + 3] - t[j + 1]) - a(b(j + 2), t[j + 4] - t[j + 2]));
        c1 * c2 * (term1 - term2)
    }

    /// Basis matrix with one row per evaluation point.
    pub fn evaluate_matrix(&self, points: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(points.len(), self.dim);
        for (r, &x) in points.iter().enumerate() {
            let row = self.eval(x);
            for (c, v) in row.iter().enumerate() {
                m[(r, c)] = *v;
            }
        }
        m
    }

    /// Gram matrix of second derivatives (the roughness penalty), exact.
    pub fn second_derivative_gram(&self) -> DMatrix<f64> {
        let mut r = DMatrix::zeros(self.dim, self.dim);
        let g = 0.5 / 3.0_f64.sqrt();
        for w in self.knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let mid = 0.5 * (a + b);
            let half = 0.5 * (b - a);
            for &x in &[mid - half * 2.0 * g, mid + half * 2.0 * g] {
                let d2 = self.eval_second_derivative(x);
                for i in 0..self.dim {
                    if d2[i] == 0.0 {
                        continue;
                    }
                    for j in 0..self.dim {
                        r[(i, j)] += half * d2[i] * d2[j];
                    }
                }
            }
        }
        // enforce exact symmetry against round-off
        for i in 0..self.dim {
            for j in 0..i {
                let v = 0.5 * (r[(i, j)] + r[(j, i)]);
                r[(i, j)] = v;
                r[(j, i)] = v;
            }
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use chrono::NaiveDate;

    fn grid(len: usize) -> TimeGrid {
        TimeGrid::new(NaiveDate::from_ymd_opt(2020, 2, 16).unwrap(), len).unwrap()
    }

    #[test]
    fn dimension_is_t_plus_2() {
        assert_eq!(BSplineBasis::on_grid(&grid(75)).unwrap().dim(), 77);
        assert_eq!(BSplineBasis::on_grid(&grid(4)).unwrap().dim(), 6);
    }

    #[test]
    fn three_day_grid_is_rejected() {
        let err = BSplineBasis::on_grid(&grid(3)).unwrap_err();
        assert!(err.to_string().contains("insufficient grid for cubic basis"));
    }

    #[test]
    fn partition_of_unity() {
        let basis = BSplineBasis::on_grid(&grid(10)).unwrap();
        for i in 0..=90 {
            let x = i as f64 * 0.1;
            let s: f64 = basis.eval(x).iter().sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn reproduces_cubics_exactly() {
        // Fit a cubic polynomial by interpolation-free least squares on a
        // dense grid; the residual must vanish because cubics are in the span.
        let basis = BSplineBasis::with_dimension(0.0, 9.0, 8).unwrap();
        let xs: Vec<f64> = (0..200).map(|i| 9.0 * i as f64 / 199.0).collect();
        let phi = basis.evaluate_matrix(&xs);
        let y = nalgebra::DVector::from_iterator(
            xs.len(),
            xs.iter().map(|&x| 0.3 * x * x * x - x * x + 2.0 * x - 5.0),
        );
        let coef = phi
            .clone()
            .svd(true, true)
            .solve(&y, 1e-12)
            .expect("lstsq");
        let resid = &phi * coef - y;
        assert!(resid.amax() < 1e-8, "max residual {}", resid.amax());
    }

    #[test]
    fn second_derivative_matches_finite_differences() {
        let basis = BSplineBasis::on_grid(&grid(12)).unwrap();
        let h = 1e-4;
        for &x in &[0.5, 2.3, 5.0, 8.7, 10.2] {
            let d2 = basis.eval_second_derivative(x);
            let up = basis.eval(x + h);
            let dn = basis.eval(x - h);
            let at = basis.eval(x);
            for j in 0..basis.dim() {
                let fd = (up[j] - 2.0 * at[j] + dn[j]) / (h * h);
                assert_abs_diff_eq!(d2[j], fd, epsilon = 1e-3);
            }
        }
    }

    #[test]
    fn penalty_annihilates_linear_functions() {
        let basis = BSplineBasis::on_grid(&grid(8)).unwrap();
        let r = basis.second_derivative_gram();
        // coefficients of the linear function x on the spline space: obtained
        // by least squares on a dense grid, then check c'Rc ~ 0.
        let xs: Vec<f64> = (0..300).map(|i| 7.0 * i as f64 / 299.0).collect();
        let phi = basis.evaluate_matrix(&xs);
        let y = nalgebra::DVector::from_iterator(xs.len(), xs.iter().map(|&x| 3.0 * x + 1.0));
        let coef = phi.svd(true, true).solve(&y, 1e-12).unwrap();
        let energy = (coef.transpose() * &r * &coef)[(0, 0)];
        assert!(energy.abs() < 1e-8, "bending energy of a line: {energy}");
    }

    #[test]
    fn penalty_positive_semidefinite() {
        let basis = BSplineBasis::on_grid(&grid(9)).unwrap();
        let r = basis.second_derivative_gram();
        let eig = nalgebra::SymmetricEigen::new(r);
        let min = eig.eigenvalues.min();
        assert!(min > -1e-9, "negative eigenvalue {min}");
    }
}
