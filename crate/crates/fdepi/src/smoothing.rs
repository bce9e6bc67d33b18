//! Penalized B-spline smoothing with GCV-based parameter selection.
//!
//! Each curve is fit by minimizing
//! `sum_t (y(t) - f(t))^2 + lambda * ∫ f''(u)^2 du`
//! over cubic splines with a knot at each day. One smoothing parameter is
//! shared by all curves of a dataset and selected by minimizing the mean
//! generalized cross-validation score
//! `GCV_i = T * RSS_i / (T - tr(S_lambda))^2`
//! across curves.

use crate::basis::BSplineBasis;
use crate::error::{FdaError, Result};
use crate::grid::FunctionalDataset;
use nalgebra::{Cholesky, DMatrix};

/// A fitted smoothing model for one dataset at one value of `lambda`.
#[derive(Debug, Clone)]
pub struct SmoothModel {
    basis: BSplineBasis,
    penalty: DMatrix<f64>,
    lambda: f64,
    /// Spline coefficients, one row per curve.
    coefficients: DMatrix<f64>,
    gcv_per_curve: Vec<f64>,
    gcv_mean: f64,
    trace_s: f64,
    source: FunctionalDataset,
}

impl SmoothModel {
    pub fn basis(&self) -> &BSplineBasis {
        &self.basis
    }

    pub fn penalty(&self) -> &DMatrix<f64> {
        &self.penalty
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    pub fn gcv_per_curve(&self) -> &[f64] {
        &self.gcv_per_curve
    }

    pub fn gcv_mean(&self) -> f64 {
        self.gcv_mean
    }

    /// Effective degrees of freedom, `tr(S_lambda)`.
    pub fn trace_s(&self) -> f64 {
        self.trace_s
    }

    /// Fitted curves evaluated at arbitrary points in the grid span.
    pub fn evaluate(&self, points: &[f64]) -> DMatrix<f64> {
        let phi = self.basis.evaluate_matrix(points);
        &self.coefficients * phi.transpose()
    }

    /// Fitted curves on the original daily grid, as a dataset.
    pub fn fitted(&self) -> FunctionalDataset {
        let points = self.source.grid().points();
        let values = self.evaluate(&points);
        self.source
            .with_values(values)
            .expect("fitted values share the source shape")
    }
}

struct Workspace {
    basis: BSplineBasis,
    phi: DMatrix<f64>,
    gram: DMatrix<f64>,
    penalty: DMatrix<f64>,
}

impl Workspace {
    fn build(data: &FunctionalDataset) -> Result<Self> {
        let basis = BSplineBasis::on_grid(data.grid())?;
        let phi = basis.evaluate_matrix(&data.grid().points());
        let gram = phi.transpose() * &phi;
        let penalty = basis.second_derivative_gram();
        Ok(Workspace {
            basis,
            phi,
            gram,
            penalty,
        })
    }

    /// Coefficients (n x B) and tr(S) for one lambda.
    fn solve(&self, data: &FunctionalDataset, lambda: f64) -> Result<(DMatrix<f64>, f64)> {
        let rhs = self.phi.transpose() * data.values().transpose(); // B x n
        if lambda == 0.0 {
            // Min-norm interpolation: the basis has more functions than days,
            // so plain normal equations are singular.
            let svd = self.phi.clone().svd(true, true);
            let coef = svd
                .solve(&data.values().transpose(), 1e-10)
                .map_err(|e| FdaError::numerical("fd-core", "smooth", e.to_string()))?;
            let rank = svd.singular_values.iter().filter(|s| **s > 1e-8).count();
            return Ok((coef.transpose(), rank as f64));
        }
        let a = &self.gram + self.penalty.scale(lambda);
        let chol = Cholesky::new(a).ok_or_else(|| {
            FdaError::numerical("fd-core", "smooth", "penalized system not positive definite")
        })?;
        let coef = chol.solve(&rhs);
        let trace = chol.solve(&self.gram).trace();
        Ok((coef.transpose(), trace))
    }

    fn model(&self, data: &FunctionalDataset, lambda: f64) -> Result<SmoothModel> {
        let (coefficients, trace_s) = self.solve(data, lambda)?;
        let t = data.len_t() as f64;
        let fitted = &coefficients * self.phi.transpose();
        let denom = t - trace_s;
        let gcv_per_curve: Vec<f64> = (0..data.n())
            .map(|i| {
                let rss: f64 = (0..data.len_t())
                    .map(|j| {
                        let r = data.values()[(i, j)] - fitted[(i, j)];
                        r * r
                    })
                    .sum();
                if denom > 0.0 {
                    t * rss / (denom * denom)
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        let gcv_mean = gcv_per_curve.iter().sum::<f64>() / data.n() as f64;
        Ok(SmoothModel {
            basis: self.basis.clone(),
            penalty: self.penalty.clone(),
            lambda,
            coefficients,
            gcv_per_curve,
            gcv_mean,
            trace_s,
            source: data.clone(),
        })
    }
}

/// Smooth every curve of `data` with the given roughness penalty weight.
pub fn smooth(data: &FunctionalDataset, lambda: f64) -> Result<SmoothModel> {
    if !(lambda >= 0.0) {
        return Err(FdaError::invalid(format!(
            "smoothing parameter must be >= 0, got {lambda}"
        )));
    }
    let ws = Workspace::build(data)?;
    ws.model(data, lambda)
}

/// Outcome of a GCV search over a candidate grid.
#[derive(Debug, Clone)]
pub struct LambdaSelection {
    pub lambda: f64,
    pub model: SmoothModel,
    /// Candidates skipped because their effective dof reached the sample size.
    pub warnings: Vec<String>,
    /// `(lambda, mean GCV)` for every evaluated candidate.
    pub gcv_by_lambda: Vec<(f64, f64)>,
}

/// Pick the candidate minimizing mean GCV across curves (ties toward the
/// larger lambda).
pub fn select_lambda(data: &FunctionalDataset, candidates: &[f64]) -> Result<LambdaSelection> {
    if candidates.is_empty() {
        return Err(FdaError::invalid("empty lambda candidate grid".to_string()));
    }
    if let Some(bad) = candidates.iter().find(|l| !(**l >= 0.0)) {
        return Err(FdaError::invalid(format!(
            "lambda candidates must be >= 0, got {bad}"
        )));
    }
    let ws = Workspace::build(data)?;
    let t = data.len_t() as f64;
    let mut warnings = Vec::new();
    let mut gcv_by_lambda = Vec::new();
    let mut best: Option<(f64, f64)> = None; // (lambda, gcv)
    for &lambda in candidates {
        let (coef, trace) = ws.solve(data, lambda)?;
        if trace >= t {
            warnings.push(format!(
                "lambda {lambda:e} skipped: tr(S) = {trace:.3} >= T = {t}"
            ));
            continue;
        }
        let fitted = &coef * ws.phi.transpose();
        let denom = t - trace;
        let mut gcv_sum = 0.0;
        for i in 0..data.n() {
            let rss: f64 = (0..data.len_t())
                .map(|j| {
                    let r = data.values()[(i, j)] - fitted[(i, j)];
                    r * r
                })
                .sum();
            gcv_sum += t * rss / (denom * denom);
        }
        let gcv = gcv_sum / data.n() as f64;
        gcv_by_lambda.push((lambda, gcv));
        let better = match best {
            None => true,
            Some((bl, bg)) => gcv < bg || (gcv == bg && lambda > bl),
        };
        if better {
            best = Some((lambda, gcv));
        }
    }
    let (lambda, _) = best.ok_or_else(|| {
        FdaError::invalid("every lambda candidate was skipped (tr(S) >= T)".to_string())
    })?;
    let model = ws.model(data, lambda)?;
    Ok(LambdaSelection {
        lambda,
        model,
        warnings,
        gcv_by_lambda,
    })
}

/// Default candidate grid: 41 log-spaced values spanning the interpolation
/// regime through the linear-fit regime.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..41)
        .map(|i| 10f64.powf(-4.0 + 12.0 * i as f64 / 40.0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use approx::assert_abs_diff_eq;
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(len: usize) -> TimeGrid {
        TimeGrid::new(NaiveDate::from_ymd_opt(2020, 2, 16).unwrap(), len).unwrap()
    }

    fn dataset(rows: Vec<Vec<f64>>) -> FunctionalDataset {
        let n = rows.len();
        let t = rows[0].len();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        FunctionalDataset::new(
            grid(t),
            (0..n).map(|i| format!("r{i}")).collect(),
            DMatrix::from_row_slice(n, t, &flat),
        )
        .unwrap()
    }

    #[test]
    fn lambda_zero_interpolates_a_cubic() {
        let t = 30;
        let row: Vec<f64> = (0..t)
            .map(|i| {
                let x = i as f64;
                0.02 * x * x * x - 0.5 * x * x + x + 3.0
            })
            .collect();
        let data = dataset(vec![row.clone()]);
        let model = smooth(&data, 0.0).unwrap();
        let fitted = model.fitted();
        for j in 0..t {
            assert_abs_diff_eq!(fitted.values()[(0, j)], row[j], epsilon = 1e-8);
        }
    }

    #[test]
    fn huge_lambda_gives_a_straight_line() {
        let t = 40;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let row: Vec<f64> = (0..t)
            .map(|i| (i as f64 * 0.4).sin() + rng.gen_range(-0.2..0.2))
            .collect();
        let data = dataset(vec![row]);
        let model = smooth(&data, 1e12).unwrap();
        // second derivative of the fit should vanish everywhere
        let points: Vec<f64> = (0..200).map(|i| (t - 1) as f64 * i as f64 / 199.0).collect();
        let fitted = model.evaluate(&points);
        let mut max_curv = 0.0f64;
        for w in 0..198 {
            let h = points[1] - points[0];
            let d2 = (fitted[(0, w + 2)] - 2.0 * fitted[(0, w + 1)] + fitted[(0, w)]) / (h * h);
            max_curv = max_curv.max(d2.abs());
        }
        assert!(max_curv < 1e-6, "sup |f''| = {max_curv}");
    }

    #[test]
    fn negative_lambda_rejected() {
        let data = dataset(vec![vec![0.0; 10]]);
        assert!(smooth(&data, -1.0).is_err());
    }

    #[test]
    fn smoothing_reduces_error_against_the_generating_curve() {
        // 20 noisy sinusoids; the smoothed curves must be at least twice as
        // close (mean integrated squared error) to the truth as the raw data.
        let t = 60;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rows = Vec::new();
        let mut truths = Vec::new();
        for i in 0..20 {
            let phase = i as f64 * 0.1;
            let truth: Vec<f64> = (0..t).map(|j| (j as f64 * 0.2 + phase).sin()).collect();
            let noisy: Vec<f64> = truth
                .iter()
                .map(|v| v + 0.3 * rng.gen_range(-1.0..1.0f64))
                .collect();
            truths.push(truth);
            rows.push(noisy);
        }
        let data = dataset(rows);
        let sel = select_lambda(&data, &default_lambda_grid()).unwrap();
        let fitted = sel.model.fitted();
        let mut raw_err = 0.0;
        let mut fit_err = 0.0;
        for i in 0..20 {
            for j in 0..t {
                let tr = truths[i][j];
                raw_err += (data.values()[(i, j)] - tr).powi(2);
                fit_err += (fitted.values()[(i, j)] - tr).powi(2);
            }
        }
        assert!(
            fit_err * 2.0 <= raw_err,
            "fit ISE {fit_err} vs raw ISE {raw_err}"
        );
    }

    #[test]
    fn singleton_candidate_is_chosen() {
        let data = dataset(vec![(0..12).map(|i| i as f64).collect()]);
        let sel = select_lambda(&data, &[1.0]).unwrap();
        assert_eq!(sel.lambda, 1.0);
    }

    #[test]
    fn pure_noise_selects_the_largest_candidate() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let data = dataset(rows);
        let grid_l = default_lambda_grid();
        let sel = select_lambda(&data, &grid_l).unwrap();
        assert_eq!(sel.lambda, *grid_l.last().unwrap());
    }

    #[test]
    fn noiseless_cubic_selects_the_smallest_candidate() {
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|k| {
                (0..50)
                    .map(|i| {
                        let x = i as f64 / 10.0;
                        (k + 1) as f64 * (x * x * x - 2.0 * x * x + x)
                    })
                    .collect()
            })
            .collect();
        let data = dataset(rows);
        let cands = [1e-4, 1e-2, 1.0, 1e2];
        let sel = select_lambda(&data, &cands).unwrap();
        assert_eq!(sel.lambda, 1e-4);
    }

    #[test]
    fn affine_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let row: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let scaled: Vec<f64> = row.iter().map(|v| 2.5 * v - 4.0).collect();
        let base = smooth(&dataset(vec![row]), 10.0).unwrap().fitted();
        let trans = smooth(&dataset(vec![scaled]), 10.0).unwrap().fitted();
        for j in 0..30 {
            assert_abs_diff_eq!(
                trans.values()[(0, j)],
                2.5 * base.values()[(0, j)] - 4.0,
                epsilon = 1e-8
            );
        }
    }

    #[test]
    fn smoother_matrix_is_symmetric_with_unit_bounded_spectrum() {
        let t = 25;
        let data = dataset(vec![vec![0.0; t]]);
        let ws = Workspace::build(&data).unwrap();
        for &lambda in &[1e-3, 1.0, 1e4] {
            let a = &ws.gram + ws.penalty.scale(lambda);
            let chol = Cholesky::new(a).unwrap();
            let s = &ws.phi * chol.solve(&ws.phi.transpose());
            let sym_err = (&s - s.transpose()).amax();
            assert!(sym_err < 1e-9, "asymmetry {sym_err}");
            let eig = nalgebra::SymmetricEigen::new(s);
            for ev in eig.eigenvalues.iter() {
                assert!(*ev >= -1e-10 && *ev <= 1.0 + 1e-10, "eigenvalue {ev}");
            }
        }
    }

    #[test]
    fn effective_dof_strictly_decreasing_in_lambda() {
        let data = dataset(vec![(0..30).map(|i| (i as f64 * 0.3).sin()).collect()]);
        let ws = Workspace::build(&data).unwrap();
        let mut prev = f64::INFINITY;
        for &lambda in &[1e-4, 1e-2, 1.0, 1e2, 1e4, 1e6] {
            let (_, trace) = ws.solve(&data, lambda).unwrap();
            assert!(trace < prev, "tr(S) not decreasing at lambda {lambda}");
            prev = trace;
        }
    }
}
