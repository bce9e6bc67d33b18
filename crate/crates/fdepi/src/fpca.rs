//! Functional principal components on the daily grid.
//!
//! The sample covariance surface is discretized on the grid and folded with
//! trapezoidal quadrature weights, so the eigenfunctions come out
//! orthonormal with respect to the integral inner product
//! `<f, g> = ∫ f(t) g(t) dt` rather than the plain Euclidean one.

use crate::error::{FdaError, Result};
use crate::grid::FunctionalDataset;
use crate::quad::trapezoid_weights;
use nalgebra::DMatrix;

#[derive(Debug, Clone)]
pub struct FpcExpansion {
    /// Pointwise mean curve subtracted before the expansion.
    pub mean: Vec<f64>,
    /// Eigenfunctions on the grid, one row per component.
    pub eigenfunctions: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    /// Scores `xi[i][m] = ∫ (x_i - mean) phi_m`, `n x M`.
    pub scores: DMatrix<f64>,
    /// Cumulative fractions of variance explained by the first m components.
    pub variance_explained: Vec<f64>,
    /// Number of retained components.
    pub m: usize,
}

impl FpcExpansion {
    /// Reconstruct curves from the retained components.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let n = self.scores.nrows();
        let t = self.mean.len();
        let mut out = DMatrix::zeros(n, t);
        for i in 0..n {
            for tt in 0..t {
                let mut v = self.mean[tt];
                for m in 0..self.m {
                    v += self.scores[(i, m)] * self.eigenfunctions[(m, tt)];
                }
                out[(i, tt)] = v;
            }
        }
        out
    }
}

/// Eigen-decompose the quadrature-weighted sample covariance and keep the
/// smallest number of components reaching `variance_target`.
pub fn fpc(data: &FunctionalDataset, variance_target: f64) -> Result<FpcExpansion> {
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(FdaError::invalid(format!(
            "variance target must lie in (0, 1], got {variance_target}"
        )));
    }
    let n = data.n();
    if n < 3 {
        return Err(FdaError::invalid(format!(
            "functional PCA needs at least 3 curves, got {n}"
        )));
    }
    let t = data.len_t();
    let mean = data.mean_curve();
    let mut centered = data.values().clone();
    for i in 0..n {
        for tt in 0..t {
            centered[(i, tt)] -= mean[tt];
        }
    }
    let weights = trapezoid_weights(t);
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    // C = X'X / (n-1); eigenproblem of W^{1/2} C W^{1/2}
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let mut a = cov;
    for i in 0..t {
        for j in 0..t {
            a[(i, j)] *= sqrt_w[i] * sqrt_w[j];
        }
    }
    let eig = nalgebra::SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|x, y| {
        eig.eigenvalues[*y]
            .partial_cmp(&eig.eigenvalues[*x])
            .unwrap()
            .then(x.cmp(y))
    });
    let total: f64 = eig.eigenvalues.iter().map(|e| e.max(0.0)).sum();
    if total <= 0.0 {
        return Err(FdaError::numerical(
            "feat-select",
            "fpc",
            "covariance surface has no variance",
        ));
    }
    let mut cumulative = Vec::new();
    let mut acc = 0.0;
    let mut m = 0;
    for &idx in &order {
        acc += eig.eigenvalues[idx].max(0.0);
        cumulative.push(acc / total);
        m += 1;
        if acc / total >= variance_target {
            break;
        }
    }
    let mut eigenfunctions = DMatrix::zeros(m, t);
    let mut eigenvalues = Vec::with_capacity(m);
    for (row, &idx) in order.iter().take(m).enumerate() {
        eigenvalues.push(eig.eigenvalues[idx].max(0.0));
        let u = eig.eigenvectors.column(idx);
        // phi = W^{-1/2} u, sign-fixed so the entry of largest magnitude is
        // positive (deterministic output regardless of the eigensolver).
        let mut phi: Vec<f64> = (0..t).map(|tt| u[tt] / sqrt_w[tt].max(1e-300)).collect();
        let pivot = (0..t)
            .max_by(|x, y| phi[*x].abs().partial_cmp(&phi[*y].abs()).unwrap())
            .unwrap();
        if phi[pivot] < 0.0 {
            for v in &mut phi {
                *v = -*v;
            }
        }
        for tt in 0..t {
            eigenfunctions[(row, tt)] = phi[tt];
        }
    }
    // scores via quadrature-weighted inner products
    let mut scores = DMatrix::zeros(n, m);
    for i in 0..n {
        for mm in 0..m {
            let mut s = 0.0;
            for tt in 0..t {
                s += weights[tt] * centered[(i, tt)] * eigenfunctions[(mm, tt)];
            }
            scores[(i, mm)] = s;
        }
    }
    Ok(FpcExpansion {
        mean,
        eigenfunctions,
        eigenvalues,
        scores,
        variance_explained: cumulative,
        m,
    })
}
