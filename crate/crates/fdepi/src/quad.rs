//! Trapezoidal quadrature on uniform grids.
//!
//! The daily grids used throughout the crate are uniform and dense, so the
//! trapezoidal rule is the quadrature backbone for every integral term.

use crate::error::{FdaError, Result};
use crate::grid::TimeGrid;

/// Trapezoidal integral of unit-spaced samples.
pub fn trapezoid(samples: &[f64]) -> f64 {
    if samples.len() < 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    for w in samples.windows(2) {
        acc += 0.5 * (w[0] + w[1]);
    }
    acc
}

/// Trapezoidal integral with explicit abscissae (possibly non-unit spacing).
pub fn trapezoid_at(points: &[f64], samples: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 1..samples.len() {
        acc += 0.5 * (samples[i] + samples[i - 1]) * (points[i] - points[i - 1]);
    }
    acc
}

/// Quadrature weights `w` such that `trapezoid(f) == sum w[t] * f[t]`.
pub fn trapezoid_weights(len: usize) -> Vec<f64> {
    match len {
        0 => vec![],
        1 => vec![0.0],
        _ => {
            let mut w = vec![1.0; len];
            w[0] = 0.5;
            w[len - 1] = 0.5;
            w
        }
    }
}

/// Integral of a sampled curve over the span of `grid`.
pub fn integrate(samples: &[f64], grid: &TimeGrid) -> Result<f64> {
    if samples.len() != grid.len() {
        return Err(FdaError::dimension(format!(
            "{} samples on a grid of length {}",
            samples.len(),
            grid.len()
        )));
    }
    Ok(trapezoid(samples))
}
