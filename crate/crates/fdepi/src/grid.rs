//! Daily time grids and functional datasets.
//!
//! Every curve in this crate lives on a [`TimeGrid`]: consecutive calendar
//! days indexed `0..length`, one sample per day. A [`FunctionalDataset`]
//! bundles one curve per named region on a shared grid. Both types are
//! immutable after construction, so they can be shared freely across
//! threads.

use crate::error::{FdaError, Result};
use chrono::NaiveDate;
use nalgebra::DMatrix;

/// A uniform daily grid: a start date plus a number of consecutive days.
///
/// Day indices run `0..length` and double as the abscissa for quadrature
/// and basis evaluation (unit spacing).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeGrid {
    start_day: NaiveDate,
    length: usize,
}

impl TimeGrid {
    pub fn new(start_day: NaiveDate, length: usize) -> Result<Self> {
        if length < 2 {
            return Err(FdaError::invalid(format!(
                "grid length must be at least 2, got {length}"
            )));
        }
        Ok(TimeGrid { start_day, length })
    }

    pub fn start_day(&self) -> NaiveDate {
        self.start_day
    }

    pub fn len(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Width of the grid in days (`length - 1` unit intervals).
    pub fn span(&self) -> f64 {
        (self.length - 1) as f64
    }

    /// Day indices as floats, `0.0, 1.0, ...`.
    pub fn points(&self) -> Vec<f64> {
        (0..self.length).map(|i| i as f64).collect()
    }

    pub fn date_of(&self, index: usize) -> Option<NaiveDate> {
        if index < self.length {
            self.start_day.checked_add_days(chrono::Days::new(index as u64))
        } else {
            None
        }
    }

    /// Index of a calendar date on this grid, if covered.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let delta = date.signed_duration_since(self.start_day).num_days();
        if delta >= 0 && (delta as usize) < self.length {
            Some(delta as usize)
        } else {
            None
        }
    }
}

/// A set of named curves sampled on a shared daily grid (one row per curve).
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalDataset {
    grid: TimeGrid,
    names: Vec<String>,
    values: DMatrix<f64>,
}

impl FunctionalDataset {
    pub fn new(grid: TimeGrid, names: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if names.len() != values.nrows() {
            return Err(FdaError::dimension(format!(
                "{} names but {} value rows",
                names.len(),
                values.nrows()
            )));
        }
        if values.ncols() != grid.len() {
            return Err(FdaError::dimension(format!(
                "rows of length {} on a grid of length {}",
                values.ncols(),
                grid.len()
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(FdaError::invalid(format!("duplicate curve name '{name}'")));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FdaError::invalid(
                "dataset contains non-finite values".to_string(),
            ));
        }
        Ok(FunctionalDataset { grid, names, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Number of curves.
    pub fn n(&self) -> usize {
        self.names.len()
    }

    /// Number of grid points per curve.
    pub fn len_t(&self) -> usize {
        self.grid.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn curve(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().cloned().collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Pointwise mean curve across all rows.
    pub fn mean_curve(&self) -> Vec<f64> {
        let n = self.n() as f64;
        (0..self.len_t())
            .map(|t| self.values.column(t).sum() / n)
            .collect()
    }

    /// A new dataset with the same grid and names but transformed values.
    pub fn with_values(&self, values: DMatrix<f64>) -> Result<Self> {
        FunctionalDataset::new(self.grid.clone(), self.names.clone(), values)
    }

    /// Checks that `other` has the same grid and region order.
    pub fn check_compatible(&self, other: &FunctionalDataset) -> Result<()> {
        if self.grid != other.grid {
            return Err(FdaError::dimension(
                "datasets are on different grids".to_string(),
            ));
        }
        if self.names != other.names {
            return Err(FdaError::dimension(
                "datasets have different region sets or orders".to_string(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn grid_rejects_single_day() {
        assert!(TimeGrid::new(d(2020, 2, 16), 1).is_err());
    }

    #[test]
    fn grid_dates_round_trip() {
        let g = TimeGrid::new(d(2020, 2, 16), 75).unwrap();
        assert_eq!(g.date_of(0), Some(d(2020, 2, 16)));
        assert_eq!(g.date_of(74), Some(d(2020, 4, 30)));
        assert_eq!(g.index_of(d(2020, 3, 9)), Some(22));
        assert_eq!(g.index_of(d(2020, 5, 1)), None);
    }

    #[test]
    fn dataset_rejects_duplicate_names() {
        let g = TimeGrid::new(d(2020, 2, 16), 3).unwrap();
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let err = FunctionalDataset::new(g, vec!["a".into(), "a".into()], m);
        assert!(err.is_err());
    }

    #[test]
    fn dataset_rejects_row_length_mismatch() {
        let g = TimeGrid::new(d(2020, 2, 16), 4).unwrap();
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        assert!(FunctionalDataset::new(g, vec!["a".into()], m).is_err());
    }
}
