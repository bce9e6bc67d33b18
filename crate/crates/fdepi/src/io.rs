//! CSV serialization for curve matrices and atomic file writes.
//!
//! Curve matrices use the header `region,d000,d001,...` with one row per
//! region. Atomic writes go through a temp file plus rename, so a crashed
//! run never leaves a half-written artifact behind.

use crate::error::{FdaError, Result};
use crate::grid::{FunctionalDataset, TimeGrid};
use chrono::NaiveDate;
use nalgebra::DMatrix;
use std::io::Write;
use std::path::Path;

/// Write `content` to `path` atomically (temp file + rename).
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name()
            .map(|n| n.to_string_lossy().to_string())
            .unwrap_or_else(|| "artifact".to_string()),
        std::process::id()
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(content.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Serialize a dataset in the curve-matrix format.
pub fn curve_matrix_to_csv(data: &FunctionalDataset) -> String {
    let mut out = String::from("region");
    for t in 0..data.len_t() {
        out.push_str(&format!(",d{t:03}"));
    }
    out.push('\n');
    for (i, name) in data.names().iter().enumerate() {
        out.push_str(name);
        for t in 0..data.len_t() {
            out.push(',');
            out.push_str(&format_float(data.values()[(i, t)]));
        }
        out.push('\n');
    }
    out
}

pub fn write_curve_csv(path: &Path, data: &FunctionalDataset) -> Result<()> {
    write_atomic(path, &curve_matrix_to_csv(data))
}

/// Read a curve-matrix CSV; the grid is anchored at `start_day`.
pub fn read_curve_csv(path: &Path, start_day: NaiveDate) -> Result<FunctionalDataset> {
    let p = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| FdaError::Csv {
            path: p.clone(),
            detail: e.to_string(),
        })?;
    let headers = rdr
        .headers()
        .map_err(|e| FdaError::Csv {
            path: p.clone(),
            detail: e.to_string(),
        })?
        .clone();
    if headers.len() < 3 || &headers[0] != "region" {
        return Err(FdaError::Csv {
            path: p,
            detail: "expected curve-matrix header region,d000,...".to_string(),
        });
    }
    let t = headers.len() - 1;
    let mut names = Vec::new();
    let mut values = Vec::new();
    for record in rdr.records() {
        let rec = record.map_err(|e| FdaError::Csv {
            path: p.clone(),
            detail: e.to_string(),
        })?;
        names.push(rec[0].to_string());
        for j in 0..t {
            values.push(rec[j + 1].parse::<f64>().map_err(|_| FdaError::Csv {
                path: p.clone(),
                detail: format!("bad value '{}'", &rec[j + 1]),
            })?);
        }
    }
    let n = names.len();
    FunctionalDataset::new(
        TimeGrid::new(start_day, t)?,
        names,
        DMatrix::from_row_slice(n, t, &values),
    )
}

/// Deterministic float formatting: shortest round-trip representation.
pub fn format_float(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

/// A tiny builder for tabular CSV artifacts.
pub struct CsvTable {
    header: String,
    rows: Vec<String>,
}

impl CsvTable {
    pub fn new(columns: &[&str]) -> Self {
        CsvTable {
            header: columns.join(","),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.rows.push(cells.join(","));
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.clone();
        out.push('\n');
        for r in &self.rows {
            out.push_str(r);
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_csv())
    }
}
