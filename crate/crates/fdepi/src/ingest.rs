//! Construction of the analysis datasets from raw CSV snapshots.
//!
//! Raw inputs are bundled fixture files: official cumulative death counts
//! with testing figures, municipal all-cause death counts aggregated by
//! region for 2015-2020, grocery/pharmacy mobility changes, a per-region
//! population table, and the scalar covariate table. Everything is keyed by
//! the canonical list of 20 regions (the two self-governing provinces of
//! Trento and Bolzano count as one region).
//!
//! The study window runs February 16 to April 30, 2020 (75 days). Official
//! case reporting starts February 24, so official mortality and positivity
//! are defined as zero for February 16-23.

use crate::error::{FdaError, Result};
use crate::grid::{FunctionalDataset, TimeGrid};
use chrono::NaiveDate;
use nalgebra::DMatrix;
use std::collections::BTreeMap;
use std::path::Path;

/// The canonical regions, in the fixed order used by every dataset.
pub const CANONICAL_REGIONS: [&str; 20] = [
    "Abruzzo",
    "Basilicata",
    "Calabria",
    "Campania",
    "Emilia-Romagna",
    "Friuli Venezia Giulia",
    "Lazio",
    "Liguria",
    "Lombardia",
    "Marche",
    "Molise",
    "Piemonte",
    "Puglia",
    "Sardegna",
    "Sicilia",
    "Toscana",
    "Trento/Bolzano",
    "Umbria",
    "Valle d'Aosta",
    "Veneto",
];

/// Scalar covariates, named and ordered as reported.
pub const COVARIATE_NAMES: [&str; 12] = [
    "% Over 65",
    "% Diabetics",
    "% Allergic",
    "Adults per family doctor",
    "ICU beds per 100K inhabitants",
    "Ave. beds per hospital (whole)",
    "Ave. beds per nursing home (ward)",
    "Ave. students per classroom",
    "Ave. employees per firm",
    "Ave. members per household",
    "Public transport rides per capita",
    "PM10",
];

pub fn canonical_index(name: &str) -> Result<usize> {
    CANONICAL_REGIONS
        .iter()
        .position(|r| *r == name)
        .ok_or_else(|| {
            FdaError::invalid(format!(
                "unknown region '{name}'; canonical regions are: {}",
                CANONICAL_REGIONS.join(", ")
            ))
        })
}

/// First day of the study window.
pub fn study_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 2, 16).expect("valid date")
}

/// First day with official case reporting.
pub fn reporting_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 2, 24).expect("valid date")
}

/// The shared 75-day grid, February 16 through April 30, 2020.
pub fn study_grid() -> TimeGrid {
    TimeGrid::new(study_start(), 75).expect("static grid")
}

/// Number of leading grid days set to zero for officially-reported series.
pub const ZERO_PREFIX_DAYS: usize = 8;

fn parse_date(s: &str, path: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| FdaError::Csv {
        path: path.to_string(),
        detail: format!("bad date '{s}': {e}"),
    })
}

fn parse_f64(s: &str, path: &str, what: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| FdaError::Csv {
        path: path.to_string(),
        detail: format!("bad {what} value '{s}'"),
    })
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| FdaError::Csv {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
}

/// Per-region population figures.
#[derive(Debug, Clone)]
pub struct PopulationTable {
    /// Resident population, canonical region order.
    pub population: Vec<f64>,
    /// Population covered by the municipal all-cause death records.
    pub covered: Vec<f64>,
}

pub fn read_population_csv(path: &Path) -> Result<PopulationTable> {
    let mut rdr = open_reader(path)?;
    let p = path.display().to_string();
    let mut population = vec![f64::NAN; 20];
    let mut covered = vec![f64::NAN; 20];
    for record in rdr.records() {
        let rec = record.map_err(|e| FdaError::Csv {
            path: p.clone(),
            detail: e.to_string(),
        })?;
        let idx = canonical_index(&rec[0])?;
        population[idx] = parse_f64(&rec[1], &p, "population")?;
        covered[idx] = parse_f64(&rec[2], &p, "covered_population")?;
    }
    if population.iter().any(|v| v.is_nan()) {
        return Err(FdaError::Csv {
            path: p,
            detail: "population table does not cover all 20 regions".to_string(),
        });
    }
    Ok(PopulationTable { population, covered })
}

/// One row of the official daily bulletin.
#[derive(Debug, Clone, Copy)]
pub struct DpcRow {
    pub cumulative_deaths: f64,
    pub new_cases: f64,
    pub new_tests: f64,
}

/// Official daily series per region, keyed by date.
#[derive(Debug, Clone)]
pub struct DpcRaw {
    pub rows: Vec<BTreeMap<NaiveDate, DpcRow>>,
}

pub fn read_dpc_csv(path: &Path) -> Result<DpcRaw> {
    let mut rdr = open_reader(path)?;
    let p = path.display().to_string();
    let mut rows: Vec<BTreeMap<NaiveDate, DpcRow>> = vec![BTreeMap::new(); 20];
    for record in rdr.records() {
        let rec = record.map_err(|e| FdaError::Csv {
            path: p.clone(),
            detail: e.to_string(),
        })?;
        let date = parse_date(&rec[0], &p)?;
        let idx = canonical_index(&rec[1])?;
        rows[idx].insert(
            date,
            DpcRow {
                cumulative_deaths: parse_f64(&rec[2], &p, "cumulative_deaths")?,
                new_cases: parse_f64(&rec[3], &p, "new_cases")?,
                new_tests: parse_f64(&rec[4], &p, "new_tests")?,
            },
        );
    }
    Ok(DpcRaw { rows })
}

/// All-cause deaths per region and calendar day: the five reference years
/// and 2020. Reference cells may be absent on February 29.
#[derive(Debug, Clone)]
pub struct IstatRaw {
    pub rows: Vec<BTreeMap<NaiveDate, ([Option<f64>; 5], f64)>>,
}

pub fn read_istat_csv(path: &Path) -> Result<IstatRaw> {
    let mut rdr = open_reader(path)?;
    let p = path.display().to_string();
    let mut rows: Vec<BTreeMap<NaiveDate, ([Option<f64>; 5], f64)>> = vec![BTreeMap::new(); 20];
    for record in rdr.records() {
        let rec = record.map_err(|e| FdaError::Csv {
            path: p.clone(),
            detail: e.to_string(),
        })?;
        let date = parse_date(&rec[0], &p)?;
        let idx = canonical_index(&rec[1])?;
        let mut refs = [None; 5];
        for (k, slot) in refs.iter_mut().enumerate() {
            let cell = rec[2 + k].trim();
            if !cell.is_empty() {
                *slot = Some(parse_f64(cell, &p, "reference deaths")?);
            }
        }
        let d2020 = parse_f64(&rec[7], &p, "deaths_2020")?;
        rows[idx].insert(date, (refs, d2020));
    }
    Ok(IstatRaw { rows })
}

/// Daily grocery/pharmacy mobility change per region (fractional).
#[derive(Debug, Clone)]
pub struct MobilityRaw {
    pub rows: Vec<BTreeMap<NaiveDate, f64>>,
}

pub fn read_mobility_csv(path: &Path) -> Result<MobilityRaw> {
    let mut rdr = open_reader(path)?;
    let p = path.display().to_string();
    let mut rows: Vec<BTreeMap<NaiveDate, f64>> = vec![BTreeMap::new(); 20];
    for record in rdr.records() {
        let rec = record.map_err(|e| FdaError::Csv {
            path: p.clone(),
            detail: e.to_string(),
        })?;
        let date = parse_date(&rec[0], &p)?;
        let idx = canonical_index(&rec[1])?;
        rows[idx].insert(date, parse_f64(&rec[2], &p, "grocery_pharmacy_change")?);
    }
    Ok(MobilityRaw { rows })
}

fn canonical_names() -> Vec<String> {
    CANONICAL_REGIONS.iter().map(|s| s.to_string()).collect()
}

/// Daily official mortality per 100,000 inhabitants: increments of the
/// cumulative death counts, clipped at zero, with the pre-reporting window
/// fixed at zero.
pub fn build_dpc_mortality(
    raw: &DpcRaw,
    population: &PopulationTable,
) -> Result<(FunctionalDataset, Vec<String>)> {
    let grid = study_grid();
    let mut values = DMatrix::zeros(20, grid.len());
    let mut warnings = Vec::new();
    for (i, region) in CANONICAL_REGIONS.iter().enumerate() {
        let series = &raw.rows[i];
        let mut prev = 0.0;
        let mut date = reporting_start();
        while let Some(t) = grid.index_of(date) {
            let row = series.get(&date).ok_or_else(|| {
                FdaError::invalid(format!("missing official record for {region} on {date}"))
            })?;
            let mut inc = row.cumulative_deaths - prev;
            if inc < 0.0 {
                warnings.push(format!(
                    "{region} {date}: cumulative deaths decreased by {:.0}; increment clipped to 0",
                    -inc
                ));
                inc = 0.0;
            }
            values[(i, t)] = inc / population.population[i] * 100_000.0;
            prev = row.cumulative_deaths;
            date = date.succ_opt().expect("date increment");
        }
    }
    Ok((
        FunctionalDataset::new(grid, canonical_names(), values)?,
        warnings,
    ))
}

/// Differential mortality per 100,000 covered inhabitants: 2020 deaths
/// minus the 2015-2019 same-day average. Negative values are kept. On the
/// leap day the reference average falls back to February 28 of the
/// reference years.
pub fn build_istat_differential(
    raw: &IstatRaw,
    population: &PopulationTable,
) -> Result<FunctionalDataset> {
    let grid = study_grid();
    let leap_day = NaiveDate::from_ymd_opt(2020, 2, 29).expect("valid date");
    let fallback_day = NaiveDate::from_ymd_opt(2020, 2, 28).expect("valid date");
    let mut values = DMatrix::zeros(20, grid.len());
    for (i, region) in CANONICAL_REGIONS.iter().enumerate() {
        let series = &raw.rows[i];
        for t in 0..grid.len() {
            let date = grid.date_of(t).expect("within grid");
            let (refs, d2020) = series.get(&date).ok_or_else(|| {
                FdaError::invalid(format!("missing all-cause record for {region} on {date}"))
            })?;
            let mut reference = Vec::with_capacity(5);
            for (k, cell) in refs.iter().enumerate() {
                match cell {
                    Some(v) => reference.push(*v),
                    None if date == leap_day => {
                        let (fb, _) = series.get(&fallback_day).ok_or_else(|| {
                            FdaError::invalid(format!(
                                "missing reference day for {region} on {fallback_day}"
                            ))
                        })?;
                        let v = fb[k].ok_or_else(|| {
                            FdaError::invalid(format!(
                                "missing reference deaths for {region} on {fallback_day}"
                            ))
                        })?;
                        reference.push(v);
                    }
                    None => {
                        return Err(FdaError::invalid(format!(
                            "missing reference deaths for {region} on {date}"
                        )))
                    }
                }
            }
            let mean_ref = reference.iter().sum::<f64>() / reference.len() as f64;
            values[(i, t)] = (d2020 - mean_ref) / population.covered[i] * 100_000.0;
        }
    }
    FunctionalDataset::new(grid, canonical_names(), values)
}

/// Pointwise maximum of official and differential mortality, taken on the
/// raw daily values before any smoothing.
pub fn build_max_mortality(
    dpc: &FunctionalDataset,
    istat: &FunctionalDataset,
) -> Result<FunctionalDataset> {
    dpc.check_compatible(istat)?;
    let mut values = dpc.values().clone();
    for i in 0..values.nrows() {
        for t in 0..values.ncols() {
            values[(i, t)] = values[(i, t)].max(istat.values()[(i, t)]);
        }
    }
    dpc.with_values(values)
}

/// Daily positivity: new cases over new tests, truncated to [0, 1], zero
/// before reporting started.
pub fn build_positivity(raw: &DpcRaw) -> Result<(FunctionalDataset, Vec<String>)> {
    let grid = study_grid();
    let mut values = DMatrix::zeros(20, grid.len());
    let mut warnings = Vec::new();
    for (i, region) in CANONICAL_REGIONS.iter().enumerate() {
        let series = &raw.rows[i];
        let mut date = reporting_start();
        while let Some(t) = grid.index_of(date) {
            let row = series.get(&date).ok_or_else(|| {
                FdaError::invalid(format!("missing official record for {region} on {date}"))
            })?;
            let ratio = if row.new_tests <= 0.0 {
                warnings.push(format!(
                    "{region} {date}: no tests reported; positivity set to 0"
                ));
                0.0
            } else {
                let r = row.new_cases / row.new_tests;
                if !(0.0..=1.0).contains(&r) {
                    warnings.push(format!(
                        "{region} {date}: raw positivity {r:.3} truncated to [0,1]"
                    ));
                }
                r.clamp(0.0, 1.0)
            };
            values[(i, t)] = ratio;
            date = date.succ_opt().expect("date increment");
        }
    }
    Ok((
        FunctionalDataset::new(grid, canonical_names(), values)?,
        warnings,
    ))
}

/// Local mobility on the full study window.
pub fn build_mobility(raw: &MobilityRaw) -> Result<FunctionalDataset> {
    let grid = study_grid();
    let mut values = DMatrix::zeros(20, grid.len());
    for (i, region) in CANONICAL_REGIONS.iter().enumerate() {
        let series = &raw.rows[i];
        for t in 0..grid.len() {
            let date = grid.date_of(t).expect("within grid");
            values[(i, t)] = *series.get(&date).ok_or_else(|| {
                FdaError::invalid(format!("missing mobility record for {region} on {date}"))
            })?;
        }
    }
    FunctionalDataset::new(grid, canonical_names(), values)
}

/// The 20 x 12 scalar covariate table with its imputation log.
#[derive(Debug, Clone)]
pub struct CovariateTable {
    pub regions: Vec<String>,
    pub covariates: Vec<String>,
    pub values: DMatrix<f64>,
    pub imputation_log: Vec<String>,
}

impl CovariateTable {
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self
            .covariates
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| FdaError::invalid(format!("unknown covariate '{name}'")))?;
        Ok(self.values.column(j).iter().cloned().collect())
    }

    /// Submatrix of named covariates in the given order.
    pub fn submatrix(&self, names: &[&str]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.values.nrows(), names.len());
        for (c, name) in names.iter().enumerate() {
            let col = self.column(name)?;
            for (r, v) in col.iter().enumerate() {
                out[(r, c)] = *v;
            }
        }
        Ok(out)
    }
}

/// Read the covariate table, imputing missing cells by the column median of
/// the observed values.
pub fn build_covariates(path: &Path) -> Result<CovariateTable> {
    let mut rdr = open_reader(path)?;
    let p = path.display().to_string();
    let headers = rdr
        .headers()
        .map_err(|e| FdaError::Csv {
            path: p.clone(),
            detail: e.to_string(),
        })?
        .clone();
    if headers.len() != 13 || &headers[0] != "region" {
        return Err(FdaError::Csv {
            path: p,
            detail: "expected header: region plus the 12 covariate columns".to_string(),
        });
    }
    for (j, expect) in COVARIATE_NAMES.iter().enumerate() {
        if &headers[j + 1] != *expect {
            return Err(FdaError::Csv {
                path: p,
                detail: format!(
                    "covariate column {} is '{}', expected '{expect}'",
                    j + 1,
                    &headers[j + 1]
                ),
            });
        }
    }
    let mut cells: Vec<Vec<Option<f64>>> = vec![vec![None; 12]; 20];
    let mut seen = vec![false; 20];
    for record in rdr.records() {
        let rec = record.map_err(|e| FdaError::Csv {
            path: p.clone(),
            detail: e.to_string(),
        })?;
        let idx = canonical_index(&rec[0])?;
        seen[idx] = true;
        for j in 0..12 {
            let cell = rec[j + 1].trim();
            if !cell.is_empty() {
                cells[idx][j] = Some(parse_f64(cell, &p, COVARIATE_NAMES[j])?);
            }
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(FdaError::Csv {
            path: p,
            detail: format!("no covariate row for {}", CANONICAL_REGIONS[missing]),
        });
    }
    let mut values = DMatrix::zeros(20, 12);
    let mut imputation_log = Vec::new();
    for j in 0..12 {
        let observed: Vec<f64> = (0..20).filter_map(|i| cells[i][j]).collect();
        let n_missing = 20 - observed.len();
        if n_missing * 4 > 20 {
            return Err(FdaError::invalid(format!(
                "covariate '{}' is missing in {n_missing}/20 regions (over 25%)",
                COVARIATE_NAMES[j]
            )));
        }
        let median = {
            let mut sorted = observed.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let m = sorted.len();
            if m % 2 == 1 {
                sorted[m / 2]
            } else {
                0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
            }
        };
        for i in 0..20 {
            values[(i, j)] = match cells[i][j] {
                Some(v) => v,
                None => {
                    imputation_log.push(format!(
                        "{} / {}: imputed column median {median}",
                        CANONICAL_REGIONS[i],
                        COVARIATE_NAMES[j]
                    ));
                    median
                }
            };
        }
    }
    Ok(CovariateTable {
        regions: canonical_names(),
        covariates: COVARIATE_NAMES.iter().map(|s| s.to_string()).collect(),
        values,
        imputation_log,
    })
}

/// Paths to the five raw fixture files.
#[derive(Debug, Clone)]
pub struct IngestPaths {
    pub dpc: std::path::PathBuf,
    pub istat: std::path::PathBuf,
    pub mobility: std::path::PathBuf,
    pub population: std::path::PathBuf,
    pub covariates: std::path::PathBuf,
}

impl IngestPaths {
    /// Conventional file names under one fixture directory.
    pub fn in_dir(dir: &Path) -> Self {
        IngestPaths {
            dpc: dir.join("dpc.csv"),
            istat: dir.join("istat.csv"),
            mobility: dir.join("mobility.csv"),
            population: dir.join("population.csv"),
            covariates: dir.join("covariates.csv"),
        }
    }
}

/// Everything the pipeline consumes, built in one go.
#[derive(Debug, Clone)]
pub struct IngestBundle {
    pub dpc: FunctionalDataset,
    pub istat: FunctionalDataset,
    pub max: FunctionalDataset,
    pub positivity: FunctionalDataset,
    pub mobility: FunctionalDataset,
    pub covariates: CovariateTable,
    pub population: PopulationTable,
    pub warnings: Vec<String>,
}

pub fn load_bundle(paths: &IngestPaths) -> Result<IngestBundle> {
    let population = read_population_csv(&paths.population)?;
    let dpc_raw = read_dpc_csv(&paths.dpc)?;
    let istat_raw = read_istat_csv(&paths.istat)?;
    let mobility_raw = read_mobility_csv(&paths.mobility)?;
    let (dpc, mut warnings) = build_dpc_mortality(&dpc_raw, &population)?;
    let istat = build_istat_differential(&istat_raw, &population)?;
    let max = build_max_mortality(&dpc, &istat)?;
    let (positivity, pos_warnings) = build_positivity(&dpc_raw)?;
    warnings.extend(pos_warnings);
    let mobility = build_mobility(&mobility_raw)?;
    let covariates = build_covariates(&paths.covariates)?;
    Ok(IngestBundle {
        dpc,
        istat,
        max,
        positivity,
        mobility,
        covariates,
        population,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pop_all(v: f64) -> PopulationTable {
        PopulationTable {
            population: vec![v; 20],
            covered: vec![v; 20],
        }
    }

    fn dpc_raw_with(region: usize, series: &[(NaiveDate, f64, f64, f64)]) -> DpcRaw {
        let mut rows: Vec<BTreeMap<NaiveDate, DpcRow>> = vec![BTreeMap::new(); 20];
        // fill every region with a flat default so the grid is complete
        for r in rows.iter_mut() {
            let mut date = reporting_start();
            while date <= NaiveDate::from_ymd_opt(2020, 4, 30).unwrap() {
                r.insert(
                    date,
                    DpcRow {
                        cumulative_deaths: 0.0,
                        new_cases: 0.0,
                        new_tests: 10.0,
                    },
                );
                date = date.succ_opt().unwrap();
            }
        }
        for (date, cum, cases, tests) in series {
            rows[region].insert(
                *date,
                DpcRow {
                    cumulative_deaths: *cum,
                    new_cases: *cases,
                    new_tests: *tests,
                },
            );
        }
        DpcRaw { rows }
    }

    fn d(m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, m, day).unwrap()
    }

    #[test]
    fn dpc_increments_and_scaling() {
        // cumulative 0,0,3,5 -> daily 0,0,3,2 per 100k at population 100k
        let series = vec![
            (d(2, 24), 0.0, 0.0, 10.0),
            (d(2, 25), 0.0, 0.0, 10.0),
            (d(2, 26), 3.0, 0.0, 10.0),
            (d(2, 27), 5.0, 0.0, 10.0),
        ];
        // remaining days keep the last cumulative value
        let mut full = series.clone();
        let mut date = d(2, 28);
        while date <= d(4, 30) {
            full.push((date, 5.0, 0.0, 10.0));
            date = date.succ_opt().unwrap();
        }
        let raw = dpc_raw_with(3, &full);
        let (ds, warnings) = build_dpc_mortality(&raw, &pop_all(100_000.0)).unwrap();
        assert!(warnings.is_empty());
        let grid = study_grid();
        assert_eq!(ds.values()[(3, grid.index_of(d(2, 24)).unwrap())], 0.0);
        assert_eq!(ds.values()[(3, grid.index_of(d(2, 26)).unwrap())], 3.0);
        assert_eq!(ds.values()[(3, grid.index_of(d(2, 27)).unwrap())], 2.0);
        // pre-reporting days are exactly zero
        for t in 0..ZERO_PREFIX_DAYS {
            assert_eq!(ds.values()[(3, t)], 0.0);
        }
    }

    #[test]
    fn decreasing_cumulative_is_clipped_with_warning() {
        let mut series = vec![(d(2, 24), 5.0, 0.0, 10.0), (d(2, 25), 4.0, 0.0, 10.0)];
        let mut date = d(2, 26);
        while date <= d(4, 30) {
            series.push((date, 4.0, 0.0, 10.0));
            date = date.succ_opt().unwrap();
        }
        let raw = dpc_raw_with(0, &series);
        let (ds, warnings) = build_dpc_mortality(&raw, &pop_all(100_000.0)).unwrap();
        let grid = study_grid();
        assert_eq!(ds.values()[(0, grid.index_of(d(2, 25)).unwrap())], 0.0);
        assert!(warnings.iter().any(|w| w.contains("clipped")));
    }

    #[test]
    fn positivity_ratio_truncation() {
        let mut series = vec![
            (d(2, 24), 0.0, 30.0, 100.0), // 0.30
            (d(2, 25), 0.0, -1.0, 50.0),  // truncated to 0
            (d(2, 26), 0.0, 60.0, 50.0),  // truncated to 1
            (d(2, 27), 0.0, 5.0, 0.0),    // no tests -> 0 with warning
        ];
        let mut date = d(2, 28);
        while date <= d(4, 30) {
            series.push((date, 0.0, 0.0, 10.0));
            date = date.succ_opt().unwrap();
        }
        let raw = dpc_raw_with(8, &series);
        let (ds, warnings) = build_positivity(&raw).unwrap();
        let grid = study_grid();
        assert_eq!(ds.values()[(8, grid.index_of(d(2, 24)).unwrap())], 0.30);
        assert_eq!(ds.values()[(8, grid.index_of(d(2, 25)).unwrap())], 0.0);
        assert_eq!(ds.values()[(8, grid.index_of(d(2, 26)).unwrap())], 1.0);
        assert_eq!(ds.values()[(8, grid.index_of(d(2, 27)).unwrap())], 0.0);
        assert!(warnings.iter().any(|w| w.contains("truncated")));
        assert!(warnings.iter().any(|w| w.contains("no tests")));
        for t in 0..ZERO_PREFIX_DAYS {
            assert_eq!(ds.values()[(8, t)], 0.0);
        }
    }

    fn istat_raw_flat(refs: [f64; 5], d2020: f64) -> IstatRaw {
        let mut rows: Vec<BTreeMap<NaiveDate, ([Option<f64>; 5], f64)>> =
            vec![BTreeMap::new(); 20];
        for r in rows.iter_mut() {
            let mut date = study_start();
            while date <= d(4, 30) {
                let cells = if date == d(2, 29) {
                    [None; 5]
                } else {
                    [
                        Some(refs[0]),
                        Some(refs[1]),
                        Some(refs[2]),
                        Some(refs[3]),
                        Some(refs[4]),
                    ]
                };
                r.insert(date, (cells, d2020));
                date = date.succ_opt().unwrap();
            }
        }
        IstatRaw { rows }
    }

    #[test]
    fn istat_differential_arithmetic_and_sign() {
        let raw = istat_raw_flat([10.0, 10.0, 10.0, 10.0, 10.0], 12.0);
        let pop = pop_all(1_000_000.0);
        let ds = build_istat_differential(&raw, &pop).unwrap();
        assert!((ds.values()[(0, 0)] - 0.2).abs() < 1e-12);
        let raw_neg = istat_raw_flat([10.0, 10.0, 10.0, 10.0, 10.0], 8.0);
        let ds_neg = build_istat_differential(&raw_neg, &pop).unwrap();
        assert!((ds_neg.values()[(0, 0)] + 0.2).abs() < 1e-12);
    }

    #[test]
    fn leap_day_uses_feb_28_reference() {
        let mut raw = istat_raw_flat([10.0, 10.0, 10.0, 10.0, 10.0], 10.0);
        // make Feb 28 references distinctive for region 0
        let feb28 = d(2, 28);
        let entry = raw.rows[0].get_mut(&feb28).unwrap();
        entry.0 = [Some(20.0); 5];
        let pop = pop_all(1_000_000.0);
        let ds = build_istat_differential(&raw, &pop).unwrap();
        let grid = study_grid();
        let t29 = grid.index_of(d(2, 29)).unwrap();
        // 2020 deaths 10 vs fallback reference mean 20 -> -1.0 per 100k
        assert!((ds.values()[(0, t29)] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_reference_day_is_an_error() {
        let mut raw = istat_raw_flat([10.0, 10.0, 10.0, 10.0, 10.0], 10.0);
        let day = d(3, 15);
        raw.rows[5].get_mut(&day).unwrap().0[2] = None;
        let err = build_istat_differential(&raw, &pop_all(1e6)).unwrap_err();
        assert!(err.to_string().contains("missing reference"));
    }

    #[test]
    fn max_is_pointwise_max() {
        let raw = istat_raw_flat([10.0; 5], 12.0);
        let pop = pop_all(1_000_000.0);
        let istat = build_istat_differential(&raw, &pop).unwrap();
        let dpc = istat.with_values(DMatrix::zeros(20, 75)).unwrap();
        let max = build_max_mortality(&dpc, &istat).unwrap();
        for i in 0..20 {
            for t in 0..75 {
                assert!(max.values()[(i, t)] >= dpc.values()[(i, t)]);
                assert!(max.values()[(i, t)] >= istat.values()[(i, t)]);
                assert_eq!(
                    max.values()[(i, t)],
                    dpc.values()[(i, t)].max(istat.values()[(i, t)])
                );
            }
        }
        // 0.0 vs negative stays 0.0
        let raw_neg = istat_raw_flat([10.0; 5], 8.0);
        let istat_neg = build_istat_differential(&raw_neg, &pop).unwrap();
        let max_neg = build_max_mortality(&dpc, &istat_neg).unwrap();
        assert_eq!(max_neg.values()[(0, 0)], 0.0);
    }

    #[test]
    fn unknown_region_is_rejected_with_the_canonical_list() {
        let err = canonical_index("Padania").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("Padania"));
        assert!(msg.contains("Lombardia"));
        assert!(msg.contains("Trento/Bolzano"));
    }

    #[test]
    fn covariate_imputation_uses_the_observed_median() {
        use std::io::Write;
        let dir = std::env::temp_dir().join(format!("fdepi_cov_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("covariates.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        write!(f, "region").unwrap();
        for name in COVARIATE_NAMES {
            write!(f, ",{name}").unwrap();
        }
        writeln!(f).unwrap();
        for (i, region) in CANONICAL_REGIONS.iter().enumerate() {
            write!(f, "{region}").unwrap();
            for j in 0..12 {
                if region == &"Valle d'Aosta" && j == 8 {
                    write!(f, ",").unwrap(); // missing employees-per-firm cell
                } else {
                    write!(f, ",{}", (i + 1) as f64 * (j + 1) as f64).unwrap();
                }
            }
            writeln!(f).unwrap();
        }
        drop(f);
        let table = build_covariates(&path).unwrap();
        // observed column 8 values: 9*(i+1) for i != 18; median of 19 values
        let mut observed: Vec<f64> = (0..20)
            .filter(|i| *i != 18)
            .map(|i| (i + 1) as f64 * 9.0)
            .collect();
        observed.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = observed[9];
        assert_eq!(table.values[(18, 8)], median);
        assert_eq!(table.imputation_log.len(), 1);
        assert!(table.imputation_log[0].contains("Valle d'Aosta"));
        // complete columns are unchanged
        assert_eq!(table.values[(0, 0)], 1.0);
        std::fs::remove_dir_all(&dir).ok();
    }
}
