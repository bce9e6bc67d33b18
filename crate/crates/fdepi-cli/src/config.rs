//! Pipeline configuration: flags merged over an optional `key = value`
//! config file (flags win), with validation that names the offending field.

use fdepi::error::{FdaError, Result};
use fdepi::ingest::IngestPaths;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetChoice {
    Dpc,
    Istat,
    Max,
}

impl DatasetChoice {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dpc" => Ok(DatasetChoice::Dpc),
            "istat" => Ok(DatasetChoice::Istat),
            "max" => Ok(DatasetChoice::Max),
            other => Err(FdaError::invalid(format!(
                "dataset must be one of dpc|istat|max, got '{other}'"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DatasetChoice::Dpc => "dpc",
            DatasetChoice::Istat => "istat",
            DatasetChoice::Max => "max",
        }
    }
}

/// Fully resolved configuration for one invocation.
#[derive(Debug, Clone)]
pub struct Config {
    pub fixtures: PathBuf,
    pub dpc: Option<PathBuf>,
    pub istat: Option<PathBuf>,
    pub mobility: Option<PathBuf>,
    pub population: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub dataset: DatasetChoice,
    pub seed: u64,
    pub k: usize,
    pub motif_length: usize,
    pub restarts: usize,
    pub permutations: usize,
    pub delta: f64,
    pub alpha: f64,
    pub variance_target: f64,
    pub top_k: usize,
    pub threads: Option<usize>,
}

impl Config {
    pub fn ingest_paths(&self) -> IngestPaths {
        let mut paths = IngestPaths::in_dir(&self.fixtures);
        if let Some(p) = &self.dpc {
            paths.dpc = p.clone();
        }
        if let Some(p) = &self.istat {
            paths.istat = p.clone();
        }
        if let Some(p) = &self.mobility {
            paths.mobility = p.clone();
        }
        if let Some(p) = &self.population {
            paths.population = p.clone();
        }
        if let Some(p) = &self.covariates {
            paths.covariates = p.clone();
        }
        paths
    }

    /// Canonical text form used for the manifest hash.
    pub fn canonical_string(&self) -> String {
        let paths = self.ingest_paths();
        format!(
            "dataset={}\nseed={}\nk={}\nmotif_length={}\nrestarts={}\npermutations={}\ndelta={}\nalpha={}\nvariance_target={}\ntop_k={}\ndpc={}\nistat={}\nmobility={}\npopulation={}\ncovariates={}\n",
            self.dataset.name(),
            self.seed,
            self.k,
            self.motif_length,
            self.restarts,
            self.permutations,
            self.delta,
            self.alpha,
            self.variance_target,
            self.top_k,
            paths.dpc.display(),
            paths.istat.display(),
            paths.mobility.display(),
            paths.population.display(),
            paths.covariates.display(),
        )
    }
}

/// Parse a `key = value` file, `#` starts a comment.
pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        FdaError::invalid(format!("config file {}: {e}", path.display()))
    })?;
    let mut out = BTreeMap::new();
    for (lineno, raw_line) in text.lines().enumerate() {
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            FdaError::invalid(format!(
                "config file {} line {}: expected key = value",
                path.display(),
                lineno + 1
            ))
        })?;
        out.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}

pub struct ConfigBuilder {
    file: BTreeMap<String, String>,
}

impl ConfigBuilder {
    pub fn new(config_file: Option<&Path>) -> Result<Self> {
        let file = match config_file {
            Some(p) => parse_config_file(p)?,
            None => BTreeMap::new(),
        };
        Ok(ConfigBuilder { file })
    }

    fn lookup<T, F: Fn(&str) -> Result<T>>(
        &self,
        flag: Option<T>,
        key: &str,
        parse: F,
        default: Option<T>,
    ) -> Result<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        if let Some(raw) = self.file.get(key) {
            return parse(raw);
        }
        default.ok_or_else(|| FdaError::invalid(format!("missing required field '{key}'")))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn build(&self, flags: Flags) -> Result<Config> {
        let parse_usize = |key: &'static str| {
            move |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| FdaError::invalid(format!("field '{key}' must be an integer")))
            }
        };
        let parse_f64 = |key: &'static str| {
            move |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| FdaError::invalid(format!("field '{key}' must be a number")))
            }
        };
        let parse_path = |s: &str| Ok(PathBuf::from(s));
        let cfg = Config {
            fixtures: self.lookup(
                flags.fixtures,
                "fixtures",
                parse_path,
                Some(PathBuf::from("fixtures")),
            )?,
            dpc: self.opt_path(flags.dpc, "dpc"),
            istat: self.opt_path(flags.istat, "istat"),
            mobility: self.opt_path(flags.mobility, "mobility"),
            population: self.opt_path(flags.population, "population"),
            covariates: self.opt_path(flags.covariates, "covariates"),
            out_dir: self.lookup(
                flags.out_dir,
                "out_dir",
                parse_path,
                Some(PathBuf::from("out")),
            )?,
            dataset: self.lookup(
                flags.dataset,
                "dataset",
                DatasetChoice::parse,
                Some(DatasetChoice::Max),
            )?,
            seed: self.lookup(
                flags.seed,
                "seed",
                |s| {
                    s.parse::<u64>()
                        .map_err(|_| FdaError::invalid("field 'seed' must be an integer".to_string()))
                },
                None,
            )?,
            k: self.lookup(flags.k, "k", parse_usize("k"), Some(2))?,
            motif_length: self.lookup(
                flags.motif_length,
                "motif_length",
                parse_usize("motif_length"),
                Some(65),
            )?,
            restarts: self.lookup(flags.restarts, "restarts", parse_usize("restarts"), Some(20))?,
            permutations: self.lookup(
                flags.permutations,
                "permutations",
                parse_usize("permutations"),
                Some(1000),
            )?,
            delta: self.lookup(flags.delta, "delta", parse_f64("delta"), Some(0.095))?,
            alpha: self.lookup(flags.alpha, "alpha", parse_f64("alpha"), Some(0.5))?,
            variance_target: self.lookup(
                flags.variance_target,
                "variance_target",
                parse_f64("variance_target"),
                Some(0.95),
            )?,
            top_k: self.lookup(flags.top_k, "top_k", parse_usize("top_k"), Some(5))?,
            threads: match flags.threads {
                Some(t) => Some(t),
                None => match self.file.get("threads") {
                    Some(raw) => Some(raw.parse::<usize>().map_err(|_| {
                        FdaError::invalid("field 'threads' must be an integer".to_string())
                    })?),
                    None => std::env::var("FDEPI_THREADS")
                        .ok()
                        .map(|v| {
                            v.parse::<usize>().map_err(|_| {
                                FdaError::invalid(
                                    "environment variable FDEPI_THREADS must be an integer"
                                        .to_string(),
                                )
                            })
                        })
                        .transpose()?,
                },
            },
        };
        if cfg.k == 0 {
            return Err(FdaError::invalid("field 'k' must be at least 1".to_string()));
        }
        if !(cfg.alpha > 0.0 && cfg.alpha <= 1.0) {
            return Err(FdaError::invalid(
                "field 'alpha' must lie in (0, 1]".to_string(),
            ));
        }
        if !(cfg.variance_target > 0.0 && cfg.variance_target <= 1.0) {
            return Err(FdaError::invalid(
                "field 'variance_target' must lie in (0, 1]".to_string(),
            ));
        }
        if !(cfg.delta > 0.0) {
            return Err(FdaError::invalid(
                "field 'delta' must be positive".to_string(),
            ));
        }
        Ok(cfg)
    }

    fn opt_path(&self, flag: Option<PathBuf>, key: &str) -> Option<PathBuf> {
        flag.or_else(|| self.file.get(key).map(PathBuf::from))
    }
}

/// Raw flag values before merging with the config file.
#[derive(Debug, Default)]
pub struct Flags {
    pub fixtures: Option<PathBuf>,
    pub dpc: Option<PathBuf>,
    pub istat: Option<PathBuf>,
    pub mobility: Option<PathBuf>,
    pub population: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub dataset: Option<DatasetChoice>,
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub motif_length: Option<usize>,
    pub restarts: Option<usize>,
    pub permutations: Option<usize>,
    pub delta: Option<f64>,
    pub alpha: Option<f64>,
    pub variance_target: Option<f64>,
    pub top_k: Option<usize>,
    pub threads: Option<usize>,
}
