//! Command-line pipeline for the functional epidemic analysis toolkit.
//!
//! Subcommands mirror the analysis stages; `pipeline` runs them all in
//! order and records a manifest with the config hash, seed and per-step
//! wall times. Exit code 1 marks validation problems (the message names
//! the offending field or file), exit code 2 numerical failures.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use commands::{config_hash, Ctx};
use config::{ConfigBuilder, DatasetChoice, Flags};
use fdepi::error::FdaError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "fdepi",
    about = "Functional data analysis of regional epidemic curves",
    version
)]
struct Cli {
    /// Optional key = value configuration file; flags win over file entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding the raw fixture CSVs.
    #[arg(long, global = true)]
    fixtures: Option<PathBuf>,
    #[arg(long, global = true)]
    dpc: Option<PathBuf>,
    #[arg(long, global = true)]
    istat: Option<PathBuf>,
    #[arg(long, global = true)]
    mobility: Option<PathBuf>,
    #[arg(long, global = true)]
    population: Option<PathBuf>,
    #[arg(long, global = true)]
    covariates: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Mortality dataset: dpc, istat or max.
    #[arg(long, global = true)]
    dataset: Option<String>,
    /// Master seed; required (no wall-clock seeding).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of motif clusters.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Motif length in days.
    #[arg(long = "length", global = true)]
    motif_length: Option<usize>,
    #[arg(long, global = true)]
    restarts: Option<usize>,
    /// Monte Carlo permutations for the interval-wise test.
    #[arg(long, global = true)]
    permutations: Option<usize>,
    /// Adjusted H-score threshold for biclustering.
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// Elastic-net mixing weight for feature selection.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// FPC variance target for feature selection.
    #[arg(long, global = true)]
    variance_target: Option<f64>,
    /// How many top features to report.
    #[arg(long, global = true)]
    top_k: Option<usize>,
    /// Worker thread cap (falls back to FDEPI_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build all datasets from the raw fixtures.
    Ingest,
    /// Smooth every dataset with GCV-selected penalties.
    Smooth,
    /// Motif clustering with local alignment.
    Motifs,
    /// Apply motif shifts to mortality, mobility and positivity.
    Align,
    /// Interval-wise permutation test between the two groups.
    Iwt,
    /// Band depth, functional boxplot and signed ranking.
    Depth,
    /// Function-on-function regression of mortality on mobility and positivity.
    RegressFf {
        /// Add the first principal component of the selected top covariates.
        #[arg(long)]
        with_pc1: bool,
    },
    /// Marginal function-on-scalar regressions on each covariate.
    RegressFs {
        /// Use separate intercept curves for the two motif groups.
        #[arg(long)]
        two_intercepts: bool,
    },
    /// Cheng-Church biclustering of the covariate table.
    Bicluster,
    /// Hierarchical clustering of regions and covariates.
    Hclust,
    /// Principal components of the covariate table.
    Pca {
        /// Comma-separated covariate names (default: all 12).
        #[arg(long)]
        columns: Option<String>,
    },
    /// Variance inflation factors of the covariates.
    Vif,
    /// Functional feature selection via group elastic net on FPC scores.
    Select,
    /// Run every stage in order and write a manifest.
    Pipeline,
}

fn run() -> Result<(), FdaError> {
    let cli = Cli::try_parse().map_err(|e| FdaError::invalid(e.to_string()))?;
    let builder = ConfigBuilder::new(cli.config.as_deref())?;
    let dataset = cli.dataset.as_deref().map(DatasetChoice::parse).transpose()?;
    let cfg = builder.build(Flags {
        fixtures: cli.fixtures,
        dpc: cli.dpc,
        istat: cli.istat,
        mobility: cli.mobility,
        population: cli.population,
        covariates: cli.covariates,
        out_dir: cli.out_dir,
        dataset,
        seed: cli.seed,
        k: cli.k,
        motif_length: cli.motif_length,
        restarts: cli.restarts,
        permutations: cli.permutations,
        delta: cli.delta,
        alpha: cli.alpha,
        variance_target: cli.variance_target,
        top_k: cli.top_k,
        threads: cli.threads,
    })?;
    if let Some(threads) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| FdaError::invalid(format!("field 'threads': {e}")))?;
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut ctx = Ctx::new(cfg);
    match cli.command {
        Command::Ingest => ctx.cmd_ingest()?,
        Command::Smooth => ctx.cmd_smooth()?,
        Command::Motifs => ctx.cmd_motifs()?,
        Command::Align => ctx.cmd_align()?,
        Command::Iwt => ctx.cmd_iwt()?,
        Command::Depth => ctx.cmd_depth()?,
        Command::RegressFf { with_pc1 } => ctx.cmd_regress_ff(with_pc1)?,
        Command::RegressFs { two_intercepts } => ctx.cmd_regress_fs(two_intercepts)?,
        Command::Bicluster => ctx.cmd_bicluster()?,
        Command::Hclust => ctx.cmd_hclust()?,
        Command::Pca { columns } => {
            let subset: Option<Vec<String>> = columns
                .map(|c| c.split(',').map(|s| s.trim().to_string()).collect());
            ctx.cmd_pca(subset.as_deref())?
        }
        Command::Vif => ctx.cmd_vif()?,
        Command::Select => ctx.cmd_select()?,
        Command::Pipeline => {
            let timings = ctx.cmd_pipeline()?;
            let canonical = ctx.cfg.canonical_string();
            let mut manifest = String::new();
            manifest.push_str(&format!("config_hash: {}\n", config_hash(&canonical)));
            manifest.push_str(&format!("seed: {}\n", ctx.cfg.seed));
            manifest.push_str(&format!("dataset: {}\n", ctx.cfg.dataset.name()));
            manifest.push_str("step_wall_times_seconds:\n");
            for (name, secs) in &timings {
                manifest.push_str(&format!("  {name}: {secs:.3}\n"));
            }
            fdepi::io::write_atomic(&ctx.cfg.out_dir.join("run_manifest.txt"), &manifest)?;
        }
    }
    for path in &ctx.written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err @ FdaError::Numerical { .. }) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
