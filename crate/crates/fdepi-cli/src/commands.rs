//! Subcommand implementations. Every command recomputes its inputs from the
//! raw fixtures (the chain is cheap and fully deterministic under the
//! configured seed), writes its artifacts atomically into the output
//! directory, and returns the list of files written.

use crate::config::{Config, DatasetChoice};
use fdepi::depth;
use fdepi::error::Result;
use fdepi::fpca;
use fdepi::funreg::{self, EffectSign, FunRegSpec, InterceptMode, PenaltySettings};
use fdepi::grid::FunctionalDataset;
use fdepi::ingest::{self, IngestBundle};
use fdepi::io::{format_float, write_atomic, write_curve_csv, CsvTable};
use fdepi::iwt;
use fdepi::motif::{self, MotifConfig, MotifModel};
use fdepi::multivar;
use fdepi::select;
use fdepi::smoothing;
use fdepi::svg;
use nalgebra::DMatrix;
use std::path::PathBuf;

pub struct Ctx {
    pub cfg: Config,
    pub written: Vec<PathBuf>,
}

pub struct Smoothed {
    pub dpc: FunctionalDataset,
    pub istat: FunctionalDataset,
    pub max: FunctionalDataset,
    pub mobility: FunctionalDataset,
    pub positivity: FunctionalDataset,
    pub lambdas: Vec<(String, f64, f64)>, // name, lambda, edf
}

impl Smoothed {
    pub fn mortality(&self, choice: DatasetChoice) -> &FunctionalDataset {
        match choice {
            DatasetChoice::Dpc => &self.dpc,
            DatasetChoice::Istat => &self.istat,
            DatasetChoice::Max => &self.max,
        }
    }
}

/// Canonical top-5 covariates used as the summary principal component when
/// feature selection confirms them; the selection itself is always rerun.
pub fn slugify(name: &str) -> String {
    let mut out = String::new();
    for ch in name.chars() {
        if ch.is_ascii_alphanumeric() {
            out.push(ch.to_ascii_lowercase());
        } else if ch == '%' {
            out.push_str("pct");
        } else if !out.ends_with('_') && !out.is_empty() {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

impl Ctx {
    pub fn new(cfg: Config) -> Self {
        Ctx {
            cfg,
            written: Vec::new(),
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    fn emit(&mut self, name: &str, content: &str) -> Result<()> {
        let path = self.out(name);
        write_atomic(&path, content)?;
        self.written.push(path);
        Ok(())
    }

    fn emit_curves(&mut self, name: &str, data: &FunctionalDataset) -> Result<()> {
        let path = self.out(name);
        write_curve_csv(&path, data)?;
        self.written.push(path);
        Ok(())
    }

    pub fn bundle(&self) -> Result<IngestBundle> {
        ingest::load_bundle(&self.cfg.ingest_paths())
    }

    pub fn smoothed(&self, bundle: &IngestBundle) -> Result<Smoothed> {
        let grid = smoothing::default_lambda_grid();
        let mut lambdas = Vec::new();
        let mut do_one = |name: &str, data: &FunctionalDataset| -> Result<FunctionalDataset> {
            let sel = smoothing::select_lambda(data, &grid)?;
            lambdas.push((name.to_string(), sel.lambda, sel.model.trace_s()));
            Ok(sel.model.fitted())
        };
        let dpc = do_one("dpc", &bundle.dpc)?;
        let istat = do_one("istat", &bundle.istat)?;
        let max = do_one("max", &bundle.max)?;
        let mobility = do_one("mobility", &bundle.mobility)?;
        let positivity = do_one("positivity", &bundle.positivity)?;
        Ok(Smoothed {
            dpc,
            istat,
            max,
            mobility,
            positivity,
            lambdas,
        })
    }

    pub fn motif_model(&self, smoothed: &Smoothed) -> Result<MotifModel> {
        let cfg = MotifConfig::new(self.cfg.k, self.cfg.motif_length)
            .with_seed(self.cfg.seed)
            .with_restarts(self.cfg.restarts);
        motif::prob_kma(smoothed.mortality(self.cfg.dataset), &cfg)
    }

    pub fn aligned(
        &self,
        model: &MotifModel,
        smoothed: &Smoothed,
    ) -> Result<(FunctionalDataset, FunctionalDataset, FunctionalDataset)> {
        let mort = motif::apply_shifts(model, smoothed.mortality(self.cfg.dataset))?;
        let mob = motif::apply_shifts(model, &smoothed.mobility)?;
        let pos = motif::apply_shifts(model, &smoothed.positivity)?;
        Ok((mort, mob, pos))
    }

    fn group_matrices(
        &self,
        model: &MotifModel,
        aligned: &FunctionalDataset,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let g1: Vec<usize> = model.cluster_members(0);
        let g2: Vec<usize> = (0..aligned.n()).filter(|i| !g1.contains(i)).collect();
        let take = |idx: &[usize]| {
            let mut m = DMatrix::zeros(idx.len(), aligned.len_t());
            for (r, &i) in idx.iter().enumerate() {
                for t in 0..aligned.len_t() {
                    m[(r, t)] = aligned.values()[(i, t)];
                }
            }
            m
        };
        (take(&g1), take(&g2))
    }

    // ----- subcommands -----

    pub fn cmd_ingest(&mut self) -> Result<()> {
        let bundle = self.bundle()?;
        self.emit_curves("dataset_dpc.csv", &bundle.dpc)?;
        self.emit_curves("dataset_istat.csv", &bundle.istat)?;
        self.emit_curves("dataset_max.csv", &bundle.max)?;
        self.emit_curves("dataset_positivity.csv", &bundle.positivity)?;
        self.emit_curves("dataset_mobility.csv", &bundle.mobility)?;
        let mut cov = CsvTable::new(
            &std::iter::once("region")
                .chain(bundle.covariates.covariates.iter().map(|s| s.as_str()))
                .collect::<Vec<_>>(),
        );
        for (i, region) in bundle.covariates.regions.iter().enumerate() {
            let mut cells = vec![region.clone()];
            for j in 0..12 {
                cells.push(format_float(bundle.covariates.values[(i, j)]));
            }
            cov.row(&cells);
        }
        self.emit("covariates_imputed.csv", &cov.to_csv())?;
        self.emit(
            "imputation_log.txt",
            &(bundle.covariates.imputation_log.join("\n") + "\n"),
        )?;
        self.emit("ingest_warnings.txt", &(bundle.warnings.join("\n") + "\n"))?;
        Ok(())
    }

    pub fn cmd_smooth(&mut self) -> Result<()> {
        let bundle = self.bundle()?;
        let smoothed = self.smoothed(&bundle)?;
        self.emit_curves("smoothed_dpc.csv", &smoothed.dpc)?;
        self.emit_curves("smoothed_istat.csv", &smoothed.istat)?;
        self.emit_curves("smoothed_max.csv", &smoothed.max)?;
        self.emit_curves("smoothed_mobility.csv", &smoothed.mobility)?;
        self.emit_curves("smoothed_positivity.csv", &smoothed.positivity)?;
        let mut table = CsvTable::new(&["dataset", "lambda", "effective_dof"]);
        for (name, lambda, edf) in &smoothed.lambdas {
            table.row(&[name.clone(), format_float(*lambda), format_float(*edf)]);
        }
        self.emit("smoothing_summary.csv", &table.to_csv())?;
        let series: Vec<(String, Vec<f64>)> = smoothed
            .mortality(self.cfg.dataset)
            .names()
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), smoothed.mortality(self.cfg.dataset).curve(i)))
            .collect();
        self.emit(
            &format!("smoothed_{}.svg", self.cfg.dataset.name()),
            &svg::line_chart(
                &format!("smoothed {} mortality", self.cfg.dataset.name()),
                &series,
            ),
        )?;
        Ok(())
    }

    pub fn cmd_motifs(&mut self) -> Result<()> {
        let bundle = self.bundle()?;
        let smoothed = self.smoothed(&bundle)?;
        let model = self.motif_model(&smoothed)?;
        self.write_motif_artifacts(&model)
    }

    fn write_motif_artifacts(&mut self, model: &MotifModel) -> Result<()> {
        let k = model.k;
        let mut memberships = CsvTable::new(
            &std::iter::once("region".to_string())
                .chain((1..=k).map(|i| format!("p_{i}")))
                .chain(std::iter::once("hard_label".to_string()))
                .map(|s| s)
                .collect::<Vec<_>>()
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>(),
        );
        for (i, name) in model.names.iter().enumerate() {
            let mut cells = vec![name.clone()];
            for kk in 0..k {
                cells.push(format_float(model.memberships[(i, kk)]));
            }
            cells.push(format!("{}", model.hard_labels[i] + 1));
            memberships.row(&cells);
        }
        self.emit("memberships.csv", &memberships.to_csv())?;

        let mut shifts = CsvTable::new(
            &std::iter::once("region".to_string())
                .chain((1..=k).map(|i| format!("s_{i}")))
                .chain(std::iter::once("hard_shift".to_string()))
                .collect::<Vec<_>>()
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>(),
        );
        for (i, name) in model.names.iter().enumerate() {
            let mut cells = vec![name.clone()];
            for kk in 0..k {
                cells.push(format!("{}", model.shift(i, kk)));
            }
            cells.push(format!("{}", model.shift(i, model.hard_labels[i])));
            shifts.row(&cells);
        }
        self.emit("shifts.csv", &shifts.to_csv())?;

        let mut motifs = CsvTable::new(
            &std::iter::once("day".to_string())
                .chain((1..=k).map(|i| format!("v_{i}")))
                .collect::<Vec<_>>()
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>(),
        );
        for t in 0..model.motif_len {
            let mut cells = vec![format!("{t}")];
            for kk in 0..k {
                cells.push(format_float(model.motifs[(kk, t)]));
            }
            motifs.row(&cells);
        }
        self.emit("motifs.csv", &motifs.to_csv())?;

        let mut trace = CsvTable::new(&["iteration", "objective"]);
        for (it, j) in model.objective_trace.iter().enumerate() {
            trace.row(&[format!("{}", it + 1), format_float(*j)]);
        }
        self.emit("objective_trace.csv", &trace.to_csv())?;

        let series: Vec<(String, Vec<f64>)> = (0..k)
            .map(|kk| {
                (
                    format!("motif {}", kk + 1),
                    (0..model.motif_len).map(|t| model.motifs[(kk, t)]).collect(),
                )
            })
            .collect();
        self.emit("motifs.svg", &svg::line_chart("motif curves", &series))?;
        Ok(())
    }

    pub fn cmd_align(&mut self) -> Result<()> {
        let bundle = self.bundle()?;
        let smoothed = self.smoothed(&bundle)?;
        let model = self.motif_model(&smoothed)?;
        let (mort, mob, pos) = self.aligned(&model, &smoothed)?;
        self.write_align_artifacts(&model, &mort, &mob, &pos)
    }

    fn write_align_artifacts(
        &mut self,
        model: &MotifModel,
        mort: &FunctionalDataset,
        mob: &FunctionalDataset,
        pos: &FunctionalDataset,
    ) -> Result<()> {
        self.emit_curves("aligned_mortality.csv", mort)?;
        self.emit_curves("aligned_mobility.csv", mob)?;
        self.emit_curves("aligned_positivity.csv", pos)?;
        let mut groups = CsvTable::new(&["region", "group", "shift"]);
        for (i, name) in model.names.iter().enumerate() {
            groups.row(&[
                name.clone(),
                format!("{}", model.hard_labels[i] + 1),
                format!("{}", model.shift(i, model.hard_labels[i])),
            ]);
        }
        self.emit("aligned_groups.csv", &groups.to_csv())?;
        let series: Vec<(String, Vec<f64>)> = mort
            .names()
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), mort.curve(i)))
            .collect();
        self.emit(
            "aligned_mortality.svg",
            &svg::line_chart("aligned mortality curves", &series),
        )?;
        Ok(())
    }

    pub fn cmd_iwt(&mut self) -> Result<()> {
        let bundle = self.bundle()?;
        let smoothed = self.smoothed(&bundle)?;
        let model = self.motif_model(&smoothed)?;
        let (mort, _, _) = self.aligned(&model, &smoothed)?;
        let (g1, g2) = self.group_matrices(&model, &mort);
        let result = iwt::iwt(&g1, &g2, self.cfg.permutations, self.cfg.seed)?;
        let mut table = CsvTable::new(&["t", "w", "p"]);
        for w in 1..=result.len_t() {
            for t in 0..result.len_t() {
                table.row(&[
                    format!("{t}"),
                    format!("{w}"),
                    format_float(result.adjusted_p(t, w)),
                ]);
            }
        }
        self.emit("iwt_adjusted.csv", &table.to_csv())?;
        self.emit("iwt_pyramid.svg", &svg::iwt_pyramid(&result, 0.05))?;
        let sig = result.significant_days_full_scale(0.05);
        let mut summary = CsvTable::new(&["first_significant_day", "n_significant_days"]);
        summary.row(&[
            sig.first().map_or("".to_string(), |d| format!("{d}")),
            format!("{}", sig.len()),
        ]);
        self.emit("iwt_summary.csv", &summary.to_csv())?;
        Ok(())
    }

    pub fn cmd_depth(&mut self) -> Result<()> {
        let bundle = self.bundle()?;
        let smoothed = self.smoothed(&bundle)?;
        let model = self.motif_model(&smoothed)?;
        let (mort, _, _) = self.aligned(&model, &smoothed)?;
        let report = depth::signed_ranking(&mort)?;
        let mut table = CsvTable::new(&[
            "region",
            "depth",
            "above_share",
            "sign",
            "rank",
            "outlier",
            "central",
        ]);
        for (rank, &i) in report.ranking.iter().enumerate() {
            let share = if i == report.median_index {
                String::new()
            } else {
                format_float(report.above_shares[i])
            };
            table.row(&[
                report.names[i].clone(),
                format_float(report.depths[i]),
                share,
                if report.signed_depths[i] < 0.0 { "-1" } else { "1" }.to_string(),
                format!("{}", rank + 1),
                format!("{}", report.outlier_indices.contains(&i) as u8),
                format!("{}", report.central_indices.contains(&i) as u8),
            ]);
        }
        self.emit("depth_ranking.csv", &table.to_csv())?;
        self.emit(
            "functional_boxplot.svg",
            &svg::functional_boxplot(&report, &mort),
        )?;
        Ok(())
    }

    fn top5_pc1(
        &self,
        bundle: &IngestBundle,
        mort: &FunctionalDataset,
    ) -> Result<(Vec<String>, Vec<f64>, f64)> {
        let expansion = fpca::fpc(mort, self.cfg.variance_target)?;
        let (std_cov, _) = multivar::standardize_columns(&bundle.covariates.values)?;
        let (_, top) = select::select(&expansion.scores, &std_cov, self.cfg.alpha, None, 5)?;
        let names: Vec<String> = top
            .iter()
            .map(|t| bundle.covariates.covariates[t.index].clone())
            .collect();
        // canonical covariate order within the subset, so the sign convention
        // anchors on the first canonical column
        let mut ordered: Vec<String> = bundle
            .covariates
            .covariates
            .iter()
            .filter(|c| names.contains(c))
            .cloned()
            .collect();
        let sub = bundle
            .covariates
            .submatrix(&ordered.iter().map(|s| s.as_str()).collect::<Vec<_>>())?;
        let pca = multivar::pca(&sub)?;
        let scores: Vec<f64> = (0..sub.nrows()).map(|i| pca.scores[(i, 0)]).collect();
        ordered.truncate(5);
        Ok((names, scores, pca.explained[0]))
    }

    pub fn cmd_regress_ff(&mut self, with_pc1: bool) -> Result<()> {
        let bundle = self.bundle()?;
        let smoothed = self.smoothed(&bundle)?;
        let model = self.motif_model(&smoothed)?;
        let (mort, mob, pos) = self.aligned(&model, &smoothed)?;
        let mut spec = FunRegSpec::new(mort.clone())
            .with_functional("mobility", mob.clone())
            .with_functional("positivity", pos.clone());
        let mut pc1_share = None;
        if with_pc1 {
            let (_, scores, share) = self.top5_pc1(&bundle, &mort)?;
            spec = spec.with_scalar("pc1", scores);
            pc1_share = Some(share);
        }
        let settings = PenaltySettings::default();
        let fit = funreg::fit(&spec, &settings)?;
        let loocv = funreg::loocv_r_squared(&spec, &settings)?;
        let mut metrics = CsvTable::new(&["metric", "term", "value"]);
        metrics.row(&["r2".into(), "".into(), format_float(fit.r2)]);
        metrics.row(&["loocv_r2".into(), "".into(), format_float(loocv)]);
        for term in fit.term_names() {
            let p = funreg::partial_r_squared(&spec, &settings, term)?;
            metrics.row(&["partial_r2".into(), term.clone(), format_float(p)]);
        }
        if let Some(share) = pc1_share {
            metrics.row(&["pc1_explained".into(), "".into(), format_float(share)]);
        }
        let suffix = if with_pc1 { "_pc1" } else { "" };
        self.emit(&format!("fit_metrics{suffix}.csv"), &metrics.to_csv())?;
        for term in ["mobility", "positivity"] {
            let (est, se) = fit.beta_surface(term)?;
            let mut table = CsvTable::new(&["s", "t", "estimate", "se"]);
            for s in 0..est.nrows() {
                for t in 0..est.ncols() {
                    table.row(&[
                        format!("{s}"),
                        format!("{t}"),
                        format_float(est[(s, t)]),
                        format_float(se[(s, t)]),
                    ]);
                }
            }
            self.emit(&format!("beta_surface_{term}{suffix}.csv"), &table.to_csv())?;
            self.emit(
                &format!("beta_surface_{term}{suffix}_contour.svg"),
                &svg::surface_contour(&est, &format!("effect surface: {term}")),
            )?;
            self.emit(
                &format!("beta_surface_{term}{suffix}_3d.svg"),
                &svg::surface_isometric(&est, &format!("effect surface: {term}")),
            )?;
        }
        if with_pc1 {
            let (est, se) = fit.beta_curve("pc1")?;
            let signs = fit.effect_sign_bands("pc1", 0.95)?;
            let mut table = CsvTable::new(&["t", "estimate", "se", "sign"]);
            for t in 0..est.len() {
                table.row(&[
                    format!("{t}"),
                    format_float(est[t]),
                    format_float(se[t]),
                    sign_str(signs[t]).to_string(),
                ]);
            }
            self.emit("beta_curve_pc1.csv", &table.to_csv())?;
        }
        // sign-preserving integrated squared residual per region
        let w = fdepi::quad::trapezoid_weights(mort.len_t());
        let resid_values: Vec<f64> = (0..mort.n())
            .map(|i| {
                (0..mort.len_t())
                    .map(|t| {
                        let r = fit.residuals()[(i, t)];
                        w[t] * r * r.abs()
                    })
                    .sum::<f64>()
            })
            .collect();
        self.emit(
            &format!("ff_residuals{suffix}.svg"),
            &svg::bar_chart(
                "signed integrated squared residual by region",
                mort.names(),
                &resid_values,
            ),
        )?;
        Ok(())
    }

    pub fn cmd_regress_fs(&mut self, two_intercepts: bool) -> Result<()> {
        let bundle = self.bundle()?;
        let smoothed = self.smoothed(&bundle)?;
        let model = self.motif_model(&smoothed)?;
        let (mort, _, _) = self.aligned(&model, &smoothed)?;
        let settings = PenaltySettings::default();
        let mut metrics = CsvTable::new(&["covariate", "r2", "loocv_r2"]);
        let suffix = if two_intercepts { "_two_intercepts" } else { "" };
        for name in bundle.covariates.covariates.clone() {
            let values = bundle.covariates.column(&name)?;
            let mut spec = FunRegSpec::new(mort.clone()).with_scalar(&name, values);
            if two_intercepts {
                spec = spec.with_intercept(InterceptMode::PerGroup(model.hard_labels.clone()));
            }
            let fit = funreg::fit(&spec, &settings)?;
            let loocv = funreg::loocv_r_squared(&spec, &settings)?;
            metrics.row(&[name.clone(), format_float(fit.r2), format_float(loocv)]);
            let (est, se) = fit.beta_curve(&name)?;
            let signs = fit.effect_sign_bands(&name, 0.95)?;
            let mut table = CsvTable::new(&["t", "estimate", "se", "sign"]);
            for t in 0..est.len() {
                table.row(&[
                    format!("{t}"),
                    format_float(est[t]),
                    format_float(se[t]),
                    sign_str(signs[t]).to_string(),
                ]);
            }
            self.emit(
                &format!("beta_curve_{}{suffix}.csv", slugify(&name)),
                &table.to_csv(),
            )?;
        }
        self.emit(&format!("fs_metrics{suffix}.csv"), &metrics.to_csv())?;
        Ok(())
    }

    pub fn cmd_hclust(&mut self) -> Result<()> {
        let bundle = self.bundle()?;
        let (std_cov, _) = multivar::standardize_columns(&bundle.covariates.values)?;
        let regions = multivar::hcluster(&std_cov, &bundle.covariates.regions)?;
        let cov_t = std_cov.transpose();
        let covariates = multivar::hcluster(&cov_t, &bundle.covariates.covariates)?;
        for (name, dendro) in [("regions", &regions), ("covariates", &covariates)] {
            let mut table = CsvTable::new(&["step", "left", "right", "height", "size"]);
            for (k, m) in dendro.merges.iter().enumerate() {
                table.row(&[
                    format!("{k}"),
                    format!("{}", m.left),
                    format!("{}", m.right),
                    format_float(m.height),
                    format!("{}", m.size),
                ]);
            }
            self.emit(&format!("dendrogram_{name}.csv"), &table.to_csv())?;
        }
        self.emit(
            "covariate_heatmap.svg",
            &svg::clustered_heatmap(
                &std_cov,
                &bundle.covariates.regions,
                &bundle.covariates.covariates,
                &regions,
                &covariates,
                &[],
            ),
        )?;
        Ok(())
    }

    pub fn cmd_bicluster(&mut self) -> Result<()> {
        let bundle = self.bundle()?;
        let (std_cov, _) = multivar::standardize_columns(&bundle.covariates.values)?;
        let found = multivar::cheng_church(
            &std_cov,
            &multivar::ChengChurchConfig::new(self.cfg.delta),
        )?;
        let mut table = CsvTable::new(&["bicluster", "h_score", "adjusted_h_score", "regions", "covariates"]);
        for (k, b) in found.iter().enumerate() {
            table.row(&[
                format!("{}", k + 1),
                format_float(b.h),
                format_float(b.h_adj),
                b.rows
                    .iter()
                    .map(|i| bundle.covariates.regions[*i].clone())
                    .collect::<Vec<_>>()
                    .join("; "),
                b.cols
                    .iter()
                    .map(|j| bundle.covariates.covariates[*j].clone())
                    .collect::<Vec<_>>()
                    .join("; "),
            ]);
        }
        self.emit("biclusters.csv", &table.to_csv())?;
        let regions = multivar::hcluster(&std_cov, &bundle.covariates.regions)?;
        let cov_t = std_cov.transpose();
        let covariates = multivar::hcluster(&cov_t, &bundle.covariates.covariates)?;
        self.emit(
            "bicluster_heatmap.svg",
            &svg::clustered_heatmap(
                &std_cov,
                &bundle.covariates.regions,
                &bundle.covariates.covariates,
                &regions,
                &covariates,
                &found,
            ),
        )?;
        Ok(())
    }

    pub fn cmd_pca(&mut self, subset: Option<&[String]>) -> Result<()> {
        let bundle = self.bundle()?;
        let names: Vec<String> = match subset {
            Some(s) => s.to_vec(),
            None => bundle.covariates.covariates.clone(),
        };
        let sub = bundle
            .covariates
            .submatrix(&names.iter().map(|s| s.as_str()).collect::<Vec<_>>())?;
        let pca = multivar::pca(&sub)?;
        let mut table = CsvTable::new(
            &std::iter::once("covariate".to_string())
                .chain((1..=names.len()).map(|c| format!("pc{c}_loading")))
                .collect::<Vec<_>>()
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>(),
        );
        for (r, name) in names.iter().enumerate() {
            let mut cells = vec![name.clone()];
            for c in 0..names.len() {
                cells.push(format_float(pca.loadings[(r, c)]));
            }
            table.row(&cells);
        }
        self.emit("pca_loadings.csv", &table.to_csv())?;
        let mut explained = CsvTable::new(&["component", "explained_fraction"]);
        for (c, e) in pca.explained.iter().enumerate() {
            explained.row(&[format!("{}", c + 1), format_float(*e)]);
        }
        self.emit("pca_explained.csv", &explained.to_csv())?;
        let mut scores = CsvTable::new(
            &std::iter::once("region".to_string())
                .chain((1..=names.len()).map(|c| format!("pc{c}")))
                .collect::<Vec<_>>()
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>(),
        );
        for (i, region) in bundle.covariates.regions.iter().enumerate() {
            let mut cells = vec![region.clone()];
            for c in 0..names.len() {
                cells.push(format_float(pca.scores[(i, c)]));
            }
            scores.row(&cells);
        }
        self.emit("pca_scores.csv", &scores.to_csv())?;
        Ok(())
    }

    pub fn cmd_vif(&mut self) -> Result<()> {
        let bundle = self.bundle()?;
        let v = multivar::vif(&bundle.covariates.values)?;
        let mut table = CsvTable::new(&["covariate", "vif"]);
        for (name, value) in bundle.covariates.covariates.iter().zip(&v) {
            table.row(&[
                name.clone(),
                if value.is_infinite() {
                    "inf".to_string()
                } else {
                    format_float(*value)
                },
            ]);
        }
        self.emit("vif.csv", &table.to_csv())?;
        Ok(())
    }

    pub fn cmd_select(&mut self) -> Result<()> {
        let bundle = self.bundle()?;
        let smoothed = self.smoothed(&bundle)?;
        let model = self.motif_model(&smoothed)?;
        let (mort, _, _) = self.aligned(&model, &smoothed)?;
        let expansion = fpca::fpc(&mort, self.cfg.variance_target)?;
        let (std_cov, _) = multivar::standardize_columns(&bundle.covariates.values)?;
        let (path, top) = select::select(
            &expansion.scores,
            &std_cov,
            self.cfg.alpha,
            None,
            self.cfg.top_k,
        )?;
        let ds = self.cfg.dataset.name();
        let mut path_table = CsvTable::new(&["lambda", "n_active", "active_covariates"]);
        for (lambda, active) in path.lambdas.iter().zip(&path.active_sets) {
            path_table.row(&[
                format_float(*lambda),
                format!("{}", active.len()),
                active
                    .iter()
                    .map(|j| bundle.covariates.covariates[*j].clone())
                    .collect::<Vec<_>>()
                    .join("; "),
            ]);
        }
        self.emit(&format!("selection_path_{ds}.csv"), &path_table.to_csv())?;
        let mut top_table = CsvTable::new(&["rank", "covariate", "entry_lambda"]);
        for feature in &top {
            top_table.row(&[
                format!("{}", feature.rank),
                bundle.covariates.covariates[feature.index].clone(),
                format_float(feature.entry_lambda),
            ]);
        }
        self.emit(&format!("top_features_{ds}.csv"), &top_table.to_csv())?;
        Ok(())
    }

    pub fn cmd_pipeline(&mut self) -> Result<Vec<(String, f64)>> {
        let mut timings = Vec::new();
        macro_rules! step {
            ($name:expr, $body:expr) => {{
                let start = std::time::Instant::now();
                $body?;
                timings.push(($name.to_string(), start.elapsed().as_secs_f64()));
            }};
        }
        step!("ingest", self.cmd_ingest());
        step!("smooth", self.cmd_smooth());
        step!("motifs", self.cmd_motifs());
        step!("align", self.cmd_align());
        step!("iwt", self.cmd_iwt());
        step!("depth", self.cmd_depth());
        step!("regress-ff", self.cmd_regress_ff(false));
        step!("hclust", self.cmd_hclust());
        step!("bicluster", self.cmd_bicluster());
        step!("pca", self.cmd_pca(None));
        step!("vif", self.cmd_vif());
        step!("regress-fs", self.cmd_regress_fs(false));
        step!("select", self.cmd_select());
        step!("regress-ff-pc1", self.cmd_regress_ff(true));
        Ok(timings)
    }
}

fn sign_str(s: EffectSign) -> &'static str {
    match s {
        EffectSign::Positive => "positive",
        EffectSign::Negative => "negative",
        EffectSign::NonSignificant => "ns",
    }
}

/// Compute a stable hexadecimal hash of the canonical config string.
pub fn config_hash(canonical: &str) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    let digest = hasher.finalize();
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
