//! Penalized functional regression on the daily grid.
//!
//! The model for response curves `y_i(t)` is
//!
//! `y_i(t) = alpha(t) + sum_l ∫ beta_l(s,t) x_il(s) ds
//!          + sum_j beta_j(t) x_ij + eps_i(t)`
//!
//! with surface coefficients for functional predictors and curve
//! coefficients for scalar covariates. Surfaces live in a tensor-product
//! cubic B-spline basis (15 functions per margin by default) with a
//! second-derivative roughness penalty per margin; curves use the same
//! univariate basis and penalty. The intercept is left unpenalized and
//! saturated (one free value per day and group), so residuals average to
//! zero pointwise.
//!
//! All integrals are trapezoidal on the grid. The normal equations are
//! assembled from Kronecker building blocks, which keeps a leave-one-out
//! sweep at a few hundred small Cholesky solves.

use crate::basis::BSplineBasis;
use crate::error::{FdaError, Result};
use crate::grid::FunctionalDataset;
use crate::quad::trapezoid_weights;
use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

/// One functional intercept for everybody, or one per group of curves.
#[derive(Debug, Clone, PartialEq)]
pub enum InterceptMode {
    Single,
    /// Group label per curve (labels `0..n_groups`, each non-empty).
    PerGroup(Vec<usize>),
}

#[derive(Debug, Clone)]
pub struct FunctionalTerm {
    pub name: String,
    pub curves: FunctionalDataset,
}

#[derive(Debug, Clone)]
pub struct ScalarTerm {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FunRegSpec {
    pub response: FunctionalDataset,
    pub functional: Vec<FunctionalTerm>,
    pub scalars: Vec<ScalarTerm>,
    pub intercept: InterceptMode,
}

impl FunRegSpec {
    pub fn new(response: FunctionalDataset) -> Self {
        FunRegSpec {
            response,
            functional: Vec::new(),
            scalars: Vec::new(),
            intercept: InterceptMode::Single,
        }
    }

    pub fn with_functional(mut self, name: &str, curves: FunctionalDataset) -> Self {
        self.functional.push(FunctionalTerm {
            name: name.to_string(),
            curves,
        });
        self
    }

    pub fn with_scalar(mut self, name: &str, values: Vec<f64>) -> Self {
        self.scalars.push(ScalarTerm {
            name: name.to_string(),
            values,
        });
        self
    }

    pub fn with_intercept(mut self, intercept: InterceptMode) -> Self {
        self.intercept = intercept;
        self
    }

    fn n_terms(&self) -> usize {
        self.functional.len() + self.scalars.len()
    }

    fn term_names(&self) -> Vec<&str> {
        self.functional
            .iter()
            .map(|t| t.name.as_str())
            .chain(self.scalars.iter().map(|t| t.name.as_str()))
            .collect()
    }

    /// Spec with one term removed, penalties re-selected by the caller.
    pub fn without_term(&self, name: &str) -> Result<FunRegSpec> {
        let mut out = self.clone();
        let nf = out.functional.len();
        out.functional.retain(|t| t.name != name);
        let ns = out.scalars.len();
        out.scalars.retain(|t| t.name != name);
        if out.functional.len() == nf && out.scalars.len() == ns {
            return Err(FdaError::invalid(format!("no term named '{name}'")));
        }
        Ok(out)
    }
}

/// How smoothing parameters are chosen.
#[derive(Debug, Clone)]
pub enum LambdaMode {
    /// Per-term grid search minimizing leave-one-curve-out prediction error
    /// (two coordinate passes). Pointwise criteria such as GCV treat the
    /// n*T residuals as independent and collapse to interpolation here, so
    /// the curve is the held-out unit.
    Auto,
    /// One fixed value per term, functional terms first.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct PenaltySettings {
    /// Basis functions per margin for coefficient surfaces and curves.
    pub basis_dim: usize,
    pub lambda: LambdaMode,
}

impl Default for PenaltySettings {
    fn default() -> Self {
        PenaltySettings {
            basis_dim: 15,
            lambda: LambdaMode::Auto,
        }
    }
}

fn auto_lambda_grid() -> Vec<f64> {
    (0..9).map(|i| 10f64.powf(-2.0 + 12.0 * i as f64 / 8.0)).collect()
}

/// A fitted functional regression.
#[derive(Debug, Clone)]
pub struct FunRegFit {
    names: Vec<String>,
    groups: Vec<usize>,
    len_t: usize,
    term_names: Vec<String>,
    n_functional: usize,
    /// Estimated intercept curves in original units, one row per group.
    intercepts: DMatrix<f64>,
    intercept_se: DMatrix<f64>,
    /// Surface coefficients in the tensor basis, one `q x q` matrix per
    /// functional term.
    thetas: Vec<DMatrix<f64>>,
    /// Curve coefficients in the univariate basis (standardized covariate
    /// scale), one length-`q` vector per scalar term.
    curve_coefs: Vec<DVector<f64>>,
    scalar_stats: Vec<(f64, f64)>,
    basis_matrix_t: DMatrix<f64>,
    predictor_bases: Vec<(BSplineBasis, DMatrix<f64>)>,
    /// Posterior-style covariance of the stacked coefficients.
    covariance: DMatrix<f64>,
    layout: Layout,
    pub lambdas: Vec<f64>,
    fitted: DMatrix<f64>,
    residuals: DMatrix<f64>,
    pub r2: f64,
    pub edf: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone)]
struct Layout {
    n_groups: usize,
    len_t: usize,
    q: usize,
    n_functional: usize,
    n_scalar: usize,
}

impl Layout {
    fn dim(&self) -> usize {
        self.n_groups * self.len_t
            + self.n_functional * self.q * self.q
            + self.n_scalar * self.q
    }

    fn alpha_index(&self, g: usize, t: usize) -> usize {
        g * self.len_t + t
    }

    fn func_offset(&self, l: usize) -> usize {
        self.n_groups * self.len_t + l * self.q * self.q
    }

    fn scalar_offset(&self, j: usize) -> usize {
        self.n_groups * self.len_t + self.n_functional * self.q * self.q + j * self.q
    }
}

struct Assembled {
    normal: DMatrix<f64>,
    rhs: DVector<f64>,
    n_obs: usize,
}

struct Engine {
    layout: Layout,
    groups: Vec<usize>,
    /// z[l]: n x q integral design of functional term l.
    z: Vec<DMatrix<f64>>,
    /// standardized scalar covariates, n x J.
    xs: DMatrix<f64>,
    scalar_stats: Vec<(f64, f64)>,
    y: DMatrix<f64>,
    bmat_t: DMatrix<f64>,
    gram_b: DMatrix<f64>,
    penalty_r: DMatrix<f64>,
    predictor_bases: Vec<(BSplineBasis, DMatrix<f64>)>,
}

impl Engine {
    fn build(spec: &FunRegSpec, settings: &PenaltySettings) -> Result<Self> {
        let n = spec.response.n();
        let t = spec.response.len_t();
        let (groups, n_groups) = match &spec.intercept {
            InterceptMode::Single => (vec![0usize; n], 1),
            InterceptMode::PerGroup(labels) => {
                if labels.len() != n {
                    return Err(FdaError::dimension(format!(
                        "{} group labels for {n} curves",
                        labels.len()
                    )));
                }
                let n_groups = labels.iter().max().map_or(0, |m| m + 1);
                for g in 0..n_groups {
                    if !labels.contains(&g) {
                        return Err(FdaError::invalid(format!("intercept group {g} is empty")));
                    }
                }
                (labels.clone(), n_groups)
            }
        };
        if n <= n_groups + spec.n_terms() {
            return Err(FdaError::invalid(format!(
                "{n} curves cannot support {} model terms",
                n_groups + spec.n_terms()
            )));
        }
        let q = settings.basis_dim;
        let basis = BSplineBasis::with_dimension(0.0, (t - 1) as f64, q)?;
        let points: Vec<f64> = (0..t).map(|i| i as f64).collect();
        let bmat_t = basis.evaluate_matrix(&points);
        let gram_b = bmat_t.transpose() * &bmat_t;
        let penalty_r = basis.second_derivative_gram();

        let mut z = Vec::new();
        let mut predictor_bases = Vec::new();
        for term in &spec.functional {
            if term.curves.names() != spec.response.names() {
                return Err(FdaError::dimension(format!(
                    "functional predictor '{}' has mismatched regions",
                    term.name
                )));
            }
            let s_len = term.curves.len_t();
            let pred_basis = BSplineBasis::with_dimension(0.0, (s_len - 1) as f64, q)?;
            let pred_points: Vec<f64> = (0..s_len).map(|i| i as f64).collect();
            let bmat_s = pred_basis.evaluate_matrix(&pred_points);
            let w = trapezoid_weights(s_len);
            let mut zm = DMatrix::zeros(n, q);
            for i in 0..n {
                for p in 0..q {
                    let mut acc = 0.0;
                    for (s, ws) in w.iter().enumerate() {
                        acc += ws * term.curves.values()[(i, s)] * bmat_s[(s, p)];
                    }
                    zm[(i, p)] = acc;
                }
            }
            if zm.amax() == 0.0 {
                return Err(FdaError::invalid(format!(
                    "functional predictor '{}' is identically zero",
                    term.name
                )));
            }
            z.push(zm);
            predictor_bases.push((pred_basis, bmat_s));
        }

        let js = spec.scalars.len();
        let mut xs = DMatrix::zeros(n, js);
        let mut scalar_stats = Vec::with_capacity(js);
        for (j, term) in spec.scalars.iter().enumerate() {
            if term.values.len() != n {
                return Err(FdaError::dimension(format!(
                    "scalar covariate '{}' has {} values for {n} curves",
                    term.name,
                    term.values.len()
                )));
            }
            let mean = term.values.iter().sum::<f64>() / n as f64;
            let var = term
                .values
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .sum::<f64>()
                / (n as f64 - 1.0);
            let sd = var.sqrt();
            if sd <= 0.0 {
                return Err(FdaError::invalid(format!(
                    "scalar covariate '{}' has zero variance",
                    term.name
                )));
            }
            for i in 0..n {
                xs[(i, j)] = (term.values[i] - mean) / sd;
            }
            scalar_stats.push((mean, sd));
        }

        Ok(Engine {
            layout: Layout {
                n_groups,
                len_t: t,
                q,
                n_functional: spec.functional.len(),
                n_scalar: js,
            },
            groups,
            z,
            xs,
            scalar_stats,
            y: spec.response.values().clone(),
            bmat_t,
            gram_b,
            penalty_r,
            predictor_bases,
        })
    }

    /// Normal equations restricted to a subset of curves.
    fn assemble(&self, include: &[bool]) -> Assembled {
        let lay = &self.layout;
        let d = lay.dim();
        let t = lay.len_t;
        let q = lay.q;
        let n = self.groups.len();
        let idx: Vec<usize> = (0..n).filter(|i| include[*i]).collect();
        let mut normal = DMatrix::zeros(d, d);
        let mut rhs = DVector::zeros(d);

        // group counts and sums
        let mut g_count = vec![0.0f64; lay.n_groups];
        for &i in &idx {
            g_count[self.groups[i]] += 1.0;
        }
        for g in 0..lay.n_groups {
            for tt in 0..t {
                let a = lay.alpha_index(g, tt);
                normal[(a, a)] = g_count[g];
            }
        }
        // alpha x functional and alpha x scalar
        for l in 0..lay.n_functional {
            let mut zsum = vec![vec![0.0f64; q]; lay.n_groups];
            for &i in &idx {
                for p in 0..q {
                    zsum[self.groups[i]][p] += self.z[l][(i, p)];
                }
            }
            let off = lay.func_offset(l);
            for g in 0..lay.n_groups {
                for tt in 0..t {
                    let a = lay.alpha_index(g, tt);
                    for p in 0..q {
                        let zs = zsum[g][p];
                        if zs == 0.0 {
                            continue;
                        }
                        for qq in 0..q {
                            let v = zs * self.bmat_t[(tt, qq)];
                            let c = off + p * q + qq;
                            normal[(a, c)] += v;
                            normal[(c, a)] += v;
                        }
                    }
                }
            }
        }
        for j in 0..lay.n_scalar {
            let mut xsum = vec![0.0f64; lay.n_groups];
            for &i in &idx {
                xsum[self.groups[i]] += self.xs[(i, j)];
            }
            let off = lay.scalar_offset(j);
            for g in 0..lay.n_groups {
                for tt in 0..t {
                    let a = lay.alpha_index(g, tt);
                    for qq in 0..q {
                        let v = xsum[g] * self.bmat_t[(tt, qq)];
                        let c = off + qq;
                        normal[(a, c)] += v;
                        normal[(c, a)] += v;
                    }
                }
            }
        }
        // functional x functional
        for l in 0..lay.n_functional {
            for mm in l..lay.n_functional {
                let mut ztz: DMatrix<f64> = DMatrix::zeros(q, q);
                for &i in &idx {
                    for p in 0..q {
                        for pp in 0..q {
                            ztz[(p, pp)] += self.z[l][(i, p)] * self.z[mm][(i, pp)];
                        }
                    }
                }
                let (ol, om) = (lay.func_offset(l), lay.func_offset(mm));
                for p in 0..q {
                    for pp in 0..q {
                        let w = ztz[(p, pp)];
                        if w == 0.0 {
                            continue;
                        }
                        for qa in 0..q {
                            for qb in 0..q {
                                let v = w * self.gram_b[(qa, qb)];
                                normal[(ol + p * q + qa, om + pp * q + qb)] += v;
                                if mm != l {
                                    normal[(om + pp * q + qb, ol + p * q + qa)] += v;
                                }
                            }
                        }
                    }
                }
            }
        }
        // functional x scalar
        for l in 0..lay.n_functional {
            for j in 0..lay.n_scalar {
                let mut zx = vec![0.0f64; q];
                for &i in &idx {
                    for p in 0..q {
                        zx[p] += self.z[l][(i, p)] * self.xs[(i, j)];
                    }
                }
                let (ol, oj) = (lay.func_offset(l), lay.scalar_offset(j));
                for p in 0..q {
                    if zx[p] == 0.0 {
                        continue;
                    }
                    for qa in 0..q {
                        for qb in 0..q {
                            let v = zx[p] * self.gram_b[(qa, qb)];
                            normal[(ol + p * q + qa, oj + qb)] += v;
                            normal[(oj + qb, ol + p * q + qa)] += v;
                        }
                    }
                }
            }
        }
        // scalar x scalar
        for j in 0..lay.n_scalar {
            for jj in j..lay.n_scalar {
                let mut xx = 0.0;
                for &i in &idx {
                    xx += self.xs[(i, j)] * self.xs[(i, jj)];
                }
                let (oj, ojj) = (lay.scalar_offset(j), lay.scalar_offset(jj));
                for qa in 0..q {
                    for qb in 0..q {
                        let v = xx * self.gram_b[(qa, qb)];
                        normal[(oj + qa, ojj + qb)] += v;
                        if jj != j {
                            normal[(ojj + qb, oj + qa)] += v;
                        }
                    }
                }
            }
        }
        // right-hand side
        for &i in &idx {
            let g = self.groups[i];
            for tt in 0..t {
                rhs[lay.alpha_index(g, tt)] += self.y[(i, tt)];
            }
        }
        for l in 0..lay.n_functional {
            let off = lay.func_offset(l);
            for p in 0..q {
                for qq in 0..q {
                    let mut acc = 0.0;
                    for &i in &idx {
                        let zp = self.z[l][(i, p)];
                        if zp == 0.0 {
                            continue;
                        }
                        let mut inner = 0.0;
                        for tt in 0..t {
                            inner += self.y[(i, tt)] * self.bmat_t[(tt, qq)];
                        }
                        acc += zp * inner;
                    }
                    rhs[off + p * q + qq] = acc;
                }
            }
        }
        for j in 0..lay.n_scalar {
            let off = lay.scalar_offset(j);
            for qq in 0..q {
                let mut acc = 0.0;
                for &i in &idx {
                    let xv = self.xs[(i, j)];
                    if xv == 0.0 {
                        continue;
                    }
                    for tt in 0..t {
                        acc += xv * self.y[(i, tt)] * self.bmat_t[(tt, qq)];
                    }
                }
                rhs[off + qq] = acc;
            }
        }
        Assembled {
            normal,
            rhs,
            n_obs: idx.len() * t,
        }
    }

    fn penalty_matrix(&self, lambdas: &[f64]) -> DMatrix<f64> {
        let lay = &self.layout;
        let q = lay.q;
        let mut p = DMatrix::zeros(lay.dim(), lay.dim());
        for l in 0..lay.n_functional {
            let off = lay.func_offset(l);
            let lam = lambdas[l];
            // lam * (R (x) I + I (x) R), coefficients flattened s-major
            for a in 0..q {
                for b in 0..q {
                    let r = self.penalty_r[(a, b)];
                    if r == 0.0 {
                        continue;
                    }
                    for k in 0..q {
                        p[(off + a * q + k, off + b * q + k)] += lam * r;
                        p[(off + k * q + a, off + k * q + b)] += lam * r;
                    }
                }
            }
        }
        for j in 0..lay.n_scalar {
            let off = lay.scalar_offset(j);
            let lam = lambdas[lay.n_functional + j];
            for a in 0..q {
                for b in 0..q {
                    p[(off + a, off + b)] += lam * self.penalty_r[(a, b)];
                }
            }
        }
        p
    }

    /// Solve the penalized normal equations; pseudo-inverse fallback keeps
    /// the saturated lambda = 0 oracle case well-defined.
    fn solve(
        &self,
        asm: &Assembled,
        penalty: &DMatrix<f64>,
    ) -> Result<(DVector<f64>, f64, Option<Cholesky<f64, nalgebra::Dyn>>)> {
        let h = &asm.normal + penalty;
        if let Some(chol) = Cholesky::new(h.clone()) {
            let coef = chol.solve(&asm.rhs);
            let edf = chol.solve(&asm.normal).trace();
            return Ok((coef, edf, Some(chol)));
        }
        let eig = nalgebra::SymmetricEigen::new(h);
        let max_ev = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        if max_ev <= 0.0 {
            return Err(FdaError::numerical(
                "fun-reg",
                "fit",
                "normal matrix has no positive eigenvalues",
            ));
        }
        let tol = max_ev * 1e-10;
        let ut_rhs = eig.eigenvectors.transpose() * &asm.rhs;
        let mut scaled = ut_rhs.clone();
        for (k, v) in scaled.iter_mut().enumerate() {
            *v = if eig.eigenvalues[k] > tol {
                *v / eig.eigenvalues[k]
            } else {
                0.0
            };
        }
        let coef = &eig.eigenvectors * scaled;
        // edf = tr(H^+ N)
        let hn = {
            let un = eig.eigenvectors.transpose() * &asm.normal * &eig.eigenvectors;
            let mut tr = 0.0;
            for k in 0..un.nrows() {
                if eig.eigenvalues[k] > tol {
                    tr += un[(k, k)] / eig.eigenvalues[k];
                }
            }
            tr
        };
        Ok((coef, hn, None))
    }

    /// Fitted curves for arbitrary curve indices under given coefficients.
    fn predict(&self, coef: &DVector<f64>, curve_indices: &[usize]) -> DMatrix<f64> {
        let lay = &self.layout;
        let q = lay.q;
        let t = lay.len_t;
        let mut out = DMatrix::zeros(curve_indices.len(), t);
        for (row, &i) in curve_indices.iter().enumerate() {
            let g = self.groups[i];
            for tt in 0..t {
                let mut v = coef[lay.alpha_index(g, tt)];
                for l in 0..lay.n_functional {
                    let off = lay.func_offset(l);
                    for p in 0..q {
                        let zp = self.z[l][(i, p)];
                        if zp == 0.0 {
                            continue;
                        }
                        for qq in 0..q {
                            v += zp * coef[off + p * q + qq] * self.bmat_t[(tt, qq)];
                        }
                    }
                }
                for j in 0..lay.n_scalar {
                    let off = lay.scalar_offset(j);
                    let xv = self.xs[(i, j)];
                    for qq in 0..q {
                        v += xv * coef[off + qq] * self.bmat_t[(tt, qq)];
                    }
                }
                out[(row, tt)] = v;
            }
        }
        out
    }

    fn select_lambdas(&self, mode: &LambdaMode) -> Result<Vec<f64>> {
        let n_terms = self.layout.n_functional + self.layout.n_scalar;
        match mode {
            LambdaMode::Fixed(v) => {
                if v.len() != n_terms {
                    return Err(FdaError::invalid(format!(
                        "{} fixed lambdas for {n_terms} terms",
                        v.len()
                    )));
                }
                if v.iter().any(|l| !(*l >= 0.0)) {
                    return Err(FdaError::invalid("lambdas must be >= 0".to_string()));
                }
                Ok(v.clone())
            }
            LambdaMode::Auto => {
                let mut lambdas = vec![1.0; n_terms];
                if n_terms == 0 {
                    return Ok(lambdas);
                }
                let n = self.groups.len();
                // five round-robin curve folds: held-out prediction error is
                // the selection criterion (pointwise criteria collapse to
                // interpolation when whole curves are the replication unit)
                let k_folds = 5.min(n);
                let fold_of: Vec<usize> = (0..n).map(|i| i % k_folds).collect();
                let folds: Vec<(Assembled, Vec<usize>)> = (0..k_folds)
                    .map(|f| {
                        let include: Vec<bool> = (0..n).map(|i| fold_of[i] != f).collect();
                        let held: Vec<usize> = (0..n).filter(|i| fold_of[*i] == f).collect();
                        (self.assemble(&include), held)
                    })
                    .collect();
                let press_for = |trial: &[f64]| -> Option<f64> {
                    let pen = self.penalty_matrix(trial);
                    let fold_sse: Vec<Option<f64>> = folds
                        .par_iter()
                        .map(|(asm, held)| {
                            self.solve(asm, &pen).ok().map(|(coef, _, _)| {
                                let pred = self.predict(&coef, held);
                                let mut sse = 0.0;
                                for (row, &i) in held.iter().enumerate() {
                                    for tt in 0..self.layout.len_t {
                                        let r = self.y[(i, tt)] - pred[(row, tt)];
                                        sse += r * r;
                                    }
                                }
                                sse
                            })
                        })
                        .collect();
                    if fold_sse.iter().any(|s| s.is_none()) {
                        return None;
                    }
                    Some(fold_sse.iter().map(|s| s.unwrap()).sum())
                };
                for _pass in 0..2 {
                    for term in 0..n_terms {
                        let mut best = (lambdas[term], f64::INFINITY);
                        // coarse grid, then one refinement step around the best
                        for &cand in &auto_lambda_grid() {
                            let mut trial = lambdas.clone();
                            trial[term] = cand;
                            if let Some(press) = press_for(&trial) {
                                if press < best.1 || (press == best.1 && cand > best.0) {
                                    best = (cand, press);
                                }
                            }
                        }
                        for &factor in &[10f64.powf(-0.75), 10f64.powf(0.75)] {
                            let cand = best.0 * factor;
                            let mut trial = lambdas.clone();
                            trial[term] = cand;
                            if let Some(press) = press_for(&trial) {
                                if press < best.1 || (press == best.1 && cand > best.0) {
                                    best = (cand, press);
                                }
                            }
                        }
                        lambdas[term] = best.0;
                    }
                }
                Ok(lambdas)
            }
        }
    }
}

/// Fit the penalized functional regression.
pub fn fit(spec: &FunRegSpec, settings: &PenaltySettings) -> Result<FunRegFit> {
    let engine = Engine::build(spec, settings)?;
    let n = spec.response.n();
    let include = vec![true; n];
    let asm = engine.assemble(&include);
    let lambdas = engine.select_lambdas(&settings.lambda)?;
    let pen = engine.penalty_matrix(&lambdas);
    let (coef, edf, chol) = engine.solve(&asm, &pen)?;
    let all: Vec<usize> = (0..n).collect();
    let fitted = engine.predict(&coef, &all);
    let residuals = spec.response.values() - &fitted;
    let rss: f64 = residuals.iter().map(|v| v * v).sum();
    let sigma2 = rss / (asm.n_obs as f64 - edf).max(1.0);

    // covariance of coefficients: sigma2 * H^-1 N H^-1
    let lay = engine.layout.clone();
    let covariance = {
        let hin = match &chol {
            Some(c) => c.solve(&asm.normal),
            None => {
                // pseudo-inverse path: recompute via eigen decomposition
                let h = &asm.normal + &pen;
                let eig = nalgebra::SymmetricEigen::new(h);
                let max_ev = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
                let tol = max_ev * 1e-10;
                let mut inv: DMatrix<f64> = DMatrix::zeros(lay.dim(), lay.dim());
                for k in 0..lay.dim() {
                    if eig.eigenvalues[k] > tol {
                        let col = eig.eigenvectors.column(k);
                        for a in 0..lay.dim() {
                            for b in 0..lay.dim() {
                                inv[(a, b)] += col[a] * col[b] / eig.eigenvalues[k];
                            }
                        }
                    }
                }
                &inv * &asm.normal
            }
        };
        let h_inv_n = hin;
        let h_inv_n_h_inv = match &chol {
            Some(c) => c.solve(&h_inv_n.transpose()),
            None => {
                let h = &asm.normal + &pen;
                let eig = nalgebra::SymmetricEigen::new(h);
                let max_ev = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
                let tol = max_ev * 1e-10;
                let mut inv: DMatrix<f64> = DMatrix::zeros(lay.dim(), lay.dim());
                for k in 0..lay.dim() {
                    if eig.eigenvalues[k] > tol {
                        let col = eig.eigenvectors.column(k);
                        for a in 0..lay.dim() {
                            for b in 0..lay.dim() {
                                inv[(a, b)] += col[a] * col[b] / eig.eigenvalues[k];
                            }
                        }
                    }
                }
                &inv * h_inv_n.transpose()
            }
        };
        h_inv_n_h_inv.scale(sigma2)
    };

    // intercepts in original units: subtract the standardization offsets
    let t = lay.len_t;
    let q = lay.q;
    let mut intercepts = DMatrix::zeros(lay.n_groups, t);
    let mut intercept_se = DMatrix::zeros(lay.n_groups, t);
    for g in 0..lay.n_groups {
        for tt in 0..t {
            let a = lay.alpha_index(g, tt);
            let mut v = coef[a];
            for j in 0..lay.n_scalar {
                let off = lay.scalar_offset(j);
                let (mean, sd) = engine.scalar_stats[j];
                let mut beta_std = 0.0;
                for qq in 0..q {
                    beta_std += coef[off + qq] * engine.bmat_t[(tt, qq)];
                }
                v -= beta_std * mean / sd;
            }
            intercepts[(g, tt)] = v;
            intercept_se[(g, tt)] = covariance[(a, a)].max(0.0).sqrt();
        }
    }

    let mut thetas = Vec::new();
    for l in 0..lay.n_functional {
        let off = lay.func_offset(l);
        let mut th = DMatrix::zeros(q, q);
        for p in 0..q {
            for qq in 0..q {
                th[(p, qq)] = coef[off + p * q + qq];
            }
        }
        thetas.push(th);
    }
    let mut curve_coefs = Vec::new();
    for j in 0..lay.n_scalar {
        let off = lay.scalar_offset(j);
        curve_coefs.push(DVector::from_iterator(
            q,
            (0..q).map(|qq| coef[off + qq]),
        ));
    }

    // R^2 = SS_reg / (SS_reg + SS_res) with trapezoidal time weights
    let w = trapezoid_weights(t);
    let mean_curve = spec.response.mean_curve();
    let mut ss_reg = 0.0;
    let mut ss_res = 0.0;
    for i in 0..n {
        for tt in 0..t {
            ss_reg += w[tt] * (fitted[(i, tt)] - mean_curve[tt]).powi(2);
            ss_res += w[tt] * (spec.response.values()[(i, tt)] - fitted[(i, tt)]).powi(2);
        }
    }
    let r2 = if ss_reg + ss_res > 0.0 {
        ss_reg / (ss_reg + ss_res)
    } else {
        0.0
    };

    Ok(FunRegFit {
        names: spec.response.names().to_vec(),
        groups: engine.groups.clone(),
        len_t: t,
        term_names: spec.term_names().iter().map(|s| s.to_string()).collect(),
        n_functional: lay.n_functional,
        intercepts,
        intercept_se,
        thetas,
        curve_coefs,
        scalar_stats: engine.scalar_stats.clone(),
        basis_matrix_t: engine.bmat_t.clone(),
        predictor_bases: engine.predictor_bases.clone(),
        covariance,
        layout: lay,
        lambdas,
        fitted,
        residuals,
        r2,
        edf,
        sigma2,
    })
}

/// Per-day classification of a scalar effect against zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffectSign {
    Positive,
    Negative,
    NonSignificant,
}

impl FunRegFit {
    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Intercept group label of each curve (all zero in single mode).
    pub fn group_labels(&self) -> &[usize] {
        &self.groups
    }

    pub fn len_t(&self) -> usize {
        self.len_t
    }

    pub fn term_names(&self) -> &[String] {
        &self.term_names
    }

    pub fn fitted(&self) -> &DMatrix<f64> {
        &self.fitted
    }

    pub fn residuals(&self) -> &DMatrix<f64> {
        &self.residuals
    }

    /// Intercept curve(s) in original units, one row per group.
    pub fn intercepts(&self) -> (&DMatrix<f64>, &DMatrix<f64>) {
        (&self.intercepts, &self.intercept_se)
    }

    fn functional_index(&self, term: &str) -> Option<usize> {
        self.term_names[..self.n_functional]
            .iter()
            .position(|t| t == term)
    }

    fn scalar_index(&self, term: &str) -> Option<usize> {
        self.term_names[self.n_functional..]
            .iter()
            .position(|t| t == term)
    }

    /// Coefficient surface of a functional term on the (s, t) grid, with
    /// pointwise standard errors.
    pub fn beta_surface(&self, term: &str) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let l = self
            .functional_index(term)
            .ok_or_else(|| FdaError::invalid(format!("no functional term named '{term}'")))?;
        let (_, bmat_s) = &self.predictor_bases[l];
        let s_len = bmat_s.nrows();
        let t = self.len_t;
        let q = self.layout.q;
        let off = self.layout.func_offset(l);
        let est = bmat_s * &self.thetas[l] * self.basis_matrix_t.transpose();
        let mut se = DMatrix::zeros(s_len, t);
        for s in 0..s_len {
            for tt in 0..t {
                // v = b_s (x) b_t, variance = v' Cov_ll v
                let mut var = 0.0;
                for p in 0..q {
                    let bs_p = bmat_s[(s, p)];
                    if bs_p == 0.0 {
                        continue;
                    }
                    for qa in 0..q {
                        let va = bs_p * self.basis_matrix_t[(tt, qa)];
                        if va == 0.0 {
                            continue;
                        }
                        for pp in 0..q {
                            let bs_pp = bmat_s[(s, pp)];
                            if bs_pp == 0.0 {
                                continue;
                            }
                            for qb in 0..q {
                                let vb = bs_pp * self.basis_matrix_t[(tt, qb)];
                                if vb == 0.0 {
                                    continue;
                                }
                                var += va
                                    * vb
                                    * self.covariance[(off + p * q + qa, off + pp * q + qb)];
                            }
                        }
                    }
                }
                se[(s, tt)] = var.max(0.0).sqrt();
            }
        }
        Ok((est, se))
    }

    /// Coefficient curve of a scalar term in original covariate units, with
    /// pointwise standard errors.
    pub fn beta_curve(&self, term: &str) -> Result<(Vec<f64>, Vec<f64>)> {
        let j = self
            .scalar_index(term)
            .ok_or_else(|| FdaError::invalid(format!("no scalar term named '{term}'")))?;
        let q = self.layout.q;
        let off = self.layout.scalar_offset(j);
        let sd = self.scalar_stats[j].1;
        let t = self.len_t;
        let mut est = vec![0.0; t];
        let mut se = vec![0.0; t];
        for tt in 0..t {
            let mut v = 0.0;
            let mut var = 0.0;
            for qa in 0..q {
                v += self.curve_coefs[j][qa] * self.basis_matrix_t[(tt, qa)];
                for qb in 0..q {
                    var += self.basis_matrix_t[(tt, qa)]
                        * self.basis_matrix_t[(tt, qb)]
                        * self.covariance[(off + qa, off + qb)];
                }
            }
            est[tt] = v / sd;
            se[tt] = var.max(0.0).sqrt() / sd;
        }
        Ok((est, se))
    }

    /// Classify each day by whether the confidence band around the effect
    /// curve is entirely above zero, entirely below, or contains it.
    pub fn effect_sign_bands(&self, term: &str, level: f64) -> Result<Vec<EffectSign>> {
        if !(level > 0.0 && level < 1.0) {
            return Err(FdaError::invalid(format!(
                "confidence level must lie in (0,1), got {level}"
            )));
        }
        let (est, se) = self.beta_curve(term)?;
        let z = normal_quantile(0.5 + level / 2.0);
        Ok(est
            .iter()
            .zip(&se)
            .map(|(e, s)| {
                if e - z * s > 0.0 {
                    EffectSign::Positive
                } else if e + z * s < 0.0 {
                    EffectSign::Negative
                } else {
                    EffectSign::NonSignificant
                }
            })
            .collect())
    }
}

/// Leave-one-out cross-validated R^2: `1 - SS_pred / SS_tot`, holding the
/// smoothing parameters at the full-fit values.
pub fn loocv_r_squared(spec: &FunRegSpec, settings: &PenaltySettings) -> Result<f64> {
    let n = spec.response.n();
    if n < 3 {
        return Err(FdaError::invalid(
            "leave-one-out needs at least 3 curves".to_string(),
        ));
    }
    let engine = Engine::build(spec, settings)?;
    let lambdas = engine.select_lambdas(&settings.lambda)?;
    let pen = engine.penalty_matrix(&lambdas);
    let t = spec.response.len_t();
    let w = trapezoid_weights(t);
    let mean_curve = spec.response.mean_curve();
    if let InterceptMode::PerGroup(labels) = &spec.intercept {
        for i in 0..n {
            let g = labels[i];
            if labels.iter().enumerate().all(|(k, l)| k == i || *l != g) {
                return Err(FdaError::invalid(format!(
                    "intercept group {g} has a single member; leave-one-out undefined"
                )));
            }
        }
    }
    let fold_terms: Vec<Result<(f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut include = vec![true; n];
            include[i] = false;
            let asm = engine.assemble(&include);
            let (coef, _, _) = engine.solve(&asm, &pen)?;
            let pred = engine.predict(&coef, &[i]);
            let mut pred_sse = 0.0;
            let mut tot_sse = 0.0;
            for tt in 0..t {
                let y = spec.response.values()[(i, tt)];
                pred_sse += w[tt] * (y - pred[(0, tt)]).powi(2);
                tot_sse += w[tt] * (y - mean_curve[tt]).powi(2);
            }
            Ok((pred_sse, tot_sse))
        })
        .collect();
    let mut ss_pred = 0.0;
    let mut ss_tot = 0.0;
    for term in fold_terms {
        let (p, s) = term?;
        ss_pred += p;
        ss_tot += s;
    }
    if ss_tot <= 0.0 {
        return Err(FdaError::numerical(
            "fun-reg",
            "loocv_r_squared",
            "response has no variance",
        ));
    }
    Ok(1.0 - ss_pred / ss_tot)
}

/// Partial R^2 of one term: `(R2 - R2_red) / (1 - R2_red)`.
pub fn partial_r_squared(
    spec: &FunRegSpec,
    settings: &PenaltySettings,
    term: &str,
) -> Result<f64> {
    let full = fit(spec, settings)?;
    let reduced_spec = spec.without_term(term)?;
    // Fixed lambdas must shrink with the term list; Auto re-selects.
    let reduced_settings = match &settings.lambda {
        LambdaMode::Auto => settings.clone(),
        LambdaMode::Fixed(v) => {
            let names = spec.term_names();
            let keep: Vec<f64> = names
                .iter()
                .zip(v.iter())
                .filter(|(name, _)| **name != term)
                .map(|(_, l)| *l)
                .collect();
            PenaltySettings {
                basis_dim: settings.basis_dim,
                lambda: LambdaMode::Fixed(keep),
            }
        }
    };
    let reduced = fit(&reduced_spec, &reduced_settings)?;
    if reduced.r2 >= 1.0 {
        return Err(FdaError::numerical(
            "fun-reg",
            "partial_r_squared",
            "reduced model already fits perfectly; partial R^2 undefined",
        ));
    }
    Ok((full.r2 - reduced.r2) / (1.0 - reduced.r2))
}

/// Inverse standard normal CDF (Acklam's rational approximation, refined by
/// one Halley step; absolute error far below any use here).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    let x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // one Halley refinement against the normal CDF
    let e = 0.5 * erfc_approx(-x / std::f64::consts::SQRT_2) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

fn erfc_approx(x: f64) -> f64 {
    // Numerical Recipes style rational Chebyshev fit, |error| < 1.2e-7
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398
                                    + t * (1.48851587
                                        + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use approx::assert_abs_diff_eq;
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(rows: Vec<Vec<f64>>) -> FunctionalDataset {
        let n = rows.len();
        let t = rows[0].len();
        let grid = TimeGrid::new(NaiveDate::from_ymd_opt(2020, 2, 16).unwrap(), t).unwrap();
        FunctionalDataset::new(
            grid,
            (0..n).map(|i| format!("r{i:02}")).collect(),
            DMatrix::from_row_slice(n, t, &rows.into_iter().flatten().collect::<Vec<_>>()),
        )
        .unwrap()
    }

    #[test]
    fn intercept_only_reproduces_the_pointwise_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let data = dataset(rows);
        let spec = FunRegSpec::new(data.clone());
        let fit = fit(&spec, &PenaltySettings::default()).unwrap();
        let mean = data.mean_curve();
        let (alpha, _) = fit.intercepts();
        for tt in 0..20 {
            assert_abs_diff_eq!(alpha[(0, tt)], mean[tt], epsilon = 1e-8);
        }
    }

    #[test]
    fn residuals_sum_to_zero_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = 15;
        let x_rows: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..t).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let y_rows: Vec<Vec<f64>> = x_rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|v| 2.0 * v + rng.gen_range(-0.3..0.3))
                    .collect()
            })
            .collect();
        let spec = FunRegSpec::new(dataset(y_rows))
            .with_functional("x", dataset(x_rows));
        let settings = PenaltySettings {
            basis_dim: 8,
            lambda: LambdaMode::Fixed(vec![1.0]),
        };
        let fit = fit(&spec, &settings).unwrap();
        for tt in 0..t {
            let s: f64 = (0..8).map(|i| fit.residuals()[(i, tt)]).sum();
            assert_abs_diff_eq!(s, 0.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn saturated_zero_lambda_matches_direct_least_squares() {
        // T = 5 mini grid: solve the per-day regression directly and compare
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = 5;
        let n = 9;
        let x_rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..t).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let beta_true = |s: usize, tt: usize| 0.3 * (s as f64 - 2.0) + 0.2 * tt as f64;
        let w = trapezoid_weights(t);
        let y_rows: Vec<Vec<f64>> = x_rows
            .iter()
            .map(|r| {
                (0..t)
                    .map(|tt| {
                        let mut acc = 1.0 + 0.1 * tt as f64;
                        for s in 0..t {
                            acc += w[s] * r[s] * beta_true(s, tt);
                        }
                        acc + rng.gen_range(-0.05..0.05)
                    })
                    .collect()
            })
            .collect();
        let spec = FunRegSpec::new(dataset(y_rows.clone()))
            .with_functional("x", dataset(x_rows.clone()));
        let settings = PenaltySettings {
            basis_dim: t + 2, // saturated
            lambda: LambdaMode::Fixed(vec![0.0]),
        };
        let fitted = fit(&spec, &settings).unwrap();
        // direct least squares per response day: y_.(t) = a + X_w beta_.(t)
        let (surface, _) = fitted.beta_surface("x").unwrap();
        for tt in 0..t {
            let mut design = DMatrix::zeros(n, 1 + t);
            let mut rhs = DVector::zeros(n);
            for i in 0..n {
                design[(i, 0)] = 1.0;
                for s in 0..t {
                    design[(i, 1 + s)] = w[s] * x_rows[i][s];
                }
                rhs[i] = y_rows[i][tt];
            }
            let sol = design.clone().svd(true, true).solve(&rhs, 1e-12).unwrap();
            let pred_direct = design * &sol;
            for i in 0..n {
                assert_abs_diff_eq!(fitted.fitted()[(i, tt)], pred_direct[i], epsilon = 1e-6);
            }
            for s in 0..t {
                assert_abs_diff_eq!(surface[(s, tt)], sol[1 + s], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn per_group_with_one_group_equals_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = 12;
        let x_rows: Vec<Vec<f64>> = (0..7)
            .map(|_| (0..t).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let y_rows: Vec<Vec<f64>> = x_rows
            .iter()
            .map(|r| r.iter().map(|v| v + rng.gen_range(-0.2..0.2)).collect())
            .collect();
        let settings = PenaltySettings {
            basis_dim: 7,
            lambda: LambdaMode::Fixed(vec![0.5]),
        };
        let single = fit(
            &FunRegSpec::new(dataset(y_rows.clone())).with_functional("x", dataset(x_rows.clone())),
            &settings,
        )
        .unwrap();
        let grouped = fit(
            &FunRegSpec::new(dataset(y_rows))
                .with_functional("x", dataset(x_rows))
                .with_intercept(InterceptMode::PerGroup(vec![0; 7])),
            &settings,
        )
        .unwrap();
        for i in 0..7 {
            for tt in 0..t {
                assert_abs_diff_eq!(
                    single.fitted()[(i, tt)],
                    grouped.fitted()[(i, tt)],
                    epsilon = 1e-8
                );
            }
        }
    }

    #[test]
    fn fitted_values_invariant_to_covariate_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = 10;
        let y_rows: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..t).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let x_scaled: Vec<f64> = x.iter().map(|v| 10.0 * v - 3.0).collect();
        let settings = PenaltySettings {
            basis_dim: 6,
            lambda: LambdaMode::Fixed(vec![0.7]),
        };
        let f1 = fit(
            &FunRegSpec::new(dataset(y_rows.clone())).with_scalar("c", x.clone()),
            &settings,
        )
        .unwrap();
        let f2 = fit(
            &FunRegSpec::new(dataset(y_rows)).with_scalar("c", x_scaled),
            &settings,
        )
        .unwrap();
        for i in 0..8 {
            for tt in 0..t {
                assert_abs_diff_eq!(
                    f1.fitted()[(i, tt)],
                    f2.fitted()[(i, tt)],
                    epsilon = 1e-8
                );
            }
        }
        // original-unit effect rescales inversely
        let (b1, _) = f1.beta_curve("c").unwrap();
        let (b2, _) = f2.beta_curve("c").unwrap();
        for tt in 0..t {
            assert_abs_diff_eq!(b1[tt], 10.0 * b2[tt], epsilon = 1e-8);
        }
    }

    #[test]
    fn adding_a_term_does_not_decrease_r2_on_the_suite() {
        for seed in 0..6 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let t = 12;
            let n = 10;
            let x1: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..t).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    (0..t)
                        .map(|tt| {
                            x1[i][tt] * 0.8 + c[i] * 0.5 + rng.gen_range(-0.4..0.4)
                        })
                        .collect()
                })
                .collect();
            let small = fit(
                &FunRegSpec::new(dataset(y.clone())).with_functional("x1", dataset(x1.clone())),
                &PenaltySettings {
                    basis_dim: 6,
                    lambda: LambdaMode::Fixed(vec![1.0]),
                },
            )
            .unwrap();
            let big = fit(
                &FunRegSpec::new(dataset(y))
                    .with_functional("x1", dataset(x1))
                    .with_scalar("c", c),
                &PenaltySettings {
                    basis_dim: 6,
                    lambda: LambdaMode::Fixed(vec![1.0, 1.0]),
                },
            )
            .unwrap();
            assert!(
                big.r2 >= small.r2 - 1e-10,
                "seed {seed}: R2 {} -> {}",
                small.r2,
                big.r2
            );
        }
    }

    #[test]
    fn perfect_linear_data_gives_r2_near_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = 10;
        let x: Vec<f64> = (0..9).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y: Vec<Vec<f64>> = (0..9)
            .map(|i| (0..t).map(|tt| 2.0 + x[i] * (1.0 + 0.05 * tt as f64)).collect())
            .collect();
        let f = fit(
            &FunRegSpec::new(dataset(y)).with_scalar("c", x),
            &PenaltySettings {
                basis_dim: 6,
                lambda: LambdaMode::Fixed(vec![1e-8]),
            },
        )
        .unwrap();
        assert!(f.r2 > 0.999, "R2 = {}", f.r2);
    }

    #[test]
    fn null_covariate_is_mostly_non_significant() {
        let mut count_ns = 0usize;
        let mut total = 0usize;
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
            let t = 15;
            let n = 30;
            let y: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..t).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = fit(
                &FunRegSpec::new(dataset(y)).with_scalar("c", c),
                &PenaltySettings {
                    basis_dim: 8,
                    lambda: LambdaMode::Auto,
                },
            )
            .unwrap();
            for s in f.effect_sign_bands("c", 0.95).unwrap() {
                total += 1;
                if s == EffectSign::NonSignificant {
                    count_ns += 1;
                }
            }
        }
        assert!(
            count_ns as f64 >= 0.9 * total as f64,
            "only {count_ns}/{total} days non-significant"
        );
    }

    #[test]
    fn loocv_below_in_sample_on_noisy_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t = 12;
        let n = 12;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..t)
                    .map(|_| x[i] * 0.8 + rng.gen_range(-0.8..0.8))
                    .collect()
            })
            .collect();
        let spec = FunRegSpec::new(dataset(y)).with_scalar("c", x);
        let settings = PenaltySettings {
            basis_dim: 6,
            lambda: LambdaMode::Fixed(vec![1.0]),
        };
        let f = fit(&spec, &settings).unwrap();
        let cv = loocv_r_squared(&spec, &settings).unwrap();
        assert!(cv < f.r2, "cv {cv} vs in-sample {}", f.r2);
    }

    #[test]
    fn partial_r2_of_the_only_term_matches_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = 10;
        let n = 9;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..t).map(|_| x[i] + rng.gen_range(-0.3..0.3)).collect())
            .collect();
        let spec = FunRegSpec::new(dataset(y)).with_scalar("c", x);
        let settings = PenaltySettings {
            basis_dim: 6,
            lambda: LambdaMode::Fixed(vec![0.5]),
        };
        let full = fit(&spec, &settings).unwrap();
        let reduced = fit(
            &spec.without_term("c").unwrap(),
            &PenaltySettings {
                basis_dim: 6,
                lambda: LambdaMode::Fixed(vec![]),
            },
        )
        .unwrap();
        let expected = (full.r2 - reduced.r2) / (1.0 - reduced.r2);
        let got = partial_r_squared(&spec, &settings, "c").unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-10);
    }

    #[test]
    fn normal_quantile_reference_values() {
        assert_abs_diff_eq!(normal_quantile(0.975), 1.959963984540054, epsilon = 1e-7);
        assert_abs_diff_eq!(normal_quantile(0.5), 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(normal_quantile(0.84134474606854), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn rank_guard_rejects_overparameterized_models() {
        let y: Vec<Vec<f64>> = (0..3).map(|i| vec![i as f64; 8]).collect();
        let x: Vec<f64> = vec![0.0, 1.0, 2.0];
        let spec = FunRegSpec::new(dataset(y))
            .with_scalar("a", x.clone())
            .with_scalar("b", x.iter().map(|v| v * 2.0).collect());
        assert!(fit(&spec, &PenaltySettings::default()).is_err());
    }
}
