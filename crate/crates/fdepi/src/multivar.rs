//! Multivariate analysis of the region-by-covariate matrix: hierarchical
//! clustering with correlation distance, Cheng-Church biclustering with the
//! size-adjusted H-score, principal components, and variance inflation
//! factors.

use crate::error::{FdaError, Result};
use nalgebra::DMatrix;

/// One agglomeration step. Cluster ids follow the scipy convention:
/// `0..n` are leaves, `n + i` is the cluster created by merge `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone)]
pub struct Dendrogram {
    pub labels: Vec<String>,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Leaf sets of every internal node, indexed by merge order.
    pub fn merge_members(&self) -> Vec<Vec<usize>> {
        let n = self.labels.len();
        let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        let mut out = Vec::new();
        for m in &self.merges {
            let mut set = members[m.left].clone();
            set.extend(members[m.right].iter().cloned());
            set.sort_unstable();
            members.push(set.clone());
            out.push(set);
        }
        out
    }

    /// Height at which two leaves first share a cluster.
    pub fn cophenetic_height(&self, a: usize, b: usize) -> f64 {
        for (m, set) in self.merge_members().iter().enumerate() {
            if set.contains(&a) && set.contains(&b) {
                return self.merges[m].height;
            }
        }
        f64::NAN
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa.sqrt() * sbb.sqrt())
}

/// Complete-linkage agglomeration under the correlation distance
/// `d(x1, x2) = 1 - corr(x1, x2)`. Items are the rows of `matrix`.
pub fn hcluster(matrix: &DMatrix<f64>, labels: &[String]) -> Result<Dendrogram> {
    let n = matrix.nrows();
    if n < 2 {
        return Err(FdaError::invalid(
            "clustering needs at least 2 items".to_string(),
        ));
    }
    if labels.len() != n {
        return Err(FdaError::dimension(format!(
            "{} labels for {n} items",
            labels.len()
        )));
    }
    for i in 0..n {
        let row: Vec<f64> = matrix.row(i).iter().cloned().collect();
        let mean = row.iter().sum::<f64>() / row.len() as f64;
        if row.iter().all(|v| (*v - mean).abs() < 1e-300) {
            return Err(FdaError::invalid(format!(
                "item '{}' is constant; correlation distance undefined",
                labels[i]
            )));
        }
    }
    // pairwise distances between active clusters
    let mut dist = vec![vec![0.0f64; 2 * n - 1]; 2 * n - 1];
    for i in 0..n {
        for j in (i + 1)..n {
            let a: Vec<f64> = matrix.row(i).iter().cloned().collect();
            let b: Vec<f64> = matrix.row(j).iter().cloned().collect();
            let d = 1.0 - pearson(&a, &b);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let mut active: Vec<usize> = (0..n).collect();
    let mut sizes = vec![1usize; 2 * n - 1];
    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..(n - 1) {
        let mut best = (0usize, 1usize, f64::INFINITY);
        for ai in 0..active.len() {
            for bi in (ai + 1)..active.len() {
                let (x, y) = (active[ai], active[bi]);
                if dist[x][y] < best.2 {
                    best = (ai, bi, dist[x][y]);
                }
            }
        }
        let (ai, bi, height) = best;
        let (x, y) = (active[ai], active[bi]);
        let new_id = n + step;
        sizes[new_id] = sizes[x] + sizes[y];
        // complete linkage: distance to the union is the max of the parts
        for &other in &active {
            if other == x || other == y {
                continue;
            }
            let d = dist[x][other].max(dist[y][other]);
            dist[new_id][other] = d;
            dist[other][new_id] = d;
        }
        active.remove(bi);
        active.remove(ai);
        active.push(new_id);
        merges.push(Merge {
            left: x.min(y),
            right: x.max(y),
            height,
            size: sizes[new_id],
        });
    }
    Ok(Dendrogram {
        labels: labels.to_vec(),
        merges,
    })
}

/// Mean squared residue around column means (row effects fixed at zero).
pub fn h_score(matrix: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> Result<f64> {
    if rows.is_empty() || cols.is_empty() {
        return Err(FdaError::invalid(
            "H-score needs non-empty row and column sets".to_string(),
        ));
    }
    let mut acc = 0.0;
    for &j in cols {
        let mean: f64 = rows.iter().map(|&i| matrix[(i, j)]).sum::<f64>() / rows.len() as f64;
        for &i in rows {
            let d = matrix[(i, j)] - mean;
            acc += d * d;
        }
    }
    Ok(acc / (rows.len() * cols.len()) as f64)
}

/// Size correction `prod_{r=2}^{|I|-1} r^2/(r^2-1) * prod_{q=2}^{|J|-1} q^2/(q^2-1)`.
pub fn h_correction(n_rows: usize, n_cols: usize) -> f64 {
    let prod = |upper: usize| -> f64 {
        let mut p = 1.0;
        let mut r = 2usize;
        while r + 1 <= upper {
            // r runs 2..=upper-1
            let rr = r as f64;
            p *= rr * rr / (rr * rr - 1.0);
            r += 1;
        }
        p
    };
    prod(n_rows) * prod(n_cols)
}

/// H-score divided by the size correction; removes the small-bicluster bias.
pub fn adjusted_h_score(matrix: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> Result<f64> {
    Ok(h_score(matrix, rows, cols)? / h_correction(rows.len(), cols.len()))
}

#[derive(Debug, Clone)]
pub struct Bicluster {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub h: f64,
    pub h_adj: f64,
}

#[derive(Debug, Clone)]
pub struct ChengChurchConfig {
    /// Threshold on the adjusted H-score.
    pub delta: f64,
    pub max_biclusters: usize,
    /// Multiple-node deletion removes rows/columns whose residue exceeds
    /// this multiple of the current mean squared residue.
    pub deletion_factor: f64,
}

impl ChengChurchConfig {
    pub fn new(delta: f64) -> Self {
        ChengChurchConfig {
            delta,
            max_biclusters: 2,
            deletion_factor: 1.2,
        }
    }
}

/// Masked cells are excluded from every residue computation: a bicluster
/// found earlier must not be re-discovered just because its cells were
/// overwritten with a constant.
struct MaskedView<'a> {
    m: &'a DMatrix<f64>,
    masked: &'a [bool],
}

impl MaskedView<'_> {
    fn is_masked(&self, i: usize, j: usize) -> bool {
        self.masked[i * self.m.ncols() + j]
    }

    /// Mean of the unmasked cells of column `j` within `rows`; `None` when
    /// fewer than two cells are available.
    fn col_mean(&self, rows: &[usize], j: usize) -> Option<f64> {
        let mut acc = 0.0;
        let mut cnt = 0usize;
        for &i in rows {
            if !self.is_masked(i, j) {
                acc += self.m[(i, j)];
                cnt += 1;
            }
        }
        if cnt >= 2 {
            Some(acc / cnt as f64)
        } else {
            None
        }
    }

    /// Mean squared residue over unmasked cells; `None` when some column has
    /// fewer than two usable cells or nothing is usable at all.
    fn h(&self, rows: &[usize], cols: &[usize]) -> Option<f64> {
        let mut acc = 0.0;
        let mut cnt = 0usize;
        for &j in cols {
            let mean = self.col_mean(rows, j)?;
            for &i in rows {
                if !self.is_masked(i, j) {
                    let d = self.m[(i, j)] - mean;
                    acc += d * d;
                    cnt += 1;
                }
            }
        }
        if cnt == 0 {
            None
        } else {
            Some(acc / cnt as f64)
        }
    }

    fn h_adj(&self, rows: &[usize], cols: &[usize]) -> Option<f64> {
        Some(self.h(rows, cols)? / h_correction(rows.len(), cols.len()))
    }

    fn row_residues(&self, rows: &[usize], cols: &[usize]) -> Vec<f64> {
        let means: Vec<Option<f64>> = cols.iter().map(|&j| self.col_mean(rows, j)).collect();
        rows.iter()
            .map(|&i| {
                let mut acc = 0.0;
                let mut cnt = 0usize;
                for (cj, &j) in cols.iter().enumerate() {
                    if let Some(mean) = means[cj] {
                        if !self.is_masked(i, j) {
                            let d = self.m[(i, j)] - mean;
                            acc += d * d;
                            cnt += 1;
                        }
                    }
                }
                if cnt == 0 {
                    f64::INFINITY
                } else {
                    acc / cnt as f64
                }
            })
            .collect()
    }

    fn col_residues(&self, rows: &[usize], cols: &[usize]) -> Vec<f64> {
        cols.iter()
            .map(|&j| match self.col_mean(rows, j) {
                None => f64::INFINITY,
                Some(mean) => {
                    let mut acc = 0.0;
                    let mut cnt = 0usize;
                    for &i in rows {
                        if !self.is_masked(i, j) {
                            let d = self.m[(i, j)] - mean;
                            acc += d * d;
                            cnt += 1;
                        }
                    }
                    acc / cnt as f64
                }
            })
            .collect()
    }
}

fn extract_one(view: &MaskedView<'_>, cfg: &ChengChurchConfig) -> Option<Bicluster> {
    let mut rows: Vec<usize> = (0..view.m.nrows()).collect();
    let mut cols: Vec<usize> = (0..view.m.ncols()).collect();

    // multiple node deletion
    loop {
        let h_adj = view.h_adj(&rows, &cols)?;
        if h_adj <= cfg.delta {
            break;
        }
        let h = view.h(&rows, &cols)?;
        let mut removed = false;
        if rows.len() > 2 {
            let rr = view.row_residues(&rows, &cols);
            let keep: Vec<usize> = rows
                .iter()
                .enumerate()
                .filter(|(ri, _)| rr[*ri] <= cfg.deletion_factor * h)
                .map(|(_, &i)| i)
                .collect();
            if keep.len() >= 2 && keep.len() < rows.len() {
                rows = keep;
                removed = true;
            }
        }
        if cols.len() > 2 {
            let h = view.h(&rows, &cols)?;
            let cr = view.col_residues(&rows, &cols);
            let keep: Vec<usize> = cols
                .iter()
                .enumerate()
                .filter(|(ci, _)| cr[*ci] <= cfg.deletion_factor * h)
                .map(|(_, &j)| j)
                .collect();
            if keep.len() >= 2 && keep.len() < cols.len() {
                cols = keep;
                removed = true;
            }
        }
        if !removed {
            break;
        }
    }

    // single node deletion
    loop {
        let h_adj = view.h_adj(&rows, &cols)?;
        if h_adj <= cfg.delta {
            break;
        }
        if rows.len() <= 2 && cols.len() <= 2 {
            break;
        }
        let rr = view.row_residues(&rows, &cols);
        let cr = view.col_residues(&rows, &cols);
        let worst_row = (0..rows.len()).max_by(|a, b| rr[*a].partial_cmp(&rr[*b]).unwrap());
        let worst_col = (0..cols.len()).max_by(|a, b| cr[*a].partial_cmp(&cr[*b]).unwrap());
        let row_allowed = rows.len() > 2;
        let col_allowed = cols.len() > 2;
        let take_row = match (row_allowed, col_allowed) {
            (true, false) => true,
            (false, true) => false,
            _ => rr[worst_row.unwrap()] >= cr[worst_col.unwrap()],
        };
        if take_row {
            rows.remove(worst_row.unwrap());
        } else {
            cols.remove(worst_col.unwrap());
        }
    }

    if view.h_adj(&rows, &cols)? > cfg.delta {
        return None;
    }

    // node addition: greedily add whatever keeps the adjusted score lowest,
    // as long as the threshold still holds
    loop {
        let mut best: Option<(bool, usize, f64)> = None;
        for i in 0..view.m.nrows() {
            if rows.contains(&i) {
                continue;
            }
            let mut cand = rows.clone();
            cand.push(i);
            cand.sort_unstable();
            if let Some(h_adj) = view.h_adj(&cand, &cols) {
                if h_adj <= cfg.delta && best.as_ref().is_none_or(|b| h_adj < b.2) {
                    best = Some((true, i, h_adj));
                }
            }
        }
        for j in 0..view.m.ncols() {
            if cols.contains(&j) {
                continue;
            }
            let mut cand = cols.clone();
            cand.push(j);
            cand.sort_unstable();
            if let Some(h_adj) = view.h_adj(&rows, &cand) {
                if h_adj <= cfg.delta && best.as_ref().is_none_or(|b| h_adj < b.2) {
                    best = Some((false, j, h_adj));
                }
            }
        }
        match best {
            Some((true, i, _)) => {
                rows.push(i);
                rows.sort_unstable();
            }
            Some((false, j, _)) => {
                cols.push(j);
                cols.sort_unstable();
            }
            None => break,
        }
    }

    if rows.len() < 2 || cols.len() < 2 {
        return None;
    }
    let h = view.h(&rows, &cols)?;
    let h_adj = view.h_adj(&rows, &cols)?;
    Some(Bicluster {
        rows,
        cols,
        h,
        h_adj,
    })
}

/// Iterated greedy extraction of constant-column biclusters. Input must be
/// column-standardized. Found cells are overwritten with the column mean
/// (zero) and excluded from later residue computations, so an extracted
/// bicluster cannot be re-discovered as a spurious constant block.
pub fn cheng_church(matrix: &DMatrix<f64>, cfg: &ChengChurchConfig) -> Result<Vec<Bicluster>> {
    if !(cfg.delta > 0.0) {
        return Err(FdaError::invalid(format!(
            "delta must be positive, got {}",
            cfg.delta
        )));
    }
    check_standardized(matrix)?;
    let mut work = matrix.clone();
    let mut masked = vec![false; matrix.nrows() * matrix.ncols()];
    let mut out = Vec::new();
    for _ in 0..cfg.max_biclusters {
        let view = MaskedView {
            m: &work,
            masked: &masked,
        };
        match extract_one(&view, cfg) {
            Some(bc) => {
                for &i in &bc.rows {
                    for &j in &bc.cols {
                        masked[i * matrix.ncols() + j] = true;
                    }
                }
                for &i in &bc.rows {
                    for &j in &bc.cols {
                        work[(i, j)] = 0.0;
                    }
                }
                out.push(bc);
            }
            None => break,
        }
    }
    Ok(out)
}

fn check_standardized(matrix: &DMatrix<f64>) -> Result<()> {
    let n = matrix.nrows() as f64;
    for j in 0..matrix.ncols() {
        let col = matrix.column(j);
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        if mean.abs() > 1e-6 || (var.sqrt() - 1.0).abs() > 1e-6 {
            return Err(FdaError::invalid(format!(
                "column {j} is not standardized (mean {mean:.2e}, sd {:.6})",
                var.sqrt()
            )));
        }
    }
    Ok(())
}

/// Center and scale each column to mean 0, sample sd 1.
/// Returns the standardized matrix and the per-column `(mean, sd)`.
pub fn standardize_columns(matrix: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<(f64, f64)>)> {
    let n = matrix.nrows();
    if n < 2 {
        return Err(FdaError::invalid(
            "standardization needs at least 2 rows".to_string(),
        ));
    }
    let mut out = matrix.clone();
    let mut stats = Vec::with_capacity(matrix.ncols());
    for j in 0..matrix.ncols() {
        let mean = matrix.column(j).sum() / n as f64;
        let var = matrix
            .column(j)
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / (n as f64 - 1.0);
        let sd = var.sqrt();
        if sd <= 0.0 {
            return Err(FdaError::invalid(format!(
                "column {j} has zero variance"
            )));
        }
        for i in 0..n {
            out[(i, j)] = (matrix[(i, j)] - mean) / sd;
        }
        stats.push((mean, sd));
    }
    Ok((out, stats))
}

#[derive(Debug, Clone)]
pub struct PcaResult {
    /// Scores of each row on each component, `n x p`.
    pub scores: DMatrix<f64>,
    /// Loadings as columns, `p x p`.
    pub loadings: DMatrix<f64>,
    /// Fraction of variance per component, descending.
    pub explained: Vec<f64>,
}

/// PCA of the standardized columns. Loadings are sign-fixed so each
/// component's loading on the first column is positive (falling back to the
/// first column with a non-negligible loading).
pub fn pca(matrix: &DMatrix<f64>) -> Result<PcaResult> {
    if matrix.ncols() < 2 {
        return Err(FdaError::invalid(
            "PCA needs at least 2 columns".to_string(),
        ));
    }
    let (std, _) = standardize_columns(matrix)?;
    let n = std.nrows() as f64;
    let corr = std.transpose() * &std / (n - 1.0);
    let p = corr.nrows();
    let eig = nalgebra::SymmetricEigen::new(corr);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|a, b| {
        eig.eigenvalues[*b]
            .partial_cmp(&eig.eigenvalues[*a])
            .unwrap()
            .then(a.cmp(b))
    });
    let total: f64 = eig.eigenvalues.iter().map(|e| e.max(0.0)).sum();
    let mut loadings = DMatrix::zeros(p, p);
    let mut explained = Vec::with_capacity(p);
    for (c, &idx) in order.iter().enumerate() {
        explained.push(eig.eigenvalues[idx].max(0.0) / total);
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().cloned().collect();
        let pivot = v.iter().position(|x| x.abs() > 1e-12).unwrap_or(0);
        if v[pivot] < 0.0 {
            for x in &mut v {
                *x = -*x;
            }
        }
        for r in 0..p {
            loadings[(r, c)] = v[r];
        }
    }
    let scores = &std * &loadings;
    Ok(PcaResult {
        scores,
        loadings,
        explained,
    })
}

/// Variance inflation factors of the columns; infinite under perfect
/// collinearity.
pub fn vif(matrix: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = matrix.nrows();
    let p = matrix.ncols();
    if n <= p {
        return Err(FdaError::invalid(format!(
            "VIF needs more rows than columns, got {n} x {p}"
        )));
    }
    let (std, _) = standardize_columns(matrix)?;
    let mut out = Vec::with_capacity(p);
    for j in 0..p {
        let y = std.column(j).clone_owned();
        let mut x = DMatrix::zeros(n, p - 1);
        let mut c = 0;
        for k in 0..p {
            if k == j {
                continue;
            }
            x.set_column(c, &std.column(k));
            c += 1;
        }
        let coef = x
            .clone()
            .svd(true, true)
            .solve(&y, 1e-12)
            .map_err(|e| FdaError::numerical("scalar-analytics", "vif", e.to_string()))?;
        let resid = &x * coef - &y;
        let rss: f64 = resid.iter().map(|v| v * v).sum();
        let tss: f64 = y.iter().map(|v| v * v).sum(); // standardized: mean 0
        let one_minus_r2 = rss / tss;
        out.push(if one_minus_r2 < 1e-12 {
            f64::INFINITY
        } else {
            1.0 / one_minus_r2
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn perfectly_correlated_items_merge_first_at_zero_height() {
        let m = DMatrix::from_row_slice(
            3,
            5,
            &[
                1.0, 2.0, 3.0, 4.0, 5.0, //
                2.0, 4.0, 6.0, 8.0, 10.0, // same direction, scaled
                5.0, 1.0, 4.0, 2.0, 3.0,
            ],
        );
        let d = hcluster(&m, &labels(3)).unwrap();
        assert_eq!(d.merges[0].left, 0);
        assert_eq!(d.merges[0].right, 1);
        assert!(d.merges[0].height.abs() < 1e-12);
    }

    #[test]
    fn anticorrelated_pair_sits_at_distance_two() {
        let a = vec![1.0, 2.0, 3.0, 4.0];
        let b: Vec<f64> = a.iter().map(|v| -v).collect();
        let m = DMatrix::from_row_slice(2, 4, &[a, b].concat());
        let d = hcluster(&m, &labels(2)).unwrap();
        assert_abs_diff_eq!(d.merges[0].height, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_item_is_rejected_by_name() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 0.0, 1.0, 2.0]);
        let err = hcluster(&m, &labels(2)).unwrap_err();
        assert!(err.to_string().contains("c0"));
    }

    #[test]
    fn heights_non_decreasing_under_complete_linkage() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = DMatrix::from_fn(8, 10, |_, _| rng.gen_range(-1.0..1.0));
        let d = hcluster(&m, &labels(8)).unwrap();
        for w in d.merges.windows(2) {
            assert!(w[1].height >= w[0].height - 1e-12);
        }
    }

    #[test]
    fn hcluster_invariant_under_positive_affine_item_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let m = DMatrix::from_fn(6, 9, |_, _| rng.gen_range(-1.0..1.0));
        let mut scaled = m.clone();
        for i in 0..6 {
            let a = rng.gen_range(0.5..3.0);
            let b = rng.gen_range(-2.0..2.0);
            for j in 0..9 {
                scaled[(i, j)] = a * m[(i, j)] + b;
            }
        }
        let d1 = hcluster(&m, &labels(6)).unwrap();
        let d2 = hcluster(&scaled, &labels(6)).unwrap();
        for (a, b) in d1.merges.iter().zip(&d2.merges) {
            assert_eq!(a.left, b.left);
            assert_eq!(a.right, b.right);
            assert_abs_diff_eq!(a.height, b.height, epsilon = 1e-10);
        }
    }

    #[test]
    fn h_score_hand_example() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]);
        let h = h_score(&m, &[0, 1], &[0, 1]).unwrap();
        assert_abs_diff_eq!(h, 0.25, epsilon = 1e-15);
        // 2x2 correction is an empty product
        assert_eq!(h_correction(2, 2), 1.0);
        assert_abs_diff_eq!(
            adjusted_h_score(&m, &[0, 1], &[0, 1]).unwrap(),
            0.25,
            epsilon = 1e-15
        );
    }

    #[test]
    fn constant_columns_have_zero_residue() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 1.0, 5.0, 1.0, 5.0]);
        assert_eq!(h_score(&m, &[0, 1, 2], &[0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn correction_grows_with_size_and_caps_at_four() {
        assert!(h_correction(3, 2) > 1.0);
        let c = h_correction(50, 50);
        assert!(c > 3.0 && c < 4.0);
        for r in 2..8 {
            for q in 2..8 {
                assert!(h_correction(r, q) >= 1.0);
            }
        }
    }

    #[test]
    fn planted_blocks_are_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 14;
        let p = 9;
        let mut m = DMatrix::from_fn(n, p, |_, _| rng.gen_range(-2.0..2.0f64));
        // block 1: rows 0..5, cols 0..4 with constant columns
        for (jj, level) in [1.4, -0.9, 0.7, 1.1].iter().enumerate() {
            for i in 0..5 {
                m[(i, jj)] = level + 0.01 * rng.gen_range(-1.0..1.0);
            }
        }
        // block 2: rows 8..14, cols 5..9 with constant columns
        for (jj, level) in [-1.2, 0.8, 1.6, -0.5].iter().enumerate() {
            for i in 8..14 {
                m[(i, 5 + jj)] = level + 0.01 * rng.gen_range(-1.0..1.0);
            }
        }
        let (std, _) = standardize_columns(&m).unwrap();
        let found = cheng_church(&std, &ChengChurchConfig::new(0.005)).unwrap();
        assert_eq!(found.len(), 2);
        let mut sigs: Vec<(Vec<usize>, Vec<usize>)> = found
            .iter()
            .map(|b| (b.rows.clone(), b.cols.clone()))
            .collect();
        sigs.sort();
        assert_eq!(sigs[0], ((0..5).collect(), (0..4).collect()));
        assert_eq!(sigs[1], ((8..14).collect(), (5..9).collect()));
        for b in &found {
            assert!(b.h_adj <= 0.005);
        }
    }

    #[test]
    fn infinite_delta_returns_the_full_matrix_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let m = DMatrix::from_fn(6, 5, |_, _| rng.gen_range(-1.0..1.0f64));
        let (std, _) = standardize_columns(&m).unwrap();
        let found = cheng_church(
            &std,
            &ChengChurchConfig {
                delta: 1e12,
                max_biclusters: 1,
                deletion_factor: 1.2,
            },
        )
        .unwrap();
        assert_eq!(found[0].rows.len(), 6);
        assert_eq!(found[0].cols.len(), 5);
    }

    #[test]
    fn unstandardized_input_is_rejected() {
        let m = DMatrix::from_row_slice(3, 2, &[10.0, 0.0, 20.0, 1.0, 30.0, 2.0]);
        assert!(cheng_church(&m, &ChengChurchConfig::new(0.1)).is_err());
    }

    #[test]
    fn pca_identical_columns_explained_fully_by_pc1() {
        let col: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let mut data = Vec::new();
        for i in 0..10 {
            data.push(col[i]);
            data.push(col[i] * 3.0 + 1.0);
        }
        let m = DMatrix::from_row_slice(10, 2, &data);
        let r = pca(&m).unwrap();
        assert_abs_diff_eq!(r.explained[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pca_scores_centered_and_loadings_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let m = DMatrix::from_fn(15, 5, |_, _| rng.gen_range(-2.0..2.0));
        let r = pca(&m).unwrap();
        for c in 0..5 {
            let mean: f64 = (0..15).map(|i| r.scores[(i, c)]).sum::<f64>() / 15.0;
            assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-10);
        }
        let gram = r.loadings.transpose() * &r.loadings;
        for i in 0..5 {
            for j in 0..5 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(gram[(i, j)], expect, epsilon = 1e-10);
            }
        }
        // every component's loading on the first column is non-negative
        for c in 0..5 {
            assert!(r.loadings[(0, c)] >= -1e-12);
        }
    }

    #[test]
    fn vif_orthogonal_columns_are_one() {
        // build exactly orthogonal columns with zero means
        let m = DMatrix::from_row_slice(
            4,
            2,
            &[
                1.0, 1.0, //
                1.0, -1.0, //
                -1.0, 1.0, //
                -1.0, -1.0,
            ],
        );
        let v = vif(&m).unwrap();
        assert_abs_diff_eq!(v[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(v[1], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn vif_duplicate_column_is_infinite() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let base: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let other: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut data = Vec::new();
        for i in 0..12 {
            data.push(base[i]);
            data.push(other[i]);
            data.push(base[i] * 2.0 + 3.0);
        }
        let m = DMatrix::from_row_slice(12, 3, &data);
        let v = vif(&m).unwrap();
        assert!(v[0].is_infinite());
        assert!(v[2].is_infinite());
        assert!(v[1].is_finite());
    }

    #[test]
    fn vif_at_least_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let m = DMatrix::from_fn(20, 6, |_, _| rng.gen_range(-1.0..1.0));
        for v in vif(&m).unwrap() {
            assert!(v >= 1.0 - 1e-10);
        }
    }
}
