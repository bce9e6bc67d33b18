//! Probabilistic K-means with local alignment (motif clustering).
//!
//! Finds `K` motif curves of a fixed length `c`, soft membership
//! probabilities and per-curve integer shifts by minimizing the generalized
//! least-squares objective
//!
//! `J = sum_i sum_k p[k,i]^2 * d2(window(x_i, s[k,i]), v_k)`
//!
//! where `d2` is the mean squared difference between a curve window and a
//! motif ([`l2_distance`]). The three blocks are updated alternately, each
//! by its exact minimizer given the others:
//!
//! * motifs: pointwise means of the aligned windows weighted by `p^2`;
//! * shifts: exhaustive integer search per curve/cluster pair;
//! * memberships: `p[k,i] ∝ 1 / d2[k,i]` normalized over clusters, the
//!   closed-form minimizer under the row-sum-to-one constraint.
//!
//! Each step can only lower `J`, so the objective trace is non-increasing.
//! Restarts are independent and seeded by index, which makes the result
//! identical regardless of how many threads run them.

use crate::error::{FdaError, Result};
use crate::grid::{FunctionalDataset, TimeGrid};
use crate::quad::trapezoid;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Which curve representation distances are computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotifDistance {
    /// Mean squared L2 distance between curve levels.
    Level,
    /// Same distance on first-difference curves.
    Derivative,
}

#[derive(Debug, Clone)]
pub struct MotifConfig {
    pub k: usize,
    /// Motif length in days (number of samples per window).
    pub motif_len: usize,
    pub restarts: usize,
    pub seed: u64,
    pub distance: MotifDistance,
    pub max_iter: usize,
    /// Relative objective-change tolerance.
    pub tol: f64,
}

impl MotifConfig {
    pub fn new(k: usize, motif_len: usize) -> Self {
        MotifConfig {
            k,
            motif_len,
            restarts: 20,
            seed: 0,
            distance: MotifDistance::Level,
            max_iter: 200,
            tol: 1e-6,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn with_distance(mut self, distance: MotifDistance) -> Self {
        self.distance = distance;
        self
    }
}

/// Fitted motif model: immutable after construction.
#[derive(Debug, Clone)]
pub struct MotifModel {
    pub k: usize,
    pub motif_len: usize,
    pub names: Vec<String>,
    /// Motif curves in level space, one row per cluster.
    pub motifs: DMatrix<f64>,
    /// Membership probabilities, `n x K`, rows summing to one.
    pub memberships: DMatrix<f64>,
    /// Shifts (window start days), `n x K` row-major.
    pub shifts: Vec<usize>,
    /// `argmax_k` membership per curve (ties to the lowest cluster index).
    pub hard_labels: Vec<usize>,
    /// Objective value after each iteration of the best restart.
    pub objective_trace: Vec<f64>,
    /// Final objective value.
    pub objective: f64,
    /// Level-space windows of each curve at its hard-label shift.
    pub aligned: DMatrix<f64>,
    source_len: usize,
    source_start: chrono::NaiveDate,
}

impl MotifModel {
    pub fn shift(&self, curve: usize, cluster: usize) -> usize {
        self.shifts[curve * self.k + cluster]
    }

    /// Indices of curves assigned to `cluster` by the hard partition.
    pub fn cluster_members(&self, cluster: usize) -> Vec<usize> {
        self.hard_labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == cluster)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Mean squared L2 distance between two windows of equal length, by
/// trapezoidal quadrature over the window span.
pub fn l2_distance(portion: &[f64], motif: &[f64]) -> Result<f64> {
    if portion.len() != motif.len() {
        return Err(FdaError::dimension(format!(
            "portion length {} vs motif length {}",
            portion.len(),
            motif.len()
        )));
    }
    if portion.len() < 2 {
        return Err(FdaError::invalid(
            "curve portions need at least 2 samples".to_string(),
        ));
    }
    let sq: Vec<f64> = portion
        .iter()
        .zip(motif)
        .map(|(a, b)| (a - b) * (a - b))
        .collect();
    Ok(trapezoid(&sq) / (portion.len() - 1) as f64)
}

struct Working {
    /// Curves used for distances (levels or first differences), n x Tw.
    rows: Vec<Vec<f64>>,
    /// Window length in the working representation.
    win: usize,
    /// Number of admissible shifts (T - c + 1 in level space).
    n_shifts: usize,
    weights: Vec<f64>,
    span: f64,
}

impl Working {
    fn window_distance(&self, curve: usize, shift: usize, motif: &[f64]) -> f64 {
        let row = &self.rows[curve];
        let mut acc = 0.0;
        for (j, w) in self.weights.iter().enumerate() {
            let d = row[shift + j] - motif[j];
            acc += w * d * d;
        }
        acc / self.span
    }
}

struct State {
    memberships: DMatrix<f64>,
    shifts: Vec<usize>, // n*K
    trace: Vec<f64>,
}

fn run_restart(data: &Working, k: usize, cfg: &MotifConfig, seed: u64) -> State {
    let n = data.rows.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // memberships from a symmetric Dirichlet(1): normalized exponentials
    let mut memberships = DMatrix::zeros(n, k);
    for i in 0..n {
        let mut row: Vec<f64> = (0..k)
            .map(|_| -(1.0 - rng.gen::<f64>()).ln())
            .collect();
        let s: f64 = row.iter().sum();
        for v in &mut row {
            *v /= s;
        }
        for (kk, v) in row.iter().enumerate() {
            memberships[(i, kk)] = *v;
        }
    }
    let mut shifts: Vec<usize> = (0..n * k)
        .map(|_| rng.gen_range(0..data.n_shifts))
        .collect();
    let mut motifs = vec![vec![0.0; data.win]; k];
    let mut trace = Vec::new();
    let mut prev_j = f64::INFINITY;
    for _ in 0..cfg.max_iter {
        // motifs: p^2-weighted pointwise means of the aligned windows
        for (kk, motif) in motifs.iter_mut().enumerate() {
            let mut wsum = 0.0;
            let mut acc = vec![0.0; data.win];
            for i in 0..n {
                let w = memberships[(i, kk)].powi(2);
                if w == 0.0 {
                    continue;
                }
                let s = shifts[i * k + kk];
                for (j, a) in acc.iter_mut().enumerate() {
                    *a += w * data.rows[i][s + j];
                }
                wsum += w;
            }
            if wsum > 0.0 {
                for (m, a) in motif.iter_mut().zip(&acc) {
                    *m = a / wsum;
                }
            }
        }
        // shifts: exhaustive search per (curve, cluster)
        for i in 0..n {
            for (kk, motif) in motifs.iter().enumerate() {
                let mut best = (0usize, f64::INFINITY);
                for s in 0..data.n_shifts {
                    let d = data.window_distance(i, s, motif);
                    if d < best.1 {
                        best = (s, d);
                    }
                }
                shifts[i * k + kk] = best.0;
            }
        }
        // memberships: closed-form minimizer given distances
        let mut j_total = 0.0;
        for i in 0..n {
            let dists: Vec<f64> = (0..k)
                .map(|kk| data.window_distance(i, shifts[i * k + kk], &motifs[kk]))
                .collect();
            let zeros: Vec<usize> = (0..k).filter(|kk| dists[*kk] == 0.0).collect();
            if !zeros.is_empty() {
                for kk in 0..k {
                    memberships[(i, kk)] = 0.0;
                }
                let mass = 1.0 / zeros.len() as f64;
                for kk in zeros {
                    memberships[(i, kk)] = mass;
                }
            } else {
                let inv: Vec<f64> = dists.iter().map(|d| 1.0 / d).collect();
                let s: f64 = inv.iter().sum();
                for kk in 0..k {
                    memberships[(i, kk)] = inv[kk] / s;
                }
            }
            for kk in 0..k {
                j_total += memberships[(i, kk)].powi(2) * dists[kk];
            }
        }
        trace.push(j_total);
        if prev_j.is_finite() {
            let scale = prev_j.abs().max(1e-300);
            if (prev_j - j_total).abs() / scale < cfg.tol {
                break;
            }
        }
        prev_j = j_total;
    }
    let _ = motifs;
    State {
        memberships,
        shifts,
        trace,
    }
}

/// Fit a motif model by the best of `restarts` seeded runs.
pub fn prob_kma(data: &FunctionalDataset, cfg: &MotifConfig) -> Result<MotifModel> {
    let n = data.n();
    let t = data.len_t();
    let c = cfg.motif_len;
    if cfg.k < 1 {
        return Err(FdaError::invalid("cluster count must be >= 1".to_string()));
    }
    if cfg.k > n {
        return Err(FdaError::invalid(format!(
            "cluster count {} exceeds curve count {n}",
            cfg.k
        )));
    }
    if c > t {
        return Err(FdaError::invalid(format!(
            "motif length {c} exceeds grid length {t}"
        )));
    }
    let min_len = match cfg.distance {
        MotifDistance::Level => 2,
        MotifDistance::Derivative => 3,
    };
    if c < min_len {
        return Err(FdaError::invalid(format!(
            "motif length {c} too short for the chosen distance"
        )));
    }
    if cfg.restarts < 1 {
        return Err(FdaError::invalid("restarts must be >= 1".to_string()));
    }

    let rows_level: Vec<Vec<f64>> = (0..n).map(|i| data.curve(i)).collect();
    let working = match cfg.distance {
        MotifDistance::Level => {
            let weights = crate::quad::trapezoid_weights(c);
            Working {
                rows: rows_level.clone(),
                win: c,
                n_shifts: t - c + 1,
                span: (c - 1) as f64,
                weights,
            }
        }
        MotifDistance::Derivative => {
            let rows: Vec<Vec<f64>> = rows_level
                .iter()
                .map(|r| r.windows(2).map(|w| w[1] - w[0]).collect())
                .collect();
            let win = c - 1;
            let weights = crate::quad::trapezoid_weights(win);
            Working {
                rows,
                win,
                n_shifts: t - c + 1,
                span: (win - 1) as f64,
                weights,
            }
        }
    };

    let results: Vec<(usize, State)> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let seed = cfg
                .seed
                .wrapping_add((r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            (r, run_restart(&working, cfg.k, cfg, seed))
        })
        .collect();
    let best = results
        .into_iter()
        .min_by(|(ra, sa), (rb, sb)| {
            let ja = sa.trace.last().copied().unwrap_or(f64::INFINITY);
            let jb = sb.trace.last().copied().unwrap_or(f64::INFINITY);
            ja.partial_cmp(&jb)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(ra.cmp(rb))
        })
        .map(|(_, s)| s)
        .expect("at least one restart");

    // Level-space motifs and alignments from the final state.
    let mut level_motifs = vec![vec![0.0; c]; cfg.k];
    for (kk, motif) in level_motifs.iter_mut().enumerate() {
        let mut wsum = 0.0;
        let mut acc = vec![0.0; c];
        for i in 0..n {
            let w = best.memberships[(i, kk)].powi(2);
            if w == 0.0 {
                continue;
            }
            let s = best.shifts[i * cfg.k + kk];
            for (j, a) in acc.iter_mut().enumerate() {
                *a += w * rows_level[i][s + j];
            }
            wsum += w;
        }
        if wsum > 0.0 {
            for (m, a) in motif.iter_mut().zip(&acc) {
                *m = a / wsum;
            }
        }
    }

    // Canonical cluster order: descending motif mean, stable on ties.
    let mut order: Vec<usize> = (0..cfg.k).collect();
    let means: Vec<f64> = level_motifs
        .iter()
        .map(|m| m.iter().sum::<f64>() / c as f64)
        .collect();
    order.sort_by(|a, b| {
        means[*b]
            .partial_cmp(&means[*a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(b))
    });

    let mut motifs = DMatrix::zeros(cfg.k, c);
    let mut memberships = DMatrix::zeros(n, cfg.k);
    let mut shifts = vec![0usize; n * cfg.k];
    for (new_k, &old_k) in order.iter().enumerate() {
        for j in 0..c {
            motifs[(new_k, j)] = level_motifs[old_k][j];
        }
        for i in 0..n {
            memberships[(i, new_k)] = best.memberships[(i, old_k)];
            shifts[i * cfg.k + new_k] = best.shifts[i * cfg.k + old_k];
        }
    }
    let hard_labels: Vec<usize> = (0..n)
        .map(|i| {
            let mut arg = 0;
            for kk in 1..cfg.k {
                if memberships[(i, kk)] > memberships[(i, arg)] {
                    arg = kk;
                }
            }
            arg
        })
        .collect();
    let mut aligned = DMatrix::zeros(n, c);
    for i in 0..n {
        let s = shifts[i * cfg.k + hard_labels[i]];
        for j in 0..c {
            aligned[(i, j)] = rows_level[i][s + j];
        }
    }
    let objective = *best.trace.last().expect("at least one iteration");
    Ok(MotifModel {
        k: cfg.k,
        motif_len: c,
        names: data.names().to_vec(),
        motifs,
        memberships,
        shifts,
        hard_labels,
        objective_trace: best.trace,
        objective,
        aligned,
        source_len: t,
        source_start: data.grid().start_day(),
    })
}

/// Restrict each companion curve to the window chosen for that curve's
/// hard-label cluster.
pub fn apply_shifts(
    model: &MotifModel,
    companion: &FunctionalDataset,
) -> Result<FunctionalDataset> {
    if companion.names() != model.names.as_slice() {
        return Err(FdaError::dimension(
            "companion regions do not match the motif model".to_string(),
        ));
    }
    if companion.len_t() != model.source_len {
        return Err(FdaError::dimension(format!(
            "companion grid length {} vs model grid length {}",
            companion.len_t(),
            model.source_len
        )));
    }
    let n = companion.n();
    let c = model.motif_len;
    let mut values = DMatrix::zeros(n, c);
    for i in 0..n {
        let s = model.shift(i, model.hard_labels[i]);
        for j in 0..c {
            values[(i, j)] = companion.values()[(i, s + j)];
        }
    }
    let grid = TimeGrid::new(model.source_start, c)?;
    FunctionalDataset::new(grid, model.names.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use chrono::NaiveDate;

    fn dataset(rows: Vec<Vec<f64>>) -> FunctionalDataset {
        let n = rows.len();
        let t = rows[0].len();
        let grid = TimeGrid::new(NaiveDate::from_ymd_opt(2020, 2, 16).unwrap(), t).unwrap();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        FunctionalDataset::new(
            grid,
            (0..n).map(|i| format!("r{i}")).collect(),
            DMatrix::from_row_slice(n, t, &flat),
        )
        .unwrap()
    }

    #[test]
    fn l2_distance_basics() {
        let a = vec![1.0, 2.0, 3.0];
        assert_eq!(l2_distance(&a, &a).unwrap(), 0.0);
        let z = vec![0.0; 10];
        let o = vec![1.0; 10];
        assert_abs_diff_eq!(l2_distance(&z, &o).unwrap(), 1.0, epsilon = 1e-12);
        assert!(l2_distance(&z, &a).is_err());
    }

    #[test]
    fn l2_distance_matches_fine_grid_oracle() {
        // Linear interpolation at 10x resolution, mean of squared difference.
        // Curves vary slowly relative to the daily grid, as smoothed curves do.
        let a: Vec<f64> = (0..40).map(|i| 0.5 * (i as f64 * 0.06).sin()).collect();
        let b: Vec<f64> = (0..40).map(|i| 0.4 * (i as f64 * 0.05).cos()).collect();
        let coarse = l2_distance(&a, &b).unwrap();
        let fine = 10 * 39;
        let mut acc = 0.0;
        for i in 0..=fine {
            let x = 39.0 * i as f64 / fine as f64;
            let j = (x.floor() as usize).min(38);
            let frac = x - j as f64;
            let av = a[j] + frac * (a[j + 1] - a[j]);
            let bv = b[j] + frac * (b[j + 1] - b[j]);
            let d = (av - bv) * (av - bv);
            let w = if i == 0 || i == fine { 0.5 } else { 1.0 };
            acc += w * d;
        }
        let oracle = acc / fine as f64;
        assert_abs_diff_eq!(coarse, oracle, epsilon = 1e-3);
    }

    #[test]
    fn k1_returns_shiftwise_mean_with_unit_memberships() {
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..12).map(|j| ((i + j) as f64 * 0.5).sin()).collect())
            .collect();
        let data = dataset(rows);
        let cfg = MotifConfig::new(1, 8).with_seed(3).with_restarts(4);
        let model = prob_kma(&data, &cfg).unwrap();
        for i in 0..5 {
            assert_abs_diff_eq!(model.memberships[(i, 0)], 1.0, epsilon = 1e-12);
        }
        // motif equals the p^2-weighted (here plain) mean of aligned windows
        let mut acc = vec![0.0; 8];
        for i in 0..5 {
            let s = model.shift(i, 0);
            for j in 0..8 {
                acc[j] += data.values()[(i, s + j)] / 5.0;
            }
        }
        for j in 0..8 {
            assert_abs_diff_eq!(model.motifs[(0, j)], acc[j], epsilon = 1e-10);
        }
    }

    #[test]
    fn recovers_planted_groups_and_shifts() {
        // two template shapes embedded at known offsets plus mild noise
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let t = 40;
        let c = 30;
        let tmpl_a: Vec<f64> = (0..c).map(|j| (j as f64 * 0.3).sin() * 2.0).collect();
        let tmpl_b: Vec<f64> = (0..c).map(|j| (j as f64 * 0.15).cos() - 1.5).collect();
        let mut rows = Vec::new();
        let mut true_shift = Vec::new();
        let planted = [0usize, 4, 8, 10, 10, 7, 3, 0];
        for i in 0..8 {
            let tmpl = if i < 4 { &tmpl_a } else { &tmpl_b };
            let s = planted[i];
            true_shift.push(s);
            // padding outside the motif window continues with a per-curve
            // slope, so the alignment anchor is identifiable
            let pre_slope = rng.gen_range(-0.5..0.5f64);
            let post_slope = rng.gen_range(-0.5..0.5f64);
            let mut row = vec![0.0; t];
            for (j, v) in row.iter_mut().enumerate() {
                let rel = j as i64 - s as i64;
                let base = if rel < 0 {
                    tmpl[0] + pre_slope * rel as f64
                } else if rel as usize >= c {
                    tmpl[c - 1] + post_slope * (rel as f64 - (c - 1) as f64)
                } else {
                    tmpl[rel as usize]
                };
                *v = base + 0.05 * 2.0 * rng.gen_range(-1.0..1.0);
            }
            rows.push(row);
        }
        let data = dataset(rows);
        let cfg = MotifConfig::new(2, c).with_seed(5).with_restarts(20);
        let model = prob_kma(&data, &cfg).unwrap();
        let g0 = model.hard_labels[0];
        for i in 0..4 {
            assert_eq!(model.hard_labels[i], g0, "curve {i} misgrouped");
        }
        for i in 4..8 {
            assert_ne!(model.hard_labels[i], g0, "curve {i} misgrouped");
        }
        for i in 0..8 {
            let s = model.shift(i, model.hard_labels[i]) as i64;
            assert!(
                (s - true_shift[i] as i64).abs() <= 1,
                "curve {i}: shift {s} vs planted {}",
                true_shift[i]
            );
        }
    }

    #[test]
    fn objective_trace_non_increasing() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for trial in 0..20 {
            let rows: Vec<Vec<f64>> = (0..6)
                .map(|_| (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let data = dataset(rows);
            let cfg = MotifConfig::new(2, 12)
                .with_seed(trial)
                .with_restarts(1);
            let model = prob_kma(&data, &cfg).unwrap();
            for w in model.objective_trace.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-12,
                    "J increased: {} -> {} (trial {trial})",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn membership_rows_sum_to_one() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<Vec<f64>> = (0..7)
            .map(|_| (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let data = dataset(rows);
        let model = prob_kma(&data, &MotifConfig::new(3, 10).with_seed(8).with_restarts(5)).unwrap();
        for i in 0..7 {
            let s: f64 = (0..3).map(|k| model.memberships[(i, k)]).sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-10);
            for k in 0..3 {
                let p = model.memberships[(i, k)];
                assert!((0.0..=1.0).contains(&p));
            }
            for k in 0..3 {
                assert!(model.shift(i, k) <= 5);
            }
        }
    }

    #[test]
    fn apply_shifts_window_semantics() {
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..75).map(|j| (i * 75 + j) as f64).collect())
            .collect();
        let data = dataset(rows.clone());
        let model = prob_kma(&data, &MotifConfig::new(1, 65).with_seed(3).with_restarts(2)).unwrap();
        let shifted = apply_shifts(&model, &data).unwrap();
        assert_eq!(shifted.len_t(), 65);
        for i in 0..4 {
            let s = model.shift(i, model.hard_labels[i]);
            for j in 0..65 {
                assert_eq!(shifted.values()[(i, j)], rows[i][s + j]);
            }
        }
        // aligned mortality portions stored in the model match apply_shifts
        for i in 0..4 {
            for j in 0..65 {
                assert_eq!(model.aligned[(i, j)], shifted.values()[(i, j)]);
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let data = dataset(vec![vec![0.0; 10], vec![1.0; 10]]);
        assert!(prob_kma(&data, &MotifConfig::new(3, 5)).is_err()); // K > n
        assert!(prob_kma(&data, &MotifConfig::new(1, 11)).is_err()); // c > T
        let mut cfg = MotifConfig::new(1, 5);
        cfg.restarts = 0;
        assert!(prob_kma(&data, &cfg).is_err());
    }
}
