//! Modified band depth, functional boxplots and signed depth rankings.
//!
//! The modified band depth of a curve is the average, over all pairs of
//! curves in the sample (the curve's own pairs included), of the fraction
//! of the domain where the curve lies inside the band spanned by the pair.
//! Pairs containing the curve itself always cover it, so they contribute
//! a fraction of one.
//!
//! The functional boxplot takes the 50% deepest curves as the central
//! region, inflates its envelope by 1.5 times the envelope range to get the
//! fence, and flags anything that ever escapes the fence as an outlier.
//!
//! The signed ranking gives each curve the sign of its position relative
//! to the median curve (by share of the domain spent above it) and sorts
//! by `sign * (1 - depth)` descending: most extreme above first, the
//! median near the middle, most extreme below last.

use crate::error::{FdaError, Result};
use crate::grid::FunctionalDataset;

/// Everything the depth analyses produce for one dataset.
#[derive(Debug, Clone)]
pub struct DepthReport {
    pub names: Vec<String>,
    pub depths: Vec<f64>,
    pub median_index: usize,
    /// Indices of the curves forming the 50% central region.
    pub central_indices: Vec<usize>,
    pub central_lower: Vec<f64>,
    pub central_upper: Vec<f64>,
    pub fence_lower: Vec<f64>,
    pub fence_upper: Vec<f64>,
    pub outlier_indices: Vec<usize>,
    /// Share of the domain each curve spends strictly above the median curve.
    pub above_shares: Vec<f64>,
    pub signed_depths: Vec<f64>,
    /// Curve indices from the top of the ranking (most extreme above) down.
    pub ranking: Vec<usize>,
    pub warnings: Vec<String>,
}

impl DepthReport {
    pub fn outlier_names(&self) -> Vec<&str> {
        self.outlier_indices
            .iter()
            .map(|i| self.names[*i].as_str())
            .collect()
    }

    pub fn median_name(&self) -> &str {
        &self.names[self.median_index]
    }

    /// Rank (0 = top of the ranking) of a curve index.
    pub fn rank_of(&self, curve: usize) -> usize {
        self.ranking.iter().position(|c| *c == curve).unwrap()
    }
}

/// Modified band depth (bands of order two, self-pairs included).
pub fn modified_band_depth(data: &FunctionalDataset) -> Result<Vec<f64>> {
    let n = data.n();
    if n < 3 {
        return Err(FdaError::invalid(format!(
            "band depth needs at least 3 curves, got {n}"
        )));
    }
    let t = data.len_t();
    let values = data.values();
    let pairs = (n * (n - 1) / 2) as f64;
    let mut inside = vec![0.0f64; n];
    // Per time point, a curve is outside a pair's band exactly when both
    // pair members are strictly on the same side, so counting strictly
    // smaller and strictly larger values gives the pair count in O(n log n).
    let mut order: Vec<usize> = (0..n).collect();
    for tt in 0..t {
        let col: Vec<f64> = (0..n).map(|i| values[(i, tt)]).collect();
        order.sort_by(|a, b| col[*a].partial_cmp(&col[*b]).unwrap());
        let mut below = vec![0usize; n];
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && col[order[j + 1]] == col[order[i]] {
                j += 1;
            }
            for k in i..=j {
                below[order[k]] = i;
            }
            i = j + 1;
        }
        let mut above = vec![0usize; n];
        let mut i = n;
        while i > 0 {
            let mut j = i - 1;
            while j > 0 && col[order[j - 1]] == col[order[i - 1]] {
                j -= 1;
            }
            for k in j..i {
                above[order[k]] = n - i;
            }
            i = j;
        }
        for c in 0..n {
            let a = below[c] as f64;
            let b = above[c] as f64;
            inside[c] += pairs - a * (a - 1.0) / 2.0 - b * (b - 1.0) / 2.0;
        }
    }
    Ok(inside
        .into_iter()
        .map(|v| v / (pairs * t as f64))
        .collect())
}

/// Indices sorted deepest-first, ties broken by name order.
fn depth_order(names: &[String], depths: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..depths.len()).collect();
    order.sort_by(|a, b| {
        depths[*b]
            .partial_cmp(&depths[*a])
            .unwrap()
            .then_with(|| names[*a].cmp(&names[*b]))
    });
    order
}

fn build_report(data: &FunctionalDataset, with_ranking: bool) -> Result<DepthReport> {
    let n = data.n();
    if n < 4 {
        return Err(FdaError::invalid(format!(
            "functional boxplot needs at least 4 curves, got {n}"
        )));
    }
    let t = data.len_t();
    let values = data.values();
    let depths = modified_band_depth(data)?;
    let order = depth_order(data.names(), &depths);
    let median_index = order[0];
    let central: Vec<usize> = order.iter().take(n.div_ceil(2)).cloned().collect();

    let mut lower = vec![f64::INFINITY; t];
    let mut upper = vec![f64::NEG_INFINITY; t];
    for &i in &central {
        for tt in 0..t {
            let v = values[(i, tt)];
            lower[tt] = lower[tt].min(v);
            upper[tt] = upper[tt].max(v);
        }
    }
    let mut fence_lower = vec![0.0; t];
    let mut fence_upper = vec![0.0; t];
    for tt in 0..t {
        let range = upper[tt] - lower[tt];
        fence_lower[tt] = lower[tt] - 1.5 * range;
        fence_upper[tt] = upper[tt] + 1.5 * range;
    }
    let outlier_indices: Vec<usize> = (0..n)
        .filter(|&i| {
            (0..t).any(|tt| {
                let v = values[(i, tt)];
                v > fence_upper[tt] || v < fence_lower[tt]
            })
        })
        .collect();

    let mut warnings = Vec::new();
    let mut above_shares = vec![0.0f64; n];
    let mut signed_depths = vec![0.0f64; n];
    let mut ranking = Vec::new();
    if with_ranking {
        for i in 0..n {
            if i == median_index {
                above_shares[i] = f64::NAN;
                signed_depths[i] = depths[i];
                continue;
            }
            let above = (0..t)
                .filter(|&tt| values[(i, tt)] > values[(median_index, tt)])
                .count();
            let share = above as f64 / t as f64;
            above_shares[i] = share;
            let sign = if share > 0.5 {
                1.0
            } else if share < 0.5 {
                -1.0
            } else {
                warnings.push(format!(
                    "curve '{}' sits above the median on exactly half the domain; sign set to +1",
                    data.names()[i]
                ));
                1.0
            };
            signed_depths[i] = sign * depths[i];
        }
        let key = |i: usize| -> f64 {
            let sign = if signed_depths[i] < 0.0 { -1.0 } else { 1.0 };
            sign * (1.0 - depths[i])
        };
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|a, b| {
            key(*b)
                .partial_cmp(&key(*a))
                .unwrap()
                .then_with(|| data.names()[*a].cmp(&data.names()[*b]))
        });
        ranking = idx;
    }

    Ok(DepthReport {
        names: data.names().to_vec(),
        depths,
        median_index,
        central_indices: central,
        central_lower: lower,
        central_upper: upper,
        fence_lower,
        fence_upper,
        outlier_indices,
        above_shares,
        signed_depths,
        ranking,
        warnings,
    })
}

/// Median, 50% central envelope, 1.5x fence and outliers.
pub fn functional_boxplot(data: &FunctionalDataset) -> Result<DepthReport> {
    build_report(data, false)
}

/// Boxplot statistics plus signed depths and the directional ranking.
pub fn signed_ranking(data: &FunctionalDataset) -> Result<DepthReport> {
    build_report(data, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use approx::assert_abs_diff_eq;
    use chrono::NaiveDate;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(rows: Vec<Vec<f64>>) -> FunctionalDataset {
        named_dataset(
            rows.iter()
                .enumerate()
                .map(|(i, _)| format!("r{i:02}"))
                .collect(),
            rows,
        )
    }

    fn named_dataset(names: Vec<String>, rows: Vec<Vec<f64>>) -> FunctionalDataset {
        let n = rows.len();
        let t = rows[0].len();
        let grid = TimeGrid::new(NaiveDate::from_ymd_opt(2020, 2, 16).unwrap(), t).unwrap();
        FunctionalDataset::new(
            grid,
            names,
            DMatrix::from_row_slice(n, t, &rows.into_iter().flatten().collect::<Vec<_>>()),
        )
        .unwrap()
    }

    /// Direct all-pairs band enumeration: the definition, kept independent
    /// of the rank-counting implementation.
    fn brute_force_mbd(data: &FunctionalDataset) -> Vec<f64> {
        let n = data.n();
        let t = data.len_t();
        let v = data.values();
        let mut out = vec![0.0; n];
        let pairs = (n * (n - 1) / 2) as f64;
        for c in 0..n {
            let mut total = 0.0;
            for j in 0..n {
                for k in (j + 1)..n {
                    let mut cover = 0usize;
                    for tt in 0..t {
                        let lo = v[(j, tt)].min(v[(k, tt)]);
                        let hi = v[(j, tt)].max(v[(k, tt)]);
                        if v[(c, tt)] >= lo && v[(c, tt)] <= hi {
                            cover += 1;
                        }
                    }
                    total += cover as f64 / t as f64;
                }
            }
            out[c] = total / pairs;
        }
        out
    }

    #[test]
    fn middle_constant_curve_is_deepest() {
        let data = dataset(vec![vec![0.0; 10], vec![1.0; 10], vec![2.0; 10]]);
        let d = modified_band_depth(&data).unwrap();
        assert!(d[1] > d[0] && d[1] > d[2]);
    }

    #[test]
    fn matches_brute_force_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..17).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let data = dataset(rows);
        let fast = modified_band_depth(&data).unwrap();
        let brute = brute_force_mbd(&data);
        for i in 0..10 {
            assert_abs_diff_eq!(fast[i], brute[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn matches_brute_force_with_ties() {
        let rows = vec![
            vec![0.0, 1.0, 1.0, 0.0],
            vec![0.0, 1.0, 2.0, 0.0],
            vec![0.0, 0.0, 1.0, 1.0],
            vec![1.0, 1.0, 1.0, 1.0],
            vec![0.0, 2.0, 2.0, 1.0],
        ];
        let data = dataset(rows);
        let fast = modified_band_depth(&data).unwrap();
        let brute = brute_force_mbd(&data);
        for i in 0..5 {
            assert_abs_diff_eq!(fast[i], brute[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_tiny_samples() {
        let data = dataset(vec![vec![0.0; 4], vec![1.0; 4]]);
        assert!(matches!(
            modified_band_depth(&data),
            Err(FdaError::Invalid(_))
        ));
    }

    #[test]
    fn identical_curves_zero_width_envelope_no_outliers() {
        let rows: Vec<Vec<f64>> = (0..6).map(|_| vec![3.0; 8]).collect();
        let data = dataset(rows);
        let report = functional_boxplot(&data).unwrap();
        for tt in 0..8 {
            assert_eq!(report.central_lower[tt], report.central_upper[tt]);
        }
        assert!(report.outlier_indices.is_empty());
    }

    #[test]
    fn far_curve_is_flagged_as_outlier() {
        let mut rows: Vec<Vec<f64>> = (0..9)
            .map(|i| (0..12).map(|j| (j as f64 * 0.3).sin() + i as f64 * 0.05).collect())
            .collect();
        rows.push((0..12).map(|j| (j as f64 * 0.3).sin() + 50.0).collect());
        let data = dataset(rows);
        let report = functional_boxplot(&data).unwrap();
        assert_eq!(report.outlier_indices, vec![9]);
        // outliers are never part of the central region
        for o in &report.outlier_indices {
            assert!(!report.central_indices.contains(o));
        }
    }

    #[test]
    fn depth_order_invariant_under_positive_affine_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..14).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let data = dataset(rows.clone());
        let scaled = dataset(
            rows.iter()
                .map(|r| r.iter().map(|v| 7.0 * v + 11.0).collect())
                .collect(),
        );
        let a = signed_ranking(&data).unwrap();
        let b = signed_ranking(&scaled).unwrap();
        assert_eq!(a.ranking, b.ranking);
        assert_eq!(a.median_index, b.median_index);
    }

    #[test]
    fn ranking_is_signed_and_total() {
        // nested fan of curves around a central one
        let mut rows = Vec::new();
        for i in 0..9 {
            let off = i as f64 - 4.0; // -4..4
            rows.push((0..10).map(|j| (j as f64 * 0.2).cos() + off).collect());
        }
        let data = dataset(rows);
        let report = signed_ranking(&data).unwrap();
        assert_eq!(report.median_index, 4);
        // top of the ranking is the highest curve, bottom the lowest
        assert_eq!(report.ranking[0], 8);
        assert_eq!(report.ranking[8], 0);
        // median's |signed depth| equals its depth and its key is minimal
        assert_abs_diff_eq!(
            report.signed_depths[4].abs(),
            report.depths[4],
            epsilon = 1e-15
        );
        // positives sit above the median position, negatives below
        let median_rank = report.rank_of(4);
        for (rank, &c) in report.ranking.iter().enumerate() {
            if c == 4 {
                continue;
            }
            if rank < median_rank {
                assert!(report.signed_depths[c] > 0.0);
            } else {
                assert!(report.signed_depths[c] < 0.0);
            }
        }
    }

    #[test]
    fn enveloping_pair_raises_every_band_count_by_one() {
        // adding a pair of curves that envelop everything adds exactly one
        // covering pair per curve: check via the unnormalized counts
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let t = 6;
        let small = dataset(rows.clone());
        let mut grown = rows.clone();
        grown.push(vec![100.0; t]);
        grown.push(vec![-100.0; t]);
        let big = dataset(grown);
        let d_small = modified_band_depth(&small).unwrap();
        let d_big = modified_band_depth(&big).unwrap();
        let pairs_small = 5.0 * 4.0 / 2.0;
        let pairs_big = 7.0 * 6.0 / 2.0;
        for i in 0..5 {
            let count_small = d_small[i] * pairs_small;
            let count_big = d_big[i] * pairs_big;
            // one new all-enveloping pair plus 2 pairs with each old curve
            // partially covering: at minimum the fully-covering pair counts
            assert!(count_big >= count_small + 1.0 - 1e-9);
        }
    }
}
