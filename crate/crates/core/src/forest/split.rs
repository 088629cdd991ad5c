use super::Task;
use crate::matrix::Matrix;

/// A chosen split: rows with `x[feature] <= threshold` go left.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Parent impurity minus the sample-weighted child impurities.
    pub impurity_decrease: f64,
}

/// Relative tolerance under which two decreases count as tied. Identical
/// partitions reached through different features differ only by summation
/// order, far below this.
pub(crate) const TIE_TOLERANCE: f64 = 1e-12;

/// Best variance-reduction split over all rows. `None` when no candidate
/// threshold reduces impurity.
pub fn best_split(features: &Matrix, labels: &[f64], candidates: &[usize]) -> Option<Split> {
    let rows: Vec<usize> = (0..features.rows()).collect();
    best_split_rows(features, labels, &rows, candidates, Task::Regression)
}

/// Midpoint of two consecutive distinct values, kept strictly below `hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m < hi {
        m
    } else {
        lo
    }
}

/// Best split restricted to `rows` (duplicates allowed, as in a bootstrap
/// sample). Ties go to the lowest feature index, then the lowest threshold.
pub fn best_split_rows(
    features: &Matrix,
    labels: &[f64],
    rows: &[usize],
    candidates: &[usize],
    task: Task,
) -> Option<Split> {
    let n = rows.len();
    if n < 2 {
        return None;
    }
    let mut ordered: Vec<usize> = candidates.to_vec();
    ordered.sort_unstable();
    ordered.dedup();

    let (scores, parent_impurity) = match task {
        Task::Regression => regression_scores(features, labels, rows, &ordered),
        Task::Classification { n_classes } => gini_scores(features, labels, rows, &ordered, n_classes),
    };
    if parent_impurity <= 0.0 {
        return None;
    }
    let best = scores.iter().map(|s| s.impurity_decrease).fold(f64::NEG_INFINITY, f64::max);
    let tol = TIE_TOLERANCE * parent_impurity;
    if !(best > tol) {
        return None;
    }
    // scores are ordered by (feature, threshold), so the first near-max wins
    scores.into_iter().find(|s| s.impurity_decrease >= best - tol)
}

fn sorted_by_feature(features: &Matrix, rows: &[usize], f: usize) -> Vec<(f64, usize)> {
    let mut pairs: Vec<(f64, usize)> = rows.iter().map(|&r| (features.get(r, f), r)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

/// Every candidate split with its variance reduction, plus parent variance.
///
/// With labels centred on the parent mean, the reduction is
/// `(S_l²/n_l + S_r²/n_r - S²/n) / n` where `S` are centred label sums.
fn regression_scores(
    features: &Matrix,
    labels: &[f64],
    rows: &[usize],
    candidates: &[usize],
) -> (Vec<Split>, f64) {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|&r| labels[r]).sum::<f64>() / n;
    let parent_var = rows
        .iter()
        .map(|&r| (labels[r] - mean) * (labels[r] - mean))
        .sum::<f64>()
        / n;
    let mut out = Vec::new();
    if parent_var <= 0.0 {
        return (out, parent_var);
    }
    for &f in candidates {
        let pairs = sorted_by_feature(features, rows, f);
        let total: f64 = pairs.iter().map(|&(_, r)| labels[r] - mean).sum();
        let base = total * total / n;
        let mut left = 0.0;
        for k in 1..pairs.len() {
            left += labels[pairs[k - 1].1] - mean;
            let (lo, hi) = (pairs[k - 1].0, pairs[k].0);
            if lo == hi {
                continue;
            }
            let nl = k as f64;
            let nr = n - nl;
            let right = total - left;
            let gain = (left * left / nl + right * right / nr - base) / n;
            out.push(Split {
                feature: f,
                threshold: midpoint(lo, hi),
                impurity_decrease: gain.max(0.0),
            });
        }
    }
    (out, parent_var)
}

/// Gini analogue: `(Σ_c l_c²/n_l + Σ_c r_c²/n_r - Σ_c t_c²/n) / n`.
fn gini_scores(
    features: &Matrix,
    labels: &[f64],
    rows: &[usize],
    candidates: &[usize],
    n_classes: usize,
) -> (Vec<Split>, f64) {
    let n = rows.len() as f64;
    let class = |r: usize| labels[r] as usize;
    let mut totals = vec![0usize; n_classes];
    for &r in rows {
        totals[class(r)] += 1;
    }
    let sq = |counts: &[usize]| counts.iter().map(|&c| (c * c) as f64).sum::<f64>();
    let total_sq = sq(&totals);
    let parent_gini = 1.0 - total_sq / (n * n);
    let mut out = Vec::new();
    if parent_gini <= 0.0 {
        return (out, parent_gini);
    }
    let mut left = vec![0usize; n_classes];
    for &f in candidates {
        let pairs = sorted_by_feature(features, rows, f);
        left.fill(0);
        let mut left_sq = 0.0;
        let mut right_sq = total_sq;
        for k in 1..pairs.len() {
            let c = class(pairs[k - 1].1);
            let rc = totals[c] - left[c];
            left_sq += (2 * left[c] + 1) as f64;
            right_sq -= (2 * rc - 1) as f64;
            left[c] += 1;
            let (lo, hi) = (pairs[k - 1].0, pairs[k].0);
            if lo == hi {
                continue;
            }
            let nl = k as f64;
            let gain = (left_sq / nl + right_sq / (n - nl) - total_sq / n) / n;
            out.push(Split {
                feature: f,
                threshold: midpoint(lo, hi),
                impurity_decrease: gain.max(0.0),
            });
        }
    }
    (out, parent_gini)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(values: &[f64]) -> Matrix {
        Matrix::from_vec(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn two_point_split() {
        let s = best_split(&col(&[0.0, 1.0]), &[1.0, 3.0], &[0]).unwrap();
        assert_eq!(s.feature, 0);
        assert_eq!(s.threshold, 0.5);
        assert_eq!(s.impurity_decrease, 1.0);
    }

    #[test]
    fn degenerate_inputs_do_not_split() {
        assert!(best_split(&col(&[0.0, 1.0, 2.0]), &[4.0, 4.0, 4.0], &[0]).is_none());
        assert!(best_split(&col(&[2.0, 2.0, 2.0]), &[1.0, 5.0, 3.0], &[0]).is_none());
        assert!(best_split(&col(&[1.0]), &[1.0], &[0]).is_none());
    }

    #[test]
    fn identical_partitions_prefer_lower_feature() {
        // both features separate row 0 from the rest
        let m = Matrix::from_rows(&[[0.0, 9.0], [1.0, 1.0], [2.0, 2.0]]).unwrap();
        let labels = [5.0, 0.7, 0.3];
        let s = best_split(&m, &labels, &[1, 0]).unwrap();
        let s_rev = best_split(&m, &labels, &[0, 1]).unwrap();
        assert_eq!(s, s_rev);
        assert_eq!(s.feature, 0);
    }

    #[test]
    fn midpoint_stays_below_upper_value() {
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        assert!(midpoint(lo, hi) < hi);
        assert_eq!(midpoint(0.0, 1.0), 0.5);
    }

    #[test]
    fn gini_separates_classes() {
        let m = col(&[0.0, 1.0, 2.0, 3.0]);
        let labels = [0.0, 0.0, 1.0, 1.0];
        let s = best_split_rows(&m, &labels, &[0, 1, 2, 3], &[0], Task::Classification { n_classes: 2 }).unwrap();
        assert_eq!(s.threshold, 1.5);
        assert!((s.impurity_decrease - 0.5).abs() < 1e-15);
    }
}
