//! Exact assignment for the uniform, equal-size transport special case.
//!
//! Used as a test oracle for small-ε Sinkhorn. O(n³) shortest augmenting
//! path with row/column potentials.

use ndarray::ArrayView2;

use crate::error::{InfoOtError, Result};

/// Largest side accepted; this is an oracle, not a production solver.
pub const MAX_ASSIGNMENT_SIZE: usize = 64;

/// Returns `perm` with row `i` assigned to column `perm[i]`, and the optimal
/// transport value under uniform weights `1/n` (the mean of the chosen
/// entries).
pub fn exact_assignment(cost: ArrayView2<f64>) -> Result<(Vec<usize>, f64)> {
    let (n, m) = cost.dim();
    if n != m {
        return Err(InfoOtError::DimensionMismatch(format!(
            "assignment needs a square matrix, got {n}x{m}"
        )));
    }
    if n == 0 {
        return Err(InfoOtError::InvalidInput("empty cost matrix".into()));
    }
    if n > MAX_ASSIGNMENT_SIZE {
        return Err(InfoOtError::InvalidInput(format!(
            "assignment oracle is limited to n <= {MAX_ASSIGNMENT_SIZE}, got {n}"
        )));
    }
    if cost.iter().any(|v| !v.is_finite()) {
        return Err(InfoOtError::NonFinite("assignment cost".into()));
    }

    // 1-based arrays; index 0 is the virtual root column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[matched_row[j] - 1] = j - 1;
    }
    let total: f64 = perm.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum();
    Ok((perm, total / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(cost: &Array2<f64>) -> f64 {
        fn rec(cost: &Array2<f64>, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            let n = cost.nrows();
            if row == n {
                *best = best.min(acc);
                return;
            }
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    rec(cost, row + 1, used, acc + cost[[row, j]], best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(cost, 0, &mut vec![false; cost.nrows()], 0.0, &mut best);
        best / cost.nrows() as f64
    }

    #[test]
    fn two_by_two_cases() {
        let (perm, val) = exact_assignment(array![[0.0, 1.0], [1.0, 0.0]].view()).unwrap();
        assert_eq!(perm, vec![0, 1]);
        assert_eq!(val, 0.0);
        let (perm, val) = exact_assignment(array![[1.0, 0.0], [0.0, 1.0]].view()).unwrap();
        assert_eq!(perm, vec![1, 0]);
        assert_eq!(val, 0.0);
    }

    #[test]
    fn matches_enumeration_on_seven() {
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = Array2::from_shape_fn((7, 7), |_| rng.gen_range(0.0..1.0));
            let (perm, val) = exact_assignment(c.view()).unwrap();
            let mut seen = perm.clone();
            seen.sort();
            assert_eq!(seen, (0..7).collect::<Vec<_>>());
            assert_eq!(val, brute_force(&c));
        }
    }

    #[test]
    fn rejects_non_square_and_oversized() {
        assert!(exact_assignment(Array2::zeros((2, 3)).view()).is_err());
        assert!(exact_assignment(Array2::zeros((65, 65)).view()).is_err());
    }
}
