//! Dense symmetric positive-definite solve for the Newton steps.

use ndarray::{Array1, Array2};

/// Solves `A x = b` for symmetric positive-definite `A` by Cholesky
/// factorization. If a pivot collapses, retries once with a ridge of
/// `1e-12 · max diag(A)`. Returns `None` when that also fails.
pub(crate) fn cholesky_solve(a: Array2<f64>, b: Array1<f64>) -> Option<Array1<f64>> {
    if let Some(x) = try_cholesky_solve(&a, &b) {
        return Some(x);
    }
    let max_diag = a.diag().iter().cloned().fold(0.0, f64::max);
    if !(max_diag > 0.0) {
        return None;
    }
    let mut ridged = a;
    for i in 0..ridged.nrows() {
        ridged[[i, i]] += 1e-12 * max_diag;
    }
    try_cholesky_solve(&ridged, &b)
}

fn try_cholesky_solve(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    // L y = b, then Lᵀ x = y.
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solves_spd_system() {
        let a = array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let x = array![1.0, -2.0, 0.5];
        let b = a.dot(&x);
        let got = cholesky_solve(a, b).unwrap();
        for (u, v) in got.iter().zip(x.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_indefinite() {
        assert!(cholesky_solve(array![[1.0, 2.0], [2.0, 1.0]], array![1.0, 1.0]).is_none());
    }
}
