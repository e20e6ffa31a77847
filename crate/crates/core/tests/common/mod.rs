//! Independent oracles shared by the integration tests. Nothing here calls
//! into the crate's numerics except to build inputs.

#![allow(dead_code)]

use infoot::kernels::PointSet;
use infoot::sinkhorn::{sinkhorn, SinkhornSettings};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.gen::<f64>())
}

pub fn point_set(rng: &mut ChaCha8Rng, n: usize, d: usize) -> PointSet {
    PointSet::new(uniform_points(rng, n, d)).unwrap()
}

pub fn uniform(n: usize) -> Array1<f64> {
    Array1::from_elem(n, 1.0 / n as f64)
}

/// Strictly positive plan with uniform marginals: Sinkhorn on a random cost.
pub fn random_plan(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Array2<f64> {
    let cost = Array2::from_shape_fn((n, m), |_| rng.gen::<f64>());
    let settings = SinkhornSettings {
        max_iter: 10_000,
        tol: 1e-13,
    };
    sinkhorn(cost.view(), &uniform(n), &uniform(m), 0.2, &settings)
        .unwrap()
        .0
        .into_values()
}

pub fn dist(a: &Array2<f64>, i: usize, b: &Array2<f64>, j: usize) -> f64 {
    let mut s = 0.0;
    for k in 0..a.ncols() {
        let t = a[[i, k]] - b[[j, k]];
        s += t * t;
    }
    s.sqrt()
}

pub fn dist_matrix(a: &Array2<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.nrows(), a.nrows()), |(i, j)| dist(a, i, a, j))
}

/// Median of the strictly positive upper-triangle entries, 1 for one point.
pub fn median_scale(d: &Array2<f64>) -> f64 {
    let mut v = Vec::new();
    for i in 0..d.nrows() {
        for j in (i + 1)..d.ncols() {
            if d[[i, j]] > 0.0 {
                v.push(d[[i, j]]);
            }
        }
    }
    if v.is_empty() {
        return 1.0;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

pub fn gram(d: &Array2<f64>, h: f64) -> Array2<f64> {
    let s = h * median_scale(d);
    d.mapv(|x| (-x * x / (2.0 * s * s)).exp())
}

/// `Σ_kl Kx[i,k] Γ[k,l] Ky[j,l]` by four nested loops.
pub fn joint_loop(kx: &Array2<f64>, plan: &Array2<f64>, ky: &Array2<f64>) -> Array2<f64> {
    let (n, m) = plan.dim();
    let mut out = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for k in 0..n {
                for l in 0..m {
                    s += kx[[i, k]] * plan[[k, l]] * ky[[j, l]];
                }
            }
            out[[i, j]] = s;
        }
    }
    out
}

/// Kernelized mutual information from scratch.
pub fn mi_loop(dx: &Array2<f64>, dy: &Array2<f64>, plan: &Array2<f64>, h: f64) -> f64 {
    let (kx, ky) = (gram(dx, h), gram(dy, h));
    let j = joint_loop(&kx, plan, &ky);
    let (n, m) = plan.dim();
    let mut total = 0.0;
    for a in 0..n {
        let mx: f64 = kx.row(a).sum();
        for b in 0..m {
            let my: f64 = ky.row(b).sum();
            if plan[[a, b]] > 0.0 {
                total += plan[[a, b]] * ((n * m) as f64 * j[[a, b]] / (mx * my)).ln();
            }
        }
    }
    total
}

pub fn entropy_loop(plan: &Array2<f64>) -> f64 {
    plan.iter()
        .filter(|&&g| g > 0.0)
        .map(|&g| -g * g.ln())
        .sum()
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Minimum of `Σ_i C[i, π(i)] / n` over all permutations.
pub fn brute_force_assignment(cost: &Array2<f64>) -> f64 {
    let n = cost.nrows();
    permutations(n)
        .iter()
        .map(|p| {
            p.iter()
                .enumerate()
                .map(|(i, &j)| cost[[i, j]])
                .sum::<f64>()
                / n as f64
        })
        .fold(f64::INFINITY, f64::min)
}

/// 2-d convex hull (counter-clockwise, Andrew's monotone chain).
pub fn convex_hull(points: &Array2<f64>) -> Vec<[f64; 2]> {
    let mut p: Vec<[f64; 2]> = points.rows().into_iter().map(|r| [r[0], r[1]]).collect();
    p.sort_by(|a, b| a.partial_cmp(b).unwrap());
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &q in &p {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], q) <= 0.0 {
            lower.pop();
        }
        lower.push(q);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &q in p.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], q) <= 0.0 {
            upper.pop();
        }
        upper.push(q);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Signed slack of `x` against every hull edge; nonnegative means inside.
pub fn hull_slack(hull: &[[f64; 2]], x: [f64; 2]) -> f64 {
    let k = hull.len();
    (0..k)
        .map(|e| {
            let (a, b) = (hull[e], hull[(e + 1) % k]);
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            ((b[0] - a[0]) * (x[1] - a[1]) - (b[1] - a[1]) * (x[0] - a[0])) / len
        })
        .fold(f64::INFINITY, f64::min)
}
