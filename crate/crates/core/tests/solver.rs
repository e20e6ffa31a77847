mod common;

use infoot::kernels::{intra_distances, DistanceKind, DistanceMatrix, KdeModel, PointSet};
use infoot::sinkhorn::entropy;
use infoot::solver::{
    limit_check, mi_gradient, mutual_information, solve_fused_infoot, solve_infoot, SolverConfig,
};
use ndarray::{array, Array2, Axis};
use proptest::prelude::*;
use rand::Rng;

fn model_from(x: &Array2<f64>, y: &Array2<f64>, h: f64) -> KdeModel {
    KdeModel::from_points(
        &PointSet::new(x.clone()).unwrap(),
        &PointSet::new(y.clone()).unwrap(),
        h,
    )
    .unwrap()
}

fn distances(x: &Array2<f64>, kind: DistanceKind) -> DistanceMatrix {
    intra_distances(&PointSet::new(x.clone()).unwrap(), kind).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn product_plan_has_zero_mi(
        seed in any::<u64>(),
        n in 1usize..=50,
        m in 1usize..=50,
        h in 0.2..0.8f64,
    ) {
        let mut rng = common::rng(seed);
        let x = common::uniform_points(&mut rng, n, 2);
        let y = common::uniform_points(&mut rng, m, 2);
        let plan = Array2::from_elem((n, m), 1.0 / (n * m) as f64);
        let mi = mutual_information(&model_from(&x, &y, h), plan.view()).unwrap();
        prop_assert!(mi.abs() < 1e-12, "{mi}");
    }

    #[test]
    fn mi_matches_scalar_oracle(seed in any::<u64>(), n in 1usize..=8, m in 1usize..=8, h in 0.2..0.8f64) {
        let mut rng = common::rng(seed);
        let x = common::uniform_points(&mut rng, n, 2);
        let y = common::uniform_points(&mut rng, m, 2);
        let plan = common::random_plan(&mut rng, n, m);
        let mi = mutual_information(&model_from(&x, &y, h), plan.view()).unwrap();
        let oracle = common::mi_loop(&common::dist_matrix(&x), &common::dist_matrix(&y), &plan, h);
        prop_assert!((mi - oracle).abs() < 1e-10);
    }

    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>(), n in 2usize..=10, m in 2usize..=10) {
        let mut rng = common::rng(seed);
        let x = common::uniform_points(&mut rng, n, 2);
        let y = common::uniform_points(&mut rng, m, 2);
        let plan = common::random_plan(&mut rng, n, m);
        let model = model_from(&x, &y, 0.5);
        let grad = mi_gradient(&model, plan.view()).unwrap();
        let log_nm = ((n * m) as f64).ln();
        let t = 1e-6;
        for _ in 0..10 {
            // Unconstrained direction; the dropped log(nm) is restored.
            let dir = Array2::from_shape_fn((n, m), |_| rng.gen_range(-1.0..1.0)) * &plan;
            let f = |s: f64| mutual_information(&model, (&plan + &(&dir * s)).view()).unwrap();
            let fd = (f(t) - f(-t)) / (2.0 * t);
            let analytic = ((&grad + log_nm) * &dir).sum();
            let rel = (fd - analytic).abs() / analytic.abs().max(1e-8);
            prop_assert!(rel < 1e-5, "fd {fd} analytic {analytic} rel {rel}");
        }
    }

    #[test]
    fn infoot_mi_trace_nondecreasing(seed in any::<u64>(), n in 2usize..=40, m in 2usize..=40) {
        let mut rng = common::rng(seed);
        let x = common::uniform_points(&mut rng, n, 2);
        let y = common::uniform_points(&mut rng, m, 2);
        let r = solve_infoot(
            &distances(&x, DistanceKind::IntraSource),
            &distances(&y, DistanceKind::IntraTarget),
            &common::uniform(n),
            &common::uniform(m),
            &SolverConfig::default(),
        )
        .unwrap();
        for w in r.mi_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-6, "{} -> {}", w[0], w[1]);
        }
        prop_assert!(r.coupling.check().is_ok());
    }

    #[test]
    fn fused_outputs_are_feasible(seed in any::<u64>(), n in 1usize..=25, m in 1usize..=25) {
        let mut rng = common::rng(seed);
        let x = common::uniform_points(&mut rng, n, 2);
        let y = common::uniform_points(&mut rng, m, 2);
        let c = Array2::from_shape_fn((n, m), |(i, j)| common::dist(&x, i, &y, j));
        let r = solve_fused_infoot(
            c.view(),
            &distances(&x, DistanceKind::IntraSource),
            &distances(&y, DistanceKind::IntraTarget),
            &common::uniform(n),
            &common::uniform(m),
            &SolverConfig { outer_iters: 10, ..SolverConfig::default() },
        )
        .unwrap();
        prop_assert!(r.coupling.check().is_ok());
    }
}

#[test]
fn source_permutation_permutes_rows() {
    let mut rng = common::rng(77);
    let (n, m) = (12, 9);
    let x = common::uniform_points(&mut rng, n, 2);
    let y = common::uniform_points(&mut rng, m, 2);
    let perm: Vec<usize> = vec![3, 0, 7, 11, 1, 5, 9, 2, 10, 4, 8, 6];
    let xp = x.select(Axis(0), &perm);
    let run = |x: &Array2<f64>| {
        let c = Array2::from_shape_fn((n, m), |(i, j)| common::dist(x, i, &y, j));
        solve_fused_infoot(
            c.view(),
            &distances(x, DistanceKind::IntraSource),
            &distances(&y, DistanceKind::IntraTarget),
            &common::uniform(n),
            &common::uniform(m),
            &SolverConfig::default(),
        )
        .unwrap()
    };
    let (a, b) = (run(&x), run(&xp));
    assert_eq!(a.iterations(), b.iterations());
    for (k, &i) in perm.iter().enumerate() {
        for j in 0..m {
            let (u, v) = (b.coupling.values()[[k, j]], a.coupling.values()[[i, j]]);
            assert!((u - v).abs() < 1e-9, "row {k} col {j}: {u} vs {v}");
        }
    }
}

#[test]
fn two_pair_clusters_are_coherent() {
    // Two tight pairs far apart on each side, same geometry up to rotation.
    // At ε = 1 the entropic term keeps the plan spread out.
    let x = array![[0.0, 0.0], [0.1, 0.0], [5.0, 0.0], [5.3, 0.0]];
    let y = array![[0.0, 0.0], [0.0, 0.1], [0.0, 5.0], [0.0, 5.3]];
    let r = solve_infoot(
        &distances(&x, DistanceKind::IntraSource),
        &distances(&y, DistanceKind::IntraTarget),
        &common::uniform(4),
        &common::uniform(4),
        &SolverConfig {
            epsilon: 0.1,
            ..SolverConfig::default()
        },
    )
    .unwrap();
    let g = r.coupling.values();
    let block = |rows: [usize; 2], cols: [usize; 2]| -> f64 {
        rows.iter()
            .flat_map(|&i| cols.iter().map(move |&j| g[[i, j]]))
            .sum()
    };
    for rows in [[0, 1], [2, 3]] {
        let best = block(rows, [0, 1]).max(block(rows, [2, 3]));
        assert!(best >= 0.98 * 0.5, "cluster mass {best}");
    }
    // Oracle: either coherent pairing beats the independent plan.
    let (dx, dy) = (common::dist_matrix(&x), common::dist_matrix(&y));
    let h = SolverConfig::default().bandwidth;
    let straight = Array2::from_shape_fn((4, 4), |(i, j)| if i / 2 == j / 2 { 0.125 } else { 0.0 });
    let crossed = Array2::from_shape_fn((4, 4), |(i, j)| if i / 2 == j / 2 { 0.0 } else { 0.125 });
    let mixed = Array2::from_elem((4, 4), 1.0 / 16.0);
    assert!(common::mi_loop(&dx, &dy, &straight, h) > common::mi_loop(&dx, &dy, &mixed, h));
    assert!(common::mi_loop(&dx, &dy, &crossed, h) > common::mi_loop(&dx, &dy, &mixed, h));
    let solved = common::mi_loop(&dx, &dy, g, h);
    assert!(
        solved
            >= common::mi_loop(&dx, &dy, &straight, h).min(common::mi_loop(&dx, &dy, &crossed, h))
                - 1e-6
    );
}

#[test]
fn small_bandwidth_limit_shrinks_monotonically() {
    for seed in 0..5 {
        let mut rng = common::rng(900 + seed);
        let x = common::uniform_points(&mut rng, 10, 2);
        let y = common::uniform_points(&mut rng, 10, 2);
        let plan = common::random_plan(&mut rng, 10, 10);
        let (dx, dy) = (
            distances(&x, DistanceKind::IntraSource),
            distances(&y, DistanceKind::IntraTarget),
        );
        let gaps: Vec<f64> = [0.1, 0.03, 0.01, 0.003, 0.001]
            .iter()
            .map(|&h| {
                let (lhs, rhs) = limit_check(&dx, &dy, plan.view(), h).unwrap();
                let oracle = -common::entropy_loop(&plan) + 100f64.ln();
                assert!((rhs - oracle).abs() < 1e-12);
                (lhs - rhs).abs()
            })
            .collect();
        let floor = 4.0 * f64::EPSILON * 100f64.ln();
        for w in gaps.windows(2) {
            assert!(w[1] <= w[0] + floor, "{gaps:?}");
        }
        assert!(gaps[4] < 1e-3);
    }
}

#[test]
fn permutation_plan_limit_is_log_m() {
    let mut rng = common::rng(5);
    let x = common::uniform_points(&mut rng, 10, 2);
    let y = common::uniform_points(&mut rng, 10, 2);
    let plan = Array2::from_shape_fn((10, 10), |(i, j)| if (i * 3) % 10 == j { 0.1 } else { 0.0 });
    let (dx, dy) = (
        distances(&x, DistanceKind::IntraSource),
        distances(&y, DistanceKind::IntraTarget),
    );
    let (lhs, rhs) = limit_check(&dx, &dy, plan.view(), 1e-3).unwrap();
    assert!((entropy(plan.view()) - 10f64.ln()).abs() < 1e-12);
    assert!((rhs - 10f64.ln()).abs() < 1e-12);
    assert!((lhs - rhs).abs() < 1e-3);
}
