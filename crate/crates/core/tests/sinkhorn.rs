mod common;

use infoot::assignment::exact_assignment;
use infoot::sinkhorn::{entropy, sinkhorn, transport_cost, SinkhornSettings};
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

fn cost(seed: u64, n: usize, m: usize) -> Array2<f64> {
    let mut rng = common::rng(seed);
    Array2::from_shape_fn((n, m), |_| rng.gen::<f64>())
}

fn tight() -> SinkhornSettings {
    SinkhornSettings {
        max_iter: 10_000,
        tol: 1e-12,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn entropy_grows_with_epsilon(
        seed in any::<u64>(),
        n in 2usize..12,
        m in 2usize..12,
        e1 in 0.02..1.0f64,
        factor in 1.05..5.0f64,
    ) {
        let c = cost(seed, n, m);
        let (p, q) = (common::uniform(n), common::uniform(m));
        let (g1, r1) = sinkhorn(c.view(), &p, &q, e1, &tight()).unwrap();
        let (g2, r2) = sinkhorn(c.view(), &p, &q, e1 * factor, &tight()).unwrap();
        prop_assert!(r1.converged && r2.converged);
        prop_assert!(entropy(g1.view()) <= entropy(g2.view()) + 1e-9);
    }

    #[test]
    fn constant_cost_shift_leaves_plan(
        seed in any::<u64>(),
        n in 1usize..12,
        m in 1usize..12,
        eps in 0.05..2.0f64,
        shift in -50.0..50.0f64,
    ) {
        let c = cost(seed, n, m);
        let (p, q) = (common::uniform(n), common::uniform(m));
        let (g, _) = sinkhorn(c.view(), &p, &q, eps, &tight()).unwrap();
        let (gs, _) = sinkhorn((&c + shift).view(), &p, &q, eps, &tight()).unwrap();
        let diff = (g.values() - gs.values()).mapv(f64::abs).fold(0.0, |a: f64, &b| a.max(b));
        prop_assert!(diff < 1e-10, "max diff {diff}");
    }

    #[test]
    fn converged_plans_are_feasible(
        seed in any::<u64>(),
        n in 1usize..15,
        m in 1usize..15,
        eps in 0.01..5.0f64,
    ) {
        let c = cost(seed, n, m) * 10.0;
        let mut rng = common::rng(seed ^ 1);
        let mut p: ndarray::Array1<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let mut q: ndarray::Array1<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
        p /= p.sum();
        q /= q.sum();
        let (g, report) = sinkhorn(c.view(), &p, &q, eps, &SinkhornSettings::default()).unwrap();
        if report.converged {
            prop_assert!(g.check().is_ok(), "{:?} {:?}", g.check(), report);
        }
    }

    #[test]
    fn assignment_matches_enumeration(seed in any::<u64>(), n in 1usize..=6) {
        let c = cost(seed, n, n);
        let (perm, value) = exact_assignment(c.view()).unwrap();
        let mut seen = perm.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        let picked: f64 = perm.iter().enumerate().map(|(i, &j)| c[[i, j]]).sum::<f64>() / n as f64;
        prop_assert!((picked - value).abs() < 1e-12);
        prop_assert!((value - common::brute_force_assignment(&c)).abs() < 1e-12);
    }
}

#[test]
fn six_by_six_small_epsilon_near_assignment() {
    for seed in 0..5 {
        let c = cost(600 + seed, 6, 6);
        let (g, _) = sinkhorn(
            c.view(),
            &common::uniform(6),
            &common::uniform(6),
            0.01,
            &tight(),
        )
        .unwrap();
        let exact = common::brute_force_assignment(&c);
        assert!((transport_cost(g.view(), c.view()) - exact).abs() < 1e-2);
    }
}

#[test]
fn entropy_matches_loop_on_random_plan() {
    let mut rng = common::rng(54);
    let plan = common::random_plan(&mut rng, 5, 4);
    assert!((entropy(plan.view()) - common::entropy_loop(&plan)).abs() < 1e-12);
}
