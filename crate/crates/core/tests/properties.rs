use gasbary::cost::{
    build_cost, kernel_from_cost, kernel_from_cost_with_budget, CostSpec, MemoryBudget,
};
use gasbary::grid::GridImage;
use gasbary::ot::{
    barycenter, objective_unbalanced, sinkhorn_balanced, sinkhorn_unbalanced, uniform_weights,
    SolverConfig,
};
use proptest::prelude::*;

fn cost_spec() -> impl Strategy<Value = CostSpec> {
    prop_oneof![
        Just(CostSpec::Euclidean),
        (0.3f64..4.0).prop_map(|delta| CostSpec::Wfr { delta }),
        ((-2.0f64..2.0), (-2.0f64..2.0), (0.1f64..3.0))
            .prop_map(|(e, nth, t)| CostSpec::WindBiased { wind: [e, nth], t }),
    ]
}

// every pair of pixels on a 4x4 grid stays below the WFR cutoff
fn coupling_cost_spec() -> impl Strategy<Value = CostSpec> {
    prop_oneof![
        Just(CostSpec::Euclidean),
        (1.5f64..4.0).prop_map(|delta| CostSpec::Wfr { delta }),
        ((-2.0f64..2.0), (-2.0f64..2.0), (0.1f64..3.0))
            .prop_map(|(e, nth, t)| CostSpec::WindBiased { wind: [e, nth], t }),
    ]
}

fn masses(len: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(prop_oneof![Just(0.0), 0.01f64..2.0], len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn costs_vanish_on_the_diagonal_and_are_nonnegative(spec in cost_spec(), n in 1usize..6) {
        let c = build_cost(spec, n).unwrap();
        for i in 0..n * n {
            prop_assert_eq!(c.get(i, i), 0.0);
            for j in 0..n * n {
                prop_assert!(c.get(i, j) >= 0.0);
            }
        }
        if !matches!(spec, CostSpec::WindBiased { .. }) {
            prop_assert!(c.is_symmetric());
        }
    }

    #[test]
    fn unbalanced_value_matches_recomputed_objective(
        spec in cost_spec(),
        mu in masses(16),
        nu in masses(16),
        lambda in 0.3f64..3.0,
        lambda_u in 0.2f64..20.0,
    ) {
        prop_assume!(mu.iter().sum::<f64>() > 0.0 && nu.iter().sum::<f64>() > 0.0);
        let k = kernel_from_cost(build_cost(spec, 4).unwrap(), lambda).unwrap();
        let cfg = SolverConfig::new(lambda, lambda_u).with_tol(1e-9).with_max_iters(20_000);
        let r = sinkhorn_unbalanced(&mu, &nu, &k, &cfg).unwrap();
        prop_assert!(r.converged);
        let plan = r.plan(&k);
        prop_assert!(plan.iter().all(|&p| p >= 0.0));
        let direct = objective_unbalanced(&plan, k.cost(), &mu, &nu, lambda, lambda_u).unwrap();
        prop_assert!((direct - r.value).abs() <= 1e-9 * (1.0 + direct.abs()));
        // zero-mass pixels receive nothing
        for i in 0..16 {
            if mu[i] == 0.0 {
                prop_assert_eq!(r.row_sums[i], 0.0);
            }
            if nu[i] == 0.0 {
                prop_assert_eq!(r.col_sums[i], 0.0);
            }
        }
    }

    #[test]
    fn balanced_plans_have_the_prescribed_marginals(
        spec in coupling_cost_spec(),
        mu in proptest::collection::vec(0.01f64..1.0, 16),
        nu in proptest::collection::vec(0.01f64..1.0, 16),
        lambda in 0.5f64..3.0,
    ) {
        let total: f64 = mu.iter().sum();
        let s: f64 = nu.iter().sum();
        let nu: Vec<f64> = nu.iter().map(|x| x * total / s).collect();
        let k = kernel_from_cost(build_cost(spec, 4).unwrap(), lambda).unwrap();
        let cfg = SolverConfig::new(lambda, f64::INFINITY).with_max_iters(50_000);
        let r = sinkhorn_balanced(&mu, &nu, &k, &cfg).unwrap();
        prop_assert!(r.converged);
        prop_assert!(r.marginal_gap.0 <= 1e-5 && r.marginal_gap.1 <= 1e-5);
    }

    #[test]
    fn barycenter_is_nonnegative_and_weight_order_invariant(
        a in masses(9),
        b in masses(9),
        w in 0.1f64..0.9,
    ) {
        prop_assume!(a.iter().sum::<f64>() > 0.0 && b.iter().sum::<f64>() > 0.0);
        let k = kernel_from_cost(build_cost(CostSpec::Euclidean, 3).unwrap(), 0.5).unwrap();
        let ga = GridImage::from_values(3, a).unwrap();
        let gb = GridImage::from_values(3, b).unwrap();
        let cfg = SolverConfig::new(0.5, 5.0).with_tol(1e-10).with_max_iters(20_000);
        let r1 = barycenter(&[ga.clone(), gb.clone()], &[&k, &k], &[w, 1.0 - w], &cfg).unwrap();
        let r2 = barycenter(&[gb, ga], &[&k, &k], &[1.0 - w, w], &cfg).unwrap();
        prop_assert!(r1.g_bar.iter().all(|&x| x >= 0.0 && x.is_finite()));
        for (x, y) in r1.g_bar.iter().zip(&r2.g_bar) {
            prop_assert!((x - y).abs() <= 1e-7 * (1.0 + x.abs()));
        }
    }
}

#[test]
fn streaming_kernel_gives_the_same_transport() {
    let spec = CostSpec::WindBiased {
        wind: [0.7, -0.4],
        t: 1.2,
    };
    let n = 4;
    let cost = build_cost(spec, n).unwrap();
    let dense = kernel_from_cost(cost.clone(), 0.8).unwrap();
    let streaming = kernel_from_cost_with_budget(cost, 0.8, MemoryBudget { bytes: 1024 }).unwrap();
    assert!(streaming.is_streaming() && !dense.is_streaming());
    let mu: Vec<f64> = (0..16).map(|i| 0.1 + (i % 5) as f64).collect();
    let nu: Vec<f64> = (0..16).map(|i| 0.2 + (i % 3) as f64).collect();
    let cfg = SolverConfig::new(0.8, 2.0).with_tol(1e-11);
    let a = sinkhorn_unbalanced(&mu, &nu, &dense, &cfg).unwrap();
    let b = sinkhorn_unbalanced(&mu, &nu, &streaming, &cfg).unwrap();
    assert!((a.value - b.value).abs() < 1e-9 * a.value.abs());
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let n = 6;
    let images: Vec<GridImage> = (0..3)
        .map(|k| {
            let v = (0..n * n)
                .map(|j| ((j * 7 + k * 5) % 11) as f64 / 10.0)
                .collect();
            GridImage::from_values(n, v).unwrap()
        })
        .collect();
    let spec = CostSpec::WindBiased {
        wind: [1.0, 0.5],
        t: 1.0,
    };
    let k = kernel_from_cost(build_cost(spec, n).unwrap(), 0.4).unwrap();
    let cfg = SolverConfig::new(0.4, 3.0);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| barycenter(&images, &[&k, &k, &k], &uniform_weights(3), &cfg).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one.g_bar, four.g_bar);
    assert_eq!(one.iterations, four.iterations);
}
