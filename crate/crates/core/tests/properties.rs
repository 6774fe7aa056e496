mod common;

use proptest::prelude::*;

use tmdmap::bvp::{check_maximum_principle, classify_ab, solve_dirichlet, BvpProblem, Region, MAX_PRINCIPLE_TOL};
use tmdmap::cloud::{parse_point_table, PointCloud};
use tmdmap::experiments::config::{Config, Manifest};
use tmdmap::experiments::scaling::{neps_epsilon, variance_alpha};
use tmdmap::generator::{apply_generator, build_dmap, build_tmdmap};
use tmdmap::kernel::{build_kernel, kde};
use tmdmap::sampling::{delta_net, delta_net_indices};
use tmdmap::sparse::read_matrix_market;
use tmdmap::tpt::importance_weights;

use common::{dense_dmap_p, dense_tmdmap_p, max_abs_diff};

fn cloud_strategy(max_n: usize) -> impl Strategy<Value = PointCloud> {
    (1usize..=3).prop_flat_map(move |dim| {
        prop::collection::vec(prop::collection::vec(-2.0f64..2.0, dim), 2..max_n)
            .prop_map(|rows| PointCloud::from_rows(&rows).unwrap())
    })
}

fn measure_for(cloud: &PointCloud, a: f64) -> Vec<f64> {
    cloud.iter().map(|p| (-a * p.iter().map(|x| x * x).sum::<f64>()).exp()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn markov_and_generator_structure(cloud in cloud_strategy(60), eps in 0.02f64..2.0, a in 0.0f64..2.0) {
        let k = build_kernel(&cloud, eps, 1e-8).unwrap();
        let b = build_tmdmap(&k, &kde(&k), &measure_for(&cloud, a)).unwrap();
        let inv = b.invariants();
        prop_assert!(inv.holds(), "{:?}", inv);
        let ones = vec![1.0; cloud.len()];
        let lf = apply_generator(&b, &ones, 1.0).unwrap();
        prop_assert!(lf.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sparse_matches_dense_oracle(cloud in cloud_strategy(40), eps in 0.05f64..2.0, a in 0.0f64..1.5) {
        let mu = measure_for(&cloud, a);
        let k = build_kernel(&cloud, eps, 0.0).unwrap();
        let b = build_tmdmap(&k, &kde(&k), &mu).unwrap();
        prop_assert!(max_abs_diff(&b.p, &dense_tmdmap_p(&cloud, eps, &mu)) <= 1e-13);
        let d = build_dmap(&k, &kde(&k), 0.5).unwrap();
        prop_assert!(max_abs_diff(&d.p, &dense_dmap_p(&cloud, eps, 0.5)) <= 1e-13);
    }

    #[test]
    fn measure_scale_invariance(cloud in cloud_strategy(50), eps in 0.05f64..1.0, c in 1e-3f64..1e3) {
        let mu = measure_for(&cloud, 0.7);
        let scaled: Vec<f64> = mu.iter().map(|m| c * m).collect();
        let k = build_kernel(&cloud, eps, 1e-8).unwrap();
        let p1 = build_tmdmap(&k, &kde(&k), &mu).unwrap().p;
        let p2 = build_tmdmap(&k, &kde(&k), &scaled).unwrap().p;
        prop_assert!(max_abs_diff(&p1, &p2.to_dense()) <= 1e-12);
    }

    #[test]
    fn dmap_one_is_tmdmap_with_constant_measure(cloud in cloud_strategy(50), eps in 0.05f64..1.0, c in 0.1f64..10.0) {
        let k = build_kernel(&cloud, eps, 1e-8).unwrap();
        let t = build_tmdmap(&k, &kde(&k), &vec![c; cloud.len()]).unwrap().p;
        let d = build_dmap(&k, &kde(&k), 1.0).unwrap().p;
        prop_assert!(max_abs_diff(&d, &t.to_dense()) <= 1e-12);
    }

    #[test]
    fn delta_net_invariants(cloud in cloud_strategy(120), delta in 0.01f64..1.5) {
        let idx = delta_net_indices(&cloud, delta).unwrap();
        prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        let net = cloud.subset(&idx);
        let d2 = delta * delta;
        let sq = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };
        for i in 0..net.len() {
            for j in 0..i {
                prop_assert!(sq(net.point(i), net.point(j)) >= d2);
            }
        }
        for p in cloud.iter() {
            prop_assert!(net.iter().any(|q| sq(p, q) < d2));
        }
        prop_assert_eq!(delta_net(&net, delta).unwrap(), net);
    }

    #[test]
    fn committor_bounds_and_swap(seed in 0u64..1000, eps in 0.03f64..0.3) {
        let cloud = common::uniform_cloud(150, 2, seed);
        let Ok(labels) = classify_ab(&cloud, &[-0.6, 0.0], &[0.6, 0.0], 0.35) else {
            return Ok(());
        };
        prop_assume!(labels.contains(&Region::Interior));
        let k = build_kernel(&cloud, eps, 1e-8).unwrap();
        let b = build_tmdmap(&k, &kde(&k), &measure_for(&cloud, 1.0)).unwrap();
        let problem = BvpProblem::committor(&labels, 4.0).unwrap();
        let Ok(u) = solve_dirichlet(&b, &problem) else { return Ok(()); };
        prop_assert!(check_maximum_principle(&problem, &u, MAX_PRINCIPLE_TOL).holds());
        let v = solve_dirichlet(&b, &problem.swapped()).unwrap();
        for (x, y) in u.values.iter().zip(&v.values) {
            prop_assert!((1.0 - x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn weights_are_a_distribution(mu in prop::collection::vec(0.0f64..5.0, 1..50), seed in 0.1f64..3.0) {
        prop_assume!(mu.iter().any(|m| *m > 0.0));
        let rho: Vec<f64> = (0..mu.len()).map(|i| seed + i as f64 * 0.01).collect();
        let w = importance_weights(&mu, &rho).unwrap();
        prop_assert!(w.iter().all(|x| *x >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn alpha_is_one_on_scaling_curve(n in 10.0f64..1e8, d in 1.0f64..6.0) {
        let e = neps_epsilon(n, d).unwrap();
        prop_assert!((variance_alpha(n, e, d).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn point_csv_round_trip(cloud in cloud_strategy(30)) {
        let back = parse_point_table(&cloud.to_csv_string()).unwrap().cloud;
        prop_assert_eq!(back, cloud);
    }

    #[test]
    fn config_text_round_trip(pairs in prop::collection::btree_map("[a-z][a-z0-9_]{0,8}", "[A-Za-z0-9.,_-][A-Za-z0-9 .,_-]{0,12}[A-Za-z0-9.,_-]", 0..8)) {
        let c = Config::from_map(pairs).unwrap();
        prop_assert_eq!(Config::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn parsers_never_panic(text in "\\PC{0,200}") {
        let _ = Config::parse(&text);
        let _ = Manifest::parse(&text);
        let _ = parse_point_table(&text);
        let _ = read_matrix_market(&text);
    }

    #[test]
    fn matrix_market_round_trip(cloud in cloud_strategy(25), eps in 0.05f64..1.0) {
        let k = build_kernel(&cloud, eps, 1e-8).unwrap();
        let b = build_tmdmap(&k, &kde(&k), &measure_for(&cloud, 0.5)).unwrap();
        let mut buf = Vec::new();
        b.write_p_matrix_market(&mut buf).unwrap();
        let back = read_matrix_market(std::str::from_utf8(&buf).unwrap()).unwrap();
        prop_assert_eq!(back, b.p);
    }
}
