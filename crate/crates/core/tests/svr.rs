mod common;

use affect_fusion::svr::{fit_svr, fit_svr_detailed, predict_svr, Kernel, SvrConfig, SvrModel};
use proptest::prelude::*;
use rand::Rng;

fn kernel_fn(kernel: Kernel) -> impl Fn(&[f64], &[f64]) -> f64 {
    move |a, b| match kernel {
        Kernel::Linear => common::linear(a, b),
        Kernel::Rbf { gamma } => common::rbf(a, b, gamma),
    }
}

#[test]
fn small_instances_match_qp_oracle() {
    let mut r = common::rng(2024);
    for case in 0..60 {
        let n = r.random_range(2..=8);
        let dim = r.random_range(1..=3);
        let (x, t) = common::svr_instance(&mut r, n, dim);
        let kernel = if case % 3 == 0 {
            Kernel::Linear
        } else {
            Kernel::Rbf {
                gamma: r.random_range(0.2..2.0),
            }
        };
        let c = [0.5, 1.0, 2.0][case % 3];
        let eps = r.random_range(0.0..0.2);
        let cfg = SvrConfig {
            c,
            epsilon: eps,
            kernel,
            ..SvrConfig::for_dim(dim)
        };
        let sol = fit_svr_detailed(&x, &t, &cfg).unwrap();
        assert!(sol.model.converged, "case {case} did not converge");

        let k = common::gram(&x, kernel_fn(kernel));
        let ours = common::svr_dual_objective(&k, &t, eps, &sol.beta);
        let (_, best) = common::qp_oracle(&k, &t, c, eps, 30_000);
        assert!(
            (ours - best).abs() < 1e-4,
            "case {case}: objective {ours} vs oracle {best}"
        );
        assert!(
            (ours - sol.objective).abs() < 1e-9,
            "case {case}: reported objective differs"
        );

        let (slack, boxv) = common::kkt_violation(&k, &t, &sol.beta, sol.model.bias, c, eps);
        assert!(slack < 1e-3, "case {case}: KKT violation {slack}");
        assert!(boxv <= 1e-12, "case {case}: box violation {boxv}");
        assert!(sol.beta.iter().sum::<f64>().abs() < 1e-9);
    }
}

#[test]
fn prediction_is_kernel_expansion() {
    let mut r = common::rng(8);
    let (x, t) = common::svr_instance(&mut r, 30, 2);
    let cfg = SvrConfig::for_dim(2);
    let sol = fit_svr_detailed(&x, &t, &cfg).unwrap();
    let q = vec![vec![0.1, -0.4], vec![0.9, 0.9]];
    let got = predict_svr(&sol.model, &q).unwrap();
    for (qi, g) in q.iter().zip(got) {
        let want = sol.model.bias
            + x.iter()
                .zip(&sol.beta)
                .map(|(xi, b)| b * common::rbf(xi, qi, 0.5))
                .sum::<f64>();
        assert!((g - want).abs() < 1e-12);
    }
}

#[test]
fn wide_tube_gives_constant_model() {
    let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 10.0]).collect();
    let t: Vec<f64> = (0..10).map(|i| 0.01 * i as f64).collect();
    let cfg = SvrConfig {
        epsilon: 1.0,
        ..SvrConfig::for_dim(1)
    };
    let m = fit_svr(&x, &t, &cfg).unwrap();
    assert_eq!(m.num_support_vectors(), 0);
    assert!(t.iter().all(|ti| (m.bias - ti).abs() <= 1.0));
}

#[test]
fn recovers_linear_function() {
    let mut r = common::rng(1);
    let x: Vec<Vec<f64>> = (0..80)
        .map(|_| vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)])
        .collect();
    let t: Vec<f64> = x.iter().map(|v| 1.5 * v[0] - 0.5 * v[1] + 0.25).collect();
    let m = fit_svr(&x, &t, &SvrConfig::linear(10.0, 0.01)).unwrap();
    for (xi, ti) in x.iter().zip(&t) {
        assert!((m.predict_one(xi).unwrap() - ti).abs() < 0.02);
    }
}

#[test]
fn larger_problem_converges() {
    let mut r = common::rng(77);
    let (x, t) = common::svr_instance(&mut r, 600, 6);
    let sol = fit_svr_detailed(&x, &t, &SvrConfig::for_dim(6)).unwrap();
    assert!(sol.model.converged);
    let k = common::gram(&x, kernel_fn(Kernel::Rbf { gamma: 1.0 / 6.0 }));
    let (slack, _) = common::kkt_violation(&k, &t, &sol.beta, sol.model.bias, 1.0, 0.01);
    assert!(slack < 1e-3, "KKT violation {slack}");
}

#[test]
fn dump_round_trip_is_exact() {
    let mut r = common::rng(4);
    let (x, t) = common::svr_instance(&mut r, 25, 3);
    let m = fit_svr(&x, &t, &SvrConfig::for_dim(3)).unwrap();
    let back = SvrModel::from_json(&m.to_json().unwrap()).unwrap();
    assert_eq!(back, m);
    let q = vec![vec![0.2, 0.1, -0.3]];
    assert_eq!(
        predict_svr(&back, &q).unwrap(),
        predict_svr(&m, &q).unwrap()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Scaling inputs by `s` with `gamma / s^2` leaves the RBF problem unchanged.
    #[test]
    fn rbf_input_scaling(seed in 0u64..1000, s in 0.2f64..5.0) {
        let mut r = common::rng(seed);
        let (x, t) = common::svr_instance(&mut r, 12, 2);
        // compare optima, not two stopping points of a loose tolerance
        let cfg = SvrConfig { kernel: Kernel::Rbf { gamma: 0.7 }, tol: 1e-8, max_passes: 5000, ..SvrConfig::for_dim(2) };
        let scaled: Vec<Vec<f64>> = x.iter().map(|v| v.iter().map(|a| a * s).collect()).collect();
        let cfg_s = SvrConfig { kernel: Kernel::Rbf { gamma: 0.7 / (s * s) }, ..cfg.clone() };
        let a = fit_svr(&x, &t, &cfg).unwrap();
        let b = fit_svr(&scaled, &t, &cfg_s).unwrap();
        let pa = predict_svr(&a, &x).unwrap();
        let pb = predict_svr(&b, &scaled).unwrap();
        for (u, v) in pa.iter().zip(&pb) {
            prop_assert!((u - v).abs() < 1e-5);
        }
    }

    /// Shifting every target moves only the bias.
    #[test]
    fn target_shift_moves_bias(seed in 0u64..1000, shift in -3.0f64..3.0) {
        let mut r = common::rng(seed);
        let (x, t) = common::svr_instance(&mut r, 10, 2);
        let cfg = SvrConfig { tol: 1e-8, max_passes: 5000, ..SvrConfig::for_dim(2) };
        let moved: Vec<f64> = t.iter().map(|v| v + shift).collect();
        let a = fit_svr(&x, &t, &cfg).unwrap();
        let b = fit_svr(&x, &moved, &cfg).unwrap();
        for (u, v) in predict_svr(&a, &x).unwrap().iter().zip(predict_svr(&b, &x).unwrap()) {
            prop_assert!((u + shift - v).abs() < 1e-5);
        }
    }

    #[test]
    fn box_constraint_holds(seed in 0u64..1000, c in 0.05f64..3.0) {
        let mut r = common::rng(seed);
        let (x, t) = common::svr_instance(&mut r, 15, 3);
        let sol = fit_svr_detailed(&x, &t, &SvrConfig { c, ..SvrConfig::for_dim(3) }).unwrap();
        prop_assert!(sol.beta.iter().all(|b| b.abs() <= c + 1e-12));
        prop_assert!(sol.beta.iter().sum::<f64>().abs() < 1e-9);
    }
}
