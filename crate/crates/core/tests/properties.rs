use std::sync::Arc;

use nalgebra::DVector;
use proptest::prelude::*;

use selfreg::data::{Dataset, Points};
use selfreg::early_stopping::{build_geometric_time_grid, comparator_grid_for_steps, learning_rate_exponent};
use selfreg::experiments::parse_config;
use selfreg::kernels::KernelSpec;
use selfreg::losses::LossSpec;
use selfreg::mirror_lp::{bregman_divergence, duality_map, duality_map_inverse, LpSpace};
use selfreg::problem::KernelProblem;
use selfreg::rerm::RermSolver;
use selfreg::rkhs_gd::{run_gd_on, GdConfig, StepSizes};
use selfreg::table::fmt_num;
use selfreg::verify::{check_fejer, Comparator};

fn small_problem(xs: &[f64], ys: &[f64], loss: LossSpec, sigma: f64) -> Arc<KernelProblem> {
    let data = Dataset::new(Points::new(1, xs.to_vec()).unwrap(), ys.to_vec()).unwrap();
    KernelProblem::new(loss, data, KernelSpec::gaussian(sigma).unwrap()).unwrap()
}

fn losses(kind: u8, clip: f64) -> LossSpec {
    match kind % 3 {
        0 => LossSpec::least_squares(clip).unwrap(),
        1 => LossSpec::huber(0.4, clip).unwrap(),
        _ => LossSpec::logistic(),
    }
}

fn sample() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..12).prop_flat_map(|n| (prop::collection::vec(-1.0..1.0f64, n), prop::collection::vec(-1.0..1.0f64, n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn numbers_round_trip(x in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
        prop_assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn duality_map_inverts(p in 1.2..6.0f64, v in prop::collection::vec(-50.0..50.0f64, 1..6)) {
        let space = Arc::new(LpSpace::uniform(p, v.len()).unwrap());
        let f = space.point(v.clone()).unwrap();
        let back = duality_map_inverse(&duality_map(&f), &space).unwrap();
        for (a, b) in v.iter().zip(&back.values) {
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-300));
        }
    }

    #[test]
    fn bregman_is_nonnegative(p in 1.2..6.0f64, u in prop::collection::vec(-5.0..5.0f64, 3), f in prop::collection::vec(-5.0..5.0f64, 3)) {
        let space = Arc::new(LpSpace::uniform(p, 3).unwrap());
        let d = bregman_divergence(&space.point(u).unwrap(), &space.point(f).unwrap()).unwrap();
        prop_assert!(d >= -1e-12);
    }

    #[test]
    fn clipping_never_hurts(kind in 0u8..2, y in -1.0..1.0f64, t in -10.0..10.0f64) {
        let loss = losses(kind, 1.0);
        prop_assert!(loss.value_raw(y, t.clamp(-1.0, 1.0)) <= loss.value_raw(y, t));
    }

    #[test]
    fn gd_risk_is_monotone((xs, ys) in sample(), kind in 0u8..3, sigma in 0.2..2.0f64) {
        let ys: Vec<f64> = if kind % 3 == 2 { ys.iter().map(|y| if *y >= 0.0 { 1.0 } else { -1.0 }).collect() } else { ys };
        let p = small_problem(&xs, &ys, losses(kind, 1.0), sigma);
        let eta = p.default_step_size(Default::default());
        let traj = run_gd_on(p, &GdConfig::constant(eta, 64)).unwrap();
        for w in traj.risks.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * (1.0 + traj.risks[0]));
        }
    }

    #[test]
    fn fejer_holds_for_any_comparator((xs, ys) in sample(), coeffs in prop::collection::vec(-3.0..3.0f64, 12), sigma in 0.2..2.0f64) {
        let p = small_problem(&xs, &ys, LossSpec::least_squares(1.0).unwrap(), sigma);
        let eta = p.default_step_size(Default::default());
        let traj = run_gd_on(p, &GdConfig::constant(eta, 40)).unwrap();
        let h = Comparator { label: "h".into(), coeffs: DVector::from_column_slice(&coeffs[..xs.len()]), matched_time: None };
        prop_assert!(check_fejer(&traj, &[h], 40, 1e-9).unwrap().passed);
    }

    #[test]
    fn rerm_beats_perturbations((xs, ys) in sample(), kind in 0u8..2, log_lambda in -4.0..1.0f64, dir in prop::collection::vec(-1.0..1.0f64, 12)) {
        let p = small_problem(&xs, &ys, losses(kind, 1.0), 0.7);
        let lambda = 10f64.powf(log_lambda);
        let sol = RermSolver::new(p.clone()).with_eps_target(1e-10).solve(lambda).unwrap();
        let obj = |c: &DVector<f64>| p.risk(c) + lambda * p.norm_sq(c);
        let base = obj(&sol.f.coeffs);
        let d = DVector::from_column_slice(&dir[..xs.len()]);
        for s in [1e-3, 1e-1, 1.0] {
            prop_assert!(obj(&(&sol.f.coeffs + &d * s)) >= base - 1e-9 * (1.0 + base));
        }
    }

    #[test]
    fn dyadic_grids_have_factor_two(n in 2usize..5000, eta in 0.01..1.0f64) {
        let times = build_geometric_time_grid(n, eta).unwrap();
        let grid = comparator_grid_for_steps(&StepSizes::Constant(eta), &times).unwrap();
        prop_assert_eq!(grid.expansion_factor, 2.0);
        prop_assert!(grid.psi_values[0] <= 1.0 / n as f64);
        prop_assert!(*grid.psi_values.last().unwrap() >= 1.0);
    }

    #[test]
    fn rate_exponent_is_a_rate(beta in 0.01..=1.0f64, gamma in 0.01..0.99f64, theta in 0.0..=1.0f64, q in 1.0..4.0f64) {
        let a = learning_rate_exponent(beta, gamma, theta, q).unwrap();
        prop_assert!(a > 0.0 && a <= 1.0);
    }

    #[test]
    fn unknown_keys_are_named(key in "[a-z]{3,8}\\.[a-z]{3,8}") {
        prop_assume!(!["data", "kernel", "loss", "gd", "cv", "verify", "rates", "output"].iter().any(|s| key.starts_with(&format!("{s}."))));
        let err = parse_config(&format!("{key} = 1\n")).unwrap_err().to_string();
        prop_assert!(err.contains(&key));
    }
}
