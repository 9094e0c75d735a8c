use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gd::{
    check_gd_risk_monotone, check_norm_bound_four, check_risk_matching_17, check_self_regularization_from,
    fejer_and_telescoping, matched_comparators, random_comparators,
};
use super::{CheckResult, TOL_SOLVER};
use crate::early_stopping::build_geometric_time_grid;
use crate::error::Result;
use crate::kernels::KernelSpec;
use crate::losses::LossSpec;
use crate::problem::KernelProblem;
use crate::rerm::RermSolver;
use crate::rkhs_gd::{run_gd_on, GdConfig};
use crate::synth::{generate_classification, generate_regression, TargetFunction};

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub instances: usize,
    pub seed: u64,
    pub n_min: usize,
    pub n_max: usize,
    /// Random comparators per instance for the Fejér and telescoping checks.
    pub comparators: usize,
    /// Newton target accuracy of the RERM solver.
    pub eps_target: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { instances: 100, seed: 2024, n_min: 10, n_max: 500, comparators: 50, eps_target: 1e-11 }
    }
}

#[derive(Clone, Debug)]
pub struct SweepInstance {
    pub id: String,
    pub problem: Arc<KernelProblem>,
}

/// Instance `index` of the sweep: loss rotating through least squares,
/// logistic and Huber, kernel alternating between gaussian and linear, `n`
/// log-uniform in `[n_min, n_max]`, dimension 1 to 3.
pub fn sweep_instance(config: &SweepConfig, index: usize) -> Result<SweepInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let (lo, hi) = ((config.n_min.max(2) as f64).ln(), (config.n_max.max(config.n_min.max(2)) as f64).ln());
    let n = rng.random_range(lo..=hi).exp().round() as usize;
    let d = 1 + (index / 6) % 3;
    let data_seed = rng.random::<u64>();
    let kernel = if index.is_multiple_of(2) { KernelSpec::gaussian(rng.random_range(0.3..2.0))? } else { KernelSpec::Linear };
    let target = [TargetFunction::Sine, TargetFunction::Bump, TargetFunction::Linear][index % 3];
    let (loss, data) = match index % 3 {
        0 => {
            let p = generate_regression(n, d, target, rng.random_range(0.05..0.5), data_seed)?;
            (LossSpec::least_squares(p.dataset.label_range().max(1e-12))?, p.dataset)
        }
        1 => {
            let p = generate_classification(n, d, TargetFunction::Sine, rng.random_range(1.0..4.0), data_seed)?;
            (LossSpec::logistic(), p.dataset)
        }
        _ => {
            let p = generate_regression(n, d, target, rng.random_range(0.05..0.5), data_seed)?;
            let delta = rng.random_range(0.1..1.0);
            (LossSpec::huber(delta, p.dataset.label_range().max(1e-12))?, p.dataset)
        }
    };
    let id = format!("#{index}:{}/{}/n={n}/d={d}", loss.name(), kernel.name());
    Ok(SweepInstance { id, problem: KernelProblem::new(loss, data, kernel)? })
}

/// Gradient-descent checks over the sweep: self-regularization, the
/// factor-17 and factor-4 inequalities, Fejér monotonicity, the
/// telescoping bound and risk monotonicity, in that order. Every instance
/// runs at `eta = min(1, 1/M')` over its dyadic stopping-time grid.
pub fn run_gd_sweep(config: &SweepConfig) -> Result<Vec<CheckResult>> {
    let mut total = vec![
        CheckResult::new("self_regularization_c2", TOL_SOLVER),
        CheckResult::new("risk_matching_17", TOL_SOLVER),
        CheckResult::new("norm_bound_c4", TOL_SOLVER),
        CheckResult::new("fejer_monotone", 1e-9),
        CheckResult::new("telescoping_bound", 1e-9),
        CheckResult::new("gd_risk_monotone", 1e-12),
    ];
    for index in 0..config.instances {
        let inst = sweep_instance(config, index)?;
        let eta = inst.problem.default_step_size(Default::default());
        let times = build_geometric_time_grid(inst.problem.n(), eta)?;
        let horizon = *times.last().expect("non-empty grid");
        let gd = GdConfig::constant(eta, horizon).with_record_times(&times);
        let traj = run_gd_on(inst.problem.clone(), &gd)?;
        let mut solver = RermSolver::new(inst.problem.clone()).with_eps_target(config.eps_target);
        let (matched, skipped) = matched_comparators(&traj, &mut solver, &times)?;
        let mut selfreg = check_self_regularization_from(&traj, &matched, TOL_SOLVER)?;
        selfreg.skipped = skipped;
        let r17 = check_risk_matching_17(&traj, &mut solver, &times, TOL_SOLVER)?;
        let c4 = check_norm_bound_four(&traj, &mut solver, &times, TOL_SOLVER)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(7919 * index as u64));
        let mut comps = random_comparators(&traj, &mut solver, config.comparators, &mut rng)?;
        comps.extend(matched);
        let (fejer, tele) = fejer_and_telescoping(&traj, &comps, horizon, 1e-9)?;
        let mono = check_gd_risk_monotone(&traj, 1e-12);
        for (acc, r) in total.iter_mut().zip([selfreg, r17, c4, fejer, tele, mono]) {
            acc.merge(r, &inst.id);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_are_deterministic_and_varied() {
        let cfg = SweepConfig::default();
        let a = sweep_instance(&cfg, 4).unwrap();
        let b = sweep_instance(&cfg, 4).unwrap();
        assert_eq!(a.id, b.id);
        assert_eq!(a.problem.dataset, b.problem.dataset);
        let ids: Vec<String> = (0..6).map(|i| sweep_instance(&cfg, i).unwrap().id).collect();
        for (loss, kernel) in [("least_squares", "gaussian"), ("logistic", "linear"), ("huber", "gaussian")] {
            assert!(ids.iter().any(|s| s.contains(loss) && s.contains(kernel)), "{ids:?}");
        }
        for i in 0..30 {
            let n = sweep_instance(&cfg, i).unwrap().problem.n();
            assert!((10..=500).contains(&n));
        }
    }

    #[test]
    fn small_sweep_passes() {
        let cfg = SweepConfig { instances: 6, n_max: 40, comparators: 10, ..SweepConfig::default() };
        for r in run_gd_sweep(&cfg).unwrap() {
            assert!(r.passed, "{} {:?}", r.summary(), r.details);
        }
    }
}
