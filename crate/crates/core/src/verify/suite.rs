use super::approx::{check_reg_trafo, AnalyticLsProblem, CoefficientGrid, GridTable};
use super::catalogue::{
    check_duality_algebra, check_geometric_grids, check_loss_catalogue, check_match_accuracy, check_rerm_closed_form,
    check_rerm_minimality, check_rerm_paths,
};
use super::mirror::{
    check_bregman_contraction, check_key_recursion, check_mirror_loss_monotone, check_p2_equivalence,
    level_set_comparators, MirrorInstance,
};
use super::sweep::{run_gd_sweep, SweepConfig};
use super::{CheckResult, TOL_ALGEBRAIC};
use crate::error::Result;
use crate::kernels::KernelSpec;
use crate::losses::LossSpec;
use crate::table::{fmt_num, Table};

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteConfig {
    pub seed: u64,
    pub sweep: SweepConfig,
    pub mirror_steps: usize,
    pub mirror_u_per_step: usize,
    pub algebra_cases: usize,
    pub loss_samples: usize,
    pub rerm_perturbations: usize,
    pub grid_points: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            sweep: SweepConfig::default(),
            mirror_steps: 200,
            mirror_u_per_step: 100,
            algebra_cases: 10_000,
            loss_samples: 10_000,
            rerm_perturbations: 1000,
            grid_points: 41,
        }
    }
}

impl SuiteConfig {
    /// A reduced suite for smoke runs.
    pub fn quick(seed: u64) -> Self {
        Self {
            seed,
            sweep: SweepConfig { instances: 6, seed, n_max: 40, comparators: 8, ..SweepConfig::default() },
            mirror_steps: 30,
            mirror_u_per_step: 10,
            algebra_cases: 500,
            loss_samples: 500,
            rerm_perturbations: 40,
            grid_points: 15,
        }
    }
}

fn merge_all(name: &str, tol: f64, parts: Vec<(String, CheckResult)>) -> CheckResult {
    let mut acc = CheckResult::new(name, tol);
    for (label, r) in parts {
        acc.merge(r, &label);
    }
    acc
}

/// Mirror-descent checks for `p in {1.5, 2, 3, 4}` on a quadratic and a
/// logistic objective, plus the `p = 2` equivalence with kernel GD.
pub fn mirror_checks(config: &SuiteConfig) -> Result<Vec<CheckResult>> {
    let mut mono = Vec::new();
    let mut key = Vec::new();
    let mut level = Vec::new();
    let steps = config.mirror_steps;
    let t0s: Vec<usize> = [steps / 20, steps / 4, steps / 2, steps].into_iter().filter(|t| *t > 0).collect();
    for (pi, p) in [1.5, 2.0, 3.0, 4.0].into_iter().enumerate() {
        let seed = config.seed.wrapping_add(31 * pi as u64);
        for inst in [MirrorInstance::quadratic(p, 4, seed)?, MirrorInstance::logistic(p, 5, 400, seed)?] {
            let traj = inst.run(steps, seed)?;
            let obj = inst.objective.as_ref();
            mono.push((inst.label.clone(), check_mirror_loss_monotone(&traj, 1e-12)));
            key.push((
                inst.label.clone(),
                check_key_recursion(obj, &traj, &inst.region, config.mirror_u_per_step, seed, TOL_ALGEBRAIC)?,
            ));
            let comps = level_set_comparators(obj, &traj, &t0s, 5, seed)?;
            level.push((inst.label.clone(), check_bregman_contraction(obj, &traj, &comps, TOL_ALGEBRAIC)?));
        }
    }
    let ls = LossSpec::least_squares(2.0)?;
    let targets: Vec<f64> = (0..12).map(|i| ((i as f64) * 0.7).sin()).collect();
    let mut p2 = check_p2_equivalence(&ls, &targets, 0.5, steps, 1e-10)?;
    let labels: Vec<f64> = targets.iter().map(|t| if *t >= 0.0 { 1.0 } else { -1.0 }).collect();
    p2.merge(check_p2_equivalence(&LossSpec::logistic(), &labels, 2.0, steps, 1e-10)?, "logistic");
    Ok(vec![
        merge_all("mirror_loss_monotone", 1e-12, mono),
        merge_all("mirror_key_recursion", TOL_ALGEBRAIC, key),
        merge_all("mirror_level_set_contraction", TOL_ALGEBRAIC, level),
        p2,
    ])
}

/// The reference problem of the approximation-error checks: three gaussian
/// features on `[-1, 1]` with the target in their span.
pub fn reference_approx_problem() -> Result<AnalyticLsProblem> {
    AnalyticLsProblem::new(KernelSpec::gaussian(0.5)?, &[-0.6, 0.0, 0.6], &[0.8, -0.5, 0.6])
}

pub fn reg_trafo_checks(grid_points: usize) -> Result<Vec<CheckResult>> {
    let problem = reference_approx_problem()?;
    let grid = CoefficientGrid { points_per_axis: grid_points, ..CoefficientGrid::around_target(&problem) };
    let table = GridTable::new(&problem, grid)?;
    let lambdas: Vec<f64> = (0..10).map(|i| 10f64.powf(-4.0 + 4.0 * i as f64 / 9.0)).collect();
    let gammas: Vec<f64> = (0..10).map(|i| 10f64.powf(-4.0 + 4.0 * i as f64 / 9.0)).collect();
    [(1.0, 2.0), (2.0, 1.0), (2.0, 2.0)]
        .into_iter()
        .map(|(p, r)| check_reg_trafo(&table, p, r, &lambdas, &gammas, 1e-9))
        .collect()
}

/// All checks in declaration order: the GD sweep, mirror descent, duality
/// algebra, RERM and risk matching, grids, the approximation-error
/// transformation and the loss certificates.
pub fn run_default_suite(config: &SuiteConfig) -> Result<Vec<CheckResult>> {
    let mut out = run_gd_sweep(&config.sweep)?;
    out.extend(mirror_checks(config)?);
    for p in [1.5, 2.0, 3.0, 4.0] {
        out.extend(check_duality_algebra(p, 4, config.algebra_cases, config.seed)?);
    }
    out.push(check_rerm_closed_form(20, config.seed)?);
    out.push(check_rerm_minimality(config.rerm_perturbations, config.seed)?);
    out.push(check_rerm_paths(config.seed)?);
    out.extend(check_match_accuracy(10, config.seed)?);
    out.push(check_geometric_grids()?);
    out.extend(reg_trafo_checks(config.grid_points)?);
    out.extend(check_loss_catalogue(config.loss_samples, config.seed));
    Ok(out)
}

/// Columns `name, instances, violations, worst_slack, tolerance, passed`.
pub fn suite_csv(results: &[CheckResult]) -> String {
    let mut t = Table::new(&["name", "instances", "violations", "worst_slack", "tolerance", "passed"]);
    for r in results {
        t.push(vec![
            r.name.clone(),
            r.instances.to_string(),
            r.violations.to_string(),
            fmt_num(r.worst_slack),
            fmt_num(r.tolerance),
            u8::from(r.passed).to_string(),
        ]);
    }
    t.render()
}
