use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{CheckResult, TOL_SOLVER};
use crate::data::{Dataset, Points};
use crate::early_stopping::{build_geometric_time_grid, comparator_grid_for_steps, grid_exponent};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::losses::{LossKind, LossSpec};
use crate::mirror_lp::{
    bregman_divergence, duality_map, duality_map_inverse, mirror_map_value, three_point_identity_check, LpPoint,
    LpSpace,
};
use crate::problem::KernelProblem;
use crate::rerm::{risk_path_on, solve_rerm_ls, RermSolver};
use crate::rkhs_gd::StepSizes;

/// `R_D(clip f) <= R_D(f) + tol (1 + R_D(f))` for predictions `preds`,
/// requiring `|y_i| <= clip_level`.
pub fn check_clipping_risk(loss: &LossSpec, dataset: &Dataset, preds: &[f64], clip_level: f64, tol: f64) -> Result<CheckResult> {
    if !loss.is_clippable() {
        return Err(Error::Parameter(format!("{} loss is not clippable", loss.name())));
    }
    if preds.len() != dataset.len() {
        return Err(Error::DimensionMismatch { expected: dataset.len(), got: preds.len() });
    }
    if dataset.label_range() > clip_level {
        return Err(Error::InputDomain(format!("labels exceed the clip level {clip_level}")));
    }
    let n = dataset.len() as f64;
    let raw: f64 = dataset.targets.iter().zip(preds).map(|(y, t)| loss.value_raw(*y, *t)).sum::<f64>() / n;
    let clipped: f64 = dataset
        .targets
        .iter()
        .zip(preds)
        .map(|(y, t)| loss.value_raw(*y, t.clamp(-clip_level, clip_level)))
        .sum::<f64>()
        / n;
    let mut res = CheckResult::new("clipping_risk", tol);
    res.record(|| "risk".into(), clipped, raw, 1.0 + raw);
    Ok(res)
}

/// Losses exercised by the certificates: least squares, logistic and two
/// Huber widths.
pub fn loss_catalogue() -> Vec<LossSpec> {
    vec![
        LossSpec::least_squares(2.0).expect("valid"),
        LossSpec::logistic(),
        LossSpec::huber(0.5, 2.0).expect("valid"),
        LossSpec::huber(1.0, 1.0).expect("valid"),
    ]
}

fn sample_label(loss: &LossSpec, rng: &mut ChaCha8Rng) -> f64 {
    match loss.kind {
        LossKind::LogisticClassification => {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
        _ => rng.random_range(-loss.clip_level..=loss.clip_level),
    }
}

/// Derivative against central differences (relative `1e-6`), clipping
/// monotonicity for clippable losses, midpoint convexity and the growth
/// envelope, `samples` cases per loss and property.
pub fn check_loss_catalogue(samples: usize, seed: u64) -> Vec<CheckResult> {
    let mut fd = CheckResult::new("loss_gradient_fd", 1e-6);
    let mut clip = CheckResult::new("loss_clipping", 1e-15);
    let mut convex = CheckResult::new("loss_convexity", 1e-14);
    let mut growth = CheckResult::new("loss_growth", 1e-15);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for loss in loss_catalogue() {
        let name = loss.name();
        let m = loss.clip_level;
        let g = loss.growth_params();
        for i in 0..samples {
            let y = sample_label(&loss, &mut rng);
            let t = rng.random_range(-4.0 * m..4.0 * m);
            let h = 1e-5 * (1.0 + t.abs());
            let near_kink = match loss.kind {
                LossKind::Huber { delta } => ((t - y).abs() - delta).abs() < 2.0 * h,
                _ => false,
            };
            if !near_kink {
                let d = loss.derivative_raw(y, t);
                let num = (loss.value_raw(y, t + h) - loss.value_raw(y, t - h)) / (2.0 * h);
                fd.record(|| format!("{name} #{i}"), (d - num).abs(), 0.0, 1.0 + d.abs());
            }
            if loss.is_clippable() {
                let raw = loss.value_raw(y, t);
                clip.record(|| format!("{name} #{i}"), loss.value_raw(y, t.clamp(-m, m)), raw, 1.0 + raw);
            }
            let s = rng.random_range(-4.0 * m..4.0 * m);
            let mid = loss.value_raw(y, 0.5 * (t + s));
            let avg = 0.5 * (loss.value_raw(y, t) + loss.value_raw(y, s));
            convex.record(|| format!("{name} #{i}"), mid, avg, 1.0 + avg);
            let env = g.b * (1.0 + t.abs().powf(g.q));
            growth.record(|| format!("{name} #{i}"), loss.value_raw(y, t), env, env);
        }
    }
    vec![fd, clip, convex, growth]
}

/// `J^{-1} o J = id` and `J o J^{-1} = id` (relative `1e-10`), the
/// three-point identity (`1e-10` of the magnitude of its terms) and
/// `D(u, f) >= 0` with equality exactly at `u = f`, `cases` random cases
/// each.
pub fn check_duality_algebra(p: f64, dim: usize, cases: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..dim).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let head: f64 = w[..dim - 1].iter().sum();
    w[dim - 1] = 1.0 - head;
    let space = Arc::new(LpSpace::new(p, w)?);
    let mut rt = CheckResult::new(&format!("duality_roundtrip(p={p})"), 1e-10);
    let mut tp = CheckResult::new(&format!("three_point(p={p})"), 1e-10);
    let mut nn = CheckResult::new(&format!("bregman_nonneg(p={p})"), 1e-12);
    let point = |rng: &mut ChaCha8Rng| -> Result<LpPoint> {
        let scale = 10f64.powf(rng.random_range(-2.0..1.0));
        space.point((0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect())
    };
    for i in 0..cases {
        let x = point(&mut rng)?;
        let back = duality_map_inverse(&duality_map(&x), &space)?;
        let g: Vec<f64> = x.values.iter().map(|v| v * 1.7).collect();
        let jg = duality_map(&duality_map_inverse(&g, &space)?);
        for j in 0..dim {
            let (a, b) = (x.values[j], back.values[j]);
            rt.record(|| format!("#{i} f[{j}]"), (a - b).abs(), 0.0, a.abs().max(f64::MIN_POSITIVE));
            rt.record(|| format!("#{i} g[{j}]"), (g[j] - jg[j]).abs(), 0.0, g[j].abs().max(f64::MIN_POSITIVE));
        }
        let y = point(&mut rng)?;
        let z = point(&mut rng)?;
        let residual = three_point_identity_check(&x, &y, &z)?;
        let scale = 1.0 + mirror_map_value(&x) + mirror_map_value(&y) + mirror_map_value(&z);
        tp.record(|| format!("#{i}"), residual, 0.0, scale);
        let d = bregman_divergence(&x, &y)?;
        let dscale = 1.0 + mirror_map_value(&x) + mirror_map_value(&y);
        nn.record(|| format!("#{i} u!=f"), -d, 0.0, dscale);
        nn.record(|| format!("#{i} strict"), 0.0, if d > 0.0 { 1.0 } else { -1.0 }, 1.0);
        nn.record(|| format!("#{i} u=f"), bregman_divergence(&x, &x)?.abs(), 0.0, 1.0);
    }
    Ok(vec![rt, tp, nn])
}

fn random_regression(seed: u64, n: usize, d: usize) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let pts = Points::new(d, xs)?;
    let ys = pts.rows().map(|x| x.iter().sum::<f64>().sin() + 0.3 * rng.random_range(-1.0..1.0)).collect();
    Dataset::new(pts, ys)
}

fn random_labels(seed: u64, n: usize, d: usize) -> Result<Dataset> {
    let reg = random_regression(seed, n, d)?;
    let ys = reg.targets.iter().map(|y| if *y > 0.0 { 1.0 } else { -1.0 }).collect();
    Dataset::new(reg.points, ys)
}

/// Closed-form least-squares RERM against the iterative (Newton) solver,
/// relative `1e-6` on predictions.
pub fn check_rerm_closed_form(instances: usize, seed: u64) -> Result<CheckResult> {
    let mut res = CheckResult::new("rerm_closed_form_vs_iterative", TOL_SOLVER);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..instances {
        let n = rng.random_range(5..60);
        let data = random_regression(seed.wrapping_add(i as u64), n, 2)?;
        let kernel = KernelSpec::gaussian(rng.random_range(0.3..2.0))?;
        let lambda = 10f64.powf(rng.random_range(-5.0..1.0));
        let closed = solve_rerm_ls(&data, &kernel, lambda)?;
        let loss = LossSpec::least_squares(data.label_range())?;
        let iter = crate::rerm::solve_rerm_smooth(&loss, &data, &kernel, lambda, 1e-12)?;
        let p = KernelProblem::new(loss, data, kernel)?;
        let a = p.predictions(&closed.f.coeffs);
        let b = p.predictions(&iter.f.coeffs);
        let diff = (&a - &b).amax();
        res.record(|| format!("#{i} lambda={lambda:.2e}"), diff, 0.0, a.amax().max(1e-12));
    }
    Ok(res)
}

/// `perturbations` random perturbations of RERM solutions for every loss in
/// the catalogue never lower the regularized objective beyond the
/// certified gap.
pub fn check_rerm_minimality(perturbations: usize, seed: u64) -> Result<CheckResult> {
    let mut res = CheckResult::new("rerm_perturbation_minimality", TOL_SOLVER);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (li, loss) in loss_catalogue().into_iter().enumerate() {
        let data = if matches!(loss.kind, LossKind::LogisticClassification) {
            random_labels(seed + li as u64, 30, 2)?
        } else {
            random_regression(seed + li as u64, 30, 2)?
        };
        let p = KernelProblem::new(loss, data, KernelSpec::gaussian(0.7)?)?;
        let mut solver = RermSolver::new(p.clone()).with_eps_target(1e-12);
        for lambda in [1e-3, 1e-1] {
            let sol = solver.solve(lambda)?;
            let obj = |c: &DVector<f64>| p.risk(c) + lambda * p.norm_sq(c);
            let base = obj(&sol.f.coeffs);
            for j in 0..perturbations / 2 {
                let dir = DVector::from_iterator(p.n(), (0..p.n()).map(|_| rng.sample::<f64, _>(StandardNormal)));
                let scale = 10f64.powf(rng.random_range(-6.0..0.0)) / p.norm(&dir).max(1e-300);
                let cand = &sol.f.coeffs + dir * scale;
                res.record(|| format!("{} lambda={lambda} #{j}", loss.name()), base - sol.optimality_gap_bound, obj(&cand), 1.0 + base);
            }
        }
    }
    Ok(res)
}

/// Risk non-decreasing and norm non-increasing along 20-point log grids.
pub fn check_rerm_paths(seed: u64) -> Result<CheckResult> {
    let mut res = CheckResult::new("rerm_path_monotone", TOL_SOLVER);
    let lambdas: Vec<f64> = (0..20).map(|i| 10f64.powf(-5.0 + 7.0 * i as f64 / 19.0)).collect();
    for (li, loss) in loss_catalogue().into_iter().enumerate() {
        let data = if matches!(loss.kind, LossKind::LogisticClassification) {
            random_labels(seed + 10 + li as u64, 40, 1)?
        } else {
            random_regression(seed + 10 + li as u64, 40, 1)?
        };
        let p = KernelProblem::new(loss, data, KernelSpec::gaussian(0.5)?)?;
        let mut solver = RermSolver::new(p).with_eps_target(1e-12);
        let path = risk_path_on(&mut solver, &lambdas)?;
        for w in path.windows(2) {
            let label = || format!("{} lambda={:.2e}", loss.name(), w[1].lambda);
            res.record(label, w[0].risk, w[1].risk, 1.0 + w[1].risk);
            res.record(|| format!("{} norm lambda={:.2e}", loss.name(), w[1].lambda), w[1].norm, w[0].norm, 1.0 + w[0].norm);
        }
    }
    Ok(res)
}

/// `|R_D(g_lambda) - target| <= 1e-9 R_D(0)` for `targets` targets drawn
/// uniformly between the risk at the smallest `lambda` and `R_D(0)`, over
/// the loss catalogue, plus the one-point anchor (target 0.25 gives
/// `lambda = 1`).
pub fn check_match_accuracy(targets: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut acc = CheckResult::new("risk_match_accuracy", 1e-9);
    let mut anchor = CheckResult::new("risk_match_anchor", 1e-9);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (li, loss) in loss_catalogue().into_iter().enumerate() {
        let data = if matches!(loss.kind, LossKind::LogisticClassification) {
            random_labels(seed + 20 + li as u64, 50, 2)?
        } else {
            random_regression(seed + 20 + li as u64, 50, 2)?
        };
        let p = KernelProblem::new(loss, data, KernelSpec::gaussian(0.8)?)?;
        let mut solver = RermSolver::new(p).with_eps_target(1e-10);
        let r0 = solver.zero_risk();
        let floor = solver.risk_floor()?;
        for j in 0..targets {
            let target = floor + (r0 - floor) * rng.random_range(1e-6..=1.0);
            let sol = solver.match_risk(target, 1e-9 * r0, None)?;
            acc.record(|| format!("{} #{j} target={target:.6e}", loss.name()), (sol.risk - target).abs(), 0.0, r0);
        }
    }
    let one = Dataset::new(Points::from_rows(&[vec![0.0]])?, vec![1.0])?;
    let p = KernelProblem::new(LossSpec::least_squares(1.0)?, one, KernelSpec::gaussian(1.0)?)?;
    let sol = RermSolver::new(p).match_risk(0.25, 1e-12, None)?;
    anchor.record(|| "lambda".into(), (sol.lambda - 1.0).abs(), 0.0, 1.0);
    Ok(vec![acc, anchor])
}

/// For `n in {16, 100, 1000}` and `eta in {1, 0.5, 0.1}`: expansion factor
/// exactly 2, `lambda_1 <= 1/n`, `lambda_max >= 1` and `2^m <= 2n/eta`, with
/// zero tolerance.
pub fn check_geometric_grids() -> Result<CheckResult> {
    let mut res = CheckResult::new("geometric_grid", 0.0);
    for n in [16usize, 100, 1000] {
        for eta in [1.0, 0.5, 0.1] {
            let times = build_geometric_time_grid(n, eta)?;
            let grid = comparator_grid_for_steps(&StepSizes::Constant(eta), &times)?;
            let id = |what: &str| format!("n={n} eta={eta} {what}");
            res.record(|| id("C_grid"), (grid.expansion_factor - 2.0).abs(), 0.0, 1.0);
            res.record(|| id("lambda_1"), grid.psi_values[0], 1.0 / n as f64, 1.0);
            res.record(|| id("lambda_max"), 1.0, *grid.psi_values.last().expect("non-empty"), 1.0);
            let top = 2f64.powi(grid_exponent(&times) as i32);
            res.record(|| id("2^m"), top, 2.0 * n as f64 / eta, 1.0);
        }
    }
    Ok(res)
}
