use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::CheckResult;
use crate::data::{Dataset, Points};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::losses::LossSpec;
use crate::mirror_lp::{
    bregman_divergence, estimate_relative_smoothness, level_set_comparator, mirror_map_value, run_mirror_descent,
    EmpiricalRiskObjective, LogisticObjective, LpPoint, LpSpace, MirrorConfig, MirrorObjective, MirrorTrajectory,
    QuadraticObjective, Region,
};
use crate::problem::KernelProblem;
use crate::rkhs_gd::{run_gd_on, GdConfig};

/// A mirror-descent test problem on a box away from the origin, where the
/// mirror map is strongly convex and smooth for every `p`.
pub struct MirrorInstance {
    pub label: String,
    pub objective: Box<dyn MirrorObjective>,
    pub space: Arc<LpSpace>,
    pub start: LpPoint,
    pub region: Region,
}

fn random_weights(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..dim).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    // exact normalization of the last entry keeps the sum at 1 to rounding
    let head: f64 = w[..dim - 1].iter().sum();
    w[dim - 1] = 1.0 - head;
    w
}

impl MirrorInstance {
    /// `(1/2)(f - c)^T A (f - c)` with `A = B^T B / d + I/2`.
    pub fn quadratic(p: f64, dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = Arc::new(LpSpace::new(p, random_weights(dim, &mut rng))?);
        let b = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let a = b.transpose() * &b / dim as f64 + DMatrix::identity(dim, dim) * 0.5;
        let center = (0..dim).map(|_| rng.random_range(0.8..2.2)).collect();
        let start = space.point((0..dim).map(|_| rng.random_range(0.4..2.6)).collect())?;
        Ok(Self {
            label: format!("quadratic(p={p},d={dim},seed={seed})"),
            objective: Box::new(QuadraticObjective::new(a, center)?),
            space,
            start,
            region: Region::cube(dim, 0.2, 3.0),
        })
    }

    /// Mean logistic loss of a planted positive parameter with gaussian
    /// features; labels are drawn from the model, so the data are not
    /// separable.
    pub fn logistic(p: f64, dim: usize, samples: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = Arc::new(LpSpace::new(p, random_weights(dim, &mut rng))?);
        let planted: Vec<f64> = (0..dim).map(|_| rng.random_range(0.5..1.5)).collect();
        let mut features = Vec::with_capacity(samples);
        let mut labels = Vec::with_capacity(samples);
        for _ in 0..samples {
            let x: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal) / (dim as f64).sqrt()).collect();
            let prob = crate::losses::sigmoid(crate::kernels::dot(&x, &planted));
            labels.push(if rng.random::<f64>() < prob { 1.0 } else { -1.0 });
            features.push(x);
        }
        let start = space.point(vec![1.0; dim])?;
        Ok(Self {
            label: format!("logistic(p={p},d={dim},seed={seed})"),
            objective: Box::new(LogisticObjective { features, labels }),
            space,
            start,
            region: Region::cube(dim, 0.2, 3.0),
        })
    }

    /// Runs at `eta = 1/L_s`. `L_s` is estimated on the region and doubled
    /// until the relative-smoothness inequality holds on every consecutive
    /// pair of iterates, the only pairs the descent analysis uses.
    pub fn run(&self, steps: usize, seed: u64) -> Result<MirrorTrajectory> {
        let obj = self.objective.as_ref();
        let mut l_s = estimate_relative_smoothness(obj, &self.region, &self.space, 4000, seed)?;
        for _ in 0..20 {
            let cfg = MirrorConfig::new(1.0 / l_s, steps).with_relative_smoothness(l_s);
            let traj = run_mirror_descent(obj, &self.start, &cfg)?;
            if path_is_relatively_smooth(obj, &traj, l_s)? {
                return Ok(traj);
            }
            l_s *= 2.0;
        }
        Err(Error::Numeric(format!("{}: no relative smoothness constant found", self.label)))
    }
}

fn path_is_relatively_smooth(obj: &dyn MirrorObjective, traj: &MirrorTrajectory, l_s: f64) -> Result<bool> {
    for w in traj.iterates.windows(2) {
        let (f, g) = (&w[0], &w[1]);
        let partials = obj.partials(&f.values);
        let lin: f64 = partials.iter().zip(g.values.iter().zip(&f.values)).map(|(p, (a, b))| p * (a - b)).sum();
        let d = bregman_divergence(g, f)?;
        let lhs = obj.value(&g.values);
        let rhs = obj.value(&f.values) + lin + l_s * d;
        if lhs > rhs + 1e-13 * (1.0 + lhs.abs()) {
            return Ok(false);
        }
    }
    Ok(true)
}

pub fn check_mirror_loss_monotone(traj: &MirrorTrajectory, tol: f64) -> CheckResult {
    let mut res = CheckResult::new("mirror_loss_monotone", tol);
    let scale = 1.0 + traj.losses[0].abs();
    for t in 0..traj.losses.len() - 1 {
        res.record(|| format!("t={t}"), traj.losses[t + 1], traj.losses[t], scale);
    }
    res
}

/// `D(u, f_{t+1}) <= D(u, f_t) + eta (obj(u) - obj(f_{t+1}))` for
/// `per_step` random `u` per step, drawn from the region and from a wider
/// box containing negative coordinates.
pub fn check_key_recursion(
    objective: &dyn MirrorObjective,
    traj: &MirrorTrajectory,
    region: &Region,
    per_step: usize,
    seed: u64,
    tol: f64,
) -> Result<CheckResult> {
    let mut res = CheckResult::new("mirror_key_recursion", tol);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = traj.iterates[0].space.clone();
    let hi = region.upper.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let wide = Region::cube(space.dim(), -hi, hi);
    for t in 0..traj.iterates.len() - 1 {
        let (f, next) = (&traj.iterates[t], &traj.iterates[t + 1]);
        let obj_next = traj.losses[t + 1];
        for j in 0..per_step {
            let r = if j % 2 == 0 { region } else { &wide };
            let values = r.lower.iter().zip(&r.upper).map(|(l, u)| rng.random_range(*l..*u)).collect();
            let u = LpPoint::new(values, space.clone())?;
            let obj_u = objective.value(&u.values);
            let lhs = bregman_divergence(&u, next)?;
            let d_cur = bregman_divergence(&u, f)?;
            let rhs = d_cur + traj.eta * (obj_u - obj_next);
            let scale = 1.0 + mirror_map_value(&u) + d_cur + traj.eta * (obj_u.abs() + obj_next.abs());
            res.record(|| format!("t={t} u#{j}"), lhs, rhs, scale);
        }
    }
    Ok(res)
}

/// Points on the level sets `{obj = obj(f_t0)}` for each `t0`, found by
/// bisection along random rays from the last iterate (whose objective is
/// lowest), on the sublevel side of the boundary.
pub fn level_set_comparators(
    objective: &dyn MirrorObjective,
    traj: &MirrorTrajectory,
    times: &[usize],
    per_time: usize,
    seed: u64,
) -> Result<Vec<(LpPoint, usize)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = traj.iterates.last().expect("trajectory has a start").values.clone();
    let dim = base.len();
    let mut out = Vec::new();
    for &t0 in times {
        let target = traj.losses[t0];
        out.push((traj.iterates[t0].clone(), t0));
        for _ in 0..per_time {
            let dir: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let tol = 1e-12 * (1.0 + target.abs());
            let u = level_set_comparator(objective, &base, &dir, target, tol)?;
            out.push((LpPoint::new(u, traj.iterates[0].space.clone())?, t0));
        }
    }
    Ok(out)
}

/// For each `(u, t0)`: `D(u, f_t)` non-increasing for `t <= t0`, allowing
/// `eta (obj(u) - obj(f_t0))^+` for a comparator slightly above the level.
pub fn check_bregman_contraction(
    objective: &dyn MirrorObjective,
    traj: &MirrorTrajectory,
    comparators: &[(LpPoint, usize)],
    tol: f64,
) -> Result<CheckResult> {
    let mut res = CheckResult::new("mirror_level_set_contraction", tol);
    for (i, (u, t0)) in comparators.iter().enumerate() {
        let t0 = (*t0).min(traj.iterates.len() - 1);
        let allowance = traj.eta * (objective.value(&u.values) - traj.losses[t0]).max(0.0);
        let mut prev = bregman_divergence(u, &traj.iterates[0])?;
        for t in 0..t0 {
            let d = bregman_divergence(u, &traj.iterates[t + 1])?;
            let scale = 1.0 + mirror_map_value(u) + prev;
            res.record(|| format!("u#{i} t0={t0} t={t}"), d, prev + allowance, scale);
            prev = d;
        }
    }
    Ok(res)
}

/// Mirror descent with `p = 2` and uniform weights on `n` points against
/// kernel gradient descent with a linear kernel on one-hot points (Gram
/// matrix `I`), whose predictions are the coefficients. The steps agree for
/// `eta_mirror = eta_gd / n`. Records the coordinatewise difference.
pub fn check_p2_equivalence(loss: &LossSpec, targets: &[f64], eta_gd: f64, steps: usize, tol: f64) -> Result<CheckResult> {
    let n = targets.len();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    let dataset = Dataset::new(Points::from_rows(&rows)?, targets.to_vec())?;
    let problem = KernelProblem::new(*loss, dataset, KernelSpec::Linear)?;
    let gd = run_gd_on(problem, &GdConfig::constant(eta_gd, steps).record_all())?;
    let space = Arc::new(LpSpace::uniform(2.0, n)?);
    let objective = EmpiricalRiskObjective { loss: *loss, targets: targets.to_vec() };
    let mut cfg = MirrorConfig::new(eta_gd / n as f64, steps);
    cfg.strict = false;
    let md = run_mirror_descent(&objective, &space.point(vec![0.0; n])?, &cfg)?;
    let mut res = CheckResult::new("mirror_p2_equals_gd", tol);
    for t in 0..=steps {
        let preds: DVector<f64> = gd.problem.predictions(&gd.snapshots[&t]);
        for i in 0..n {
            res.record(|| format!("t={t} i={i}"), (preds[i] - md.iterates[t].values[i]).abs(), 0.0, 1.0);
        }
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_p3_is_monotone_over_seeds() {
        for seed in 0..10 {
            let inst = MirrorInstance::quadratic(3.0, 4, seed).unwrap();
            let traj = inst.run(200, seed).unwrap();
            assert!(check_mirror_loss_monotone(&traj, 1e-12).passed, "seed {seed}");
        }
    }

    #[test]
    fn terminal_comparator_contracts_to_zero() {
        let inst = MirrorInstance::quadratic(3.0, 3, 5).unwrap();
        let traj = inst.run(50, 5).unwrap();
        let u = traj.iterates[50].clone();
        let r = check_bregman_contraction(inst.objective.as_ref(), &traj, &[(u.clone(), 50)], 1e-8).unwrap();
        assert!(r.passed);
        assert_eq!(bregman_divergence(&u, &traj.iterates[50]).unwrap(), 0.0);
    }

    #[test]
    fn key_recursion_and_level_sets_on_logistic() {
        let inst = MirrorInstance::logistic(1.5, 4, 300, 8).unwrap();
        let traj = inst.run(60, 8).unwrap();
        let r = check_key_recursion(inst.objective.as_ref(), &traj, &inst.region, 20, 1, 1e-8).unwrap();
        assert!(r.passed, "{}", r.summary());
        let comps = level_set_comparators(inst.objective.as_ref(), &traj, &[5, 20, 40], 5, 2).unwrap();
        for (u, t0) in &comps {
            assert!(inst.objective.value(&u.values) <= traj.losses[*t0]);
        }
        let r = check_bregman_contraction(inst.objective.as_ref(), &traj, &comps, 1e-8).unwrap();
        assert!(r.passed, "{}", r.summary());
    }

    #[test]
    fn p2_matches_gd() {
        let ls = LossSpec::least_squares(2.0).unwrap();
        let r = check_p2_equivalence(&ls, &[0.3, -1.0, 0.7, 1.5], 0.4, 50, 1e-10).unwrap();
        assert!(r.passed, "{}", r.summary());
        let r = check_p2_equivalence(&LossSpec::logistic(), &[1.0, -1.0, 1.0], 1.0, 50, 1e-10).unwrap();
        assert!(r.passed, "{}", r.summary());
    }
}
