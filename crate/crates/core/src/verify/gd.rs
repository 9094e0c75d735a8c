use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use super::CheckResult;
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::rerm::RermSolver;
use crate::rkhs_gd::GdTrajectory;

/// A fixed function in the span of the training points. Comparators built by
/// risk matching carry the time `t0` whose risk they were matched to.
#[derive(Clone, Debug)]
pub struct Comparator {
    pub label: String,
    pub coeffs: DVector<f64>,
    pub matched_time: Option<usize>,
}

fn psi(traj: &GdTrajectory, m: usize) -> f64 {
    1.0 / traj.cum_steps[m]
}

fn match_tolerance(traj: &GdTrajectory) -> f64 {
    (1e-9 * traj.initial_risk()).max(1e-300)
}

/// `g_{lambda(m)}` with `R_D(g) = R_D(f_m)` up to `1e-9 R_D(0)` for each
/// positive time, plus the skip reasons for times whose risk is out of
/// reach of the solver.
pub fn matched_comparators(
    traj: &GdTrajectory,
    solver: &mut RermSolver,
    times: &[usize],
) -> Result<(Vec<Comparator>, Vec<String>)> {
    let tol = match_tolerance(traj);
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for &m in times.iter().filter(|m| **m > 0) {
        match solver.match_risk(traj.risks[m], tol, Some(psi(traj, m))) {
            Ok(sol) => out.push(Comparator {
                label: format!("match(t={m})"),
                coeffs: sol.f.coeffs,
                matched_time: Some(m),
            }),
            Err(e @ Error::Range { .. }) => skipped.push(format!("t={m}: {e}")),
            Err(e) => return Err(e),
        }
    }
    Ok((out, skipped))
}

/// Self-regularization with factor 2 given the matched comparators:
/// `|f_m| <= 2 |g_{lambda(m)}| + tol (1 + |g|)`.
pub fn check_self_regularization_from(traj: &GdTrajectory, matched: &[Comparator], tol: f64) -> Result<CheckResult> {
    let mut res = CheckResult::new("self_regularization_c2", tol);
    res.record(|| "t=0".into(), 0.0, 0.0, 1.0);
    let p = &traj.problem;
    for c in matched {
        let m = c.matched_time.expect("matched comparator");
        let f_norm = p.norm(&traj.iterate(m)?);
        let g_norm = p.norm(&c.coeffs);
        res.record(|| format!("t={m}"), f_norm, 2.0 * g_norm, 1.0 + g_norm);
        if g_norm > 1e-12 {
            res.note_max("max |f_m|/|g|", f_norm / g_norm);
        }
    }
    Ok(res)
}

pub fn check_self_regularization_gd(
    traj: &GdTrajectory,
    solver: &mut RermSolver,
    times: &[usize],
    tol: f64,
) -> Result<CheckResult> {
    let (matched, skipped) = matched_comparators(traj, solver, times)?;
    let mut res = check_self_regularization_from(traj, &matched, tol)?;
    res.skipped = skipped;
    Ok(res)
}

/// `|f_m| <= 4 |g_{Psi(m)}| + tol (1 + |g|)`.
pub fn check_norm_bound_four(traj: &GdTrajectory, solver: &mut RermSolver, times: &[usize], tol: f64) -> Result<CheckResult> {
    let mut res = CheckResult::new("norm_bound_c4", tol);
    let p = &traj.problem.clone();
    for &m in times.iter().filter(|m| **m > 0) {
        let g = solver.solve(psi(traj, m))?;
        let f_norm = p.norm(&traj.iterate(m)?);
        res.record(|| format!("t={m}"), f_norm, 4.0 * g.norm, 1.0 + g.norm);
    }
    Ok(res)
}

/// `R_D(f_m) + l |f_m|^2 <= R_D(g_l) + 17 l |g_l|^2` at `l = Psi(m)`.
pub fn check_risk_matching_17(traj: &GdTrajectory, solver: &mut RermSolver, times: &[usize], tol: f64) -> Result<CheckResult> {
    let mut res = CheckResult::new("risk_matching_17", tol);
    let p = &traj.problem.clone();
    for &m in times.iter().filter(|m| **m > 0) {
        let lambda = psi(traj, m);
        let g = solver.solve(lambda)?;
        let lhs = traj.risks[m] + lambda * p.norm_sq(&traj.iterate(m)?);
        let rhs = g.risk + 17.0 * lambda * g.norm * g.norm;
        res.record(|| format!("t={m}"), lhs, rhs, 1.0 + rhs.abs());
    }
    Ok(res)
}

/// Risk never increases along steps within the step-size cap.
pub fn check_gd_risk_monotone(traj: &GdTrajectory, tol: f64) -> CheckResult {
    let mut res = CheckResult::new("gd_risk_monotone", tol);
    let scale = 1.0 + traj.initial_risk();
    for k in 0..traj.max_steps() {
        if traj.cap_violations.binary_search(&k).is_ok() {
            continue;
        }
        res.record(|| format!("k={k}"), traj.risks[k + 1], traj.risks[k], scale);
    }
    res
}

/// Fejér and telescoping checks in one replay of the trajectory up to
/// `horizon`.
///
/// Fejér: for every comparator `h` and `k < horizon`,
/// `|f_{k+1} - h|^2 <= |f_k - h|^2 + 2 eta_k (R_D(h) - R_D(f_{k+1}))`, the
/// strongest instance of the bound over all end times `m > k`; matched
/// comparators must in addition give non-increasing distances for
/// `k < t0`. Telescoping: for every `m <= horizon`,
/// `S_m (R_D(f_m) - R_D(h)) <= sum_{k=1}^m eta_{k-1} (R_D(f_k) - R_D(h)) <= |f_0 - h|^2 / 2`.
pub fn fejer_and_telescoping(
    traj: &GdTrajectory,
    comparators: &[Comparator],
    horizon: usize,
    tol: f64,
) -> Result<(CheckResult, CheckResult)> {
    let p = traj.problem.clone();
    let horizon = horizon.min(traj.max_steps());
    let mut fejer = CheckResult::new("fejer_monotone", tol);
    let mut tele = CheckResult::new("telescoping_bound", tol);
    struct Prepared {
        kh: DVector<f64>,
        hkh: f64,
        risk: f64,
        prev_dist: f64,
        prev_norm_sq: f64,
        partial: f64,
    }
    let mut prep: Vec<Prepared> = comparators
        .iter()
        .map(|c| {
            if c.coeffs.len() != p.n() {
                return Err(Error::Contract(format!("comparator {} has the wrong support", c.label)));
            }
            let kh = &p.gram * &c.coeffs;
            let hkh = kh.dot(&c.coeffs).max(0.0);
            Ok(Prepared { risk: p.risk_of_predictions(&kh), kh, hkh, prev_dist: hkh, prev_norm_sq: 0.0, partial: 0.0 })
        })
        .collect::<Result<_>>()?;
    let mut failure = None;
    traj.replay(horizon, |k, alpha, preds| {
        if k == 0 {
            return;
        }
        let norm_sq = alpha.dot(preds).max(0.0);
        let risk_k = traj.risks[k];
        let eta = traj.eta(k - 1);
        let s_k = traj.cum_steps[k];
        for (c, pr) in comparators.iter().zip(prep.iter_mut()) {
            let dist = (norm_sq - 2.0 * alpha.dot(&pr.kh) + pr.hkh).max(0.0);
            if !dist.is_finite() {
                failure = Some(Error::Numeric(format!("non-finite distance at step {k}")));
            }
            let scale = 1.0 + pr.prev_norm_sq + norm_sq + 2.0 * pr.hkh + 2.0 * eta * (pr.risk.abs() + risk_k.abs());
            let rhs = pr.prev_dist + 2.0 * eta * (pr.risk - risk_k);
            fejer.record(|| format!("{} k={}", c.label, k - 1), dist, rhs, scale);
            if let Some(t0) = c.matched_time {
                if k <= t0 {
                    let allowance = 2.0 * eta * (pr.risk - traj.risks[t0]).max(0.0);
                    fejer.record(|| format!("{} monotone k={}", c.label, k - 1), dist, pr.prev_dist + allowance, scale);
                }
            }
            pr.partial += eta * (risk_k - pr.risk);
            let lhs = s_k * (risk_k - pr.risk);
            let tscale = 1.0 + s_k * (risk_k.abs() + pr.risk.abs()) + pr.hkh;
            tele.record(|| format!("{} m={k} left", c.label), lhs, pr.partial, tscale);
            tele.record(|| format!("{} m={k} right", c.label), pr.partial, 0.5 * pr.hkh, tscale);
            pr.prev_dist = dist;
            pr.prev_norm_sq = norm_sq;
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((fejer, tele))
}

pub fn check_fejer(traj: &GdTrajectory, comparators: &[Comparator], horizon: usize, tol: f64) -> Result<CheckResult> {
    Ok(fejer_and_telescoping(traj, comparators, horizon, tol)?.0)
}

pub fn check_telescoping(traj: &GdTrajectory, comparators: &[Comparator], horizon: usize, tol: f64) -> Result<CheckResult> {
    Ok(fejer_and_telescoping(traj, comparators, horizon, tol)?.1)
}

/// `count` comparators of four kinds in rotation: random coefficient
/// vectors at random scales, perturbed late iterates, rescaled iterates and
/// RERM solutions at random `lambda` (least squares only; other losses fall
/// back to random coefficients).
pub fn random_comparators(
    traj: &GdTrajectory,
    solver: &mut RermSolver,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Comparator>> {
    let p = traj.problem.clone();
    let n = p.n();
    let last = traj.iterate(traj.max_steps())?;
    let ref_norm = p.norm(&last).max(1e-3);
    let random_dir = |rng: &mut dyn rand::RngCore| -> DVector<f64> {
        let v = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let nv = p.norm(&v);
        if nv > 0.0 {
            v / nv
        } else {
            v
        }
    };
    let ls = matches!(p.loss.kind, LossKind::LeastSquares);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let (label, coeffs) = match i % 4 {
            1 => {
                let scale = 10f64.powf(rng.random_range(-3.0..0.0)) * ref_norm;
                ("perturbed", &last + random_dir(rng) * scale)
            }
            2 => {
                let k = rng.random_range(0..=traj.max_steps());
                let c: f64 = rng.random_range(0.0..2.0);
                ("scaled", traj.iterate(k)? * c)
            }
            3 if ls => {
                let lambda = 10f64.powf(rng.random_range(-6.0..2.0));
                ("rerm", solver.solve(lambda)?.f.coeffs)
            }
            _ => {
                let scale = 10f64.powf(rng.random_range(-1.0..1.0)) * ref_norm;
                ("random", random_dir(rng) * scale)
            }
        };
        out.push(Comparator { label: format!("{label}#{i}"), coeffs, matched_time: None });
    }
    Ok(out)
}
