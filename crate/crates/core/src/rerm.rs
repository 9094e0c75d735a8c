//! Regularized empirical risk minimization
//! `g_{D,lambda} = argmin_f R_D(f) + lambda |f|^2` over the span of the
//! training features, the regularization path, and risk matching.
//!
//! All solvers work in coefficient space, `f = sum_i alpha_i k(x_i, .)`.
//! The objective is `2 lambda`-strongly convex in the RKHS norm, so every
//! solution carries the certificate
//! `obj(f) - min obj <= |grad_H obj(f)|^2 / (4 lambda)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, RkhsFunction};
use crate::losses::{LossKind, LossSpec};
use crate::problem::KernelProblem;
use crate::table::{fmt_num, Table};

pub const LAMBDA_MIN: f64 = 1e-8;
pub const LAMBDA_MAX: f64 = 1e8;
pub const DEFAULT_EPS_TARGET: f64 = 1e-6;
const MAX_BISECTION: usize = 200;
const STALL_GAP: f64 = 1e-10;
const NULL_EIGEN: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct RermSolution {
    pub f: RkhsFunction,
    /// Regularization level; `f64::INFINITY` denotes `g = 0`.
    pub lambda: f64,
    pub risk: f64,
    pub norm: f64,
    pub achieved_objective: f64,
    pub optimality_gap_bound: f64,
    /// Set when risk matching returned an end of the `lambda` range.
    pub at_boundary: bool,
}

impl RermSolution {
    pub fn coeffs(&self) -> &DVector<f64> {
        &self.f.coeffs
    }
}

/// Eigendecomposition `K = Q diag(w) Q^T` with `c = Q^T y`, used for the
/// least-squares path where every `lambda` costs O(n) and for the feature
/// coordinates of the Newton solver.
#[derive(Debug)]
struct Spectrum {
    q: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    projected: Vec<f64>,
    /// `Q diag(w)^{1/2}` restricted to the positive eigenvalues.
    features: DMatrix<f64>,
    range: Vec<usize>,
}

impl Spectrum {
    fn new(problem: &KernelProblem) -> Self {
        let eig = problem.gram.clone().symmetric_eigen();
        let y = DVector::from_column_slice(&problem.dataset.targets);
        let projected = (eig.eigenvectors.transpose() * y).iter().copied().collect();
        // rounding-level eigenvalues span the kernel's null space; keeping
        // them would add huge coefficients that do not change the function
        let top = eig.eigenvalues.iter().fold(0.0f64, |a, w| a.max(*w));
        let eigenvalues: Vec<f64> =
            eig.eigenvalues.iter().map(|w| if *w > NULL_EIGEN * top { *w } else { 0.0 }).collect();
        let range: Vec<usize> = (0..eigenvalues.len()).filter(|j| eigenvalues[*j] > 0.0).collect();
        let mut features = DMatrix::zeros(eigenvalues.len(), range.len());
        for (c, &j) in range.iter().enumerate() {
            features.set_column(c, &(eig.eigenvectors.column(j) * eigenvalues[j].sqrt()));
        }
        Self { q: eig.eigenvectors, eigenvalues, projected, features, range }
    }

    fn to_features(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.range.len(),
            self.range.iter().map(|&j| self.eigenvalues[j].sqrt() * self.q.column(j).dot(coeffs)),
        )
    }

    fn to_coeffs(&self, beta: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.q.nrows());
        for (c, &j) in self.range.iter().enumerate() {
            out.axpy(beta[c] / self.eigenvalues[j].sqrt(), &self.q.column(j), 1.0);
        }
        out
    }

    /// `(risk, norm^2)` of the least-squares solution at `lambda`.
    fn risk_and_norm_sq(&self, lambda: f64) -> (f64, f64) {
        let n = self.eigenvalues.len() as f64;
        let nl = n * lambda;
        let mut risk = 0.0;
        let mut norm_sq = 0.0;
        for (w, c) in self.eigenvalues.iter().zip(&self.projected) {
            let d = w + nl;
            let shrink = nl / d;
            risk += shrink * shrink * c * c;
            norm_sq += w * c * c / (d * d);
        }
        (risk / n, norm_sq)
    }

    fn coeffs(&self, lambda: f64) -> DVector<f64> {
        let n = self.eigenvalues.len() as f64;
        let scaled = DVector::from_iterator(
            self.eigenvalues.len(),
            self.eigenvalues.iter().zip(&self.projected).map(|(w, c)| if *w > 0.0 { c / (w + n * lambda) } else { 0.0 }),
        );
        &self.q * scaled
    }
}

/// Regularized ERM solver for one problem, caching the least-squares
/// spectrum and previous solutions for warm starts.
#[derive(Debug)]
pub struct RermSolver {
    pub problem: Arc<KernelProblem>,
    pub eps_target: f64,
    pub max_newton: usize,
    spectrum: Option<Spectrum>,
    cache: Vec<(f64, DVector<f64>)>,
}

impl RermSolver {
    pub fn new(problem: Arc<KernelProblem>) -> Self {
        Self { problem, eps_target: DEFAULT_EPS_TARGET, max_newton: 200, spectrum: None, cache: Vec::new() }
    }

    pub fn with_eps_target(mut self, eps: f64) -> Self {
        self.eps_target = eps;
        self
    }

    fn is_least_squares(&self) -> bool {
        matches!(self.problem.loss.kind, LossKind::LeastSquares)
    }

    fn spectrum(&mut self) -> &Spectrum {
        if self.spectrum.is_none() {
            self.spectrum = Some(Spectrum::new(&self.problem));
        }
        self.spectrum.as_ref().unwrap()
    }

    /// `R_D(0)`.
    pub fn zero_risk(&self) -> f64 {
        self.problem.risk(&DVector::zeros(self.problem.n()))
    }

    fn finish(&self, coeffs: DVector<f64>, lambda: f64) -> RermSolution {
        let p = &self.problem;
        let preds = p.predictions(&coeffs);
        let risk = p.risk_of_predictions(&preds);
        let norm_sq = coeffs.dot(&preds).max(0.0);
        let (objective, gap) = if lambda.is_infinite() {
            (risk, 0.0)
        } else {
            let gh = p.gradient_of_predictions(&preds) + &coeffs * (2.0 * lambda);
            let grad_sq = (&p.gram * &gh).dot(&gh).max(0.0);
            (risk + lambda * norm_sq, grad_sq / (4.0 * lambda))
        };
        RermSolution {
            f: p.function(coeffs),
            lambda,
            risk,
            norm: norm_sq.sqrt(),
            achieved_objective: objective,
            optimality_gap_bound: gap,
            at_boundary: false,
        }
    }

    /// Solution at `lambda`; least squares uses the spectral closed form,
    /// other losses a damped Newton method.
    pub fn solve(&mut self, lambda: f64) -> Result<RermSolution> {
        if lambda.is_infinite() && lambda > 0.0 {
            return Ok(self.finish(DVector::zeros(self.problem.n()), lambda));
        }
        if !(lambda > 0.0) {
            return Err(Error::Parameter(format!("lambda must be positive, got {lambda}")));
        }
        let coeffs = if self.is_least_squares() {
            self.spectrum().coeffs(lambda)
        } else {
            let start = self.warm_start(lambda);
            self.spectrum();
            let spectrum = self.spectrum.as_ref().expect("built above");
            let coeffs = self.newton(spectrum, lambda, &start)?;
            self.cache.push((lambda, coeffs.clone()));
            coeffs
        };
        Ok(self.finish(coeffs, lambda))
    }

    /// Risk of the solution at `lambda` without building the full solution
    /// when a closed form exists.
    fn risk_at(&mut self, lambda: f64) -> Result<(f64, Option<RermSolution>)> {
        if self.is_least_squares() && lambda.is_finite() {
            Ok((self.spectrum().risk_and_norm_sq(lambda).0, None))
        } else {
            let s = self.solve(lambda)?;
            Ok((s.risk, Some(s)))
        }
    }

    fn warm_start(&self, lambda: f64) -> DVector<f64> {
        self.cache
            .iter()
            .min_by(|a, b| {
                let da = (a.0.ln() - lambda.ln()).abs();
                let db = (b.0.ln() - lambda.ln()).abs();
                da.total_cmp(&db)
            })
            .map(|(_, c)| c.clone())
            .unwrap_or_else(|| DVector::zeros(self.problem.n()))
    }

    /// Damped Newton in the orthonormal feature coordinates
    /// `beta = diag(w)^{1/2} Q^T alpha` of the kernel's range, where
    /// `obj(beta) = R_D(Phi beta) + lambda |beta|^2` with `Phi = Q diag(w)^{1/2}`.
    /// The Euclidean gradient in `beta` is the RKHS gradient, so the
    /// certificate reads `|grad|^2 / (4 lambda)`.
    fn newton(&self, spectrum: &Spectrum, lambda: f64, start: &DVector<f64>) -> Result<DVector<f64>> {
        let p = &*self.problem;
        let nf = p.n() as f64;
        let y = &p.dataset.targets;
        let phi = &spectrum.features;
        let r = phi.ncols();
        let target_gap = lambda * self.eps_target;

        struct State {
            beta: DVector<f64>,
            preds: DVector<f64>,
            obj: f64,
            grad: DVector<f64>,
            grad_sq: f64,
        }
        let eval = |beta: DVector<f64>| -> State {
            let preds = phi * &beta;
            let obj = p.risk_of_predictions(&preds) + lambda * beta.norm_squared();
            let grad = phi.tr_mul(&p.gradient_of_predictions(&preds)) + &beta * (2.0 * lambda);
            let grad_sq = grad.norm_squared();
            State { beta, preds, obj, grad, grad_sq }
        };

        let mut st = eval(spectrum.to_features(start));
        let zero = eval(DVector::zeros(r));
        // accepted when the line search stalls at working precision
        let stall_gap = target_gap.max(STALL_GAP * zero.obj);
        if zero.obj < st.obj {
            st = zero;
        }
        let mut certified_polish = 0;
        for _ in 0..self.max_newton {
            let gap = st.grad_sq / (4.0 * lambda);
            if gap <= target_gap {
                // one extra step drives the iterate to working precision
                if certified_polish >= 1 || st.grad_sq == 0.0 {
                    return Ok(spectrum.to_coeffs(&st.beta));
                }
                certified_polish += 1;
            }
            let mut weighted = phi.clone();
            for i in 0..phi.nrows() {
                let w = p.loss.second_derivative_raw(y[i], st.preds[i]) / nf;
                weighted.row_mut(i).scale_mut(w);
            }
            let mut hess = phi.tr_mul(&weighted);
            for j in 0..r {
                hess[(j, j)] += 2.0 * lambda;
            }
            let mut dir = hess.cholesky().map(|c| c.solve(&st.grad)).unwrap_or_else(|| st.grad.clone());
            let mut slope = st.grad.dot(&dir);
            if !(slope > 0.0) || dir.iter().any(|v| !v.is_finite()) {
                dir = st.grad.clone();
                slope = st.grad_sq;
            }
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let cand = eval(&st.beta - &dir * step);
                let armijo = cand.obj <= st.obj - 1e-4 * step * slope;
                let flat = cand.obj <= st.obj + 1e-15 * st.obj.abs() && cand.grad_sq < st.grad_sq;
                if cand.obj.is_finite() && (armijo || flat) {
                    accepted = Some((cand, armijo));
                    break;
                }
                step *= 0.5;
            }
            match accepted {
                Some((next, true)) => st = next,
                Some((next, false)) => {
                    st = next;
                    if st.grad_sq / (4.0 * lambda) <= stall_gap {
                        return Ok(spectrum.to_coeffs(&st.beta));
                    }
                }
                None => break,
            }
        }
        let gap = st.grad_sq / (4.0 * lambda);
        if gap <= stall_gap {
            Ok(spectrum.to_coeffs(&st.beta))
        } else {
            Err(Error::Convergence { iterations: self.max_newton, best_gap: gap })
        }
    }

    /// Risk at the smallest available regularization, the empirical
    /// stand-in for the approximation floor.
    pub fn risk_floor(&mut self) -> Result<f64> {
        Ok(self.risk_at(LAMBDA_MIN)?.0)
    }

    /// Solves `R_D(g_lambda) = target` for `lambda` by bracketing in
    /// `log lambda` followed by Illinois-safeguarded bisection. The returned
    /// solution sits on the lower-risk side of the target whenever the
    /// bracket allows it, i.e. ties go to the smaller `lambda`.
    pub fn match_risk(&mut self, target: f64, tol: f64, hint: Option<f64>) -> Result<RermSolution> {
        if !(tol > 0.0) {
            return Err(Error::Parameter(format!("tolerance must be positive, got {tol}")));
        }
        let r0 = self.zero_risk();
        if !target.is_finite() || target > r0 + tol {
            return Err(Error::Range { target, low: f64::NAN, high: r0 });
        }
        let (lo_bound, hi_bound) = (LAMBDA_MIN.ln(), LAMBDA_MAX.ln());
        let mut s = hint.filter(|h| *h > 0.0 && h.is_finite()).unwrap_or(1.0).ln().clamp(lo_bound, hi_bound);
        let mut phi = self.risk_at(s.exp())?.0 - target;

        // bracket: lo has risk <= target, hi has risk > target
        let (mut s_lo, mut phi_lo, mut s_hi, mut phi_hi);
        let step = 10f64.ln();
        if phi > 0.0 {
            s_hi = s;
            phi_hi = phi;
            loop {
                if s <= lo_bound {
                    if phi <= tol {
                        let mut sol = self.solve(LAMBDA_MIN)?;
                        sol.at_boundary = true;
                        return Ok(sol);
                    }
                    return Err(Error::Range { target, low: phi + target, high: r0 });
                }
                s = (s - step).max(lo_bound);
                phi = self.risk_at(s.exp())?.0 - target;
                if phi <= 0.0 {
                    s_lo = s;
                    phi_lo = phi;
                    break;
                }
                s_hi = s;
                phi_hi = phi;
            }
        } else {
            s_lo = s;
            phi_lo = phi;
            let ceiling = 1e16f64.ln();
            loop {
                if s >= ceiling {
                    // target within rounding of R_D(0): the g = 0 end
                    let mut sol = self.solve(f64::INFINITY)?;
                    sol.at_boundary = true;
                    return Ok(sol);
                }
                if s >= hi_bound && phi_lo.abs() <= tol {
                    let mut sol = self.solve(s.exp())?;
                    sol.at_boundary = true;
                    return Ok(sol);
                }
                s = (s + step).min(ceiling);
                phi = self.risk_at(s.exp())?.0 - target;
                if phi > 0.0 {
                    s_hi = s;
                    phi_hi = phi;
                    break;
                }
                s_lo = s;
                phi_lo = phi;
            }
        }

        // Illinois weights on the retained endpoint; plain bisection every
        // third iteration unless the bracket has halved meanwhile
        let (mut w_lo, mut w_hi) = (phi_lo, phi_hi);
        let mut side = 0i8;
        let mut checkpoint = s_hi - s_lo;
        for it in 0..MAX_BISECTION {
            if phi_lo.abs() <= tol {
                return self.solve(s_lo.exp());
            }
            let mut s_new = (s_lo * w_hi - s_hi * w_lo) / (w_hi - w_lo);
            if it % 3 == 2 {
                let width = s_hi - s_lo;
                if width > 0.5 * checkpoint {
                    s_new = 0.5 * (s_lo + s_hi);
                }
                checkpoint = width;
            }
            if !(s_new > s_lo && s_new < s_hi) {
                s_new = 0.5 * (s_lo + s_hi);
                if !(s_new > s_lo && s_new < s_hi) {
                    break;
                }
            }
            let phi_new = self.risk_at(s_new.exp())?.0 - target;
            if phi_new <= 0.0 {
                s_lo = s_new;
                phi_lo = phi_new;
                w_lo = phi_new;
                if side == -1 {
                    w_hi *= 0.5;
                }
                side = -1;
            } else {
                s_hi = s_new;
                phi_hi = phi_new;
                w_hi = phi_new;
                if side == 1 {
                    w_lo *= 0.5;
                }
                side = 1;
            }
        }
        if phi_lo.abs() <= tol {
            return self.solve(s_lo.exp());
        }
        if phi_hi.abs() <= tol {
            return self.solve(s_hi.exp());
        }
        Err(Error::Convergence { iterations: MAX_BISECTION, best_gap: phi_lo.abs().min(phi_hi.abs()) })
    }
}

/// Closed-form least-squares RERM: `(K + n lambda I) alpha = y`.
pub fn solve_rerm_ls(dataset: &Dataset, kernel: &KernelSpec, lambda: f64) -> Result<RermSolution> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Parameter(format!("lambda must be positive, got {lambda}")));
    }
    let loss = LossSpec::least_squares(dataset.label_range().max(f64::MIN_POSITIVE))?;
    let problem = KernelProblem::new(loss, dataset.clone(), *kernel)?;
    let n = problem.n();
    let mut system = problem.gram.clone();
    for i in 0..n {
        system[(i, i)] += n as f64 * lambda;
    }
    let y = DVector::from_column_slice(&dataset.targets);
    let chol = system.clone().cholesky().or_else(|| {
        let jitter = 1e-10 * problem.gram.trace().max(1.0);
        let mut s = system.clone();
        for i in 0..n {
            s[(i, i)] += jitter;
        }
        s.cholesky()
    });
    let coeffs = chol
        .ok_or_else(|| Error::Numeric("regularized Gram matrix not factorizable".into()))?
        .solve(&y);
    Ok(RermSolver::new(problem).finish(coeffs, lambda))
}

/// `eps_target`-approximate RERM for a smooth loss with objective gap at
/// most `lambda * eps_target`.
pub fn solve_rerm_smooth(
    loss: &LossSpec,
    dataset: &Dataset,
    kernel: &KernelSpec,
    lambda: f64,
    eps_target: f64,
) -> Result<RermSolution> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Parameter(format!("lambda must be positive, got {lambda}")));
    }
    let problem = KernelProblem::new(*loss, dataset.clone(), *kernel)?;
    let solver = RermSolver::new(problem).with_eps_target(eps_target);
    let spectrum = Spectrum::new(&solver.problem);
    let coeffs = solver.newton(&spectrum, lambda, &DVector::zeros(dataset.len()))?;
    Ok(solver.finish(coeffs, lambda))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathEntry {
    pub lambda: f64,
    pub risk: f64,
    pub norm: f64,
    pub objective: f64,
    pub gap_bound: f64,
}

pub fn rerm_risk_path(
    loss: &LossSpec,
    dataset: &Dataset,
    kernel: &KernelSpec,
    lambdas: &[f64],
) -> Result<Vec<PathEntry>> {
    let problem = KernelProblem::new(*loss, dataset.clone(), *kernel)?;
    risk_path_on(&mut RermSolver::new(problem), lambdas)
}

pub fn risk_path_on(solver: &mut RermSolver, lambdas: &[f64]) -> Result<Vec<PathEntry>> {
    if lambdas.is_empty() {
        return Err(Error::InputDomain("empty lambda list".into()));
    }
    if lambdas.windows(2).any(|w| !(w[1] > w[0])) || !(lambdas[0] > 0.0) {
        return Err(Error::InputDomain("lambdas must be positive and strictly increasing".into()));
    }
    // large lambda first so that warm starts move away from 0
    let mut out = Vec::with_capacity(lambdas.len());
    for &l in lambdas.iter().rev() {
        let s = solver.solve(l)?;
        out.push(PathEntry {
            lambda: l,
            risk: s.risk,
            norm: s.norm,
            objective: s.achieved_objective,
            gap_bound: s.optimality_gap_bound,
        });
    }
    out.reverse();
    Ok(out)
}

/// CSV with columns `lambda, risk, norm, objective, gap_bound`.
pub fn path_csv(path: &[PathEntry]) -> String {
    let mut t = Table::new(&["lambda", "risk", "norm", "objective", "gap_bound"]);
    for e in path {
        t.push(vec![fmt_num(e.lambda), fmt_num(e.risk), fmt_num(e.norm), fmt_num(e.objective), fmt_num(e.gap_bound)]);
    }
    t.render()
}

pub fn match_risk(
    loss: &LossSpec,
    dataset: &Dataset,
    kernel: &KernelSpec,
    target_risk: f64,
    tol: f64,
) -> Result<(f64, RermSolution)> {
    let problem = KernelProblem::new(*loss, dataset.clone(), *kernel)?;
    let sol = RermSolver::new(problem).match_risk(target_risk, tol, None)?;
    Ok((sol.lambda, sol))
}
