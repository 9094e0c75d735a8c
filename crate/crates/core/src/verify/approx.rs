use nalgebra::{DMatrix, DVector};

use super::CheckResult;
use crate::data::Points;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;

/// Least squares on `X ~ U[-1, 1]` with `f* = sum_j c_j k(z_j, .)` and
/// noise independent of `X`, restricted to the span of the `k(z_j, .)`.
/// The excess risk of `f_a` is `(a - c)^T G (a - c)` with
/// `G_jl = E k(z_j, X) k(z_l, X)`, computed by Simpson quadrature.
#[derive(Clone, Debug)]
pub struct AnalyticLsProblem {
    pub kernel: KernelSpec,
    pub support: Points,
    pub target_coeffs: DVector<f64>,
    pub gram: DMatrix<f64>,
    pub population_gram: DMatrix<f64>,
}

const QUADRATURE_INTERVALS: usize = 4000;

impl AnalyticLsProblem {
    pub fn new(kernel: KernelSpec, support: &[f64], coeffs: &[f64]) -> Result<Self> {
        if support.is_empty() || support.len() > 3 || support.len() != coeffs.len() {
            return Err(Error::InputDomain("need 1 to 3 support points with one coefficient each".into()));
        }
        let pts = Points::new(1, support.to_vec())?;
        let gram = kernel.gram_matrix(&pts)?;
        let k = support.len();
        let h = 2.0 / QUADRATURE_INTERVALS as f64;
        let mut g = DMatrix::zeros(k, k);
        for i in 0..=QUADRATURE_INTERVALS {
            let x = -1.0 + i as f64 * h;
            let w = if i == 0 || i == QUADRATURE_INTERVALS {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            } * h
                / 3.0
                / 2.0;
            let feats: Vec<f64> = support.iter().map(|z| kernel.eval_raw(&[*z], &[x])).collect();
            for a in 0..k {
                for b in 0..k {
                    g[(a, b)] += w * feats[a] * feats[b];
                }
            }
        }
        Ok(Self { kernel, support: pts, target_coeffs: DVector::from_column_slice(coeffs), gram, population_gram: g })
    }

    pub fn dim(&self) -> usize {
        self.target_coeffs.len()
    }

    pub fn excess_risk(&self, a: &DVector<f64>) -> f64 {
        let d = a - &self.target_coeffs;
        (&self.population_gram * &d).dot(&d).max(0.0)
    }

    pub fn norm(&self, a: &DVector<f64>) -> f64 {
        (&self.gram * a).dot(a).max(0.0).sqrt()
    }

    pub fn target_norm(&self) -> f64 {
        self.norm(&self.target_coeffs)
    }
}

/// Cartesian coefficient grid with an odd number of points per axis,
/// centered so that `center` itself is a grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientGrid {
    pub center: Vec<f64>,
    pub half_width: f64,
    pub points_per_axis: usize,
}

impl CoefficientGrid {
    /// Box of half-width `3 |f*|` around the target coefficients, 41 points
    /// per axis.
    pub fn around_target(problem: &AnalyticLsProblem) -> Self {
        Self {
            center: problem.target_coeffs.iter().copied().collect(),
            half_width: 3.0 * problem.target_norm(),
            points_per_axis: 41,
        }
    }

    fn axis(&self, j: usize, i: usize) -> f64 {
        let m = self.points_per_axis;
        if m == 1 {
            return self.center[j];
        }
        self.center[j] - self.half_width + 2.0 * self.half_width * i as f64 / (m - 1) as f64
    }
}

/// Norm and excess risk at every grid point.
#[derive(Clone, Debug)]
pub struct GridTable {
    pub grid: CoefficientGrid,
    pub dims: usize,
    pub norms: Vec<f64>,
    pub excess: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ApproxEstimate {
    pub lambda: f64,
    /// `min_grid lambda |f|^p + excess risk`.
    pub value: f64,
    /// Largest rise of the objective from the grid minimizer to one of its
    /// lattice neighbours, an estimate of the grid resolution error.
    pub slack: f64,
    pub argmin: usize,
}

impl GridTable {
    pub fn new(problem: &AnalyticLsProblem, grid: CoefficientGrid) -> Result<Self> {
        let k = problem.dim();
        if grid.points_per_axis == 0 || grid.center.len() != k {
            return Err(Error::InputDomain("empty coefficient grid".into()));
        }
        let m = grid.points_per_axis;
        let total = m.pow(k as u32);
        let mut norms = Vec::with_capacity(total);
        let mut excess = Vec::with_capacity(total);
        let mut a = DVector::zeros(k);
        for idx in 0..total {
            let mut rest = idx;
            for j in 0..k {
                a[j] = grid.axis(j, rest % m);
                rest /= m;
            }
            norms.push(problem.norm(&a));
            excess.push(problem.excess_risk(&a));
        }
        Ok(Self { grid, dims: k, norms, excess })
    }

    fn objective(&self, idx: usize, p: f64, lambda: f64) -> f64 {
        let reg = if lambda == 0.0 { 0.0 } else { lambda * self.norms[idx].powf(p) };
        reg + self.excess[idx]
    }

    pub fn estimate(&self, p: f64, lambda: f64) -> ApproxEstimate {
        let mut best = 0;
        let mut best_val = f64::INFINITY;
        for idx in 0..self.norms.len() {
            let v = self.objective(idx, p, lambda);
            if v < best_val {
                best_val = v;
                best = idx;
            }
        }
        let m = self.grid.points_per_axis;
        let mut coords = vec![0usize; self.dims];
        let mut rest = best;
        for c in coords.iter_mut() {
            *c = rest % m;
            rest /= m;
        }
        let mut slack: f64 = 0.0;
        for code in 0..3usize.pow(self.dims as u32) {
            let mut idx = 0;
            let mut stride = 1;
            let mut c = code;
            let mut inside = true;
            for &base in &coords {
                let off = (c % 3) as isize - 1;
                c /= 3;
                let v = base as isize + off;
                if v < 0 || v >= m as isize {
                    inside = false;
                    break;
                }
                idx += v as usize * stride;
                stride *= m;
            }
            if inside {
                slack = slack.max(self.objective(idx, p, lambda) - best_val);
            }
        }
        ApproxEstimate { lambda, value: best_val, slack, argmin: best }
    }
}

/// Grid estimates `A_p(lambda) ~ min_grid lambda |f|^p + R_P(f) - R*`.
pub fn brute_force_approx_error(
    problem: &AnalyticLsProblem,
    grid: &CoefficientGrid,
    p: f64,
    lambdas: &[f64],
) -> Result<Vec<ApproxEstimate>> {
    let table = GridTable::new(problem, grid.clone())?;
    if lambdas.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::InputDomain("lambdas must be non-negative".into()));
    }
    Ok(lambdas.iter().map(|&l| table.estimate(p, l)).collect())
}

/// Continuum value of `inf_a lambda |f_a|^p + excess(a)` by gradient
/// descent with backtracking from the target coefficients, compared with
/// the value at `a = 0` where the objective is not differentiable when
/// `p = 1`. Used as a reference for the grid estimates.
pub fn continuum_approx_error(problem: &AnalyticLsProblem, p: f64, lambda: f64) -> f64 {
    let f = |a: &DVector<f64>| lambda * problem.norm(a).powf(p) + problem.excess_risk(a);
    let grad = |a: &DVector<f64>| -> DVector<f64> {
        let ka = &problem.gram * a;
        let nsq = ka.dot(a).max(1e-300);
        ka * (lambda * p * nsq.powf(p / 2.0 - 1.0)) + (&problem.population_gram * (a - &problem.target_coeffs)) * 2.0
    };
    let mut a = problem.target_coeffs.clone();
    let mut val = f(&a);
    let mut step = 1.0;
    for _ in 0..20_000 {
        let g = grad(&a);
        let gsq = g.dot(&g);
        if gsq < 1e-30 {
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &a - &g * step;
            let cv = f(&cand);
            if cv <= val - 0.5 * step * gsq {
                a = cand;
                val = cv;
                accepted = true;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    val.min(f(&DVector::zeros(problem.dim())))
}

/// For every `lambda` and every `gamma > A_r(lambda)` (grid estimates, which
/// overestimate the infimum, so the filter is conservative):
/// `A_p(lambda^{p/r} gamma^{1-p/r}) <= 2 gamma + grid slack`.
pub fn check_reg_trafo(
    table: &GridTable,
    p: f64,
    r: f64,
    lambdas: &[f64],
    gammas: &[f64],
    tol: f64,
) -> Result<CheckResult> {
    let mut res = CheckResult::new(&format!("reg_trafo(p={p},r={r})"), tol);
    for &lambda in lambdas {
        let a_r = table.estimate(r, lambda).value;
        for &gamma in gammas.iter().filter(|g| **g > a_r) {
            let mu = lambda.powf(p / r) * gamma.powf(1.0 - p / r);
            let est = table.estimate(p, mu);
            res.record(|| format!("lambda={lambda:.3e} gamma={gamma:.3e}"), est.value, 2.0 * gamma + est.slack, 2.0 * gamma);
            res.note_max("max slack/gamma", est.slack / gamma);
        }
    }
    if res.instances == 0 {
        res.skip("no (lambda, gamma) pair satisfies gamma > A_r(lambda)".into());
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn problem() -> AnalyticLsProblem {
        AnalyticLsProblem::new(KernelSpec::gaussian(0.5).unwrap(), &[-0.6, 0.0, 0.6], &[0.8, -0.5, 0.6]).unwrap()
    }

    #[test]
    fn population_gram_matches_monte_carlo() {
        let pr = problem();
        let a = DVector::from_vec(vec![0.1, 0.2, -0.3]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let x: f64 = rng.random_range(-1.0..1.0);
            let diff: f64 = (0..3).map(|j| (a[j] - pr.target_coeffs[j]) * pr.kernel.eval_raw(&[pr.support.row(j)[0]], &[x])).sum();
            sum += diff * diff;
            sq += diff.powi(4);
        }
        let mean = sum / n as f64;
        let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((pr.excess_risk(&a) - mean).abs() <= 3.0 * se);
    }

    #[test]
    fn approx_error_properties() {
        let pr = problem();
        let grid = CoefficientGrid::around_target(&pr);
        let lambdas: Vec<f64> = (0..20).map(|i| 10f64.powf(-5.0 + 0.25 * i as f64)).collect();
        let mut with_zero = vec![0.0];
        with_zero.extend(&lambdas);
        for p in [1.0, 2.0] {
            let est = brute_force_approx_error(&pr, &grid, p, &with_zero).unwrap();
            assert!(est[0].value.abs() <= 1e-20);
            for w in est.windows(2) {
                assert!(w[1].value >= w[0].value);
            }
            let fp = pr.target_norm().powf(p);
            for e in &est {
                assert!(e.value <= e.lambda * fp + 1e-15);
            }
            for e in est.iter().skip(1).step_by(4) {
                let cont = continuum_approx_error(&pr, p, e.lambda);
                assert!(e.value >= cont - 1e-12, "p={p} lambda={}", e.lambda);
                assert!(e.value - cont <= e.slack + 1e-12, "p={p} lambda={} gap {} slack {}", e.lambda, e.value - cont, e.slack);
            }
        }
        assert!(GridTable::new(&pr, CoefficientGrid { points_per_axis: 0, ..grid }).is_err());
    }

    #[test]
    fn reg_trafo_collapses_for_equal_exponents() {
        let pr = problem();
        let table = GridTable::new(&pr, CoefficientGrid { points_per_axis: 21, ..CoefficientGrid::around_target(&pr) }).unwrap();
        let lambdas = [1e-3, 1e-2, 1e-1];
        let gammas = [1e-3, 1e-2, 1e-1, 1.0];
        let r = check_reg_trafo(&table, 2.0, 2.0, &lambdas, &gammas, 1e-9).unwrap();
        assert!(r.passed);
        let none = check_reg_trafo(&table, 2.0, 2.0, &lambdas, &[0.0], 1e-9).unwrap();
        assert!(!none.passed && none.instances == 0);
    }
}
