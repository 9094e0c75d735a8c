//! Mirror descent in weighted finite-dimensional `l^p` with mirror map
//! `psi(f) = (1/p) sum_i w_i |f_i|^p`.
//!
//! Dual vectors are paired with points through `<g, f> = sum_i w_i g_i f_i`,
//! so the duality map is the pointwise `J(f) = |f|^{p-2} f` and objective
//! gradients are the weighted Riesz representers `(d obj / d f_i) / w_i`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::table::{fmt_num, Table};

/// Smallest exponent accepted; `|f|^{p-2}` overflows near 0 below this.
pub const MIN_P: f64 = 1.2;
const SMOOTHNESS_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct LpSpace {
    p: f64,
    weights: Vec<f64>,
}

impl LpSpace {
    pub fn new(p: f64, weights: Vec<f64>) -> Result<Self> {
        if !(p >= MIN_P) || !p.is_finite() {
            return Err(Error::Parameter(format!("p must lie in [{MIN_P}, inf), got {p}")));
        }
        if weights.is_empty() || weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::Parameter("weights must be positive and finite".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { p, weights })
    }

    pub fn uniform(p: f64, dim: usize) -> Result<Self> {
        Self::new(p, vec![1.0 / dim.max(1) as f64; dim.max(1)])
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Conjugate exponent `p / (p - 1)`.
    pub fn q(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn pairing(&self, dual: &[f64], point: &[f64]) -> f64 {
        self.weights.iter().zip(dual).zip(point).map(|((w, g), f)| w * g * f).sum()
    }

    /// Weighted Riesz representer of a vector of partial derivatives.
    pub fn riesz(&self, partials: &[f64]) -> Vec<f64> {
        partials.iter().zip(&self.weights).map(|(d, w)| d / w).collect()
    }

    pub fn point(self: &Arc<Self>, values: Vec<f64>) -> Result<LpPoint> {
        LpPoint::new(values, self.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpPoint {
    pub values: Vec<f64>,
    pub space: Arc<LpSpace>,
}

impl LpPoint {
    pub fn new(values: Vec<f64>, space: Arc<LpSpace>) -> Result<Self> {
        if values.len() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite lp coordinate".into()));
        }
        Ok(Self { values, space })
    }

    fn same_space(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.space, &other.space) || self.space == other.space {
            Ok(())
        } else {
            Err(Error::Contract("points from different lp spaces".into()))
        }
    }
}

/// `sign(x) |x|^e`, with 0 mapped to 0.
#[inline]
fn signed_pow(x: f64, e: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().powf(e)
    }
}

pub fn mirror_map_value(f: &LpPoint) -> f64 {
    let p = f.space.p;
    f.space.weights.iter().zip(&f.values).map(|(w, v)| w * v.abs().powf(p)).sum::<f64>() / p
}

/// `J(f) = |f|^{p-2} f`.
pub fn duality_map(f: &LpPoint) -> Vec<f64> {
    let e = f.space.p - 1.0;
    f.values.iter().map(|v| signed_pow(*v, e)).collect()
}

/// `J^{-1}(g) = |g|^{q-2} g` with the conjugate exponent `q`.
pub fn duality_map_inverse(g: &[f64], space: &Arc<LpSpace>) -> Result<LpPoint> {
    let e = space.q() - 1.0;
    LpPoint::new(g.iter().map(|v| signed_pow(*v, e)).collect(), space.clone())
}

/// `D(u, f) = psi(u) - psi(f) - <J(f), u - f>`. Not clamped, so rounding
/// below zero stays visible.
pub fn bregman_divergence(u: &LpPoint, f: &LpPoint) -> Result<f64> {
    u.same_space(f)?;
    let jf = duality_map(f);
    let diff: Vec<f64> = u.values.iter().zip(&f.values).map(|(a, b)| a - b).collect();
    Ok(mirror_map_value(u) - mirror_map_value(f) - f.space.pairing(&jf, &diff))
}

/// `|<J(x) - J(y), z - x> - (D(z,y) - D(z,x) - D(x,y))|`.
pub fn three_point_identity_check(x: &LpPoint, y: &LpPoint, z: &LpPoint) -> Result<f64> {
    x.same_space(y)?;
    x.same_space(z)?;
    let jx = duality_map(x);
    let jy = duality_map(y);
    let dj: Vec<f64> = jx.iter().zip(&jy).map(|(a, b)| a - b).collect();
    let zx: Vec<f64> = z.values.iter().zip(&x.values).map(|(a, b)| a - b).collect();
    let lhs = x.space.pairing(&dj, &zx);
    let rhs = bregman_divergence(z, y)? - bregman_divergence(z, x)? - bregman_divergence(x, y)?;
    Ok((lhs - rhs).abs())
}

/// Differentiable convex objective on `R^d`.
pub trait MirrorObjective: Send + Sync {
    fn value(&self, f: &[f64]) -> f64;
    /// Euclidean partial derivatives.
    fn partials(&self, f: &[f64]) -> Vec<f64>;
}

/// `(1/2) (f - c)^T A (f - c)` with `A` symmetric PSD.
#[derive(Clone, Debug)]
pub struct QuadraticObjective {
    pub matrix: DMatrix<f64>,
    pub center: Vec<f64>,
}

impl QuadraticObjective {
    pub fn new(matrix: DMatrix<f64>, center: Vec<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() != center.len() {
            return Err(Error::DimensionMismatch { expected: center.len(), got: matrix.nrows() });
        }
        Ok(Self { matrix, center })
    }

    fn shifted(&self, f: &[f64]) -> nalgebra::DVector<f64> {
        nalgebra::DVector::from_iterator(f.len(), f.iter().zip(&self.center).map(|(a, c)| a - c))
    }
}

impl MirrorObjective for QuadraticObjective {
    fn value(&self, f: &[f64]) -> f64 {
        let d = self.shifted(f);
        0.5 * (&self.matrix * &d).dot(&d)
    }

    fn partials(&self, f: &[f64]) -> Vec<f64> {
        (&self.matrix * self.shifted(f)).iter().copied().collect()
    }
}

/// `<c, f>` in the Euclidean pairing.
#[derive(Clone, Debug)]
pub struct LinearObjective {
    pub coefficients: Vec<f64>,
}

impl MirrorObjective for LinearObjective {
    fn value(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum()
    }

    fn partials(&self, _f: &[f64]) -> Vec<f64> {
        self.coefficients.clone()
    }
}

/// Mean logistic loss `ln(1 + exp(-y_j <x_j, f>))` of a linear predictor.
#[derive(Clone, Debug)]
pub struct LogisticObjective {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
}

impl MirrorObjective for LogisticObjective {
    fn value(&self, f: &[f64]) -> f64 {
        let loss = crate::losses::LossSpec::logistic();
        self.features
            .iter()
            .zip(&self.labels)
            .map(|(x, y)| loss.value_raw(*y, crate::kernels::dot(x, f)))
            .sum::<f64>()
            / self.labels.len() as f64
    }

    fn partials(&self, f: &[f64]) -> Vec<f64> {
        let loss = crate::losses::LossSpec::logistic();
        let n = self.labels.len() as f64;
        let mut g = vec![0.0; f.len()];
        for (x, y) in self.features.iter().zip(&self.labels) {
            let d = loss.derivative_raw(*y, crate::kernels::dot(x, f)) / n;
            for (gi, xi) in g.iter_mut().zip(x) {
                *gi += d * xi;
            }
        }
        g
    }
}

/// `(1/n) sum_i L(y_i, f_i)`: an empirical risk as a function of the
/// prediction vector.
#[derive(Clone, Debug)]
pub struct EmpiricalRiskObjective {
    pub loss: crate::losses::LossSpec,
    pub targets: Vec<f64>,
}

impl MirrorObjective for EmpiricalRiskObjective {
    fn value(&self, f: &[f64]) -> f64 {
        self.targets.iter().zip(f).map(|(y, t)| self.loss.value_raw(*y, *t)).sum::<f64>() / self.targets.len() as f64
    }

    fn partials(&self, f: &[f64]) -> Vec<f64> {
        let n = self.targets.len() as f64;
        self.targets.iter().zip(f).map(|(y, t)| self.loss.derivative_raw(*y, *t) / n).collect()
    }
}

/// Weighted-pairing gradient of an objective at `f`.
pub fn objective_gradient(objective: &dyn MirrorObjective, f: &LpPoint) -> Vec<f64> {
    f.space.riesz(&objective.partials(&f.values))
}

/// Axis-aligned sampling box.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Region {
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self { lower: vec![lo; dim], upper: vec![hi; dim] }
    }

    pub fn contains(&self, f: &[f64]) -> bool {
        f.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| if u > l { rng.random_range(*l..*u) } else { *l })
            .collect()
    }
}

/// Largest sampled ratio
/// `(obj(g) - obj(f) - <grad obj(f), g - f>) / D(g, f)` over pairs in the
/// region, times a safety factor of 2, floored at `1e-8`. Half of the pairs
/// are local perturbations, where curvature ratios peak.
pub fn estimate_relative_smoothness(
    objective: &dyn MirrorObjective,
    region: &Region,
    space: &Arc<LpSpace>,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if region.lower.len() != space.dim() || region.upper.len() != space.dim() {
        return Err(Error::DimensionMismatch { expected: space.dim(), got: region.lower.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for s in 0..samples {
        let f = region.sample(&mut rng);
        let g = if s % 2 == 0 {
            region.sample(&mut rng)
        } else {
            let scale = 10f64.powf(rng.random_range(-3.0..-1.0));
            f.iter()
                .zip(region.lower.iter().zip(&region.upper))
                .map(|(v, (l, u))| (v + scale * (u - l) * rng.random_range(-1.0..1.0)).clamp(*l, *u))
                .collect()
        };
        let fp = LpPoint::new(f, space.clone())?;
        let gp = LpPoint::new(g, space.clone())?;
        let d = bregman_divergence(&gp, &fp)?;
        if !(d > 1e-300) {
            continue;
        }
        let partials = objective.partials(&fp.values);
        let lin: f64 = partials.iter().zip(gp.values.iter().zip(&fp.values)).map(|(p, (a, b))| p * (a - b)).sum();
        let (vg, vf) = (objective.value(&gp.values), objective.value(&fp.values));
        let mut gap = vg - vf - lin;
        if gap.abs() <= 1e-13 * (vg.abs() + vf.abs() + lin.abs()) {
            gap = 0.0;
        }
        worst = worst.max(gap / d);
    }
    Ok((2.0 * worst).max(SMOOTHNESS_FLOOR))
}

/// `J^{-1}(J(f) - eta grad)`.
pub fn mirror_step(f: &LpPoint, grad: &[f64], eta: f64) -> Result<LpPoint> {
    if grad.len() != f.values.len() {
        return Err(Error::DimensionMismatch { expected: f.values.len(), got: grad.len() });
    }
    let dual: Vec<f64> = duality_map(f).iter().zip(grad).map(|(j, g)| j - eta * g).collect();
    if dual.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite dual iterate".into()));
    }
    duality_map_inverse(&dual, &f.space)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MirrorConfig {
    pub eta: f64,
    pub steps: usize,
    /// `L_s`; when given with `strict`, `eta > 1/L_s` is rejected.
    pub relative_smoothness: Option<f64>,
    pub strict: bool,
}

impl MirrorConfig {
    pub fn new(eta: f64, steps: usize) -> Self {
        Self { eta, steps, relative_smoothness: None, strict: true }
    }

    pub fn with_relative_smoothness(mut self, l_s: f64) -> Self {
        self.relative_smoothness = Some(l_s);
        self
    }
}

#[derive(Clone, Debug)]
pub struct MirrorTrajectory {
    pub iterates: Vec<LpPoint>,
    /// `J(f_t)`, carried through the dual recursion.
    pub dual_iterates: Vec<Vec<f64>>,
    pub losses: Vec<f64>,
    pub eta: f64,
    pub relative_smoothness: f64,
}

impl MirrorTrajectory {
    /// CSV with columns `step, loss` and, when a reference point is given,
    /// `bregman_to_reference = D(reference, f_t)`.
    pub fn to_csv(&self, reference: Option<&LpPoint>) -> Result<String> {
        let mut header = vec!["step", "loss"];
        if reference.is_some() {
            header.push("bregman_to_reference");
        }
        let mut t = Table::new(&header);
        for (k, (f, loss)) in self.iterates.iter().zip(&self.losses).enumerate() {
            let mut row = vec![k.to_string(), fmt_num(*loss)];
            if let Some(u) = reference {
                row.push(fmt_num(bregman_divergence(u, f)?));
            }
            t.push(row);
        }
        Ok(t.render())
    }
}

pub fn run_mirror_descent(
    objective: &dyn MirrorObjective,
    f0: &LpPoint,
    config: &MirrorConfig,
) -> Result<MirrorTrajectory> {
    if !(config.eta > 0.0) || !config.eta.is_finite() {
        return Err(Error::Config(format!("step size must be positive, got {}", config.eta)));
    }
    let l_s = config.relative_smoothness.unwrap_or(1.0 / config.eta);
    if config.strict && config.eta > (1.0 / l_s) * (1.0 + 1e-12) {
        return Err(Error::Config(format!("step size {} exceeds 1/L_s = {}", config.eta, 1.0 / l_s)));
    }
    let mut f = f0.clone();
    let mut dual = duality_map(&f);
    let mut iterates = vec![f.clone()];
    let mut duals = vec![dual.clone()];
    let mut losses = vec![objective.value(&f.values)];
    for _ in 0..config.steps {
        let grad = objective_gradient(objective, &f);
        for (d, g) in dual.iter_mut().zip(&grad) {
            *d -= config.eta * g;
        }
        if dual.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite dual iterate".into()));
        }
        f = duality_map_inverse(&dual, &f.space)?;
        losses.push(objective.value(&f.values));
        iterates.push(f.clone());
        duals.push(dual.clone());
    }
    Ok(MirrorTrajectory { iterates, dual_iterates: duals, losses, eta: config.eta, relative_smoothness: l_s })
}

/// A point `u = base + c v` with `obj(u) <= target` and
/// `target - obj(u) <= tol`, found by bisection on `c >= 0`. Requires
/// `obj(base) <= target`; convexity makes `c -> obj(base + c v)` reach the
/// level set along any ray on which the objective grows unboundedly.
pub fn level_set_comparator(
    objective: &dyn MirrorObjective,
    base: &[f64],
    direction: &[f64],
    target: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    let at = |c: f64| -> Vec<f64> { base.iter().zip(direction).map(|(b, v)| b + c * v).collect() };
    let base_value = objective.value(base);
    if base_value > target {
        return Err(Error::Range { target, low: base_value, high: f64::INFINITY });
    }
    if target - base_value <= tol {
        return Ok(base.to_vec());
    }
    let mut hi = 1.0;
    let mut grow = 0;
    while objective.value(&at(hi)) <= target {
        hi *= 2.0;
        grow += 1;
        if grow > 200 {
            return Err(Error::Range { target, low: base_value, high: objective.value(&at(hi)) });
        }
    }
    let mut lo = 0.0;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if objective.value(&at(mid)) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
        if target - objective.value(&at(lo)) <= tol {
            break;
        }
    }
    Ok(at(lo))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(p: f64, w: Vec<f64>) -> Arc<LpSpace> {
        Arc::new(LpSpace::new(p, w).unwrap())
    }

    #[test]
    fn mirror_map_examples() {
        let s2 = space(2.0, vec![0.5, 0.5]);
        assert_eq!(mirror_map_value(&s2.point(vec![0.0, 0.0]).unwrap()), 0.0);
        assert_eq!(mirror_map_value(&s2.point(vec![1.0, 1.0]).unwrap()), 0.5);
        let s3 = space(3.0, vec![1.0]);
        assert!((mirror_map_value(&s3.point(vec![2.0]).unwrap()) - 8.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn duality_map_examples() {
        let s2 = space(2.0, vec![0.25; 4]);
        let f = s2.point(vec![1.5, -0.2, 0.0, 3.0]).unwrap();
        assert_eq!(duality_map(&f), f.values);
        assert_eq!(duality_map(&space(3.0, vec![1.0]).point(vec![2.0]).unwrap()), vec![4.0]);
        assert_eq!(duality_map(&space(4.0, vec![1.0]).point(vec![-2.0]).unwrap()), vec![-8.0]);
        let s15 = space(1.5, vec![0.5, 0.5]);
        let f = s15.point(vec![0.0, -0.7]).unwrap();
        let neg = s15.point(vec![0.0, 0.7]).unwrap();
        assert_eq!(duality_map(&f)[0], 0.0);
        assert_eq!(duality_map(&f)[1], -duality_map(&neg)[1]);
    }

    #[test]
    fn duality_inverse_examples() {
        let s2 = space(2.0, vec![1.0]);
        assert_eq!(duality_map_inverse(&[0.3], &s2).unwrap().values, vec![0.3]);
        let s3 = space(3.0, vec![1.0]);
        let f = duality_map_inverse(&[4.0], &s3).unwrap();
        assert!((f.values[0] - 2.0).abs() < 1e-15);
        assert!((duality_map(&f)[0] - 4.0).abs() < 1e-14);
        assert_eq!(duality_map_inverse(&[0.0], &s3).unwrap().values, vec![0.0]);
    }

    #[test]
    fn bregman_examples() {
        let s2 = space(2.0, vec![1.0]);
        let u = s2.point(vec![3.0]).unwrap();
        let f = s2.point(vec![1.0]).unwrap();
        assert_eq!(bregman_divergence(&u, &u).unwrap(), 0.0);
        assert_eq!(bregman_divergence(&u, &f).unwrap(), 2.0);
        let s3 = space(3.0, vec![1.0]);
        let d = bregman_divergence(&s3.point(vec![2.0]).unwrap(), &s3.point(vec![1.0]).unwrap()).unwrap();
        assert!((d - 4.0 / 3.0).abs() < 1e-15);
        let other = space(3.0, vec![0.5, 0.5]);
        assert!(bregman_divergence(&u, &other.point(vec![1.0, 1.0]).unwrap()).is_err());
    }

    #[test]
    fn three_point_examples() {
        let s = space(3.5, vec![0.2, 0.3, 0.5]);
        let x = s.point(vec![0.4, -1.2, 2.0]).unwrap();
        assert_eq!(three_point_identity_check(&x, &x, &x).unwrap(), 0.0);
        let y = s.point(vec![-0.3, 0.8, 1.1]).unwrap();
        let z = s.point(vec![1.7, 0.1, -0.9]).unwrap();
        assert!(three_point_identity_check(&x, &y, &z).unwrap() <= 1e-10);
        let s2 = space(2.0, vec![0.5, 0.5]);
        let x = s2.point(vec![0.4, -1.2]).unwrap();
        let y = s2.point(vec![-0.3, 0.8]).unwrap();
        let z = s2.point(vec![1.7, 0.1]).unwrap();
        assert!(three_point_identity_check(&x, &y, &z).unwrap() <= 1e-12);
    }

    #[test]
    fn rejects_small_p_and_bad_weights() {
        assert!(LpSpace::new(1.1, vec![1.0]).is_err());
        assert!(LpSpace::new(2.0, vec![0.5, 0.4]).is_err());
        assert!(LpSpace::new(2.0, vec![1.5, -0.5]).is_err());
        assert!(LpSpace::new(2.0, vec![]).is_err());
    }

    #[test]
    fn relative_smoothness_examples() {
        let s = space(2.0, vec![1.0]);
        let quad = QuadraticObjective::new(DMatrix::from_element(1, 1, 2.0), vec![0.0]).unwrap();
        let l = estimate_relative_smoothness(&quad, &Region::cube(1, -2.0, 2.0), &s, 500, 1).unwrap();
        assert!((l - 4.0).abs() < 1e-9, "L_s {l}");
        let lin = LinearObjective { coefficients: vec![0.7] };
        let l = estimate_relative_smoothness(&lin, &Region::cube(1, -2.0, 2.0), &s, 500, 1).unwrap();
        assert_eq!(l, 1e-8);
    }

    #[test]
    fn logistic_relative_smoothness_survives_resampling() {
        let s = space(3.0, vec![1.0 / 3.0; 3]);
        let obj = LogisticObjective {
            features: vec![vec![1.0, 0.5, -0.2], vec![-0.3, 1.0, 0.4], vec![0.6, -0.8, 1.0], vec![0.2, 0.1, 0.9]],
            labels: vec![1.0, -1.0, 1.0, -1.0],
        };
        let region = Region::cube(3, 0.3, 2.5);
        let l = estimate_relative_smoothness(&obj, &region, &s, 4000, 2).unwrap();
        assert!(l.is_finite());
        let l_half = l / 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..10_000 {
            let f = s.point(region.sample(&mut rng)).unwrap();
            let g = s.point(region.sample(&mut rng)).unwrap();
            let p = obj.partials(&f.values);
            let lin: f64 = p.iter().zip(g.values.iter().zip(&f.values)).map(|(a, (b, c))| a * (b - c)).sum();
            let lhs = obj.value(&g.values) - obj.value(&f.values) - lin;
            assert!(lhs <= l * bregman_divergence(&g, &f).unwrap() + 1e-12);
            assert!(lhs <= 1.5 * l_half * bregman_divergence(&g, &f).unwrap() + 1e-12);
        }
    }

    #[test]
    fn mirror_step_examples() {
        let s3 = space(3.0, vec![1.0]);
        let f = s3.point(vec![2.0]).unwrap();
        assert_eq!(mirror_step(&f, &[0.0], 1.0).unwrap().values, vec![2.0]);
        let next = mirror_step(&f, &[1.0], 1.0).unwrap();
        assert!((next.values[0] - 3f64.sqrt()).abs() < 1e-15);
        let s2 = space(2.0, vec![0.5, 0.5]);
        let f = s2.point(vec![1.0, -1.0]).unwrap();
        let next = mirror_step(&f, &[0.4, 0.2], 0.5).unwrap();
        assert_eq!(next.values, vec![0.8, -1.1]);
    }

    #[test]
    fn mirror_step_solves_the_bregman_proximal_problem() {
        let s = space(3.0, vec![1.0]);
        let f = s.point(vec![1.3]).unwrap();
        let (g, eta) = (0.9, 0.4);
        let next = mirror_step(&f, &[g], eta).unwrap();
        // golden-section search on <g, u> + D(u, f) / eta
        let prox = |u: f64| s.pairing(&[g], &[u]) + bregman_divergence(&s.point(vec![u]).unwrap(), &f).unwrap() / eta;
        let (mut a, mut b) = (-3.0, 3.0);
        let r = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - r * (b - a);
            let d = a + r * (b - a);
            if prox(c) < prox(d) {
                b = d;
            } else {
                a = c;
            }
        }
        assert!((0.5 * (a + b) - next.values[0]).abs() < 1e-7);
    }

    #[test]
    fn zero_steps_keeps_start_and_strict_cap() {
        let s = space(2.0, vec![0.5, 0.5]);
        let quad = QuadraticObjective::new(DMatrix::identity(2, 2), vec![1.0, 1.0]).unwrap();
        let f0 = s.point(vec![0.2, 0.4]).unwrap();
        let t = run_mirror_descent(&quad, &f0, &MirrorConfig::new(0.1, 0)).unwrap();
        assert_eq!(t.iterates.len(), 1);
        assert_eq!(t.iterates[0], f0);
        let cfg = MirrorConfig::new(1.0, 3).with_relative_smoothness(2.0);
        assert!(matches!(run_mirror_descent(&quad, &f0, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn dual_recursion_holds() {
        let s = space(4.0, vec![0.25; 4]);
        let a = DMatrix::from_fn(4, 4, |i, j| if i == j { 2.0 } else { 0.3 });
        let quad = QuadraticObjective::new(a, vec![1.0, 1.5, 0.8, 1.2]).unwrap();
        let f0 = s.point(vec![0.5, 2.0, 1.5, 0.7]).unwrap();
        let l = estimate_relative_smoothness(&quad, &Region::cube(4, 0.3, 2.5), &s, 4000, 3).unwrap();
        let t = run_mirror_descent(&quad, &f0, &MirrorConfig::new(1.0 / l, 100).with_relative_smoothness(l)).unwrap();
        for w in 0..100 {
            let g = objective_gradient(&quad, &t.iterates[w]);
            let j_next = duality_map(&t.iterates[w + 1]);
            let j_cur = duality_map(&t.iterates[w]);
            for i in 0..4 {
                let expect = j_cur[i] - t.eta * g[i];
                assert!((j_next[i] - expect).abs() <= 1e-10 * (1.0 + expect.abs()));
            }
            assert!(t.losses[w + 1] <= t.losses[w] + 1e-12 * (1.0 + t.losses[0]));
        }
        let csv = t.to_csv(Some(&t.iterates[100])).unwrap();
        assert!(csv.starts_with("step,loss,bregman_to_reference\n"));
        assert_eq!(csv.lines().count(), 102);
    }

    #[test]
    fn level_set_comparator_lands_on_the_level() {
        let quad = QuadraticObjective::new(DMatrix::identity(2, 2), vec![0.0, 0.0]).unwrap();
        let u = level_set_comparator(&quad, &[0.0, 0.0], &[0.6, -0.8], 0.5, 1e-13).unwrap();
        let v = quad.value(&u);
        assert!(v <= 0.5 && 0.5 - v <= 1e-13);
        assert!(level_set_comparator(&quad, &[3.0, 0.0], &[1.0, 0.0], 0.5, 1e-9).is_err());
    }
}
