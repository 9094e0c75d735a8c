//! Kernels, Gram matrices and RKHS functions in representer form
//! `f = sum_i alpha_i k(x_i, .)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::data::Points;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelSpec {
    /// `exp(-|x - x'|^2 / (2 sigma^2))`
    Gaussian { sigma: f64 },
    Linear,
    /// `(offset + <x, x'>)^degree`
    Polynomial { degree: u32, offset: f64 },
}

impl KernelSpec {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Parameter(format!("gaussian sigma must be positive, got {sigma}")));
        }
        Ok(Self::Gaussian { sigma })
    }

    pub fn polynomial(degree: u32, offset: f64) -> Result<Self> {
        if degree == 0 {
            return Err(Error::Parameter("polynomial degree must be >= 1".into()));
        }
        if !(offset >= 0.0) || !offset.is_finite() {
            return Err(Error::Parameter(format!("polynomial offset must be >= 0, got {offset}")));
        }
        Ok(Self::Polynomial { degree, offset })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Gaussian { .. } => "gaussian",
            Self::Linear => "linear",
            Self::Polynomial { .. } => "polynomial",
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
        }
        Ok(self.eval_raw(x, y))
    }

    #[inline]
    pub fn eval_raw(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            Self::Gaussian { sigma } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
            Self::Linear => dot(x, y),
            Self::Polynomial { degree, offset } => (offset + dot(x, y)).powi(degree as i32),
        }
    }

    /// `K_ij = k(x_i, x_j)`, filled symmetrically.
    pub fn gram_matrix(&self, xs: &Points) -> Result<DMatrix<f64>> {
        if xs.is_empty() {
            return Err(Error::InputDomain("gram matrix of an empty point list".into()));
        }
        let n = xs.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            let xi = xs.row(i);
            for j in 0..=i {
                let v = self.eval_raw(xi, xs.row(j));
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        Ok(k)
    }

    /// `C_ij = k(a_i, b_j)`.
    pub fn cross_gram(&self, a: &Points, b: &Points) -> Result<DMatrix<f64>> {
        if a.dim() != b.dim() {
            return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
        }
        Ok(DMatrix::from_fn(a.len(), b.len(), |i, j| self.eval_raw(a.row(i), b.row(j))))
    }

    /// `kappa = sup_{|x| <= domain_bound} sqrt(k(x, x))`, an upper bound
    /// on the norm of the embedding of the RKHS into bounded functions.
    pub fn sup_embedding_bound(&self, domain_bound: f64) -> f64 {
        let r = domain_bound.max(0.0);
        match *self {
            Self::Gaussian { .. } => 1.0,
            Self::Linear => r,
            Self::Polynomial { degree, offset } => (offset + r * r).powf(degree as f64 / 2.0),
        }
    }

    /// `max_i sqrt(k(x_i, x_i))` over a concrete point set.
    pub fn data_local_bound(&self, xs: &Points) -> f64 {
        xs.rows().map(|x| self.eval_raw(x, x).max(0.0).sqrt()).fold(0.0, f64::max)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Quadratic form `a^T K b`.
pub fn gram_inner(gram: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (gram * b).dot(a)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(gram: &DMatrix<f64>) -> f64 {
    gram.clone().symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

/// A function in the span of `k(x_i, .)` over a fixed support.
#[derive(Clone, Debug)]
pub struct RkhsFunction {
    pub support: Arc<Points>,
    pub coeffs: DVector<f64>,
    pub kernel: KernelSpec,
}

impl RkhsFunction {
    pub fn new(support: Arc<Points>, coeffs: DVector<f64>, kernel: KernelSpec) -> Result<Self> {
        if coeffs.len() != support.len() {
            return Err(Error::DimensionMismatch { expected: support.len(), got: coeffs.len() });
        }
        Ok(Self { support, coeffs, kernel })
    }

    pub fn zero(support: Arc<Points>, kernel: KernelSpec) -> Self {
        let n = support.len();
        Self { support, coeffs: DVector::zeros(n), kernel }
    }

    /// The canonical feature map `k(x0, .)`.
    pub fn feature(x0: &[f64], kernel: KernelSpec) -> Result<Self> {
        let support = Arc::new(Points::new(x0.len(), x0.to_vec())?);
        Ok(Self { support, coeffs: DVector::from_element(1, 1.0), kernel })
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.support.dim() {
            return Err(Error::DimensionMismatch { expected: self.support.dim(), got: x.len() });
        }
        Ok(self
            .support
            .rows()
            .zip(self.coeffs.iter())
            .map(|(xi, a)| a * self.kernel.eval_raw(xi, x))
            .sum())
    }

    pub fn gram(&self) -> DMatrix<f64> {
        self.kernel.gram_matrix(&self.support).unwrap_or_else(|_| DMatrix::zeros(0, 0))
    }

    /// `sqrt(alpha^T K alpha)`, using a precomputed Gram matrix on the support.
    pub fn norm_with_gram(&self, gram: &DMatrix<f64>) -> Result<f64> {
        if gram.nrows() != self.coeffs.len() {
            return Err(Error::DimensionMismatch { expected: gram.nrows(), got: self.coeffs.len() });
        }
        Ok(gram_inner(gram, &self.coeffs, &self.coeffs).max(0.0).sqrt())
    }

    pub fn norm(&self) -> f64 {
        if self.coeffs.is_empty() {
            return 0.0;
        }
        let g = self.gram();
        gram_inner(&g, &self.coeffs, &self.coeffs).max(0.0).sqrt()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { support: self.support.clone(), coeffs: &self.coeffs * c, kernel: self.kernel }
    }

    /// `self + c * other` for functions on the same support.
    pub fn axpy(&self, c: f64, other: &Self) -> Result<Self> {
        if !Arc::ptr_eq(&self.support, &other.support) && *self.support != *other.support {
            return Err(Error::Contract("axpy across different supports".into()));
        }
        Ok(Self {
            support: self.support.clone(),
            coeffs: &self.coeffs + &other.coeffs * c,
            kernel: self.kernel,
        })
    }
}

/// Free-function form of [`KernelSpec::eval`].
pub fn eval_kernel(kernel: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    kernel.eval(x, y)
}

pub fn gram_matrix(kernel: &KernelSpec, xs: &Points) -> Result<DMatrix<f64>> {
    kernel.gram_matrix(xs)
}

pub fn rkhs_norm(f: &RkhsFunction) -> f64 {
    f.norm()
}

pub fn rkhs_eval(f: &RkhsFunction, x: &[f64]) -> Result<f64> {
    f.eval(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pts(rows: &[Vec<f64>]) -> Arc<Points> {
        Arc::new(Points::from_rows(rows).unwrap())
    }

    #[test]
    fn kernel_examples() {
        let g = KernelSpec::gaussian(0.7).unwrap();
        assert_eq!(g.eval(&[0.3, -1.0], &[0.3, -1.0]).unwrap(), 1.0);
        assert_eq!(KernelSpec::Linear.eval(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        let g1 = KernelSpec::gaussian(1.0).unwrap();
        let v = g1.eval(&[0.0, 0.0], &[0.6, 0.8]).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
        assert!((v - 0.606531).abs() < 1e-6);
        assert!(matches!(g1.eval(&[0.0], &[0.0, 1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn gram_examples() {
        let g = KernelSpec::gaussian(1.0).unwrap();
        let k = g.gram_matrix(&pts(&[vec![0.4]])).unwrap();
        assert_eq!(k, DMatrix::from_element(1, 1, 1.0));
        let k = KernelSpec::Linear.gram_matrix(&pts(&[vec![1.0], vec![2.0]])).unwrap();
        assert_eq!(k, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]));
        // equilateral triangle with unit sides
        let tri = pts(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, 3f64.sqrt() / 2.0]]);
        let k = g.gram_matrix(&tri).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = g.eval(tri.row(i), tri.row(j)).unwrap();
                assert_eq!(k[(i, j)], expect);
                if i != j {
                    assert!((k[(i, j)] - (-0.5f64).exp()).abs() < 1e-14);
                }
            }
        }
        assert!(g.gram_matrix(&Points::new(1, vec![]).unwrap()).is_err());
    }

    #[test]
    fn gram_is_psd_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kernel in [
            KernelSpec::gaussian(0.3).unwrap(),
            KernelSpec::Linear,
            KernelSpec::polynomial(3, 1.0).unwrap(),
        ] {
            for _ in 0..10 {
                let n = rng.random_range(2..30);
                let vals: Vec<f64> = (0..n * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
                let k = kernel.gram_matrix(&Points::new(2, vals).unwrap()).unwrap();
                assert!(min_eigenvalue(&k) >= -1e-8 * k.trace());
                assert_eq!(k.transpose(), k);
            }
        }
    }

    #[test]
    fn embedding_bound_examples() {
        assert_eq!(KernelSpec::gaussian(2.0).unwrap().sup_embedding_bound(5.0), 1.0);
        assert_eq!(KernelSpec::Linear.sup_embedding_bound(3.0), 3.0);
        let p = KernelSpec::polynomial(2, 1.0).unwrap();
        // numerical maximization of (1 + x^T x)^2 over the unit disc
        let mut best: f64 = 0.0;
        for i in 0..=100 {
            let r = i as f64 / 100.0;
            for a in 0..16 {
                let th = a as f64 * std::f64::consts::PI / 8.0;
                let x = [r * th.cos(), r * th.sin()];
                best = best.max(p.eval_raw(&x, &x).sqrt());
            }
        }
        assert!((best - 2.0).abs() < 1e-12);
        assert_eq!(p.sup_embedding_bound(1.0), 2.0);
    }

    #[test]
    fn norm_examples() {
        let s = pts(&[vec![1.0], vec![2.0]]);
        let f = RkhsFunction::zero(s.clone(), KernelSpec::Linear);
        assert_eq!(f.norm(), 0.0);
        let g = KernelSpec::gaussian(1.0).unwrap();
        let one = RkhsFunction::feature(&[0.2, 0.1], g).unwrap();
        assert_eq!(one.norm(), 1.0);
        // alpha^T K alpha = 1 - 4 + 4 with K = [[1,2],[2,4]]
        let f = RkhsFunction::new(s.clone(), DVector::from_vec(vec![1.0, -1.0]), KernelSpec::Linear)
            .unwrap();
        assert!((f.norm() - 1.0).abs() < 1e-15);
        assert!(RkhsFunction::new(s, DVector::zeros(3), KernelSpec::Linear).is_err());
    }

    #[test]
    fn eval_examples() {
        let s = pts(&[vec![1.0], vec![2.0]]);
        let f = RkhsFunction::new(s.clone(), DVector::from_vec(vec![1.0, 1.0]), KernelSpec::Linear)
            .unwrap();
        assert_eq!(f.eval(&[3.0]).unwrap(), 9.0);
        let z = RkhsFunction::zero(s, KernelSpec::Linear);
        assert_eq!(z.eval(&[7.0]).unwrap(), 0.0);
        let g = KernelSpec::gaussian(0.5).unwrap();
        let k0 = RkhsFunction::feature(&[0.3], g).unwrap();
        assert_eq!(k0.eval(&[0.3]).unwrap(), 1.0);
        assert!(k0.eval(&[0.3, 0.0]).is_err());
    }

    #[test]
    fn reproducing_property_and_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = KernelSpec::gaussian(0.8).unwrap();
        for _ in 0..200 {
            let a = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let b = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let s = pts(&[a.to_vec(), b.to_vec()]);
            let k = g.gram_matrix(&s).unwrap();
            let ea = DVector::from_vec(vec![1.0, 0.0]);
            let eb = DVector::from_vec(vec![0.0, 1.0]);
            assert!((gram_inner(&k, &ea, &eb) - g.eval_raw(&a, &b)).abs() < 1e-12);
        }
        let support = Arc::new(Points::new(2, (0..20).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap());
        let f = RkhsFunction::new(
            support,
            DVector::from_fn(10, |_, _| rng.random_range(-2.0..2.0)),
            KernelSpec::polynomial(2, 0.5).unwrap(),
        )
        .unwrap();
        let kappa = f.kernel.sup_embedding_bound(2f64.sqrt());
        let nf = f.norm();
        for _ in 0..500 {
            let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            assert!(f.eval(&x).unwrap().abs() <= kappa * nf * (1.0 + 1e-12));
        }
        let c = -2.5;
        assert!((f.scaled(c).norm() - c.abs() * nf).abs() < 1e-10 * nf);
    }
}
