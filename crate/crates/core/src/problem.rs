//! A loss, a dataset and a kernel bundled with the Gram matrix on the
//! training points. Every function produced by training lives in the span
//! of `k(x_i, .)` over this support.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, Points};
use crate::error::{Error, Result};
use crate::kernels::{gram_inner, KernelSpec, RkhsFunction};
use crate::losses::LossSpec;

/// How the embedding constant entering `M' = M kappa^2` is bounded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SmoothnessBound {
    /// `kappa = sup_{|x| <= R} sqrt(k(x,x))` over the ball containing the data.
    #[default]
    Global,
    /// `kappa^2 = max_i k(x_i, x_i)`.
    DataLocal,
}

#[derive(Debug)]
pub struct KernelProblem {
    pub loss: LossSpec,
    pub dataset: Dataset,
    pub support: Arc<Points>,
    pub kernel: KernelSpec,
    pub gram: DMatrix<f64>,
}

impl KernelProblem {
    pub fn new(loss: LossSpec, dataset: Dataset, kernel: KernelSpec) -> Result<Arc<Self>> {
        dataset.ensure_nonempty()?;
        let gram = kernel.gram_matrix(&dataset.points)?;
        let support = Arc::new(dataset.points.clone());
        Ok(Arc::new(Self { loss, dataset, support, kernel, gram }))
    }

    pub fn n(&self) -> usize {
        self.dataset.len()
    }

    pub fn kappa(&self, bound: SmoothnessBound) -> f64 {
        match bound {
            SmoothnessBound::Global => self.kernel.sup_embedding_bound(self.dataset.points.radius()),
            SmoothnessBound::DataLocal => self.kernel.data_local_bound(&self.dataset.points),
        }
    }

    /// Smoothness constant `M' = M kappa^2` of the empirical risk on H.
    pub fn risk_smoothness(&self, bound: SmoothnessBound) -> f64 {
        let k = self.kappa(bound);
        self.loss.smoothness_constant() * k * k
    }

    /// Largest constant step admissible for the early-stopping grid,
    /// `min(1, 1/M')`.
    pub fn default_step_size(&self, bound: SmoothnessBound) -> f64 {
        let m = self.risk_smoothness(bound);
        if m > 0.0 {
            (1.0 / m).min(1.0)
        } else {
            1.0
        }
    }

    pub fn predictions(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        &self.gram * coeffs
    }

    pub fn risk_of_predictions(&self, preds: &DVector<f64>) -> f64 {
        let y = &self.dataset.targets;
        preds.iter().zip(y).map(|(t, y)| self.loss.value_raw(*y, *t)).sum::<f64>() / self.n() as f64
    }

    pub fn risk(&self, coeffs: &DVector<f64>) -> f64 {
        self.risk_of_predictions(&self.predictions(coeffs))
    }

    /// Coefficients of `grad R_D(f) = (1/n) sum_i L'(y_i, f(x_i)) k(x_i, .)`.
    pub fn gradient_of_predictions(&self, preds: &DVector<f64>) -> DVector<f64> {
        let n = self.n() as f64;
        let y = &self.dataset.targets;
        DVector::from_iterator(
            preds.len(),
            preds.iter().zip(y).map(|(t, y)| self.loss.derivative_raw(*y, *t) / n),
        )
    }

    pub fn norm_sq(&self, coeffs: &DVector<f64>) -> f64 {
        gram_inner(&self.gram, coeffs, coeffs).max(0.0)
    }

    pub fn norm(&self, coeffs: &DVector<f64>) -> f64 {
        self.norm_sq(coeffs).sqrt()
    }

    pub fn distance(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        self.norm(&(a - b))
    }

    pub fn function(&self, coeffs: DVector<f64>) -> RkhsFunction {
        RkhsFunction { support: self.support.clone(), coeffs, kernel: self.kernel }
    }

    pub fn check_support(&self, f: &RkhsFunction) -> Result<()> {
        if f.coeffs.len() != self.n() || (!Arc::ptr_eq(&f.support, &self.support) && *f.support != self.dataset.points) {
            return Err(Error::Contract("function support differs from the dataset points".into()));
        }
        Ok(())
    }
}
