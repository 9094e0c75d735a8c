//! Convex, differentiable losses L(y, t) together with the constants the
//! gradient-descent and regularization analysis consumes.
//!
//! Least squares is `(y - t)^2` without the one-half factor, so its
//! smoothness constant is 2.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossKind {
    LeastSquares,
    /// `ln(1 + exp(-y t))` for labels `y` in {-1, +1}.
    LogisticClassification,
    Huber { delta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    /// Clipping level, in units of the prediction scale.
    pub clip_level: f64,
}

/// Growth envelope `L(y, t) <= b (1 + |t|^q)` for `|y| <= clip_level`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Growth {
    pub b: f64,
    pub q: f64,
}

/// Clips `t` to `[-m, m]`.
pub fn clip_value(t: f64, m: f64) -> Result<f64> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::Parameter(format!("clip level must be positive, got {m}")));
    }
    Ok(t.clamp(-m, m))
}

fn check_finite(y: f64, t: f64) -> Result<()> {
    if y.is_finite() && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InputDomain(format!("non-finite loss argument (y={y}, t={t})")))
    }
}

/// ln(1 + e^{-z}) without overflow.
fn softplus_neg(z: f64) -> f64 {
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LossSpec {
    pub fn new(kind: LossKind, clip_level: f64) -> Result<Self> {
        if !(clip_level > 0.0) || !clip_level.is_finite() {
            return Err(Error::Parameter(format!("clip level must be positive, got {clip_level}")));
        }
        if let LossKind::Huber { delta } = kind {
            if !(delta > 0.0) || !delta.is_finite() {
                return Err(Error::Parameter(format!("huber delta must be positive, got {delta}")));
            }
        }
        Ok(Self { kind, clip_level })
    }

    pub fn least_squares(clip_level: f64) -> Result<Self> {
        Self::new(LossKind::LeastSquares, clip_level)
    }

    pub fn logistic() -> Self {
        Self { kind: LossKind::LogisticClassification, clip_level: 1.0 }
    }

    pub fn huber(delta: f64, clip_level: f64) -> Result<Self> {
        Self::new(LossKind::Huber { delta }, clip_level)
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            LossKind::LeastSquares => "least_squares",
            LossKind::LogisticClassification => "logistic",
            LossKind::Huber { .. } => "huber",
        }
    }

    pub fn value(&self, y: f64, t: f64) -> Result<f64> {
        check_finite(y, t)?;
        Ok(self.value_raw(y, t))
    }

    pub fn derivative(&self, y: f64, t: f64) -> Result<f64> {
        check_finite(y, t)?;
        Ok(self.derivative_raw(y, t))
    }

    /// Unchecked value for inner loops over already validated data.
    #[inline]
    pub fn value_raw(&self, y: f64, t: f64) -> f64 {
        match self.kind {
            LossKind::LeastSquares => (y - t) * (y - t),
            LossKind::LogisticClassification => softplus_neg(y * t),
            LossKind::Huber { delta } => {
                let r = (t - y).abs();
                if r <= delta {
                    0.5 * r * r
                } else {
                    delta * (r - 0.5 * delta)
                }
            }
        }
    }

    #[inline]
    pub fn derivative_raw(&self, y: f64, t: f64) -> f64 {
        match self.kind {
            LossKind::LeastSquares => 2.0 * (t - y),
            LossKind::LogisticClassification => -y * sigmoid(-y * t),
            LossKind::Huber { delta } => (t - y).clamp(-delta, delta),
        }
    }

    /// Second derivative in `t`; for Huber the kink is assigned to the
    /// linear branch.
    #[inline]
    pub fn second_derivative_raw(&self, y: f64, t: f64) -> f64 {
        match self.kind {
            LossKind::LeastSquares => 2.0,
            LossKind::LogisticClassification => {
                let s = sigmoid(y * t);
                y * y * s * (1.0 - s)
            }
            LossKind::Huber { delta } => {
                if (t - y).abs() < delta {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Lipschitz constant of `t -> L'(y, t)`.
    pub fn smoothness_constant(&self) -> f64 {
        match self.kind {
            LossKind::LeastSquares => 2.0,
            LossKind::LogisticClassification => 0.25,
            LossKind::Huber { .. } => 1.0,
        }
    }

    /// A growth envelope valid for all `|y| <= clip_level`.
    pub fn growth_params(&self) -> Growth {
        let m = self.clip_level;
        match self.kind {
            // (y - t)^2 <= 2y^2 + 2t^2
            LossKind::LeastSquares => Growth { b: 2.0 * m.max(1.0).powi(2), q: 2.0 },
            // ln(1 + e^{|y||t|}) <= ln 2 + |y||t|
            LossKind::LogisticClassification => Growth { b: m.max(1.0), q: 1.0 },
            // delta |t - y| <= delta (|t| + m)
            LossKind::Huber { delta } => Growth { b: delta * (1.0 + m), q: 1.0 },
        }
    }

    /// Whether `L(y, clip(t)) <= L(y, t)` holds for every `|y| <= clip_level`.
    /// The logistic loss for classification is strictly decreasing in `y t`
    /// and therefore not clippable.
    pub fn is_clippable(&self) -> bool {
        !matches!(self.kind, LossKind::LogisticClassification)
    }

    /// Lipschitz constant of `t -> L(y, t)` on `[-clip_level, clip_level]`,
    /// uniformly over `|y| <= clip_level`.
    pub fn clip_lipschitz(&self) -> f64 {
        let m = self.clip_level;
        match self.kind {
            LossKind::LeastSquares => 4.0 * m,
            LossKind::LogisticClassification => 1.0,
            LossKind::Huber { delta } => delta,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central(loss: &LossSpec, y: f64, t: f64) -> f64 {
        let h = 1e-5 * (1.0 + t.abs());
        (loss.value_raw(y, t + h) - loss.value_raw(y, t - h)) / (2.0 * h)
    }

    #[test]
    fn value_examples() {
        let ls = LossSpec::least_squares(1.0).unwrap();
        assert_eq!(ls.value(1.0, 0.0).unwrap(), 1.0);
        let lg = LossSpec::logistic();
        assert!((lg.value(1.0, 0.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        let hb = LossSpec::huber(1.0, 1.0).unwrap();
        assert_eq!(hb.value(0.0, 2.0).unwrap(), 1.5);
    }

    #[test]
    fn derivative_examples() {
        let ls = LossSpec::least_squares(1.0).unwrap();
        assert_eq!(ls.derivative(1.0, 0.0).unwrap(), -2.0);
        let lg = LossSpec::logistic();
        assert_eq!(lg.derivative(1.0, 0.0).unwrap(), -0.5);
        let hb = LossSpec::huber(1.0, 1.0).unwrap();
        let fd = central(&hb, 0.0, 0.3);
        assert!((fd - 0.3).abs() < 1e-9, "finite difference {fd}");
        assert!((hb.derivative(0.0, 0.3).unwrap() - fd).abs() < 1e-9);
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip_value(1.5, 1.0).unwrap(), 1.0);
        assert_eq!(clip_value(-2.0, 1.0).unwrap(), -1.0);
        assert_eq!(clip_value(0.3, 1.0).unwrap(), 0.3);
        assert!(matches!(clip_value(0.3, 0.0), Err(Error::Parameter(_))));
        assert!(matches!(clip_value(0.3, -1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn smoothness_examples() {
        assert_eq!(LossSpec::least_squares(1.0).unwrap().smoothness_constant(), 2.0);
        assert_eq!(LossSpec::logistic().smoothness_constant(), 0.25);
        let hb = LossSpec::huber(1.0, 1.0).unwrap();
        // grid maximization of difference quotients of the derivative
        let mut worst: f64 = 0.0;
        for i in 0..400 {
            let s = -4.0 + 0.02 * i as f64;
            let t = s + 0.013;
            let q = (hb.derivative_raw(0.2, s) - hb.derivative_raw(0.2, t)).abs() / 0.013;
            worst = worst.max(q);
        }
        assert!(worst <= 1.0 + 1e-9 && worst > 0.99);
        assert_eq!(hb.smoothness_constant(), 1.0);
    }

    #[test]
    fn growth_examples() {
        let grid = |loss: &LossSpec| {
            let g = loss.growth_params();
            let m = loss.clip_level;
            let mut worst = f64::NEG_INFINITY;
            for i in 0..=40 {
                let y = -m + 2.0 * m * i as f64 / 40.0;
                for j in 0..=400 {
                    let t = -50.0 + 0.25 * j as f64;
                    let ratio = loss.value_raw(y, t) / (1.0 + t.abs().powf(g.q));
                    worst = worst.max(ratio);
                }
            }
            (g, worst)
        };
        let (g, worst) = grid(&LossSpec::least_squares(1.0).unwrap());
        assert_eq!((g.b, g.q), (2.0, 2.0));
        assert!(worst <= g.b);
        let (g, worst) = grid(&LossSpec::logistic());
        assert_eq!((g.b, g.q), (1.0, 1.0));
        assert!(worst <= g.b);
        let (g, worst) = grid(&LossSpec::huber(1.0, 1.0).unwrap());
        assert_eq!((g.b, g.q), (2.0, 1.0));
        assert!(worst <= g.b);
    }

    #[test]
    fn non_finite_inputs_rejected() {
        let ls = LossSpec::least_squares(1.0).unwrap();
        assert!(matches!(ls.value(f64::NAN, 0.0), Err(Error::InputDomain(_))));
        assert!(matches!(ls.derivative(0.0, f64::INFINITY), Err(Error::InputDomain(_))));
        assert!(LossSpec::huber(0.0, 1.0).is_err());
        assert!(LossSpec::huber(-1.0, 1.0).is_err());
    }

    #[test]
    fn logistic_is_not_clippable() {
        let lg = LossSpec::logistic();
        assert!(!lg.is_clippable());
        // clipping a confident correct prediction raises the loss
        assert!(lg.value_raw(1.0, 1.0) > lg.value_raw(1.0, 3.0));
    }

    #[test]
    fn logistic_stable_for_extreme_margins() {
        let lg = LossSpec::logistic();
        assert!((lg.value_raw(1.0, -800.0) - 800.0).abs() < 1e-9);
        assert!(lg.value_raw(1.0, 800.0) >= 0.0);
        assert!(lg.derivative_raw(1.0, -800.0).is_finite());
    }
}
