//! Seeded synthetic regression and classification problems on `[-1, 1]^d`.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{Dataset, Points};
use crate::error::{Error, Result};
use crate::losses::{LossKind, LossSpec};

/// Gaussian noise is truncated at this many standard deviations.
pub const NOISE_TRUNCATION: f64 = 6.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetFunction {
    /// `sin(pi s)` with `s = sum_j x_j / sqrt(d)`.
    Sine,
    /// `exp(-|x|^2 / 2)`.
    Bump,
    /// `sum_j x_j / d`.
    Linear,
    Zero,
}

impl FromStr for TargetFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sine" => Ok(Self::Sine),
            "bump" => Ok(Self::Bump),
            "linear" => Ok(Self::Linear),
            "zero" => Ok(Self::Zero),
            other => Err(Error::Config(format!("unknown target function '{other}'"))),
        }
    }
}

impl TargetFunction {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Sine => "sine",
            Self::Bump => "bump",
            Self::Linear => "linear",
            Self::Zero => "zero",
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let d = x.len().max(1) as f64;
        match self {
            Self::Sine => (PI * x.iter().sum::<f64>() / d.sqrt()).sin(),
            Self::Bump => (-0.5 * x.iter().map(|v| v * v).sum::<f64>()).exp(),
            Self::Linear => x.iter().sum::<f64>() / d,
            Self::Zero => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    Regression,
    Classification,
}

#[derive(Clone, Debug)]
pub struct SyntheticProblem {
    pub kind: ProblemKind,
    pub dataset: Dataset,
    pub target: TargetFunction,
    pub noise_sigma: f64,
    /// Logit scale `s` with `P(y = 1 | x) = sigmoid(s f*(x))`.
    pub margin: f64,
    /// Least-squares Bayes risk for regression.
    pub bayes_risk: Option<f64>,
    pub domain_bound: f64,
}

impl SyntheticProblem {
    /// Bayes decision function: `f*` for least squares, the log-odds
    /// `s f*` for the logistic loss.
    pub fn bayes_function(&self, x: &[f64]) -> f64 {
        match self.kind {
            ProblemKind::Regression => self.target.eval(x),
            ProblemKind::Classification => self.margin * self.target.eval(x),
        }
    }

    /// Loss matching the problem kind, clipped at the label bound.
    pub fn natural_loss(&self) -> LossSpec {
        match self.kind {
            ProblemKind::Regression => {
                let m = self.target_bound() + NOISE_TRUNCATION * self.noise_sigma;
                LossSpec::new(LossKind::LeastSquares, m.max(1e-12)).expect("positive clip level")
            }
            ProblemKind::Classification => LossSpec::logistic(),
        }
    }

    fn target_bound(&self) -> f64 {
        match self.target {
            TargetFunction::Zero => 0.0,
            _ => 1.0,
        }
    }

    /// Fresh sample from the same distribution.
    pub fn resample(&self, n: usize, seed: u64) -> Result<SyntheticProblem> {
        let d = self.dataset.points.dim();
        match self.kind {
            ProblemKind::Regression => generate_regression(n, d, self.target, self.noise_sigma, seed),
            ProblemKind::Classification => generate_classification(n, d, self.target, self.margin, seed),
        }
    }

    /// Monte-Carlo estimate of the Bayes risk under `loss` with its
    /// standard error.
    pub fn monte_carlo_bayes_risk(&self, loss: &LossSpec, samples: usize, seed: u64) -> Result<(f64, f64)> {
        let fresh = self.resample(samples, seed)?;
        let vals: Vec<f64> = fresh
            .dataset
            .points
            .rows()
            .zip(&fresh.dataset.targets)
            .map(|(x, y)| loss.value_raw(*y, self.bayes_function(x)))
            .collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Ok((mean, (var / n).sqrt()))
    }
}

fn uniform_points(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Result<Points> {
    let values = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    Points::new(d, values)
}

/// Standard normal conditioned on `|z| <= NOISE_TRUNCATION`.
fn truncated_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= NOISE_TRUNCATION {
            return z;
        }
    }
}

fn check_sizes(n: usize, d: usize) -> Result<()> {
    if n < 2 || d == 0 {
        return Err(Error::InputDomain(format!("need n >= 2 and d >= 1, got n={n}, d={d}")));
    }
    Ok(())
}

/// `x ~ U[-1,1]^d`, `y = f*(x) + sigma z` with `z` standard normal
/// truncated at `NOISE_TRUNCATION`.
pub fn generate_regression(n: usize, d: usize, target: TargetFunction, noise_sigma: f64, seed: u64) -> Result<SyntheticProblem> {
    check_sizes(n, d)?;
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::InputDomain(format!("noise sigma must be finite and >= 0, got {noise_sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = uniform_points(n, d, &mut rng)?;
    let mut targets = Vec::with_capacity(n);
    for x in points.rows() {
        let noise = if noise_sigma > 0.0 { noise_sigma * truncated_normal(&mut rng) } else { 0.0 };
        targets.push(target.eval(x) + noise);
    }
    Ok(SyntheticProblem {
        kind: ProblemKind::Regression,
        dataset: Dataset::new(points, targets)?,
        target,
        noise_sigma,
        margin: 0.0,
        bayes_risk: Some(truncated_noise_second_moment(noise_sigma)),
        domain_bound: (d as f64).sqrt(),
    })
}

/// Labels `±1` with `P(y = 1 | x) = sigmoid(margin f*(x))`.
pub fn generate_classification(n: usize, d: usize, target: TargetFunction, margin: f64, seed: u64) -> Result<SyntheticProblem> {
    check_sizes(n, d)?;
    if !(margin > 0.0) || !margin.is_finite() {
        return Err(Error::InputDomain(format!("margin scale must be positive and finite, got {margin}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = uniform_points(n, d, &mut rng)?;
    let targets = points
        .rows()
        .map(|x| {
            let p = crate::losses::sigmoid(margin * target.eval(x));
            if rng.random::<f64>() < p {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    Ok(SyntheticProblem {
        kind: ProblemKind::Classification,
        dataset: Dataset::new(points, targets)?,
        target,
        noise_sigma: 0.0,
        margin,
        bayes_risk: None,
        domain_bound: (d as f64).sqrt(),
    })
}

/// `E[(sigma Z)^2 | |Z| <= c] = sigma^2 (1 - 2 c phi(c) / (2 Phi(c) - 1))`
/// at `c = NOISE_TRUNCATION`.
pub fn truncated_noise_second_moment(sigma: f64) -> f64 {
    let c = NOISE_TRUNCATION;
    let phi = (-0.5 * c * c).exp() / (2.0 * PI).sqrt();
    // 2 Phi(c) - 1 = 1 - 2 Q(c); Q(6) ~ 1e-9, so a Mills-ratio tail bound is
    // accurate far beyond double precision needs here
    let tail = phi / c * (1.0 - 1.0 / (c * c) + 3.0 / c.powi(4));
    sigma * sigma * (1.0 - 2.0 * c * phi / (1.0 - 2.0 * tail))
}
