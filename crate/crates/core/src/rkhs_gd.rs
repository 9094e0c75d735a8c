//! Gradient descent `f_{k+1} = f_k - eta_k grad R_D(f_k)` on the empirical
//! risk in an RKHS, started at `f_0 = 0`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::Arc;

use nalgebra::DVector;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, RkhsFunction};
use crate::losses::LossSpec;
use crate::problem::{KernelProblem, SmoothnessBound};
use crate::table::{fmt_num, Table};

#[derive(Clone, Debug, PartialEq)]
pub enum StepSizes {
    Constant(f64),
    Explicit(Vec<f64>),
}

impl StepSizes {
    pub fn eta(&self, k: usize) -> Option<f64> {
        match self {
            Self::Constant(eta) => Some(*eta),
            Self::Explicit(list) => list.get(k).copied(),
        }
    }

    /// `S_m = sum_{k<m} eta_k`. For constant steps this is the single
    /// product `m * eta`, which is exact whenever `m` is a power of two.
    pub fn cumulative(&self, m: usize) -> f64 {
        match self {
            Self::Constant(eta) => m as f64 * eta,
            Self::Explicit(list) => list.iter().take(m).sum(),
        }
    }

    fn validate(&self, max_steps: usize) -> Result<()> {
        let bad = |v: f64| !(v > 0.0) || !v.is_finite();
        match self {
            Self::Constant(eta) if bad(*eta) => {
                Err(Error::Config(format!("step size must be positive and finite, got {eta}")))
            }
            Self::Explicit(list) => {
                if list.len() < max_steps {
                    return Err(Error::Config(format!(
                        "{} explicit step sizes for {max_steps} steps",
                        list.len()
                    )));
                }
                if let Some(v) = list.iter().find(|v| bad(**v)) {
                    return Err(Error::Config(format!("step size must be positive and finite, got {v}")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CapMode {
    /// Reject step sizes above `1/M'`.
    #[default]
    Strict,
    /// Accept them and record the offending steps.
    Warn,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GdConfig {
    pub step_sizes: StepSizes,
    pub max_steps: usize,
    /// Sorted snapshot indices within `[0, max_steps]`; index 0 is always kept.
    pub record_times: Vec<usize>,
    pub cap_mode: CapMode,
    pub smoothness: SmoothnessBound,
}

impl GdConfig {
    pub fn constant(eta: f64, max_steps: usize) -> Self {
        Self {
            step_sizes: StepSizes::Constant(eta),
            max_steps,
            record_times: vec![0, max_steps],
            cap_mode: CapMode::Strict,
            smoothness: SmoothnessBound::Global,
        }
    }

    pub fn record_all(mut self) -> Self {
        self.record_times = (0..=self.max_steps).collect();
        self
    }

    pub fn with_record_times(mut self, times: &[usize]) -> Self {
        self.record_times = times.to_vec();
        self
    }

    fn normalized_record_times(&self) -> Result<Vec<usize>> {
        let mut times = self.record_times.clone();
        times.push(0);
        times.sort_unstable();
        times.dedup();
        if let Some(&t) = times.last() {
            if t > self.max_steps {
                return Err(Error::Config(format!(
                    "record time {t} beyond max_steps {}",
                    self.max_steps
                )));
            }
        }
        Ok(times)
    }
}

/// A gradient-descent run with risks at every step and coefficient
/// snapshots at the recorded indices.
#[derive(Clone, Debug)]
pub struct GdTrajectory {
    pub config: GdConfig,
    pub problem: Arc<KernelProblem>,
    pub snapshots: BTreeMap<usize, DVector<f64>>,
    /// `R_D(f_k)` for `k = 0..=max_steps`.
    pub risks: Vec<f64>,
    /// `S_k` for `k = 0..=max_steps`, with `S_0 = 0`.
    pub cum_steps: Vec<f64>,
    /// `M'` used for the step-size cap.
    pub risk_smoothness: f64,
    /// Steps whose size exceeded `1/M'` (warn mode only).
    pub cap_violations: Vec<usize>,
}

/// Runs the recursion, calling `on_iterate(k, alpha_k, K alpha_k)` for
/// every `k = 0..=max_steps`; returns the risk sequence.
fn gd_loop(
    problem: &KernelProblem,
    steps: &StepSizes,
    max_steps: usize,
    mut on_iterate: impl FnMut(usize, &DVector<f64>, &DVector<f64>),
) -> Result<Vec<f64>> {
    let mut alpha = DVector::zeros(problem.n());
    let mut risks = Vec::with_capacity(max_steps + 1);
    for k in 0..=max_steps {
        let preds = problem.predictions(&alpha);
        risks.push(problem.risk_of_predictions(&preds));
        on_iterate(k, &alpha, &preds);
        if k == max_steps {
            break;
        }
        let g = problem.gradient_of_predictions(&preds);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient at step {k}")));
        }
        let eta = steps.eta(k).expect("validated step list");
        alpha.axpy(-eta, &g, 1.0);
    }
    Ok(risks)
}

impl GdTrajectory {
    pub fn max_steps(&self) -> usize {
        self.config.max_steps
    }

    pub fn eta(&self, k: usize) -> f64 {
        self.config.step_sizes.eta(k).unwrap_or(f64::NAN)
    }

    pub fn initial_risk(&self) -> f64 {
        self.risks[0]
    }

    /// Coefficients of `f_k`, replayed from the nearest earlier snapshot if
    /// `k` was not recorded.
    pub fn iterate(&self, k: usize) -> Result<DVector<f64>> {
        if k > self.max_steps() {
            return Err(Error::InputDomain(format!("step {k} beyond max_steps {}", self.max_steps())));
        }
        let (&start, base) = self.snapshots.range(..=k).next_back().expect("snapshot 0 is always recorded");
        let mut alpha = base.clone();
        for j in start..k {
            let g = self.problem.gradient_of_predictions(&self.problem.predictions(&alpha));
            alpha.axpy(-self.eta(j), &g, 1.0);
        }
        Ok(alpha)
    }

    pub fn function(&self, k: usize) -> Result<RkhsFunction> {
        Ok(self.problem.function(self.iterate(k)?))
    }

    /// Re-runs the recursion up to `until`, handing every iterate and its
    /// predictions to `visit`. Produces bit-identical iterates to the
    /// original run.
    pub fn replay(
        &self,
        until: usize,
        visit: impl FnMut(usize, &DVector<f64>, &DVector<f64>),
    ) -> Result<()> {
        let until = until.min(self.max_steps());
        gd_loop(&self.problem, &self.config.step_sizes, until, visit).map(|_| ())
    }

    pub fn norms_at(&self, times: &[usize]) -> Result<Vec<f64>> {
        times.iter().map(|&t| Ok(self.problem.norm(&self.iterate(t)?))).collect()
    }

    /// CSV with columns `step, eta, cum_step, risk`; `eta` is the size of
    /// the step that produced row `step` (0 for the initial row).
    pub fn to_csv(&self) -> String {
        let mut t = Table::new(&["step", "eta", "cum_step", "risk"]);
        for k in 0..=self.max_steps() {
            let eta = if k == 0 { 0.0 } else { self.eta(k - 1) };
            t.push(vec![k.to_string(), fmt_num(eta), fmt_num(self.cum_steps[k]), fmt_num(self.risks[k])]);
        }
        t.render()
    }

    /// Binary snapshot file: a header line `n count idx_1 ... idx_count`
    /// followed by `count * n` little-endian f64 coefficients.
    pub fn write_snapshots(&self, mut out: impl Write) -> Result<()> {
        let mut header = format!("{} {}", self.problem.n(), self.snapshots.len());
        for k in self.snapshots.keys() {
            header.push_str(&format!(" {k}"));
        }
        header.push('\n');
        out.write_all(header.as_bytes())?;
        for coeffs in self.snapshots.values() {
            for v in coeffs.iter() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Reads a file produced by [`GdTrajectory::write_snapshots`].
pub fn read_snapshots(mut input: impl Read) -> Result<BTreeMap<usize, DVector<f64>>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let nl = bytes
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| Error::InputDomain("snapshot file without header".into()))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|e| Error::InputDomain(e.to_string()))?;
    let fields: Vec<usize> = header
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| Error::InputDomain(format!("bad header field {s:?}"))))
        .collect::<Result<_>>()?;
    let (n, count) = match fields.as_slice() {
        [n, count, ..] => (*n, *count),
        _ => return Err(Error::InputDomain("snapshot header too short".into())),
    };
    if fields.len() != count + 2 {
        return Err(Error::InputDomain("snapshot header index count mismatch".into()));
    }
    let body = &bytes[nl + 1..];
    if body.len() != count * n * 8 {
        return Err(Error::InputDomain("snapshot body length mismatch".into()));
    }
    let mut out = BTreeMap::new();
    for (s, &idx) in fields[2..].iter().enumerate() {
        let v = DVector::from_iterator(
            n,
            (0..n).map(|i| {
                let off = (s * n + i) * 8;
                f64::from_le_bytes(body[off..off + 8].try_into().unwrap())
            }),
        );
        out.insert(idx, v);
    }
    Ok(out)
}

/// `R_D(f) = (1/n) sum_i L(y_i, f(x_i))` for an arbitrary RKHS function.
pub fn empirical_risk(loss: &LossSpec, dataset: &Dataset, f: &RkhsFunction) -> Result<f64> {
    dataset.ensure_nonempty()?;
    let mut total = 0.0;
    for (x, y) in dataset.points.rows().zip(&dataset.targets) {
        total += loss.value(*y, f.eval(x)?)?;
    }
    Ok(total / dataset.len() as f64)
}

/// Coefficients `g` of `grad R_D(f) = sum_i g_i k(x_i, .)`; requires `f`
/// to be supported on the dataset points.
pub fn risk_gradient_coeffs(loss: &LossSpec, dataset: &Dataset, f: &RkhsFunction) -> Result<DVector<f64>> {
    dataset.ensure_nonempty()?;
    if f.coeffs.len() != dataset.len() || *f.support != dataset.points {
        return Err(Error::Contract("function support differs from the dataset points".into()));
    }
    let n = dataset.len() as f64;
    let preds: Vec<f64> = dataset.points.rows().map(|x| f.eval(x)).collect::<Result<_>>()?;
    let mut g = DVector::zeros(dataset.len());
    for (i, (t, y)) in preds.iter().zip(&dataset.targets).enumerate() {
        g[i] = loss.derivative(*y, *t)? / n;
    }
    Ok(g)
}

/// `alpha - eta g`.
pub fn gd_step(f: &RkhsFunction, g: &DVector<f64>, eta: f64) -> Result<RkhsFunction> {
    if g.len() != f.coeffs.len() {
        return Err(Error::DimensionMismatch { expected: f.coeffs.len(), got: g.len() });
    }
    if g.iter().any(|v| v.is_nan()) || eta.is_nan() {
        return Err(Error::Numeric("NaN in gradient step".into()));
    }
    Ok(RkhsFunction { support: f.support.clone(), coeffs: &f.coeffs - g * eta, kernel: f.kernel })
}

pub fn run_gd(loss: &LossSpec, dataset: &Dataset, kernel: &KernelSpec, config: &GdConfig) -> Result<GdTrajectory> {
    let problem = KernelProblem::new(*loss, dataset.clone(), *kernel)?;
    run_gd_on(problem, config)
}

/// [`run_gd`] on a prepared problem whose Gram matrix is reused.
pub fn run_gd_on(problem: Arc<KernelProblem>, config: &GdConfig) -> Result<GdTrajectory> {
    config.step_sizes.validate(config.max_steps)?;
    let record = config.normalized_record_times()?;
    let risk_smoothness = problem.risk_smoothness(config.smoothness);
    let cap = 1.0 / risk_smoothness;
    let mut cap_violations = Vec::new();
    for k in 0..config.max_steps {
        let eta = config.step_sizes.eta(k).expect("validated");
        if eta > cap * (1.0 + 1e-12) {
            match config.cap_mode {
                CapMode::Strict => {
                    return Err(Error::Config(format!(
                        "step size {eta} at step {k} exceeds 1/M' = {cap}"
                    )))
                }
                CapMode::Warn => cap_violations.push(k),
            }
        }
    }
    let mut snapshots = BTreeMap::new();
    let mut next = 0usize;
    let risks = gd_loop(&problem, &config.step_sizes, config.max_steps, |k, alpha, _| {
        if next < record.len() && record[next] == k {
            snapshots.insert(k, alpha.clone());
            next += 1;
        }
    })?;
    let cum_steps = (0..=config.max_steps).map(|m| config.step_sizes.cumulative(m)).collect();
    Ok(GdTrajectory {
        config: config.clone(),
        problem,
        snapshots,
        risks,
        cum_steps,
        risk_smoothness,
        cap_violations,
    })
}

/// Linear interpolation `f_t = f_{[t]} - (t - [t]) eta_{[t]} grad R_D(f_{[t]})`.
pub fn interpolate(traj: &GdTrajectory, t: f64) -> Result<RkhsFunction> {
    if !(t >= 0.0) || t > traj.max_steps() as f64 {
        return Err(Error::InputDomain(format!("time {t} outside [0, {}]", traj.max_steps())));
    }
    let base = t.floor() as usize;
    let frac = t - base as f64;
    let alpha = traj.iterate(base)?;
    if frac == 0.0 {
        return Ok(traj.problem.function(alpha));
    }
    let g = traj.problem.gradient_of_predictions(&traj.problem.predictions(&alpha));
    Ok(traj.problem.function(alpha - g * (frac * traj.eta(base))))
}

pub fn cumulative_step_sum(traj: &GdTrajectory, m: usize) -> Result<f64> {
    if m == 0 || m > traj.max_steps() {
        return Err(Error::InputDomain(format!("step count {m} outside [1, {}]", traj.max_steps())));
    }
    Ok(traj.cum_steps[m])
}
