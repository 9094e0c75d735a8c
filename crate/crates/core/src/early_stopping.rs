//! Data-dependent early stopping: dyadic stopping-time grids, the
//! risk-matching map `Psi(m) = 1 / sum_{k<m} eta_k`, train/validation
//! splitting and hold-out selection of the stopping time.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, RkhsFunction};
use crate::losses::LossSpec;
use crate::problem::{KernelProblem, SmoothnessBound};
use crate::rkhs_gd::{run_gd_on, CapMode, GdConfig, GdTrajectory, StepSizes};
use crate::table::{fmt_num, Table};

/// Candidate stopping times with their comparator levels.
#[derive(Clone, Debug, PartialEq)]
pub struct StoppingGrid {
    /// Strictly increasing.
    pub times: Vec<usize>,
    /// `Psi(t)` for the times in reverse order, so ascending.
    pub psi_values: Vec<f64>,
    /// Largest ratio of adjacent `psi_values`; 1 for a single time.
    pub expansion_factor: f64,
}

impl StoppingGrid {
    /// `Psi(times[i])`.
    pub fn psi_of(&self, i: usize) -> f64 {
        self.psi_values[self.times.len() - 1 - i]
    }
}

/// `{1, 2, 4, ..., 2^m}` with `m` the smallest integer such that
/// `2^m eta >= n`, i.e. `m = ceil(log2 n - log2 eta)` evaluated without
/// logarithms.
pub fn build_geometric_time_grid(n: usize, eta: f64) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::InputDomain(format!("grid needs n >= 2, got {n}")));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InputDomain(format!("eta must lie in (0, 1], got {eta}")));
    }
    let mut m = 0u32;
    while (2f64.powi(m as i32)) * eta < n as f64 {
        m += 1;
        if m > 62 {
            return Err(Error::Grid(format!("grid for n={n}, eta={eta} exceeds 2^62 steps")));
        }
    }
    Ok((0..=m).map(|i| 1usize << i).collect())
}

/// The exponent `m` of [`build_geometric_time_grid`].
pub fn grid_exponent(times: &[usize]) -> u32 {
    times.last().map_or(0, |t| t.trailing_zeros())
}

pub fn risk_matching_psi(traj: &GdTrajectory, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InputDomain("Psi is undefined at m = 0".into()));
    }
    Ok(1.0 / crate::rkhs_gd::cumulative_step_sum(traj, m)?)
}

/// Grid from a step-size schedule alone.
pub fn comparator_grid_for_steps(steps: &StepSizes, times: &[usize]) -> Result<StoppingGrid> {
    if times.is_empty() {
        return Err(Error::Grid("empty stopping-time list".into()));
    }
    if times[0] == 0 || times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Grid("stopping times must be positive and strictly increasing".into()));
    }
    let first = steps.cumulative(times[0]);
    if first > 1.0 {
        return Err(Error::Grid(format!(
            "step sum {first} up to the first time exceeds 1, so the largest level is below 1"
        )));
    }
    let psi_values: Vec<f64> = times.iter().rev().map(|&t| 1.0 / steps.cumulative(t)).collect();
    let expansion_factor = psi_values.windows(2).map(|w| w[1] / w[0]).fold(1.0, f64::max);
    Ok(StoppingGrid { times: times.to_vec(), psi_values, expansion_factor })
}

pub fn comparator_grid(traj: &GdTrajectory, times: &[usize]) -> Result<StoppingGrid> {
    if let Some(&t) = times.last() {
        if t > traj.max_steps() {
            return Err(Error::Grid(format!("time {t} beyond max_steps {}", traj.max_steps())));
        }
    }
    comparator_grid_for_steps(&traj.config.step_sizes, times)
}

/// Seeded uniform permutation; the first `n1` indices form `D1`.
pub fn split_indices(n: usize, n1: usize, n2: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n1 + n2 != n || n1 == 0 || n2 == 0 {
        return Err(Error::InputDomain(format!("split sizes {n1} + {n2} must be positive and sum to {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let second = idx.split_off(n1);
    Ok((idx, second))
}

pub fn split_dataset(dataset: &Dataset, n1: usize, n2: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let (a, b) = split_indices(dataset.len(), n1, n2, seed)?;
    Ok((dataset.select(&a), dataset.select(&b)))
}

/// Mean loss of predictions, clipped at `clip_level` when the loss allows it.
pub fn clipped_risk(loss: &LossSpec, targets: &[f64], preds: &[f64], clip_level: f64) -> f64 {
    let clip = loss.is_clippable();
    let total: f64 = targets
        .iter()
        .zip(preds)
        .map(|(y, t)| {
            let t = if clip { t.clamp(-clip_level, clip_level) } else { *t };
            loss.value_raw(*y, t)
        })
        .sum();
    total / targets.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvEntry {
    pub time: usize,
    pub psi: f64,
    pub validation_risk: f64,
    pub test_risk: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvReport {
    pub selected_time: usize,
    pub entries: Vec<CvEntry>,
    pub selected_test_risk: Option<f64>,
    pub grid: StoppingGrid,
    pub clip_level: f64,
}

impl CvReport {
    pub fn validation_risks(&self) -> BTreeMap<usize, f64> {
        self.entries.iter().map(|e| (e.time, e.validation_risk)).collect()
    }

    pub fn selected_index(&self) -> usize {
        self.entries.iter().position(|e| e.time == self.selected_time).expect("selected time is on the grid")
    }

    /// Columns `t, psi, lambda, val_risk, [test_risk,] selected`. `psi` and
    /// `lambda` both carry `Psi(t)`, the comparator level of time `t`.
    pub fn to_csv(&self) -> String {
        let with_test = self.entries.iter().any(|e| e.test_risk.is_some());
        let mut header = vec!["t", "psi", "lambda", "val_risk"];
        if with_test {
            header.push("test_risk");
        }
        header.push("selected");
        let mut t = Table::new(&header);
        for e in &self.entries {
            let mut row = vec![e.time.to_string(), fmt_num(e.psi), fmt_num(e.psi), fmt_num(e.validation_risk)];
            if with_test {
                row.push(e.test_risk.map_or_else(|| "nan".to_string(), fmt_num));
            }
            row.push(u8::from(e.time == self.selected_time).to_string());
            t.push(row);
        }
        t.render()
    }
}

fn predictions_on(traj: &GdTrajectory, cross: &DMatrix<f64>, t: usize) -> Result<Vec<f64>> {
    let alpha = traj
        .snapshots
        .get(&t)
        .ok_or_else(|| Error::InputDomain(format!("no snapshot recorded at time {t}")))?;
    Ok((cross * alpha).iter().copied().collect())
}

/// Hold-out choice `t_D2 in argmin_t R_{L,D2}(clip f_{D1,t})`, ties to the
/// smallest time. Snapshots must exist at every grid time.
pub fn select_stopping_time(
    traj: &GdTrajectory,
    times: &[usize],
    validation: &Dataset,
    clip_level: f64,
    test: Option<&Dataset>,
) -> Result<CvReport> {
    validation.ensure_nonempty()?;
    let grid = comparator_grid(traj, times)?;
    let support = &traj.problem.support;
    let kernel = traj.problem.kernel;
    let val_cross = kernel.cross_gram(&validation.points, support)?;
    let test_cross = test.map(|d| kernel.cross_gram(&d.points, support)).transpose()?;
    let loss = traj.problem.loss;
    let entries: Vec<CvEntry> = times
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            let val = clipped_risk(&loss, &validation.targets, &predictions_on(traj, &val_cross, t)?, clip_level);
            let test_risk = match (&test_cross, test) {
                (Some(c), Some(d)) => Some(clipped_risk(&loss, &d.targets, &predictions_on(traj, c, t)?, clip_level)),
                _ => None,
            };
            Ok(CvEntry { time: t, psi: grid.psi_of(i), validation_risk: val, test_risk })
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, e) in entries.iter().enumerate() {
        if e.validation_risk < entries[best].validation_risk {
            best = i;
        }
    }
    Ok(CvReport {
        selected_time: entries[best].time,
        selected_test_risk: entries[best].test_risk,
        entries,
        grid,
        clip_level,
    })
}

/// `alpha = min{2b / (b(2-q) + q), b / (g + b(2 - g - t + t g))}` for
/// `b in (0,1]`, `g in (0,1)`, `t in [0,1]`, `q >= 1`.
pub fn learning_rate_exponent(beta: f64, gamma: f64, theta: f64, q: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Parameter(format!("beta must lie in (0, 1], got {beta}")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Parameter(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::Parameter(format!("theta must lie in [0, 1], got {theta}")));
    }
    if !(q >= 1.0) || !q.is_finite() {
        return Err(Error::Parameter(format!("q must be at least 1, got {q}")));
    }
    let first = 2.0 * beta / (beta * (2.0 - q) + q);
    let second = beta / (gamma + beta * (2.0 - gamma - theta + theta * gamma));
    Ok(first.min(second))
}

#[derive(Clone, Debug, PartialEq)]
pub enum GridSpec {
    Dyadic,
    Explicit(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvConfig {
    pub loss: LossSpec,
    pub kernel: KernelSpec,
    pub n1: usize,
    pub n2: usize,
    pub seed: u64,
    /// Constant step size; `None` uses `min(1, 1/M')`.
    pub eta: Option<f64>,
    pub smoothness: SmoothnessBound,
    pub grid: GridSpec,
    /// Clip level for validation risks; `None` uses `max |y|` over `D1`.
    pub clip_level: Option<f64>,
}

impl CvConfig {
    pub fn new(loss: LossSpec, kernel: KernelSpec, n1: usize, n2: usize, seed: u64) -> Self {
        Self {
            loss,
            kernel,
            n1,
            n2,
            seed,
            eta: None,
            smoothness: SmoothnessBound::Global,
            grid: GridSpec::Dyadic,
            clip_level: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CvOutcome {
    pub report: CvReport,
    pub predictor: RkhsFunction,
    pub trajectory: GdTrajectory,
}

/// Splits, trains one GD pass on `D1` with snapshots at the grid times and
/// selects on `D2`.
pub fn cv_pipeline(dataset: &Dataset, config: &CvConfig, test: Option<&Dataset>) -> Result<CvOutcome> {
    let (d1, d2) = split_dataset(dataset, config.n1, config.n2, config.seed)?;
    let clip_level = config.clip_level.unwrap_or_else(|| d1.label_range());
    let problem = KernelProblem::new(config.loss, d1, config.kernel)?;
    let eta = config.eta.unwrap_or_else(|| problem.default_step_size(config.smoothness));
    let times = match &config.grid {
        GridSpec::Dyadic => build_geometric_time_grid(problem.n(), eta)?,
        GridSpec::Explicit(t) => t.clone(),
    };
    let max = *times.last().ok_or_else(|| Error::Grid("empty stopping-time list".into()))?;
    let gd = GdConfig {
        step_sizes: StepSizes::Constant(eta),
        max_steps: max,
        record_times: times.clone(),
        cap_mode: CapMode::Strict,
        smoothness: config.smoothness,
    };
    let trajectory = run_gd_on(Arc::clone(&problem), &gd)?;
    let report = select_stopping_time(&trajectory, &times, &d2, clip_level, test)?;
    let predictor = problem.function(trajectory.snapshots[&report.selected_time].clone());
    Ok(CvOutcome { report, predictor, trajectory })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Points;
    use rand::Rng;

    fn sine_data(n: usize, noise: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ys = xs.iter().map(|x| (3.0 * x).sin() + noise * rng.random_range(-1.0..1.0)).collect();
        Dataset::new(Points::new(1, xs).unwrap(), ys).unwrap()
    }

    #[test]
    fn geometric_grid_examples() {
        assert_eq!(build_geometric_time_grid(16, 1.0).unwrap(), vec![1, 2, 4, 8, 16]);
        assert_eq!(build_geometric_time_grid(16, 0.5).unwrap(), vec![1, 2, 4, 8, 16, 32]);
        let t = build_geometric_time_grid(1000, 1.0).unwrap();
        assert_eq!(*t.last().unwrap(), 1024);
        assert_eq!(grid_exponent(&t), 10);
        assert!(build_geometric_time_grid(16, 1.5).is_err());
        assert!(build_geometric_time_grid(16, 0.0).is_err());
        assert!(build_geometric_time_grid(1, 1.0).is_err());
    }

    #[test]
    fn grid_matches_the_logarithmic_formula() {
        for n in [2usize, 3, 16, 17, 100, 1000, 4097] {
            for eta in [1.0, 0.5, 0.3, 0.1, 0.01] {
                let m = grid_exponent(&build_geometric_time_grid(n, eta).unwrap()) as f64;
                let formula = ((n as f64).log2() - eta.log2()).ceil();
                assert!((m - formula).abs() <= 1.0, "n={n} eta={eta}");
                assert!(2f64.powf(m) * eta >= n as f64);
                assert!(2f64.powf(m) <= 2.0 * n as f64 / eta);
            }
        }
    }

    #[test]
    fn psi_examples() {
        let steps = StepSizes::Constant(1.0);
        let g = comparator_grid_for_steps(&steps, &[1, 2, 4]).unwrap();
        assert_eq!(g.psi_values, vec![0.25, 0.5, 1.0]);
        assert_eq!(g.expansion_factor, 2.0);
        let g = comparator_grid_for_steps(&steps, &[1]).unwrap();
        assert_eq!((g.psi_values.clone(), g.expansion_factor), (vec![1.0], 1.0));
        let g = comparator_grid_for_steps(&StepSizes::Explicit(vec![1.0, 0.5]), &[1, 2]).unwrap();
        assert!((g.psi_values[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(g.psi_values[1], 1.0);
        assert!((g.expansion_factor - 1.5).abs() < 1e-15);
        assert!(comparator_grid_for_steps(&StepSizes::Constant(1.0), &[2, 4]).is_err());
    }

    #[test]
    fn psi_on_a_trajectory() {
        let data = sine_data(8, 0.0, 1);
        let p = KernelProblem::new(LossSpec::least_squares(1.0).unwrap(), data, KernelSpec::gaussian(1.0).unwrap()).unwrap();
        let traj = run_gd_on(p, &GdConfig::constant(0.5, 4)).unwrap();
        assert_eq!(risk_matching_psi(&traj, 4).unwrap(), 0.5);
        assert!(risk_matching_psi(&traj, 0).is_err());
        let psi: Vec<f64> = (1..=4).map(|m| risk_matching_psi(&traj, m).unwrap()).collect();
        assert!(psi.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn split_examples() {
        let data = sine_data(10, 0.1, 2);
        assert!(split_dataset(&data, 10, 0, 1).is_err());
        assert!(split_dataset(&data, 4, 5, 1).is_err());
        let (a, b) = split_dataset(&data, 5, 5, 9).unwrap();
        let (a2, b2) = split_dataset(&data, 5, 5, 9).unwrap();
        assert_eq!((a.targets.clone(), b.targets.clone()), (a2.targets, b2.targets));
        let mut joined: Vec<f64> = a.targets.iter().chain(&b.targets).copied().collect();
        let mut orig = data.targets.clone();
        joined.sort_by(f64::total_cmp);
        orig.sort_by(f64::total_cmp);
        assert_eq!(joined, orig);
    }

    #[test]
    fn learning_rate_examples() {
        assert!((learning_rate_exponent(1.0, 0.5, 1.0, 2.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        for (b, g) in [(0.3, 0.2), (0.9, 0.7), (1.0, 0.1)] {
            let a = learning_rate_exponent(b, g, 1.0, 2.0).unwrap();
            assert!((a - f64::min(b, b / (b + g))).abs() < 1e-15);
        }
        // second branch: 0.5 / (0.5 + 0.5 * 1.5) = 0.4, first: 1 / 1.5
        assert!((learning_rate_exponent(0.5, 0.5, 0.0, 1.0).unwrap() - 0.4).abs() < 1e-15);
        assert!(learning_rate_exponent(0.0, 0.5, 0.0, 1.0).is_err());
        assert!(learning_rate_exponent(0.5, 1.0, 0.0, 1.0).is_err());
        assert!(learning_rate_exponent(0.5, 0.5, 1.5, 1.0).is_err());
        assert!(learning_rate_exponent(0.5, 0.5, 0.5, 0.5).is_err());
    }

    fn cv_setup(noise: f64, seed: u64) -> CvOutcome {
        let data = sine_data(80, noise, seed);
        let test = sine_data(200, noise, seed + 1000);
        let cfg = CvConfig::new(LossSpec::least_squares(2.0).unwrap(), KernelSpec::gaussian(0.5).unwrap(), 40, 40, seed);
        cv_pipeline(&data, &cfg, Some(&test)).unwrap()
    }

    #[test]
    fn selection_is_the_grid_minimum_with_ties_to_smallest() {
        let out = cv_setup(0.3, 4);
        let min = out.report.entries.iter().map(|e| e.validation_risk).fold(f64::INFINITY, f64::min);
        assert_eq!(out.report.validation_risks()[&out.report.selected_time], min);
        let first = out.report.entries.iter().find(|e| e.validation_risk == min).unwrap();
        assert_eq!(first.time, out.report.selected_time);

        let data = sine_data(10, 0.0, 5);
        let zero_val = Dataset::new(Points::new(1, vec![0.0; 3]).unwrap(), vec![0.0; 3]).unwrap();
        let p = KernelProblem::new(LossSpec::least_squares(1.0).unwrap(), data, KernelSpec::Linear).unwrap();
        // linear kernel at x = 0 predicts 0 for every iterate
        let traj = run_gd_on(p, &GdConfig::constant(0.5, 4).with_record_times(&[1, 2, 4])).unwrap();
        let r = select_stopping_time(&traj, &[1, 2, 4], &zero_val, 1.0, None).unwrap();
        assert_eq!(r.selected_time, 1);
        let r = select_stopping_time(&traj, &[2], &zero_val, 1.0, None).unwrap();
        assert_eq!(r.selected_time, 2);
        assert!(select_stopping_time(&traj, &[3], &zero_val, 1.0, None).is_err());
    }

    #[test]
    fn oracle_gap_and_csv() {
        let out = cv_setup(0.3, 6);
        let dev = out
            .report
            .entries
            .iter()
            .map(|e| (e.validation_risk - e.test_risk.unwrap()).abs())
            .fold(0.0, f64::max);
        let best = out.report.entries.iter().map(|e| e.test_risk.unwrap()).fold(f64::INFINITY, f64::min);
        assert!(out.report.selected_test_risk.unwrap() <= best + 2.0 * dev);
        let csv = out.report.to_csv();
        assert!(csv.starts_with("t,psi,lambda,val_risk,test_risk,selected\n"));
        assert_eq!(csv.matches(",1\n").count(), 1);
        assert_eq!(csv, cv_setup(0.3, 6).report.to_csv());
    }
}
