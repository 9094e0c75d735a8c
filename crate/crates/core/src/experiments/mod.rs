//! Runnable surface: configuration, data materialization and the four run
//! modes writing CSV artifacts.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub use config::{
    parse_config, CvSpec, DataSpec, ExperimentConfig, GdSpec, LossConfig, LossName, Mode, RatesSpec, RecordSpec,
    SuiteKind, VerifySpec,
};

use crate::data::Dataset;
use crate::early_stopping::{build_geometric_time_grid, cv_pipeline, learning_rate_exponent, CvConfig, CvOutcome};
use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::problem::KernelProblem;
use crate::rkhs_gd::{run_gd_on, GdConfig, GdTrajectory, StepSizes};
use crate::synth::{generate_classification, generate_regression, SyntheticProblem};
use crate::table::{fmt_num, Table};
use crate::verify::{run_default_suite, suite_csv, SuiteConfig};

/// Exit status: success.
pub const EXIT_OK: i32 = 0;
/// Exit status: a check failed or the run hit a runtime error.
pub const EXIT_FAILURE: i32 = 1;
/// Exit status: usage or configuration error.
pub const EXIT_CONFIG: i32 = 2;

#[derive(Clone, Debug, Default)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub failed_checks: Vec<String>,
    /// Human-readable lines for the terminal.
    pub summary: Vec<String>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.failed_checks.is_empty() {
            EXIT_OK
        } else {
            EXIT_FAILURE
        }
    }
}

pub fn exit_code(result: &Result<RunOutcome>) -> i32 {
    match result {
        Ok(o) => o.exit_code(),
        Err(Error::Config(_)) => EXIT_CONFIG,
        Err(_) => EXIT_FAILURE,
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Training data and, for synthetic data, the generating problem.
pub fn materialize(config: &ExperimentConfig) -> Result<(Dataset, Option<SyntheticProblem>)> {
    let problem = match &config.data {
        DataSpec::Explicit(d) => return Ok((d.clone(), None)),
        DataSpec::Regression { n, d, target, noise_sigma } => {
            generate_regression(*n, *d, *target, *noise_sigma, config.data_seed)?
        }
        DataSpec::Classification { n, d, target, margin } => {
            generate_classification(*n, *d, *target, *margin, config.data_seed)?
        }
    };
    Ok((problem.dataset.clone(), Some(problem)))
}

/// The configured loss; the default clip level is the label bound of the
/// generating distribution, or `max |y|` for explicit data.
pub fn resolve_loss(config: &ExperimentConfig, dataset: &Dataset, synthetic: Option<&SyntheticProblem>) -> Result<LossSpec> {
    let bound = synthetic.map_or_else(|| dataset.label_range(), |p| p.natural_loss().clip_level);
    config.loss.resolve(&config.data, bound)
}

/// Runs `mode`, or the mode named in the configuration.
pub fn run(config: &ExperimentConfig, mode: Option<Mode>) -> Result<RunOutcome> {
    let mode = mode
        .or(config.mode)
        .ok_or_else(|| Error::Config("no mode given (train|cv|verify|rates)".into()))?;
    fs::create_dir_all(&config.output_dir)?;
    match mode {
        Mode::Train => run_train(config),
        Mode::Cv => run_cv(config),
        Mode::Verify => run_verify(config),
        Mode::Rates => run_rates(config),
    }
}

fn write(out: &mut RunOutcome, dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents)?;
    out.files.push(path);
    Ok(())
}

/// Trains one GD run; returns the trajectory.
pub fn train(config: &ExperimentConfig) -> Result<GdTrajectory> {
    let (dataset, synthetic) = materialize(config)?;
    let loss = resolve_loss(config, &dataset, synthetic.as_ref())?;
    let problem = KernelProblem::new(loss, dataset, config.kernel)?;
    let eta = config.gd.eta.unwrap_or_else(|| problem.default_step_size(config.gd.smoothness));
    let grid = || build_geometric_time_grid(problem.n().max(2), eta.min(1.0));
    let steps = match config.gd.steps {
        Some(s) => s,
        None => *grid()?.last().expect("non-empty grid"),
    };
    let record: Vec<usize> = match &config.gd.record {
        RecordSpec::All => (0..=steps).collect(),
        RecordSpec::Grid => {
            let mut t: Vec<usize> = grid().map(|g| g.into_iter().filter(|t| *t <= steps).collect()).unwrap_or_default();
            t.push(steps);
            t
        }
        RecordSpec::Times(t) => t.clone(),
    };
    let gd = GdConfig {
        step_sizes: StepSizes::Constant(eta),
        max_steps: steps,
        record_times: record,
        cap_mode: config.gd.cap,
        smoothness: config.gd.smoothness,
    };
    run_gd_on(Arc::clone(&problem), &gd)
}

/// Columns `step, cum_step, psi, risk, norm` at the recorded snapshots.
pub fn path_csv(traj: &GdTrajectory) -> String {
    let mut t = Table::new(&["step", "cum_step", "psi", "risk", "norm"]);
    for (&k, coeffs) in &traj.snapshots {
        let s = traj.cum_steps[k];
        let psi = if s > 0.0 { 1.0 / s } else { f64::INFINITY };
        t.push(vec![
            k.to_string(),
            fmt_num(s),
            fmt_num(psi),
            fmt_num(traj.risks[k]),
            fmt_num(traj.problem.norm(coeffs)),
        ]);
    }
    t.render()
}

fn run_train(config: &ExperimentConfig) -> Result<RunOutcome> {
    let traj = train(config)?;
    let mut out = RunOutcome::default();
    write(&mut out, &config.output_dir, "trajectory.csv", &traj.to_csv())?;
    write(&mut out, &config.output_dir, "path.csv", &path_csv(&traj))?;
    let m = traj.max_steps();
    out.summary.push(format!(
        "trained {m} steps, risk {} -> {}",
        fmt_num(traj.initial_risk()),
        fmt_num(traj.risks[m])
    ));
    if !traj.cap_violations.is_empty() {
        out.summary.push(format!("{} steps above the step-size cap", traj.cap_violations.len()));
    }
    Ok(out)
}

/// Hold-out early stopping on the configured data, with a fresh test sample
/// when `cv.test_n > 0` and the data are synthetic.
pub fn cross_validate(config: &ExperimentConfig) -> Result<(CvOutcome, Option<SyntheticProblem>)> {
    let (dataset, synthetic) = materialize(config)?;
    let loss = resolve_loss(config, &dataset, synthetic.as_ref())?;
    let n = dataset.len();
    let n1 = config.cv.n1.unwrap_or(n / 2);
    let n2 = config.cv.n2.unwrap_or(n.saturating_sub(n1));
    let test = match (&synthetic, config.cv.test_n) {
        (Some(p), t) if t > 0 => Some(p.resample(t, config.data_seed.wrapping_add(2))?.dataset),
        (None, t) if t > 0 => return Err(Error::Config("key `cv.test_n` needs synthetic data".into())),
        _ => None,
    };
    let cv = CvConfig {
        eta: config.gd.eta,
        smoothness: config.gd.smoothness,
        grid: config.cv.grid.clone(),
        clip_level: config.cv.clip,
        ..CvConfig::new(loss, config.kernel, n1, n2, config.cv.seed)
    };
    Ok((cv_pipeline(&dataset, &cv, test.as_ref())?, synthetic))
}

fn run_cv(config: &ExperimentConfig) -> Result<RunOutcome> {
    let (outcome, _) = cross_validate(config)?;
    let mut out = RunOutcome::default();
    write(&mut out, &config.output_dir, "cv_report.csv", &outcome.report.to_csv())?;
    let r = &outcome.report;
    let mut line = format!("selected t = {} of {} grid times", r.selected_time, r.entries.len());
    if let Some(t) = r.selected_test_risk {
        line.push_str(&format!(", clipped test risk {}", fmt_num(t)));
    }
    out.summary.push(line);
    Ok(out)
}

pub fn suite_config(spec: &VerifySpec) -> SuiteConfig {
    let mut cfg = match spec.suite {
        SuiteKind::Default => SuiteConfig { seed: spec.seed, ..SuiteConfig::default() },
        SuiteKind::Quick => SuiteConfig::quick(spec.seed),
    };
    cfg.sweep.seed = spec.seed;
    if let Some(k) = spec.instances {
        cfg.sweep.instances = k;
    }
    cfg
}

fn run_verify(config: &ExperimentConfig) -> Result<RunOutcome> {
    let results = run_default_suite(&suite_config(&config.verify))?;
    let mut out = RunOutcome::default();
    write(&mut out, &config.output_dir, "verify.csv", &suite_csv(&results))?;
    for r in &results {
        out.summary.push(r.summary());
        if !r.passed {
            out.failed_checks.push(r.name.clone());
        }
    }
    Ok(out)
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn run_rates(config: &ExperimentConfig) -> Result<RunOutcome> {
    let mut out = RunOutcome::default();
    let mut t = Table::new(&["beta", "gamma", "theta", "q", "alpha"]);
    for row in &config.rates.rows {
        let alpha = learning_rate_exponent(row[0], row[1], row[2], row[3])?;
        t.push(row.iter().map(|v| fmt_num(*v)).chain([fmt_num(alpha)]).collect());
        out.summary.push(format!("beta={} gamma={} theta={} q={}: alpha = {alpha}", row[0], row[1], row[2], row[3]));
    }
    write(&mut out, &config.output_dir, "rates.csv", &t.render())?;
    if !config.rates.empirical_n.is_empty() {
        let (d, target, sigma) = match config.data {
            DataSpec::Regression { d, target, noise_sigma, .. } => (d, target, noise_sigma),
            _ => return Err(Error::Config("key `rates.empirical_n` needs `data.kind = regression`".into())),
        };
        let mut e = Table::new(&["n", "selected_time", "test_risk", "excess_risk"]);
        let (mut ns, mut excess) = (Vec::new(), Vec::new());
        for (i, &n) in config.rates.empirical_n.iter().enumerate() {
            let mut c = config.clone();
            c.data = DataSpec::Regression { n, d, target, noise_sigma: sigma };
            c.data_seed = config.data_seed.wrapping_add(1000 * i as u64);
            c.cv.n1 = None;
            c.cv.n2 = None;
            c.cv.test_n = c.cv.test_n.max(2000);
            let (outcome, synthetic) = cross_validate(&c)?;
            let bayes = synthetic.and_then(|p| p.bayes_risk).unwrap_or(0.0);
            let test = outcome.report.selected_test_risk.unwrap_or(f64::NAN);
            e.push(vec![n.to_string(), outcome.report.selected_time.to_string(), fmt_num(test), fmt_num(test - bayes)]);
            ns.push(n as f64);
            excess.push(test - bayes);
        }
        write(&mut out, &config.output_dir, "empirical_rate.csv", &e.render())?;
        match log_log_slope(&ns, &excess) {
            Some(s) => out.summary.push(format!("fitted log-log slope of the excess test risk: {s:.4}")),
            None => out.summary.push("fitted slope unavailable (non-positive excess risks)".into()),
        }
    }
    Ok(out)
}
