//! Flat `key = value` configuration with dotted section keys. Lines starting
//! with `#` and blank lines are ignored; unknown and duplicate keys are
//! errors naming the key.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use crate::data::{Dataset, Points};
use crate::early_stopping::{learning_rate_exponent, GridSpec};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::losses::{LossKind, LossSpec};
use crate::problem::SmoothnessBound;
use crate::rkhs_gd::CapMode;
use crate::synth::TargetFunction;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Cv,
    Verify,
    Rates,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "cv" => Ok(Self::Cv),
            "verify" => Ok(Self::Verify),
            "rates" => Ok(Self::Rates),
            _ => Err(Error::Config(format!("unknown mode `{s}` (train|cv|verify|rates)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSpec {
    Regression { n: usize, d: usize, target: TargetFunction, noise_sigma: f64 },
    Classification { n: usize, d: usize, target: TargetFunction, margin: f64 },
    /// Points and labels given inline.
    Explicit(Dataset),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossName {
    LeastSquares,
    Logistic,
    Huber,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    /// `None` picks least squares for regression and explicit data, logistic
    /// for classification.
    pub name: Option<LossName>,
    /// `None` uses the label bound of the data.
    pub clip: Option<f64>,
    pub delta: f64,
}

impl LossConfig {
    pub fn resolve(&self, data: &DataSpec, label_bound: f64) -> Result<LossSpec> {
        let name = self.name.unwrap_or(match data {
            DataSpec::Classification { .. } => LossName::Logistic,
            _ => LossName::LeastSquares,
        });
        let clip = self.clip.unwrap_or(label_bound).max(1e-12);
        match name {
            LossName::LeastSquares => LossSpec::new(LossKind::LeastSquares, clip),
            LossName::Logistic => Ok(LossSpec::logistic()),
            LossName::Huber => LossSpec::huber(self.delta, clip),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RecordSpec {
    /// Snapshots at the dyadic stopping times.
    Grid,
    All,
    Times(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GdSpec {
    /// `None` uses `min(1, 1/M')`.
    pub eta: Option<f64>,
    /// `None` runs to the last dyadic stopping time.
    pub steps: Option<usize>,
    pub record: RecordSpec,
    pub smoothness: SmoothnessBound,
    pub cap: CapMode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvSpec {
    pub n1: Option<usize>,
    pub n2: Option<usize>,
    pub grid: GridSpec,
    pub seed: u64,
    /// Size of a fresh test sample from the same distribution, 0 for none.
    pub test_n: usize,
    pub clip: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SuiteKind {
    Default,
    Quick,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifySpec {
    pub suite: SuiteKind,
    pub seed: u64,
    pub instances: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatesSpec {
    /// `(beta, gamma, theta, q)` rows.
    pub rows: Vec<[f64; 4]>,
    /// Sample sizes of the optional empirical rate diagnostic.
    pub empirical_n: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Option<Mode>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub data: DataSpec,
    pub data_seed: u64,
    pub kernel: KernelSpec,
    pub loss: LossConfig,
    pub gd: GdSpec,
    pub cv: CvSpec,
    pub verify: VerifySpec,
    pub rates: RatesSpec,
}

impl ExperimentConfig {
    /// Replaces the base seed and every seed derived from it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.data_seed = seed;
        self.cv.seed = seed.wrapping_add(1);
        self.verify.seed = seed;
        self
    }
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

fn bad(key: &str, line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("line {line}: key `{key}`: {msg}"))
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.remove(key)
    }

    fn parse<T: FromStr>(&mut self, key: &str, what: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<T>().map(Some).map_err(|_| bad(key, line, format!("expected {what}, got `{v}`"))),
        }
    }

    fn float(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(Some(x)),
                _ => Err(bad(key, line, format!("expected a finite number, got `{v}`"))),
            },
        }
    }

    fn int(&mut self, key: &str) -> Result<Option<usize>> {
        self.parse(key, "a non-negative integer")
    }

    fn seed(&mut self, key: &str) -> Result<Option<u64>> {
        self.parse(key, "a non-negative integer")
    }

    fn word(&mut self, key: &str, allowed: &[&str]) -> Result<Option<(usize, String)>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) if allowed.contains(&v.as_str()) => Ok(Some((line, v))),
            Some((line, v)) => Err(bad(key, line, format!("expected one of {}, got `{v}`", allowed.join("|")))),
        }
    }

    fn list<T: FromStr>(&mut self, key: &str, sep: char, what: &str) -> Result<Option<Vec<T>>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => parse_list(&v, sep).map(Some).ok_or_else(|| bad(key, line, format!("expected a list of {what}, got `{v}`"))),
        }
    }
}

fn parse_list<T: FromStr>(v: &str, sep: char) -> Option<Vec<T>> {
    v.split(sep)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().ok())
        .collect()
}

/// Parses configuration text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {line}: expected `key = value`, got `{s}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Config(format!("line {line}: empty key")));
        }
        if map.insert(k.to_string(), (line, v.to_string())).is_some() {
            return Err(Error::Config(format!("line {line}: key `{k}` given twice")));
        }
    }
    let mut e = Entries { map };

    let mode = match e.take("mode") {
        None => None,
        Some((line, v)) => Some(v.parse::<Mode>().map_err(|_| bad("mode", line, format!("unknown mode `{v}`")))?),
    };
    let output_dir = e.take("output.dir").map_or_else(|| PathBuf::from("out"), |(_, v)| PathBuf::from(v));
    let seed = e.seed("seed")?.unwrap_or(0);

    let data = parse_data(&mut e)?;
    let data_seed = e.seed("data.seed")?.unwrap_or(seed);
    let kernel = parse_kernel(&mut e)?;
    let loss = parse_loss(&mut e)?;
    let gd = parse_gd(&mut e)?;
    let cv = parse_cv(&mut e, seed)?;
    let verify = parse_verify(&mut e, seed)?;
    let rates = parse_rates(&mut e)?;

    if let Some((key, (line, _))) = e.map.into_iter().next() {
        return Err(Error::Config(format!("line {line}: unknown key `{key}`")));
    }
    Ok(ExperimentConfig { mode, output_dir, seed, data, data_seed, kernel, loss, gd, cv, verify, rates })
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Config(format!("key `{key}`: must be positive, got {v}")))
    }
}

fn parse_data(e: &mut Entries) -> Result<DataSpec> {
    let kind = e.word("data.kind", &["regression", "classification", "explicit"])?.map(|(_, v)| v);
    let kind = kind.as_deref().unwrap_or("regression");
    let n = e.int("data.n")?;
    let d = e.int("data.d")?;
    let target = match e.take("data.target") {
        None => TargetFunction::Sine,
        Some((line, v)) => v.parse().map_err(|err| bad("data.target", line, err))?,
    };
    let noise_sigma = e.float("data.noise_sigma")?.unwrap_or(0.1);
    let margin = e.float("data.margin")?.unwrap_or(2.0);
    let x = e.take("data.x");
    let y = e.take("data.y");
    if kind == "explicit" {
        let (xl, xs) = x.ok_or_else(|| Error::Config("key `data.x` required for explicit data".into()))?;
        let (yl, ys) = y.ok_or_else(|| Error::Config("key `data.y` required for explicit data".into()))?;
        let rows: Vec<Vec<f64>> = xs
            .split(';')
            .map(|r| parse_list::<f64>(r, ','))
            .collect::<Option<_>>()
            .ok_or_else(|| bad("data.x", xl, "expected rows `a,b;c,d` of numbers"))?;
        let targets = parse_list::<f64>(&ys, ',').ok_or_else(|| bad("data.y", yl, "expected a list of numbers"))?;
        let points = Points::from_rows(&rows).map_err(|err| bad("data.x", xl, err))?;
        let dataset = Dataset::new(points, targets).map_err(|err| bad("data.y", yl, err))?;
        return Ok(DataSpec::Explicit(dataset));
    }
    if let Some((line, _)) = x.or(y) {
        return Err(Error::Config(format!("line {line}: keys `data.x`/`data.y` need `data.kind = explicit`")));
    }
    let (n, d) = (n.unwrap_or(200), d.unwrap_or(1));
    if n < 2 || d < 1 {
        return Err(Error::Config(format!("keys `data.n`/`data.d`: need n >= 2 and d >= 1, got n={n}, d={d}")));
    }
    if kind == "classification" {
        Ok(DataSpec::Classification { n, d, target, margin: positive("data.margin", margin)? })
    } else {
        if noise_sigma < 0.0 {
            return Err(Error::Config(format!("key `data.noise_sigma`: must be >= 0, got {noise_sigma}")));
        }
        Ok(DataSpec::Regression { n, d, target, noise_sigma })
    }
}

fn parse_kernel(e: &mut Entries) -> Result<KernelSpec> {
    let name = e.word("kernel.name", &["gaussian", "linear", "polynomial"])?.map(|(_, v)| v);
    let sigma = e.float("kernel.sigma")?;
    let degree = e.int("kernel.degree")?;
    let offset = e.float("kernel.offset")?;
    let cfg = |err: Error| Error::Config(format!("kernel: {err}"));
    match name.as_deref().unwrap_or("gaussian") {
        "gaussian" => KernelSpec::gaussian(sigma.unwrap_or(1.0)).map_err(cfg),
        "linear" => Ok(KernelSpec::Linear),
        _ => KernelSpec::polynomial(degree.unwrap_or(2) as u32, offset.unwrap_or(1.0)).map_err(cfg),
    }
}

fn parse_loss(e: &mut Entries) -> Result<LossConfig> {
    let name = e.word("loss.name", &["least_squares", "logistic", "huber"])?.map(|(_, v)| match v.as_str() {
        "least_squares" => LossName::LeastSquares,
        "logistic" => LossName::Logistic,
        _ => LossName::Huber,
    });
    let clip = e.float("loss.clip")?.map(|c| positive("loss.clip", c)).transpose()?;
    let delta = positive("loss.delta", e.float("loss.delta")?.unwrap_or(1.0))?;
    Ok(LossConfig { name, clip, delta })
}

fn parse_gd(e: &mut Entries) -> Result<GdSpec> {
    let eta = match e.take("gd.eta") {
        None => None,
        Some((_, v)) if v == "auto" => None,
        Some((line, v)) => {
            let x: f64 = v.parse().map_err(|_| bad("gd.eta", line, format!("expected a number or `auto`, got `{v}`")))?;
            Some(positive("gd.eta", x)?)
        }
    };
    let steps = e.int("gd.steps")?;
    let record = match e.take("gd.record") {
        None => RecordSpec::Grid,
        Some((_, v)) if v == "grid" => RecordSpec::Grid,
        Some((_, v)) if v == "all" => RecordSpec::All,
        Some((line, v)) => RecordSpec::Times(
            parse_list(&v, ',').ok_or_else(|| bad("gd.record", line, format!("expected grid|all or a list of steps, got `{v}`")))?,
        ),
    };
    let smoothness = match e.word("gd.smoothness", &["global", "data"])?.map(|(_, v)| v) {
        Some(v) if v == "data" => SmoothnessBound::DataLocal,
        _ => SmoothnessBound::Global,
    };
    let cap = match e.word("gd.cap", &["strict", "warn"])?.map(|(_, v)| v) {
        Some(v) if v == "warn" => CapMode::Warn,
        _ => CapMode::Strict,
    };
    Ok(GdSpec { eta, steps, record, smoothness, cap })
}

fn parse_cv(e: &mut Entries, seed: u64) -> Result<CvSpec> {
    let n1 = e.int("cv.n1")?;
    let n2 = e.int("cv.n2")?;
    let grid = match e.take("cv.grid") {
        None => GridSpec::Dyadic,
        Some((_, v)) if v == "dyadic" => GridSpec::Dyadic,
        Some((line, v)) => {
            let list = v.strip_prefix("explicit:").and_then(|l| parse_list::<usize>(l, ','));
            match list {
                Some(t) if !t.is_empty() => GridSpec::Explicit(t),
                _ => return Err(bad("cv.grid", line, format!("expected dyadic or explicit:t1,t2,..., got `{v}`"))),
            }
        }
    };
    let cv_seed = e.seed("cv.seed")?.unwrap_or(seed.wrapping_add(1));
    let test_n = e.int("cv.test_n")?.unwrap_or(0);
    let clip = e.float("cv.clip")?.map(|c| positive("cv.clip", c)).transpose()?;
    Ok(CvSpec { n1, n2, grid, seed: cv_seed, test_n, clip })
}

fn parse_verify(e: &mut Entries, seed: u64) -> Result<VerifySpec> {
    let suite = match e.word("verify.suite", &["default", "quick"])?.map(|(_, v)| v) {
        Some(v) if v == "quick" => SuiteKind::Quick,
        _ => SuiteKind::Default,
    };
    let vseed = e.seed("verify.seed")?.unwrap_or(seed);
    let instances = e.int("verify.instances")?;
    Ok(VerifySpec { suite, seed: vseed, instances })
}

fn parse_rates(e: &mut Entries) -> Result<RatesSpec> {
    let mut rows = Vec::new();
    if let Some((line, v)) = e.take("rates.rows") {
        for chunk in v.split(';').map(str::trim).filter(|c| !c.is_empty()) {
            let vals = parse_list::<f64>(chunk, ',').filter(|r| r.len() == 4).ok_or_else(|| {
                bad("rates.rows", line, format!("expected rows `beta,gamma,theta,q` separated by `;`, got `{chunk}`"))
            })?;
            let row = [vals[0], vals[1], vals[2], vals[3]];
            learning_rate_exponent(row[0], row[1], row[2], row[3]).map_err(|err| bad("rates.rows", line, err))?;
            rows.push(row);
        }
    }
    let empirical_n = e.list("rates.empirical_n", ',', "sample sizes")?.unwrap_or_default();
    Ok(RatesSpec { rows, empirical_n })
}
