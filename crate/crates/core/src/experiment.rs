//! End-to-end experiments: simulate trials, derive δ(N) and ε(N) curves,
//! fit the scaling exponent, and move all of it through files.
//!
//! Layout of an experiment directory:
//!
//! ```text
//! <out>/report.json                  config echo, strategy constants, file list
//! <out>/pass_rate_aggregate.csv      n, mean, stddev, count
//! <out>/ledgers/trial_0000.csv       one ledger per trial
//! <out>/curves/analysis.json         parameters used by `analyze`
//! <out>/curves/trial_0000.csv        n, m, pass_rate, delta, ln_delta, epsilon
//! <out>/curves/aggregate.csv         mean/stddev/count per quantity
//! <out>/fit.json                     scaling fit summary
//! ```

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{balanced_coefficients, build_device, pass_probability, DeviceError, NoiseChannel, DEFAULT_VISIBILITY};
use crate::linalg::fidelity_pure;
use crate::mub::{build_mub, MubError};
use crate::sampler::{run_with_sampler, CopySampler, LedgerError, RandomStream, RunLedger, SamplerError};
use crate::stats::{
    aggregate_slopes, aggregate_trials, asymptotic_epsilon, confidence_delta, default_fit_window, fit_scaling,
    slope_sigma_excess, solve_epsilon, AggregatePoint, ScalingFit, StatsError, STANDARD_QUANTUM_LIMIT,
};
use crate::strategy::{build_strategy, StrategyError, VerificationStrategy};
use crate::C64;

/// Every prefix length is analyzed up to this many copies.
pub const DENSE_GRID_LIMIT: usize = 2000;
/// Growth factor of the analysis grid beyond [`DENSE_GRID_LIMIT`].
pub const GRID_RATIO: f64 = 1.05;
/// Mean slopes shallower than this are reported as plateau-dominated.
pub const PLATEAU_SLOPE_WARNING: f64 = -0.25;

pub const CURVE_HEADER: &str = "n,m,pass_rate,delta,ln_delta,epsilon";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },
    #[error(transparent)]
    Mub(#[from] MubError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl ExperimentError {
    /// Process exit code: 2 usage/config, 3 I/O, 4 data/numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config { .. } | ExperimentError::Mub(_) | ExperimentError::Device(_) => 2,
            ExperimentError::Io { .. } => 3,
            _ => 4,
        }
    }

    fn config(field: &str, message: impl Into<String>) -> Self {
        ExperimentError::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn data(path: &Path, message: impl Into<String>) -> Self {
        ExperimentError::Data {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Formats a real with 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub d: usize,
    /// `[re, im]` per Schmidt coefficient.
    pub coefficients: Vec<[f64; 2]>,
    pub noise: NoiseChannel,
    pub n_copies: usize,
    pub n_trials: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub delta: f64,
    pub fit_window: Option<(u64, u64)>,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            d: 3,
            coefficients: balanced_coefficients(3).iter().map(|c| [c.re, c.im]).collect(),
            noise: NoiseChannel::White {
                visibility: DEFAULT_VISIBILITY,
            },
            n_copies: 5000,
            n_trials: 300,
            seed: 0,
            epsilon: 0.08,
            delta: 0.05,
            fit_window: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn parse_field<T: std::str::FromStr>(field: &str, value: &str) -> Result<T, ExperimentError> {
    value
        .parse()
        .map_err(|_| ExperimentError::config(field, format!("cannot parse `{value}`")))
}

/// Parses `nlow:nhigh`.
pub fn parse_window(value: &str) -> Result<(u64, u64), ExperimentError> {
    let (lo, hi) = value
        .split_once(':')
        .ok_or_else(|| ExperimentError::config("fit_window", format!("expected nlow:nhigh, got `{value}`")))?;
    let lo: u64 = parse_field("fit_window", lo.trim())?;
    let hi: u64 = parse_field("fit_window", hi.trim())?;
    if lo > hi {
        return Err(ExperimentError::config("fit_window", "nlow exceeds nhigh"));
    }
    Ok((lo, hi))
}

/// Parses one coefficient, `re` or `re:im`.
fn parse_coefficient(value: &str) -> Result<[f64; 2], ExperimentError> {
    match value.split_once(':') {
        Some((re, im)) => Ok([
            parse_field("coefficients", re.trim())?,
            parse_field("coefficients", im.trim())?,
        ]),
        None => Ok([parse_field("coefficients", value.trim())?, 0.0]),
    }
}

impl ExperimentConfig {
    /// Reads a `key = value` file. Blank lines and `#` comments are ignored.
    ///
    /// Keys: `d`, `coefficients` (comma-separated `re` or `re:im`), `noise`
    /// (`none`, `white`, `dephase`), `noise_param`, `n_copies`, `n_trials`,
    /// `seed`, `epsilon`, `delta`, `fit_window` (`nlow:nhigh`), `output_dir`.
    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let mut cfg = ExperimentConfig::default();
        let mut coefficients_given = false;
        let mut noise_kind: Option<String> = None;
        let mut noise_param: Option<f64> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ExperimentError::config(&format!("line {}", lineno + 1), "expected key = value")
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "d" => cfg.d = parse_field(key, value)?,
                "coefficients" => {
                    cfg.coefficients = value
                        .split(',')
                        .map(parse_coefficient)
                        .collect::<Result<_, _>>()?;
                    coefficients_given = true;
                }
                "noise" => noise_kind = Some(value.to_string()),
                "noise_param" => noise_param = Some(parse_field(key, value)?),
                "n_copies" => cfg.n_copies = parse_field(key, value)?,
                "n_trials" => cfg.n_trials = parse_field(key, value)?,
                "seed" => cfg.seed = parse_field(key, value)?,
                "epsilon" => cfg.epsilon = parse_field(key, value)?,
                "delta" => cfg.delta = parse_field(key, value)?,
                "fit_window" => cfg.fit_window = Some(parse_window(value)?),
                "output_dir" => cfg.output_dir = PathBuf::from(value),
                other => return Err(ExperimentError::config(other, "unknown key")),
            }
        }
        if !coefficients_given {
            cfg.coefficients = balanced_coefficients(cfg.d).iter().map(|c| [c.re, c.im]).collect();
        }
        if noise_kind.is_some() || noise_param.is_some() {
            let kind = noise_kind.unwrap_or_else(|| cfg.noise.kind().to_string());
            let param = noise_param.unwrap_or(match kind.as_str() {
                "white" => DEFAULT_VISIBILITY,
                _ => 0.0,
            });
            cfg.noise = NoiseChannel::from_kind(&kind, param)
                .map_err(|e| ExperimentError::config("noise", e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|source| ExperimentError::Config {
            field: "config".into(),
            message: format!("{}: {source}", path.display()),
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.n_copies < 1 {
            return Err(ExperimentError::config("n_copies", "must be at least 1"));
        }
        if self.n_trials < 1 {
            return Err(ExperimentError::config("n_trials", "must be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(ExperimentError::config("epsilon", "must lie in (0, 1)"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(ExperimentError::config("delta", "must lie in (0, 1)"));
        }
        build_mub(self.d).map_err(|e| ExperimentError::config("d", e.to_string()))?;
        if self.coefficients.len() != self.d {
            return Err(ExperimentError::config(
                "coefficients",
                format!("expected {} values, got {}", self.d, self.coefficients.len()),
            ));
        }
        Ok(())
    }

    pub fn coefficients_c64(&self) -> Vec<C64> {
        self.coefficients.iter().map(|[re, im]| C64::new(*re, *im)).collect()
    }
}

/// Prefix lengths at which curves are evaluated: every `N` up to 2000, then
/// `N ← ⌈1.05 N⌉`, always ending at `n_copies`.
pub fn analysis_grid(n_copies: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = (1..=n_copies.min(DENSE_GRID_LIMIT)).collect();
    let mut n = DENSE_GRID_LIMIT;
    while n < n_copies {
        n = ((n as f64 * GRID_RATIO).ceil() as usize).min(n_copies);
        grid.push(n);
    }
    grid
}

/// Strategy summary echoed in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub d: usize,
    pub lambda2: f64,
    pub delta_epsilon_coefficient: f64,
}

impl From<&VerificationStrategy> for StrategySummary {
    fn from(s: &VerificationStrategy) -> Self {
        Self {
            d: s.d(),
            lambda2: s.lambda2(),
            delta_epsilon_coefficient: s.rejection_coefficient(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub strategy: StrategySummary,
    pub analytic_pass_probability: f64,
    pub target_fidelity: f64,
    /// Paths relative to the experiment directory.
    pub ledger_files: Vec<String>,
    pub aggregate_file: String,
    /// Kept out of `report.json` so output trees stay reproducible.
    #[serde(skip)]
    pub duration: Duration,
}

/// Result of an in-memory simulation.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub strategy: VerificationStrategy,
    pub analytic_pass_probability: f64,
    pub target_fidelity: f64,
    pub ledgers: Vec<RunLedger>,
}

fn worker_count(jobs: usize) -> usize {
    thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(jobs)
        .max(1)
}

/// Maps `f` over `0..jobs` on scoped threads; results come back in index order.
fn par_map<T: Send, F: Fn(usize) -> T + Sync>(jobs: usize, f: F) -> Vec<T> {
    let workers = worker_count(jobs);
    let chunk = jobs.div_ceil(workers);
    let f = &f;
    thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w * chunk..((w + 1) * chunk).min(jobs))
                        .map(f)
                        .collect::<Vec<T>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

/// Runs `n_trials` ledgers; trial `t` draws from `RandomStream::new(seed, t)`.
pub fn simulate(config: &ExperimentConfig) -> Result<Simulation, ExperimentError> {
    config.validate()?;
    let strategy = build_strategy(build_mub(config.d)?)?;
    let device = build_device(config.d, &config.coefficients_c64(), config.noise)?;
    let sampler = CopySampler::new(&device, &strategy)?;
    let ledgers = par_map(config.n_trials, |t| {
        let mut stream = RandomStream::new(config.seed, t as u64);
        run_with_sampler(&sampler, config.n_copies, &mut stream)
    });
    Ok(Simulation {
        analytic_pass_probability: pass_probability(&device, &strategy)?,
        target_fidelity: fidelity_pure(device.rho(), strategy.target()).map_err(DeviceError::from)?,
        strategy,
        ledgers,
    })
}

fn trial_file_name(t: usize) -> String {
    format!("trial_{t:04}.csv")
}

fn create_writer(path: &Path) -> Result<BufWriter<fs::File>, ExperimentError> {
    fs::File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn create_dir(path: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

fn write_aggregate_single(path: &Path, points: &[AggregatePoint]) -> Result<(), ExperimentError> {
    let mut w = create_writer(path)?;
    let res: io::Result<()> = (|| {
        writeln!(w, "n,mean,stddev,count")?;
        for p in points {
            writeln!(w, "{},{},{},{}", p.n, fmt_real(p.mean), fmt_real(p.stddev), p.count)?;
        }
        w.flush()
    })();
    res.map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Simulates and writes ledgers, the pass-rate aggregate and `report.json`.
pub fn run_simulate(config: &ExperimentConfig) -> Result<(Simulation, ExperimentReport), ExperimentError> {
    let start = Instant::now();
    let sim = simulate(config)?;
    let out = &config.output_dir;
    let ledger_dir = out.join("ledgers");
    create_dir(&ledger_dir)?;

    let mut ledger_files = Vec::with_capacity(sim.ledgers.len());
    for (t, ledger) in sim.ledgers.iter().enumerate() {
        let name = trial_file_name(t);
        let path = ledger_dir.join(&name);
        let mut w = create_writer(&path)?;
        ledger
            .write_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(io_err(&path))?;
        ledger_files.push(format!("ledgers/{name}"));
    }

    let grid = analysis_grid(config.n_copies);
    let rates: Vec<Vec<(u64, f64)>> = sim
        .ledgers
        .iter()
        .map(|l| grid.iter().map(|&n| (n as u64, l.pass_rate_at(n))).collect())
        .collect();
    let aggregate = aggregate_trials(&rates)?;
    let aggregate_file = "pass_rate_aggregate.csv".to_string();
    write_aggregate_single(&out.join(&aggregate_file), &aggregate)?;

    let report = ExperimentReport {
        config: config.clone(),
        strategy: StrategySummary::from(&sim.strategy),
        analytic_pass_probability: sim.analytic_pass_probability,
        target_fidelity: sim.target_fidelity,
        ledger_files,
        aggregate_file,
        duration: start.elapsed(),
    };
    write_json(&out.join("report.json"), &report)?;
    Ok((sim, report))
}

/// One row of a per-trial curve file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub n: u64,
    pub m: u64,
    pub pass_rate: f64,
    pub delta: f64,
    pub epsilon: f64,
}

impl CurvePoint {
    pub fn ln_delta(&self) -> f64 {
        self.delta.ln()
    }
}

/// Parameters written next to the curves so `fit` can run on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisParams {
    pub d: usize,
    pub lambda2: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub trials: usize,
    pub grid_points: usize,
}

/// δ(N) at fixed ε and ε(N) at fixed δ on the analysis grid.
/// Unachievable ε (no passes yet) is recorded as NaN.
pub fn analyze_ledger(
    ledger: &RunLedger,
    epsilon: f64,
    delta: f64,
    lambda2: f64,
) -> Result<Vec<CurvePoint>, StatsError> {
    analysis_grid(ledger.len())
        .into_iter()
        .map(|n| {
            let m = ledger.passes_at(n);
            let n = n as u64;
            let eps = match solve_epsilon(n, m, delta, lambda2) {
                Ok(e) => e,
                Err(StatsError::NotAchievable { .. }) => f64::NAN,
                Err(e) => return Err(e),
            };
            Ok(CurvePoint {
                n,
                m,
                pass_rate: m as f64 / n as f64,
                delta: confidence_delta(n, m, epsilon, lambda2)?,
                epsilon: eps,
            })
        })
        .collect()
}

pub fn analyze_ledgers(
    ledgers: &[RunLedger],
    epsilon: f64,
    delta: f64,
    lambda2: f64,
) -> Result<Vec<Vec<CurvePoint>>, StatsError> {
    par_map(ledgers.len(), |t| analyze_ledger(&ledgers[t], epsilon, delta, lambda2))
        .into_iter()
        .collect()
}

pub fn write_curve(path: &Path, curve: &[CurvePoint]) -> Result<(), ExperimentError> {
    let mut w = create_writer(path)?;
    let res: io::Result<()> = (|| {
        writeln!(w, "{CURVE_HEADER}")?;
        for p in curve {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                p.n,
                p.m,
                fmt_real(p.pass_rate),
                fmt_real(p.delta),
                fmt_real(p.ln_delta()),
                fmt_real(p.epsilon)
            )?;
        }
        w.flush()
    })();
    res.map_err(io_err(path))
}

pub fn read_curve(path: &Path) -> Result<Vec<CurvePoint>, ExperimentError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines.next().transpose().map_err(io_err(path))?;
    if header.as_deref().map(str::trim_end) != Some(CURVE_HEADER) {
        return Err(ExperimentError::data(path, format!("row 1: expected header `{CURVE_HEADER}`")));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2;
        let line = line.map_err(io_err(path))?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(ExperimentError::data(path, format!("row {row}: expected 6 fields")));
        }
        let bad = |name: &str| ExperimentError::data(path, format!("row {row}: invalid {name}"));
        out.push(CurvePoint {
            n: f[0].parse().map_err(|_| bad("n"))?,
            m: f[1].parse().map_err(|_| bad("m"))?,
            pass_rate: f[2].parse().map_err(|_| bad("pass_rate"))?,
            delta: f[3].parse().map_err(|_| bad("delta"))?,
            epsilon: f[5].parse().map_err(|_| bad("epsilon"))?,
        });
    }
    Ok(out)
}

/// Column-wise aggregates of the per-trial curves.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveAggregate {
    pub pass_rate: Vec<AggregatePoint>,
    pub delta: Vec<AggregatePoint>,
    pub ln_delta: Vec<AggregatePoint>,
    pub epsilon: Vec<AggregatePoint>,
}

pub fn aggregate_curves(curves: &[Vec<CurvePoint>]) -> Result<CurveAggregate, StatsError> {
    let column = |f: fn(&CurvePoint) -> f64| -> Result<Vec<AggregatePoint>, StatsError> {
        let series: Vec<Vec<(u64, f64)>> = curves
            .iter()
            .map(|c| c.iter().map(|p| (p.n, f(p))).collect())
            .collect();
        aggregate_trials(&series)
    };
    Ok(CurveAggregate {
        pass_rate: column(|p| p.pass_rate)?,
        delta: column(|p| p.delta)?,
        ln_delta: column(|p| p.ln_delta())?,
        epsilon: column(|p| p.epsilon)?,
    })
}

fn write_curve_aggregate(path: &Path, agg: &CurveAggregate) -> Result<(), ExperimentError> {
    let mut w = create_writer(path)?;
    let res: io::Result<()> = (|| {
        writeln!(
            w,
            "n,pass_rate_mean,pass_rate_stddev,delta_mean,delta_stddev,ln_delta_mean,ln_delta_stddev,epsilon_mean,epsilon_stddev,epsilon_count"
        )?;
        for i in 0..agg.pass_rate.len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                agg.pass_rate[i].n,
                fmt_real(agg.pass_rate[i].mean),
                fmt_real(agg.pass_rate[i].stddev),
                fmt_real(agg.delta[i].mean),
                fmt_real(agg.delta[i].stddev),
                fmt_real(agg.ln_delta[i].mean),
                fmt_real(agg.ln_delta[i].stddev),
                fmt_real(agg.epsilon[i].mean),
                fmt_real(agg.epsilon[i].stddev),
                agg.epsilon[i].count
            )?;
        }
        w.flush()
    })();
    res.map_err(io_err(path))
}

fn list_trial_files(dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let entries = fs::read_dir(dir).map_err(io_err(dir))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(io_err(dir))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("trial_") && name.ends_with(".csv") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Reads `d` from `report.json` in an experiment directory.
pub fn read_report_dimension(dir: &Path) -> Result<usize, ExperimentError> {
    let path = dir.join("report.json");
    let text = fs::read_to_string(&path).map_err(|_| {
        ExperimentError::config("d", format!("no --d given and {} is unreadable", path.display()))
    })?;
    let report: ExperimentReport =
        serde_json::from_str(&text).map_err(|e| ExperimentError::data(&path, e.to_string()))?;
    Ok(report.strategy.d)
}

pub fn read_ledgers(dir: &Path) -> Result<Vec<RunLedger>, ExperimentError> {
    let ledger_dir = dir.join("ledgers");
    let ledger_dir = if ledger_dir.is_dir() { ledger_dir } else { dir.to_path_buf() };
    let files = list_trial_files(&ledger_dir)?;
    if files.is_empty() {
        return Err(ExperimentError::data(&ledger_dir, "no trial_*.csv ledgers found"));
    }
    files
        .iter()
        .map(|path| {
            let file = fs::File::open(path).map_err(io_err(path))?;
            RunLedger::read_csv(BufReader::new(file)).map_err(|e| match e {
                LedgerError::Io(source) => ExperimentError::Io {
                    path: path.clone(),
                    source,
                },
                other => ExperimentError::data(path, other.to_string()),
            })
        })
        .collect()
}

/// Output of [`run_analyze`].
#[derive(Debug, Clone)]
pub struct Analysis {
    pub params: AnalysisParams,
    pub curves: Vec<Vec<CurvePoint>>,
    pub aggregate: CurveAggregate,
}

/// Analyzes in-memory ledgers and writes `<dir>/curves/`.
pub fn write_analysis(
    dir: &Path,
    ledgers: &[RunLedger],
    d: usize,
    epsilon: f64,
    delta: f64,
) -> Result<Analysis, ExperimentError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(ExperimentError::config("epsilon", "must lie in (0, 1)"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ExperimentError::config("delta", "must lie in (0, 1)"));
    }
    let lens: Vec<usize> = ledgers.iter().map(RunLedger::len).collect();
    if lens.iter().any(|&l| l != lens[0] || l == 0) {
        return Err(ExperimentError::data(dir, "ledgers do not share the copy grid"));
    }
    let strategy = build_strategy(build_mub(d)?)?;
    let lambda2 = strategy.lambda2();
    let curves = analyze_ledgers(ledgers, epsilon, delta, lambda2)?;
    let aggregate = aggregate_curves(&curves)?;

    let curve_dir = dir.join("curves");
    create_dir(&curve_dir)?;
    for (t, curve) in curves.iter().enumerate() {
        write_curve(&curve_dir.join(trial_file_name(t)), curve)?;
    }
    write_curve_aggregate(&curve_dir.join("aggregate.csv"), &aggregate)?;
    let params = AnalysisParams {
        d,
        lambda2,
        epsilon,
        delta,
        trials: curves.len(),
        grid_points: curves[0].len(),
    };
    write_json(&curve_dir.join("analysis.json"), &params)?;
    Ok(Analysis {
        params,
        curves,
        aggregate,
    })
}

/// Reads ledgers from `dir` and writes `dir/curves/`. `d` falls back to `report.json`.
pub fn run_analyze(dir: &Path, d: Option<usize>, epsilon: f64, delta: f64) -> Result<Analysis, ExperimentError> {
    let d = match d {
        Some(d) => d,
        None => read_report_dimension(dir)?,
    };
    let ledgers = read_ledgers(dir)?;
    write_analysis(dir, &ledgers, d, epsilon, delta)
}

/// Scaling-fit summary written to `fit.json`.
///
/// `slope` and `slope_stderr` are the mean and standard deviation of the
/// per-trial slopes. `regression` is the single least-squares fit to the
/// trial-averaged curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
    pub window: (u64, u64),
    pub sigma_excess: Option<f64>,
    pub bound: f64,
    pub trials: usize,
    pub plateau_epsilon: Option<f64>,
    pub regression: ScalingFit,
    pub trial_slopes: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Fits every trial's `ε(N)` curve over a common window.
///
/// Without an override the window comes from [`default_fit_window`] applied
/// to the trial-averaged curve, with the plateau taken from the mean final
/// pass rate.
pub fn fit_curves(
    curves: &[Vec<CurvePoint>],
    lambda2: f64,
    window: Option<(u64, u64)>,
) -> Result<FitSummary, ExperimentError> {
    if curves.is_empty() {
        return Err(StatsError::DegenerateFit { usable: 0 }.into());
    }
    let aggregate = aggregate_curves(curves)?;
    let mean_curve: Vec<(f64, f64)> = aggregate.epsilon.iter().map(|p| (p.n as f64, p.mean)).collect();
    let final_rate = aggregate.pass_rate.last().map(|p| p.mean).unwrap_or(f64::NAN);
    let plateau = asymptotic_epsilon(final_rate, lambda2).ok().filter(|&p| p > 0.0);

    let window = match window {
        Some((lo, hi)) => (lo as f64, hi as f64),
        None => default_fit_window(&mean_curve, plateau).ok_or(StatsError::DegenerateFit { usable: 0 })?,
    };
    let fits: Vec<ScalingFit> = curves
        .iter()
        .map(|c| {
            let pts: Vec<(f64, f64)> = c.iter().map(|p| (p.n as f64, p.epsilon)).collect();
            fit_scaling(&pts, window)
        })
        .collect::<Result<_, _>>()?;
    let regression = fit_scaling(&mean_curve, window)?;
    let summary = aggregate_slopes(&fits);
    let intercept = fits.iter().map(|f| f.intercept).sum::<f64>() / fits.len() as f64;

    let spread = if summary.stddev > 0.0 {
        summary.stddev
    } else {
        regression.slope_stderr
    };
    let sigma_excess = slope_sigma_excess(summary.mean, spread, STANDARD_QUANTUM_LIMIT).ok();

    let mut warnings = Vec::new();
    if summary.mean > PLATEAU_SLOPE_WARNING {
        warnings.push(format!(
            "window excludes linear regime: mean slope {:.4} over N in [{}, {}] is plateau-dominated",
            summary.mean, window.0, window.1
        ));
    }
    Ok(FitSummary {
        slope: summary.mean,
        slope_stderr: summary.stddev,
        intercept,
        window: (window.0.round() as u64, window.1.round() as u64),
        sigma_excess,
        bound: STANDARD_QUANTUM_LIMIT,
        trials: summary.trials,
        plateau_epsilon: plateau,
        regression,
        trial_slopes: fits.iter().map(|f| f.slope).collect(),
        warnings,
    })
}

fn curve_dir(dir: &Path) -> PathBuf {
    let sub = dir.join("curves");
    if sub.is_dir() {
        sub
    } else {
        dir.to_path_buf()
    }
}

/// Reads `curves/` under `dir` (or `dir` itself), fits, and writes `dir/fit.json`.
pub fn run_fit(dir: &Path, window: Option<(u64, u64)>) -> Result<FitSummary, ExperimentError> {
    let cdir = curve_dir(dir);
    let params_path = cdir.join("analysis.json");
    let text = fs::read_to_string(&params_path).map_err(io_err(&params_path))?;
    let params: AnalysisParams =
        serde_json::from_str(&text).map_err(|e| ExperimentError::data(&params_path, e.to_string()))?;
    let curves: Vec<Vec<CurvePoint>> = list_trial_files(&cdir)?
        .iter()
        .map(|p| read_curve(p))
        .collect::<Result<_, _>>()?;
    if curves.len() < 3 {
        return Err(ExperimentError::data(
            &cdir,
            format!("need at least 3 trial curves, found {}", curves.len()),
        ));
    }
    let summary = fit_curves(&curves, params.lambda2, window)?;
    write_json(&dir.join("fit.json"), &summary)?;
    Ok(summary)
}

/// Simulate, analyze and fit in one go, all files under `config.output_dir`.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<(ExperimentReport, Analysis, FitSummary), ExperimentError> {
    let (sim, report) = run_simulate(config)?;
    let analysis = write_analysis(&config.output_dir, &sim.ledgers, config.d, config.epsilon, config.delta)?;
    let fit = fit_curves(&analysis.curves, analysis.params.lambda2, config.fit_window)?;
    write_json(&config.output_dir.join("fit.json"), &fit)?;
    Ok((report, analysis, fit))
}
