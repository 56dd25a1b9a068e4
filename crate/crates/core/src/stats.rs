//! Chernoff-bound confidence, infidelity inversion, scaling fits and
//! trial aggregation.
//!
//! All divergences are in nats.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::strategy::rejection_probability;

/// Absolute tolerance on `y = 1 - Δε` for [`solve_epsilon`].
pub const SOLVE_TOL: f64 = 1e-12;
pub const MAX_BISECTION_ITERS: usize = 200;
/// Leading grid points excluded from the default fit window.
pub const DEFAULT_SKIP_POINTS: usize = 20;
/// Points with `ε <= PLATEAU_FACTOR × plateau` are outside the default fit window.
pub const PLATEAU_FACTOR: f64 = 1.1;
/// Standard quantum limit for the `ε`–`N` scaling exponent.
pub const STANDARD_QUANTUM_LIMIT: f64 = -0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("confidence {delta} is not achievable with n = {n}, m = {m}")]
    NotAchievable { n: u64, m: u64, delta: f64 },
    #[error("bisection did not converge in {MAX_BISECTION_ITERS} iterations")]
    NonConvergence,
    #[error("degenerate fit: {usable} usable points")]
    DegenerateFit { usable: usize },
    #[error("trial {trial} does not share the copy grid of trial 0")]
    GridMismatch { trial: usize },
}

fn domain(msg: String) -> StatsError {
    StatsError::Domain(msg)
}

/// `a ln(a/b)` with `0 ln(0/b) = 0`.
fn xlogx_over_y(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * (a / b).ln()
    }
}

/// Bernoulli relative entropy `D(x || y)` in nats.
///
/// `y` on the boundary is accepted only when `x == y` (returns 0).
pub fn kl_divergence(x: f64, y: f64) -> Result<f64, StatsError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(domain(format!("x = {x} must lie in [0, 1]")));
    }
    if !(0.0..=1.0).contains(&y) {
        return Err(domain(format!("y = {y} must lie in [0, 1]")));
    }
    if y == 0.0 || y == 1.0 {
        return if x == y {
            Ok(0.0)
        } else {
            Err(domain(format!("y = {y} on the boundary with x = {x}")))
        };
    }
    let d = xlogx_over_y(x, y) + xlogx_over_y(1.0 - x, 1.0 - y);
    Ok(d.max(0.0))
}

/// Values of `D(x || y)` as `y -> 0+`, used as the bisection floor.
fn kl_at_floor(x: f64) -> f64 {
    if x > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

fn check_counts(n: u64, m: u64) -> Result<(), StatsError> {
    if n == 0 {
        return Err(domain("n must be at least 1".into()));
    }
    if m > n {
        return Err(domain(format!("m = {m} exceeds n = {n}")));
    }
    Ok(())
}

fn check_lambda2(lambda2: f64) -> Result<(), StatsError> {
    if (0.0..1.0).contains(&lambda2) {
        Ok(())
    } else {
        Err(domain(format!("lambda2 = {lambda2} must lie in [0, 1)")))
    }
}

/// One point on a δ-versus-N curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidencePoint {
    pub n: u64,
    pub m: u64,
    pub epsilon: f64,
    pub delta: f64,
}

/// `δ = exp(-n D(m/n || 1 - Δε))`, or 1 when `m/n <= 1 - Δε`.
pub fn confidence_delta(n: u64, m: u64, epsilon: f64, lambda2: f64) -> Result<f64, StatsError> {
    check_counts(n, m)?;
    check_lambda2(lambda2)?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(domain(format!("epsilon = {epsilon} must lie in (0, 1)")));
    }
    let x = m as f64 / n as f64;
    let y = 1.0 - rejection_probability(epsilon, lambda2);
    if x <= y {
        return Ok(1.0);
    }
    let d = kl_divergence(x, y)?;
    Ok((-(n as f64) * d).exp())
}

pub fn confidence_point(n: u64, m: u64, epsilon: f64, lambda2: f64) -> Result<ConfidencePoint, StatsError> {
    Ok(ConfidencePoint {
        n,
        m,
        epsilon,
        delta: confidence_delta(n, m, epsilon, lambda2)?,
    })
}

/// Smallest `ε` whose Chernoff confidence reaches `δ`.
///
/// Bisects `y = 1 - Δε` on `(0, m/n)`, where `n D(m/n || y)` falls
/// strictly from `+∞` to 0. The returned `ε` is taken at the lower bracket,
/// so `confidence_delta(n, m, ε) <= δ` holds up to rounding. For very few
/// copies the result can exceed 1, meaning no nontrivial fidelity bound.
pub fn solve_epsilon(n: u64, m: u64, delta: f64, lambda2: f64) -> Result<f64, StatsError> {
    check_counts(n, m)?;
    check_lambda2(lambda2)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(domain(format!("delta = {delta} must lie in (0, 1)")));
    }
    let x = m as f64 / n as f64;
    let nf = n as f64;
    let target = (1.0 / delta).ln();
    if m == 0 || nf * kl_at_floor(x) <= target {
        return Err(StatsError::NotAchievable { n, m, delta });
    }

    // g(y) = n D(x||y) - ln(1/δ): g(lo) > 0 >= g(hi).
    let g = |y: f64| -> f64 { nf * kl_divergence(x, y).unwrap_or(f64::INFINITY) - target };
    let (mut lo, mut hi) = (0.0f64, x);
    let mut iters = 0;
    // Runs past SOLVE_TOL down to adjacent floats: n·D' amplifies any slack in y.
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if iters == MAX_BISECTION_ITERS {
            if hi - lo <= SOLVE_TOL {
                break;
            }
            return Err(StatsError::NonConvergence);
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iters += 1;
    }
    Ok((1.0 - lo) / (1.0 - lambda2))
}

/// Infidelity implied by a long-run pass rate: `(1 - p) / (1 - λ₂)`.
pub fn asymptotic_epsilon(pass_rate: f64, lambda2: f64) -> Result<f64, StatsError> {
    check_lambda2(lambda2)?;
    if !(pass_rate > lambda2 && pass_rate <= 1.0) {
        return Err(domain(format!(
            "pass rate {pass_rate} must lie in ({lambda2}, 1]"
        )));
    }
    Ok((1.0 - pass_rate) / (1.0 - lambda2))
}

/// Least-squares line through `(ln n, ln ε)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
    pub fit_window: (f64, f64),
    pub points: usize,
}

/// Fits `ln ε = a + b ln n` over points with `n` inside `window` (inclusive)
/// and finite positive `ε`.
pub fn fit_scaling(points: &[(f64, f64)], window: (f64, f64)) -> Result<ScalingFit, StatsError> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(n, e)| *n >= window.0 && *n <= window.1 && *n > 0.0 && e.is_finite() && *e > 0.0)
        .map(|(n, e)| (n.ln(), e.ln()))
        .collect();
    let k = usable.len();
    if k < 3 {
        return Err(StatsError::DegenerateFit { usable: k });
    }
    let kf = k as f64;
    let mean_x = usable.iter().map(|p| p.0).sum::<f64>() / kf;
    let mean_y = usable.iter().map(|p| p.1).sum::<f64>() / kf;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(StatsError::DegenerateFit { usable: k });
    }
    let sxy: f64 = usable
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let sse: f64 = usable
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let slope_stderr = (sse / (kf - 2.0) / sxx).sqrt();
    let n_low = usable.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).exp();
    let n_high = usable.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).exp();
    Ok(ScalingFit {
        slope,
        slope_stderr,
        intercept,
        fit_window: (n_low.round(), n_high.round()),
        points: k,
    })
}

/// Default window for the power-law part of an `ε(N)` curve.
///
/// Skips the first [`DEFAULT_SKIP_POINTS`] grid points and stops before the
/// first point at or below `PLATEAU_FACTOR × plateau`. `plateau` is `None`
/// when no plateau is expected (perfect record). Returns `None` when fewer
/// than three points remain.
pub fn default_fit_window(curve: &[(f64, f64)], plateau: Option<f64>) -> Option<(f64, f64)> {
    let threshold = plateau.map_or(0.0, |p| PLATEAU_FACTOR * p);
    let kept: Vec<f64> = curve
        .iter()
        .skip(DEFAULT_SKIP_POINTS)
        .take_while(|(_, e)| !(e.is_finite() && *e <= threshold))
        .map(|(n, _)| *n)
        .collect();
    if kept.len() < 3 {
        return None;
    }
    Some((kept[0], kept[kept.len() - 1]))
}

/// How many standard errors `slope` lies below `bound`; zero if it does not.
pub fn slope_sigma_excess(slope: f64, stderr: f64, bound: f64) -> Result<f64, StatsError> {
    if !(stderr > 0.0) {
        return Err(domain(format!("stderr = {stderr} must be positive")));
    }
    if slope < bound {
        Ok((bound - slope) / stderr)
    } else {
        Ok(0.0)
    }
}

/// Pointwise summary across trials. Non-finite values are left out, and
/// `count` says how many trials contributed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregatePoint {
    pub n: u64,
    pub mean: f64,
    pub stddev: f64,
    pub count: usize,
}

/// Mean and sample standard deviation of a sequence, summed in order.
pub fn mean_stddev(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (mean, var.sqrt())
}

pub fn aggregate_trials(curves: &[Vec<(u64, f64)>]) -> Result<Vec<AggregatePoint>, StatsError> {
    let Some(first) = curves.first() else {
        return Ok(Vec::new());
    };
    for (trial, curve) in curves.iter().enumerate() {
        if curve.len() != first.len() || curve.iter().zip(first).any(|(a, b)| a.0 != b.0) {
            return Err(StatsError::GridMismatch { trial });
        }
    }
    Ok((0..first.len())
        .map(|i| {
            let values: Vec<f64> = curves
                .iter()
                .map(|c| c[i].1)
                .filter(|v| v.is_finite())
                .collect();
            let (mean, stddev) = mean_stddev(&values);
            AggregatePoint {
                n: first[i].0,
                mean,
                stddev,
                count: values.len(),
            }
        })
        .collect())
}

/// Across-trial slope statistics: the spread of per-trial slopes is the error bar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeSummary {
    pub mean: f64,
    pub stddev: f64,
    pub trials: usize,
}

pub fn aggregate_slopes(fits: &[ScalingFit]) -> SlopeSummary {
    let slopes: Vec<f64> = fits.iter().map(|f| f.slope).collect();
    let (mean, stddev) = mean_stddev(&slopes);
    SlopeSummary {
        mean,
        stddev,
        trials: slopes.len(),
    }
}
