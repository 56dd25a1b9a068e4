//! Acceptance suite. Each test checks one criterion at its pinned
//! tolerance and prints a `[PASS]`/`[FAIL]` line.
//!
//! Run with `cargo test -p qsv-core --test acceptance -- --nocapture --test-threads 1`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use qsv_core::device::{balanced_coefficients, build_device, pass_probability, NoiseChannel};
use qsv_core::experiment::{analyze_ledgers, fit_curves, run_pipeline, simulate, ExperimentConfig};
use qsv_core::linalg::{fidelity_pure, hermitian_eigen};
use qsv_core::mub::{build_mub, maximally_entangled_state};
use qsv_core::sampler::{run_copies, RandomStream};
use qsv_core::stats::{
    asymptotic_epsilon, confidence_delta, fit_scaling, kl_divergence, slope_sigma_excess, solve_epsilon,
};
use qsv_core::strategy::{build_strategy, min_copies, VerificationStrategy};

fn qutrit() -> VerificationStrategy {
    build_strategy(build_mub(3).unwrap()).unwrap()
}

/// Prints a line per check, then fails the test if any check failed.
struct Criterion {
    id: &'static str,
    failures: Vec<String>,
}

impl Criterion {
    fn new(id: &'static str) -> Self {
        Self {
            id,
            failures: Vec::new(),
        }
    }

    fn check(&mut self, name: &str, ok: bool, detail: String) {
        let tag = if ok { "PASS" } else { "FAIL" };
        println!("[{tag}] {} {name}: {detail}", self.id);
        if !ok {
            self.failures.push(format!("{name}: {detail}"));
        }
    }

    fn finish(self) {
        assert!(self.failures.is_empty(), "{} failed: {:?}", self.id, self.failures);
    }
}

#[test]
fn criterion_1_strategy_constants() {
    let mut c = Criterion::new("C1");
    let s = qutrit();
    let eig = hermitian_eigen(s.omega()).unwrap();
    let l1 = eig.eigenvalues[0];
    let l2 = eig.eigenvalues[1];
    let overlap = eig.eigenvectors[0].inner(s.target()).unwrap().norm_sqr();
    c.check("lambda2 = 0.25 (1e-9)", (l2 - 0.25).abs() <= 1e-9, format!("{l2:.15}"));
    c.check("lambda1 = 1 (1e-10)", (l1 - 1.0).abs() <= 1e-10, format!("{l1:.15}"));
    c.check(
        "top eigenvector fidelity with target >= 1 - 1e-9",
        overlap >= 1.0 - 1e-9,
        format!("{overlap:.15}"),
    );
    c.check(
        "delta-epsilon coefficient = 0.75",
        (s.rejection_coefficient() - 0.75).abs() <= 1e-9,
        format!("{:.15}", s.rejection_coefficient()),
    );
    c.finish();
}

#[test]
fn criterion_2_mub_validity() {
    let mut c = Criterion::new("C2");
    let set = build_mub(3).unwrap();
    c.check(
        "qutrit orthonormality (1e-12)",
        set.orthonormality_error() <= 1e-12,
        format!("{:.3e}", set.orthonormality_error()),
    );
    c.check(
        "qutrit unbiasedness 1/3 (1e-10)",
        set.unbiasedness_error() <= 1e-10,
        format!("{:.3e}", set.unbiasedness_error()),
    );
    for d in [2, 5, 7] {
        let set = build_mub(d).unwrap();
        let ok = set.bases().len() == d + 1 && set.orthonormality_error() <= 1e-12 && set.unbiasedness_error() <= 1e-10;
        c.check(
            &format!("d = {d} generic construction"),
            ok,
            format!(
                "{} bases, orth {:.3e}, unbiased {:.3e}",
                set.bases().len(),
                set.orthonormality_error(),
                set.unbiasedness_error()
            ),
        );
    }
    c.finish();
}

#[test]
fn criterion_3_sample_complexity() {
    let mut c = Criterion::new("C3");
    let n = min_copies(0.08, 0.05, 0.25).unwrap();
    c.check("min_copies(0.08, 0.05, 0.25) = 50", n == 50, format!("{n}"));
    c.finish();
}

#[test]
fn criterion_4_operating_point() {
    let mut c = Criterion::new("C4");
    let n = 1190u64;
    let m = (0.9563 * n as f64).round() as u64;
    let delta = confidence_delta(n, m, 0.08, 0.25).unwrap();
    c.check(
        "delta(1190, 0.9563, 0.08) in [0.040, 0.050]",
        (0.040..=0.050).contains(&delta),
        format!("m = {m}, delta = {delta:.6}"),
    );
    c.finish();
}

#[test]
fn criterion_5_fidelity_inference() {
    let mut c = Criterion::new("C5");
    let eps = asymptotic_epsilon(0.9568, 0.25).unwrap();
    c.check("asymptotic epsilon = 0.0576 (1e-12)", (eps - 0.0576).abs() <= 1e-12, format!("{eps:.15}"));
    c.check(
        "implied fidelity = 0.9424",
        (1.0 - eps - 0.9424).abs() <= 1e-12,
        format!("{:.15}", 1.0 - eps),
    );
    c.finish();
}

#[test]
fn criterion_6_monte_carlo_consistency() {
    let mut c = Criterion::new("C6");
    let s = qutrit();
    let dev = build_device(3, &balanced_coefficients(3), NoiseChannel::White { visibility: 0.9352 }).unwrap();
    let p = pass_probability(&dev, &s).unwrap();
    c.check("analytic pass probability = 0.9568 (1e-12)", (p - 0.9568).abs() <= 1e-12, format!("{p:.15}"));
    let n = 1_000_000usize;
    let ledger = run_copies(&dev, &s, n, &mut RandomStream::new(2024, 0)).unwrap();
    let rate = ledger.total_passes() as f64 / n as f64;
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    c.check(
        "1e6-copy empirical rate within 5 sigma",
        (rate - p).abs() <= 5.0 * sigma,
        format!("rate {rate:.6}, |diff| {:.2e}, 5 sigma {:.2e}", (rate - p).abs(), 5.0 * sigma),
    );
    c.finish();
}

#[test]
fn criterion_7a_ideal_slope() {
    let mut c = Criterion::new("C7a");
    let s = qutrit();
    let dev = build_device(3, &balanced_coefficients(3), NoiseChannel::None).unwrap();
    let ledger = run_copies(&dev, &s, 10_000, &mut RandomStream::new(7, 0)).unwrap();
    let points: Vec<(f64, f64)> = (100..=10_000)
        .map(|n| {
            let m = ledger.passes_at(n);
            (n as f64, solve_epsilon(n as u64, m, 0.05, s.lambda2()).unwrap())
        })
        .collect();
    let fit = fit_scaling(&points, (100.0, 10_000.0)).unwrap();
    c.check(
        "perfect-record slope over N in [100, 10000] within [-1.00, -0.99]",
        (-1.0..=-0.99).contains(&fit.slope),
        format!("slope {:.6}", fit.slope),
    );
    c.finish();
}

fn noisy_fit() -> (qsv_core::experiment::FitSummary, f64) {
    let cfg = ExperimentConfig {
        n_trials: 100,
        n_copies: 5000,
        seed: 20_240_607,
        ..ExperimentConfig::default()
    };
    let sim = simulate(&cfg).unwrap();
    let curves = analyze_ledgers(&sim.ledgers, cfg.epsilon, cfg.delta, sim.strategy.lambda2()).unwrap();
    let fit = fit_curves(&curves, sim.strategy.lambda2(), None).unwrap();
    (fit, sim.analytic_pass_probability)
}

#[test]
fn criterion_7b_noisy_slope_and_plateau() {
    let mut c = Criterion::new("C7b");
    let (fit, _) = noisy_fit();
    let plateau = fit.plateau_epsilon.unwrap_or(f64::NAN);
    c.check(
        "plateau epsilon = 0.0576 +/- 0.003",
        (plateau - 0.0576).abs() <= 0.003,
        format!("{plateau:.5}"),
    );
    c.check(
        "mean slope strictly inside (-1.0, -0.5), default window",
        fit.slope > -1.0 && fit.slope < -0.5,
        format!(
            "slope {:.4} +/- {:.4} over N in [{}, {}] ({} trials)",
            fit.slope, fit.slope_stderr, fit.window.0, fit.window.1, fit.trials
        ),
    );
    c.finish();
}

#[test]
fn criterion_7c_sigma_excess() {
    let mut c = Criterion::new("C7c");
    let s = slope_sigma_excess(-0.5497, 0.0002, -0.5).unwrap();
    c.check("sigma excess of (-0.5497, 0.0002, -0.5) = 248.5", (s - 248.5).abs() <= 1e-9, format!("{s:.10}"));
    c.finish();
}

#[test]
fn criterion_8_stats_properties() {
    let mut c = Criterion::new("C8");
    let mut rng = RandomStream::new(8, 8);
    let instances = 10_000;

    let mut gibbs_bad = 0;
    let mut inverse_bad = 0;
    let mut inverse_checked = 0;
    let mut worst_inverse: f64 = 0.0;
    let mut kl_mono_bad = 0;
    let mut delta_mono_bad = 0;
    let mut eps_mono_bad = 0;
    for _ in 0..instances {
        // Gibbs inequality.
        let x = rng.next_f64();
        let y = 1e-6 + (1.0 - 2e-6) * rng.next_f64();
        let d = kl_divergence(x, y).unwrap();
        if d < 0.0 || (x == y) != (d == 0.0) {
            gibbs_bad += 1;
        }

        // solve_epsilon then confidence_delta recovers δ whenever ε lands in (0, 1).
        let n = 1 + rng.next_index(20_000) as u64;
        let m = 1 + rng.next_index(n as usize) as u64;
        let delta = 1e-4 + (0.5 - 1e-4) * rng.next_f64();
        let lambda2 = 0.25;
        if let Ok(eps) = solve_epsilon(n, m, delta, lambda2) {
            if eps > 0.0 && eps < 1.0 {
                inverse_checked += 1;
                let back = confidence_delta(n, m, eps, lambda2).unwrap();
                worst_inverse = worst_inverse.max((back - delta).abs());
                if (back - delta).abs() > 1e-9 {
                    inverse_bad += 1;
                }
            }
        }

        // D(x || y) strictly decreasing as y rises toward x.
        let x = 0.05 + 0.9 * rng.next_f64();
        let y1 = x * rng.next_f64();
        let y2 = y1 + (x - y1) * (0.01 + 0.98 * rng.next_f64());
        if y1 > 0.0 && y2 < x && y2 > y1 && kl_divergence(x, y2).unwrap() >= kl_divergence(x, y1).unwrap() {
            kl_mono_bad += 1;
        }

        // δ non-increasing in n and ε non-increasing in n at a fixed pass rate.
        let rate_num = 1 + rng.next_index(99) as u64;
        let (n1, n2) = (100 * (1 + rng.next_index(50) as u64), 100 * (51 + rng.next_index(50) as u64));
        let (m1, m2) = (n1 / 100 * rate_num, n2 / 100 * rate_num);
        let eps = 0.01 + 0.9 * rng.next_f64();
        let threshold = 1.0 - 0.75 * eps;
        if rate_num as f64 / 100.0 > threshold
            && confidence_delta(n2, m2, eps, 0.25).unwrap() > confidence_delta(n1, m1, eps, 0.25).unwrap()
        {
            delta_mono_bad += 1;
        }
        let e1 = solve_epsilon(n1, m1, 0.05, 0.25).unwrap();
        let e2 = solve_epsilon(n2, m2, 0.05, 0.25).unwrap();
        if e2 > e1 + 1e-11 {
            eps_mono_bad += 1;
        }
    }
    c.check("Gibbs inequality", gibbs_bad == 0, format!("{gibbs_bad} violations / {instances}"));
    c.check(
        "solve_epsilon -> confidence_delta round trip (1e-9)",
        inverse_bad == 0 && inverse_checked > instances / 2,
        format!("{inverse_bad} violations / {inverse_checked} checked, worst {worst_inverse:.2e}"),
    );
    c.check("KL monotone in y below x", kl_mono_bad == 0, format!("{kl_mono_bad} violations"));
    c.check("delta non-increasing in N", delta_mono_bad == 0, format!("{delta_mono_bad} violations"));
    c.check("epsilon non-increasing in N", eps_mono_bad == 0, format!("{eps_mono_bad} violations"));
    c.finish();
}

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn criterion_9_determinism() {
    let mut c = Criterion::new("C9");
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let cfg = ExperimentConfig {
            n_trials: 12,
            n_copies: 3000,
            seed: 99,
            output_dir: tmp.path().join(name),
            ..ExperimentConfig::default()
        };
        run_pipeline(&cfg).unwrap();
        read_tree(&cfg.output_dir)
    };
    let a = run("first");
    let b = run("second");
    c.check(
        "identical config and seed give byte-identical trees",
        a == b && a.len() > 20,
        format!("{} files vs {} files", a.len(), b.len()),
    );
    c.finish();
}

#[test]
fn target_state_sanity() {
    // Guard for the acceptance fixtures themselves.
    let s = qutrit();
    assert_eq!(s.target(), &maximally_entangled_state(3));
    let dev = build_device(3, &balanced_coefficients(3), NoiseChannel::White { visibility: 0.9352 }).unwrap();
    assert!((fidelity_pure(dev.rho(), s.target()).unwrap() - 0.9424).abs() < 1e-12);
}
