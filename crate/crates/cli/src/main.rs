use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qsv_core::experiment::{parse_window, run_analyze, run_fit, run_simulate, ExperimentConfig, ExperimentError};
use qsv_core::mub::build_mub;
use qsv_core::strategy::build_strategy;

const TABLE_DELTAS: [f64; 3] = [0.10, 0.05, 0.01];
const TABLE_EPSILONS: [f64; 4] = [0.10, 0.08, 0.05, 0.01];

#[derive(Parser)]
#[command(name = "qsv", version, about = "MUB verification of maximally entangled qudits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the verification strategy for dimension d as JSON.
    Strategy {
        #[arg(long)]
        d: usize,
    },
    /// Simulate independent trials and write ledgers plus a report.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        copies: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute δ(N) and ε(N) curves from ledgers in a directory.
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        /// Dimension; read from report.json when omitted.
        #[arg(long)]
        d: Option<usize>,
    },
    /// Fit the ε–N scaling exponent over all trial curves.
    Fit {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        window: Option<String>,
    },
}

/// Prints to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) {
    let _ = writeln!(io::stdout(), "{text}");
}

fn strategy(d: usize) -> Result<(), ExperimentError> {
    let s = build_strategy(build_mub(d)?)?;
    let doc = s.export(&TABLE_DELTAS, &TABLE_EPSILONS)?;
    emit(&serde_json::to_string_pretty(&doc).expect("serializable"));
    Ok(())
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Strategy { d } => strategy(d),
        Command::Simulate {
            config,
            seed,
            trials,
            copies,
            out,
        } => {
            let mut cfg = match config {
                Some(path) => ExperimentConfig::load(&path)?,
                None => ExperimentConfig::default(),
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(trials) = trials {
                cfg.n_trials = trials;
            }
            if let Some(copies) = copies {
                cfg.n_copies = copies;
            }
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            let (_, report) = run_simulate(&cfg)?;
            emit(&format!(
                "simulated {} trials x {} copies into {} (lambda2 = {:.6}, analytic pass probability = {:.6}, {:.2?})",
                cfg.n_trials,
                cfg.n_copies,
                cfg.output_dir.display(),
                report.strategy.lambda2,
                report.analytic_pass_probability,
                report.duration
            ));
            Ok(())
        }
        Command::Analyze {
            input,
            epsilon,
            delta,
            d,
        } => {
            let analysis = run_analyze(&input, d, epsilon, delta)?;
            emit(&format!(
                "analyzed {} trials on {} grid points into {}",
                analysis.params.trials,
                analysis.params.grid_points,
                input.join("curves").display()
            ));
            Ok(())
        }
        Command::Fit { input, window } => {
            let window = window.as_deref().map(parse_window).transpose()?;
            let fit = run_fit(&input, window)?;
            for w in &fit.warnings {
                eprintln!("warning: {w}");
            }
            emit(&serde_json::to_string_pretty(&fit).expect("serializable"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
