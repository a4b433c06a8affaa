use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rangeloc::config::{builtin, TrialConfig};
use rangeloc::core::analysis::fisher;
use rangeloc::core::estimators::{Knowledge, Method};
use rangeloc::core::model::{simulate, NoiseModel};
use rangeloc::core::refine::run_method;
use rangeloc::harness::{read_report, run_trial, write_report, RunOptions, CSV_FILE};
use rangeloc::io::{load_measurements, read_json, read_scenario, save_measurements, EstimateJson, FisherJson};
use rangeloc::svg::{emit_svg, PlotKind};
use rangeloc::{Error, Result};

#[derive(Parser)]
#[command(name = "rangeloc", version, about = "Range-based localization estimators and Monte-Carlo trials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate noisy ranges for a scenario and write them as CSV.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the target position from a measurement CSV.
    Estimate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        measurements: PathBuf,
        /// bias-eli, bias-eli-lin, noise-est, noise-est-lin, s-ls,
        /// w-bias-eli-lin, aw-bias-eli-lin, ls-gn or two-step:<first step>.
        #[arg(long)]
        method: String,
        /// Known common noise variance; defaults to the scenario's noise.
        #[arg(long)]
        sigma2: Option<f64>,
        /// Follow the first step with one Gauss-Newton step.
        #[arg(long)]
        two_step: bool,
    },
    /// Fisher information and Cramér-Rao bound at the scenario's target.
    Crlb {
        #[arg(long)]
        scenario: PathBuf,
        /// Override the scenario's noise with this common variance.
        #[arg(long)]
        sigma2: Option<f64>,
    },
    /// Run a Monte-Carlo trial and write report.json and results.csv.
    Trial {
        #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
        config: Option<PathBuf>,
        #[arg(long)]
        builtin: Option<String>,
        /// Use the full-scale run counts and sweeps of a builtin.
        #[arg(long, requires = "builtin")]
        full: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        /// Fill the seconds column; makes the output run-dependent.
        #[arg(long)]
        timings: bool,
    },
    /// Render a plot from a trial report directory.
    Plot {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum)]
        kind: PlotKind,
        #[arg(long)]
        out: PathBuf,
    },
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: "<stdout>".into(), source })?;
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { scenario, seed, out } => {
            let s = read_scenario(&scenario)?;
            save_measurements(&out, &simulate(&s, seed)?)
        }
        Command::Estimate { scenario, measurements, method, sigma2, two_step } => {
            let s = read_scenario(&scenario)?;
            let meas = load_measurements(&measurements, s.sensor_count())?;
            let mut method: Method = method.parse()?;
            if two_step {
                method = match method {
                    Method::First(f) => Method::TwoStep(f),
                    other => other,
                };
            }
            let knowledge = match sigma2 {
                Some(v) => Knowledge::Common(v),
                None => Knowledge::from_scenario(&s),
            };
            let est = run_method(method, &s, &meas, &knowledge)?;
            print_json(&EstimateJson::from(&est))
        }
        Command::Crlb { scenario, sigma2 } => {
            let mut s = read_scenario(&scenario)?;
            if let Some(v) = sigma2 {
                s = s.with_noise(NoiseModel::homogeneous(v))?;
            }
            print_json(&FisherJson::from(&fisher(&s, s.target())?))
        }
        Command::Trial { config, builtin: name, full, out, workers, timings } => {
            let cfg: TrialConfig = match (config, name) {
                (Some(path), _) => read_json(&path)?,
                (None, Some(name)) => builtin(&name, full)?,
                (None, None) => return Err(Error::Config("--config or --builtin is required".into())),
            };
            let report = run_trial(&cfg, &RunOptions { workers, timings })?;
            write_report(&report, &out)?;
            let failures = report.total_failures();
            eprintln!(
                "{}: {} cells, {failures} failed runs, wrote {}",
                report.name,
                report.cells.len(),
                out.join(CSV_FILE).display()
            );
            Ok(())
        }
        Command::Plot { report, kind, out } => emit_svg(&read_report(&report)?, kind, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
