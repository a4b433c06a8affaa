//! Monte-Carlo trial runner and its report formats.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rangeloc_core::analysis::{fisher, theoretical_mse, StatsAccumulator};
use rangeloc_core::estimators::{FirstStep, Knowledge, Method};
use rangeloc_core::model::{simulate, Scenario};
use rangeloc_core::refine::run_method;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::TrialConfig;
use crate::error::{Error, Result};
use crate::io::{write_json, FisherJson, TheoryJson};

pub const REPORT_FILE: &str = "report.json";
pub const CSV_FILE: &str = "results.csv";

/// Runs simulated per parallel batch; results are merged batch by batch in
/// run order.
const BATCH: usize = 1024;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses one per core.
    pub workers: Option<usize>,
    /// Record per-estimator compute time. Off by default so that reports
    /// are byte-reproducible.
    pub timings: bool,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulation seed of run `run` in the `(T, σ²)` cell.
///
/// Estimators are not part of the key, so every estimator of a cell sees
/// the same measurements and adding one leaves the others unchanged.
pub fn run_seed(base: u64, repeats: usize, sigma2: f64, run: usize) -> u64 {
    [repeats as u64, sigma2.to_bits(), run as u64].into_iter().fold(splitmix64(base), |h, w| splitmix64(h ^ w))
}

/// Running statistics after the first `runs` runs of a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub runs: usize,
    pub bias: Vec<f64>,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub bias: Vec<f64>,
    pub bias_stderr: Vec<f64>,
    pub mse: f64,
    pub mse_stderr: f64,
    pub sigma2_bias: Option<f64>,
    pub sigma2_bias_stderr: Option<f64>,
}

/// One estimator at one `(T, σ²)` point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub estimator: String,
    pub repeats: usize,
    pub sigma2: f64,
    pub m: usize,
    /// Runs that entered the aggregates.
    pub runs: usize,
    pub failures: usize,
    /// `None` when every run failed.
    pub stats: Option<CellStats>,
    pub crlb: Option<f64>,
    /// Closed-form MSE, for the linear fits it applies to.
    pub theory_mse: Option<f64>,
    pub theory_sigma2_bias: Option<f64>,
    pub seconds: Option<f64>,
    pub progress: Vec<Checkpoint>,
}

/// Theoretical quantities of a `(T, σ²)` point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub repeats: usize,
    pub sigma2: f64,
    pub m: usize,
    pub fisher: Option<FisherJson>,
    pub theory: Option<TheoryJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub name: String,
    pub seed: u64,
    pub config_hash: String,
    pub build: String,
    pub dim: usize,
    pub config: TrialConfig,
    pub baselines: Vec<Baseline>,
    pub cells: Vec<Cell>,
}

impl TrialReport {
    pub fn cell(&self, estimator: &str, repeats: usize, sigma2: f64) -> Option<&Cell> {
        self.cells.iter().find(|c| c.estimator == estimator && c.repeats == repeats && c.sigma2 == sigma2)
    }

    pub fn total_failures(&self) -> usize {
        self.cells.iter().map(|c| c.failures).sum()
    }
}

/// The closed-form MSE covers the two linear fits whose positions coincide.
fn has_theory(method: Method) -> bool {
    matches!(method, Method::First(FirstStep::NoiseEstLin | FirstStep::BiasEliLin))
}

fn is_checkpoint(runs: usize, total: usize) -> bool {
    let mut p = 1;
    while p < runs {
        p *= 10;
    }
    runs == total || p == runs
}

type Outcome = Option<(Vec<f64>, Option<f64>)>;

fn one_run(scenario: &Scenario, methods: &[Method], knowledge: &Knowledge, seed: u64) -> Result<Vec<(Outcome, f64)>> {
    let meas = simulate(scenario, seed)?;
    let truth = scenario.target();
    let sigma2 = scenario.noise().common_variance();
    Ok(methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let outcome = run_method(method, scenario, &meas, knowledge).ok().map(|est| {
                let err: Vec<f64> = (&est.x_hat - truth).iter().copied().collect();
                let s2 = est.sigma2_hat.zip(sigma2).map(|(h, s)| h - s);
                (err, s2)
            });
            (outcome, start.elapsed().as_secs_f64())
        })
        .collect())
}

fn snapshot(acc: &StatsAccumulator, runs: usize) -> Option<Checkpoint> {
    let s = acc.finish().ok()?;
    Some(Checkpoint { runs, bias: s.bias, mse: s.mse })
}

/// Run every `(T, σ², estimator)` cell of `config`.
///
/// Runs are simulated in parallel but merged in run order, so the report
/// does not depend on the number of workers.
pub fn run_trial(config: &TrialConfig, opts: &RunOptions) -> Result<TrialReport> {
    config.validate()?;
    let methods = config.methods()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;

    let mut baselines = Vec::new();
    let mut cells = Vec::new();
    let mut dim = 0;
    for &repeats in &config.repeats {
        for &sigma2 in &config.sigma2 {
            let scenario = config.cell_scenario(repeats, sigma2)?;
            dim = scenario.dim();
            let m = scenario.measurement_count();
            let knowledge = Knowledge::from_scenario(&scenario);
            let fisher = fisher(&scenario, scenario.target()).ok();
            let theory = scenario.noise().common_variance().and_then(|s| theoretical_mse(&scenario, s).ok());

            let mut accs: Vec<StatsAccumulator> = methods.iter().map(|_| StatsAccumulator::new(dim)).collect();
            let mut failures = vec![0usize; methods.len()];
            let mut seconds = vec![0.0f64; methods.len()];
            let mut progress: Vec<Vec<Checkpoint>> = vec![Vec::new(); methods.len()];

            for start in (0..config.runs).step_by(BATCH) {
                let end = (start + BATCH).min(config.runs);
                let batch: Vec<Result<Vec<(Outcome, f64)>>> = pool.install(|| {
                    (start..end)
                        .into_par_iter()
                        .map(|run| {
                            let seed = run_seed(config.seed, repeats, sigma2, run);
                            one_run(&scenario, &methods, &knowledge, seed)
                        })
                        .collect()
                });
                for (offset, outcomes) in batch.into_iter().enumerate() {
                    let done = start + offset + 1;
                    for (k, (outcome, secs)) in outcomes?.into_iter().enumerate() {
                        seconds[k] += secs;
                        match outcome {
                            Some((err, s2)) => accs[k].push(&err, s2),
                            None => failures[k] += 1,
                        }
                        if is_checkpoint(done, config.runs) {
                            progress[k].extend(snapshot(&accs[k], done));
                        }
                    }
                }
            }

            for (k, &method) in methods.iter().enumerate() {
                let stats = accs[k].finish().ok().map(|s| CellStats {
                    bias: s.bias,
                    bias_stderr: s.bias_stderr,
                    mse: s.mse,
                    mse_stderr: s.mse_stderr,
                    sigma2_bias: s.sigma2_bias,
                    sigma2_bias_stderr: s.sigma2_bias_stderr,
                });
                let theory = theory.as_ref().filter(|_| has_theory(method));
                cells.push(Cell {
                    estimator: config.estimators[k].clone(),
                    repeats,
                    sigma2,
                    m,
                    runs: accs[k].count(),
                    failures: failures[k],
                    stats,
                    crlb: fisher.as_ref().map(|f| f.crlb),
                    theory_mse: theory.map(|t| t.position_trace()),
                    theory_sigma2_bias: theory.map(|t| t.sigma2_bias),
                    seconds: opts.timings.then_some(seconds[k]),
                    progress: std::mem::take(&mut progress[k]),
                });
            }
            baselines.push(Baseline {
                repeats,
                sigma2,
                m,
                fisher: fisher.as_ref().map(FisherJson::from),
                theory: theory.as_ref().map(|t| TheoryJson::new(t, repeats)),
            });
        }
    }

    Ok(TrialReport {
        name: config.name.clone(),
        seed: config.seed,
        config_hash: config.hash(),
        build: format!("rangeloc {}", env!("CARGO_PKG_VERSION")),
        dim,
        config: config.clone(),
        baselines,
        cells,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write one row per cell.
pub fn write_csv<W: std::io::Write>(report: &TrialReport, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["estimator", "T", "sigma2", "m", "N"].map(String::from).to_vec();
    header.extend((1..=report.dim).map(|i| format!("bias_x{i}")));
    header.extend(["bias_sigma2", "mse", "crlb", "theory_mse", "failures", "seconds"].map(String::from));
    w.write_record(&header)?;
    for c in &report.cells {
        let mut row =
            vec![c.estimator.clone(), c.repeats.to_string(), c.sigma2.to_string(), c.m.to_string(), c.runs.to_string()];
        match &c.stats {
            Some(s) => {
                row.extend(s.bias.iter().map(f64::to_string));
                row.push(opt(s.sigma2_bias));
                row.push(s.mse.to_string());
            }
            None => row.extend(std::iter::repeat_n(String::new(), report.dim + 2)),
        }
        row.push(opt(c.crlb));
        row.push(opt(c.theory_mse));
        row.push(c.failures.to_string());
        row.push(opt(c.seconds));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(report: &TrialReport, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(Error::io(path))?;
    write_csv(report, file).map_err(Error::csv(path))
}

/// Write `report.json` and `results.csv` into `dir`, creating it if needed.
pub fn write_report(report: &TrialReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    write_json(&dir.join(REPORT_FILE), report)?;
    emit_csv(report, &dir.join(CSV_FILE))
}

pub fn read_report(dir: &Path) -> Result<TrialReport> {
    crate::io::read_json(&dir.join(REPORT_FILE))
}
