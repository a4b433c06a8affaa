//! Theoretical baselines and empirical aggregation.
//!
//! [`fisher`] gives the Fisher information and CRLB at a point,
//! [`theoretical_mse`] the finite-sample second moments of the linear
//! estimators, and [`StatsAccumulator`] the Monte-Carlo bias and MSE with
//! compensated sums that merge associatively across workers.
//!
//! The asymptotic matrix `M(x)` is only available through its finite-m
//! surrogate `JᵀJ/m`, which is `σ²F/m` for homogeneous noise.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::estimators::Estimate;
use crate::model::{build_design, DesignMode, MeasurementSet, Scenario};
use crate::{Error, Result};

/// Fisher information at a point and the bound derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherReport {
    pub f: DMatrix<f64>,
    /// `tr(F⁻¹)`.
    pub crlb: f64,
    /// Diagonal of `F⁻¹`.
    pub diag: Vec<f64>,
}

/// Fisher information `Σ_k u_k u_kᵀ / σ²_k` over all measurements, with
/// `u_k` the unit vector from sensor to `at`.
pub fn fisher(scenario: &Scenario, at: &DVector<f64>) -> Result<FisherReport> {
    let n = scenario.dim();
    if at.len() != n {
        return Err(Error::InvalidInput(alloc::format!("point has dimension {}", at.len())));
    }
    let t = scenario.repeats() as f64;
    let mut f = DMatrix::zeros(n, n);
    for (i, a) in scenario.sensors().iter().enumerate() {
        let diff = at - a;
        let dist = diff.norm();
        if dist == 0.0 {
            return Err(Error::SingularJacobian(i));
        }
        let s2 = scenario.noise().variance(i);
        if !(s2 > 0.0) {
            return Err(Error::Config("Fisher information needs positive variances".into()));
        }
        let u = diff / dist;
        f += (&u * u.transpose()) * (t / s2);
    }
    let inv = f.clone().cholesky().ok_or(Error::RankDeficient("Fisher information"))?.inverse();
    let diag: Vec<f64> = inv.diagonal().iter().copied().collect();
    if diag.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::RankDeficient("Fisher information"));
    }
    Ok(FisherReport { crlb: diag.iter().sum(), diag, f })
}

/// Finite-sample second moments of the noise-estimating linear fit.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoreticalMse {
    /// Diagonal of `Λ`, `4f_k²σ² + 2σ⁴` per measurement.
    pub lambda: Vec<f64>,
    /// `(AᵀA)⁻¹AᵀΛA(AᵀA)⁻¹`, size `(n+1)×(n+1)`.
    pub mse_matrix: DMatrix<f64>,
    /// Expected `σ̂² − σ²`.
    pub sigma2_bias: f64,
}

impl TheoreticalMse {
    /// Trace of the position block.
    pub fn position_trace(&self) -> f64 {
        let n = self.mse_matrix.nrows() - 1;
        (0..n).map(|i| self.mse_matrix[(i, i)]).sum()
    }
}

/// Second moments of `ŷ` and the bias of `σ̂² = ŷ_{n+1} − ‖x̂‖²` for a
/// homogeneous variance `sigma2` on the scenario's true geometry.
pub fn theoretical_mse(scenario: &Scenario, sigma2: f64) -> Result<TheoreticalMse> {
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::Config("variance must be finite and nonnegative".into()));
    }
    let truth = scenario.true_distances();
    let meas = MeasurementSet::from_rows(
        scenario.sensor_count(),
        &(0..scenario.sensor_count())
            .flat_map(|i| (0..scenario.repeats()).map(move |j| (i, j, 0.0)))
            .collect::<Vec<_>>(),
    )?;
    // Only A is needed; it depends on geometry, not on the ranges.
    let design = build_design(scenario, &meas, DesignMode::NoiseEst, None)?;
    let a = &design.a;
    let ata = a.tr_mul(a);
    let ata_inv = ata.cholesky().ok_or(Error::RankDeficient("AᵀA"))?.inverse();
    let a_bar = &ata_inv * a.transpose();

    let t = scenario.repeats();
    let lambda: Vec<f64> = (0..a.nrows())
        .map(|k| {
            let f = truth[k / t];
            4.0 * f * f * sigma2 + 2.0 * sigma2 * sigma2
        })
        .collect();
    let mut scaled = a_bar.clone();
    for (mut col, l) in scaled.column_iter_mut().zip(&lambda) {
        col *= *l;
    }
    let mse_matrix = &scaled * a_bar.transpose();
    let n = scenario.dim();
    let sigma2_bias =
        -(0..n).map(|i| a_bar.row(i).iter().zip(&lambda).map(|(v, l)| v * v * l).sum::<f64>()).sum::<f64>();
    Ok(TheoreticalMse { lambda, mse_matrix, sigma2_bias })
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &Self) {
        self.add(other.sum);
        self.comp += other.comp;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Mergeable Monte-Carlo statistics for one estimator in one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsAccumulator {
    count: usize,
    dev: Vec<CompensatedSum>,
    dev_sq: Vec<CompensatedSum>,
    err2: CompensatedSum,
    err2_sq: CompensatedSum,
    sigma_count: usize,
    sigma_dev: CompensatedSum,
    sigma_dev_sq: CompensatedSum,
}

impl StatsAccumulator {
    pub fn new(dim: usize) -> Self {
        StatsAccumulator {
            count: 0,
            dev: vec![CompensatedSum::default(); dim],
            dev_sq: vec![CompensatedSum::default(); dim],
            err2: CompensatedSum::default(),
            err2_sq: CompensatedSum::default(),
            sigma_count: 0,
            sigma_dev: CompensatedSum::default(),
            sigma_dev_sq: CompensatedSum::default(),
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Record one run: position error `x̂ − x°` and, when present, `σ̂² − σ²`.
    pub fn push(&mut self, error: &[f64], sigma2_error: Option<f64>) {
        assert_eq!(error.len(), self.dev.len(), "dimension mismatch");
        self.count += 1;
        let mut e2 = 0.0;
        for (k, e) in error.iter().enumerate() {
            self.dev[k].add(*e);
            self.dev_sq[k].add(e * e);
            e2 += e * e;
        }
        self.err2.add(e2);
        self.err2_sq.add(e2 * e2);
        if let Some(s) = sigma2_error {
            self.sigma_count += 1;
            self.sigma_dev.add(s);
            self.sigma_dev_sq.add(s * s);
        }
    }

    /// Record an estimate against the truth.
    pub fn push_estimate(&mut self, est: &Estimate, target: &DVector<f64>, sigma2: Option<f64>) {
        let err: Vec<f64> = est.x_hat.iter().zip(target.iter()).map(|(a, b)| a - b).collect();
        let s = match (est.sigma2_hat, sigma2) {
            (Some(h), Some(s)) => Some(h - s),
            _ => None,
        };
        self.push(&err, s);
    }

    pub fn merge(&mut self, other: &Self) {
        assert_eq!(self.dev.len(), other.dev.len(), "dimension mismatch");
        self.count += other.count;
        for k in 0..self.dev.len() {
            self.dev[k].merge(&other.dev[k]);
            self.dev_sq[k].merge(&other.dev_sq[k]);
        }
        self.err2.merge(&other.err2);
        self.err2_sq.merge(&other.err2_sq);
        self.sigma_count += other.sigma_count;
        self.sigma_dev.merge(&other.sigma_dev);
        self.sigma_dev_sq.merge(&other.sigma_dev_sq);
    }

    pub fn finish(&self) -> Result<EmpiricalStats> {
        if self.count == 0 {
            return Err(Error::InvalidInput("no runs to aggregate".into()));
        }
        let (bias, bias_stderr) = self.dev.iter().zip(&self.dev_sq).map(|(s, q)| mean_se(s, q, self.count)).unzip();
        let (mse, mse_stderr) = mean_se(&self.err2, &self.err2_sq, self.count);
        let sigma2 = (self.sigma_count > 0).then(|| mean_se(&self.sigma_dev, &self.sigma_dev_sq, self.sigma_count));
        Ok(EmpiricalStats {
            runs: self.count,
            bias,
            bias_stderr,
            mse,
            mse_stderr,
            sigma2_bias: sigma2.map(|s| s.0),
            sigma2_bias_stderr: sigma2.map(|s| s.1),
        })
    }
}

fn mean_se(sum: &CompensatedSum, sum_sq: &CompensatedSum, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum.value() / nf;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = ((sum_sq.value() - nf * mean * mean) / (nf - 1.0)).max(0.0);
    (mean, (var / nf).sqrt())
}

/// Monte-Carlo summary of one estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalStats {
    pub runs: usize,
    /// Mean of `x̂ − x°` per coordinate.
    pub bias: Vec<f64>,
    pub bias_stderr: Vec<f64>,
    /// Mean of `‖x̂ − x°‖²`.
    pub mse: f64,
    pub mse_stderr: f64,
    /// Mean of `σ̂² − σ²` over runs that report a variance.
    pub sigma2_bias: Option<f64>,
    pub sigma2_bias_stderr: Option<f64>,
}

/// Aggregate estimates against the scenario's target and common variance.
pub fn aggregate(runs: &[Estimate], truth: &Scenario) -> Result<EmpiricalStats> {
    let mut acc = StatsAccumulator::new(truth.dim());
    let sigma2 = truth.noise().common_variance();
    for est in runs {
        if est.x_hat.len() != truth.dim() {
            return Err(Error::InvalidInput("estimate dimension does not match the scenario".into()));
        }
        acc.push_estimate(est, truth.target(), sigma2);
    }
    acc.finish()
}
