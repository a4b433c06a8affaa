//! First-step estimators.
//!
//! All of them fit the lifted linear model `A y ≈ b` built by
//! [`build_design`]; they differ in the right-hand side (variance subtracted
//! or not), the constraint tying `y_{n+1}` to `‖y_{1:n}‖²`, and the row
//! weights.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::gtrs::{self, GtrsInstance, GtrsWarning, SolverPath};
use crate::model::{build_design, DesignMode, DesignSystem, MeasurementSet, Scenario, VarianceInput};
use crate::{Error, Result};

/// Floor applied to estimated variances, relative to the largest one.
pub const VARIANCE_FLOOR: f64 = 1e-8;

/// A first-step estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FirstStep {
    /// Squared-range least squares, no bias correction (inconsistent).
    SLs,
    BiasEli,
    BiasEliLin,
    NoiseEst,
    NoiseEstLin,
    WBiasEliLin,
    AwBiasEliLin,
}

impl FirstStep {
    pub const ALL: [FirstStep; 7] = [
        FirstStep::SLs,
        FirstStep::BiasEli,
        FirstStep::BiasEliLin,
        FirstStep::NoiseEst,
        FirstStep::NoiseEstLin,
        FirstStep::WBiasEliLin,
        FirstStep::AwBiasEliLin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FirstStep::SLs => "s-ls",
            FirstStep::BiasEli => "bias-eli",
            FirstStep::BiasEliLin => "bias-eli-lin",
            FirstStep::NoiseEst => "noise-est",
            FirstStep::NoiseEstLin => "noise-est-lin",
            FirstStep::WBiasEliLin => "w-bias-eli-lin",
            FirstStep::AwBiasEliLin => "aw-bias-eli-lin",
        }
    }

    /// Whether the second step should use per-sensor weights.
    pub fn is_weighted(self) -> bool {
        matches!(self, FirstStep::WBiasEliLin | FirstStep::AwBiasEliLin)
    }
}

impl fmt::Display for FirstStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FirstStep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FirstStep::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(alloc::format!("unknown estimator {s:?}")))
    }
}

/// What produced an [`Estimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Range least squares iterated to convergence with Gauss–Newton.
    LsGn,
    First(FirstStep),
    /// A first step followed by one Gauss–Newton step.
    TwoStep(FirstStep),
}

impl Method {
    pub fn first_step(self) -> Option<FirstStep> {
        match self {
            Method::LsGn => None,
            Method::First(f) | Method::TwoStep(f) => Some(f),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::LsGn => f.write_str("ls-gn"),
            Method::First(m) => write!(f, "{m}"),
            Method::TwoStep(m) => write!(f, "two-step:{m}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "ls-gn" {
            return Ok(Method::LsGn);
        }
        match s.strip_prefix("two-step:") {
            Some(inner) => Ok(Method::TwoStep(inner.parse()?)),
            None => Ok(Method::First(s.parse()?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    Gtrs(GtrsWarning),
    /// Estimated variances of these sensors were raised to the floor.
    VarianceFloored(Vec<usize>),
    /// Gauss–Newton stopped at the iteration cap.
    IterationCap,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub path: Option<SolverPath>,
    pub iterations: usize,
    pub objective: Option<f64>,
    /// Condition number of the normal matrix `AᵀWA`.
    pub condition_number: Option<f64>,
    pub warnings: Vec<Warning>,
}

/// A position estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub x_hat: DVector<f64>,
    /// Present for the noise-estimating family.
    pub sigma2_hat: Option<f64>,
    /// The lifted vector the position was read from.
    pub lifted: Option<DVector<f64>>,
    pub method: Method,
    pub diagnostics: Diagnostics,
}

/// Per-sensor sample variances.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceEstimates {
    pub per_sensor: Vec<f64>,
    pub repeats: usize,
}

fn require_mode(design: &DesignSystem, mode: DesignMode) -> Result<()> {
    if design.mode != mode {
        return Err(Error::Config(alloc::format!("estimator needs a {mode:?} design, got {:?}", design.mode)));
    }
    Ok(())
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let ev = m.symmetric_eigenvalues();
    let (lo, hi) = (ev.min(), ev.max());
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// `(AᵀWA)⁻¹AᵀW rhs`.
fn least_squares(design: &DesignSystem) -> Result<(DVector<f64>, f64)> {
    let (ata, atb) = design.normal_equations();
    let cond = condition_number(&ata);
    let chol = ata.cholesky().ok_or(Error::RankDeficient("AᵀWA is singular"))?;
    Ok((chol.solve(&atb), cond))
}

fn split(y: &DVector<f64>) -> (DVector<f64>, f64) {
    let n = y.len() - 1;
    let x = y.rows(0, n).into_owned();
    let s = y[n] - x.norm_squared();
    (x, s)
}

fn linear_estimate(design: &DesignSystem, method: Method, with_variance: bool) -> Result<Estimate> {
    let (y, cond) = least_squares(design)?;
    let (x_hat, s) = split(&y);
    let objective = GtrsInstance::from_design(design).objective(&y);
    Ok(Estimate {
        x_hat,
        sigma2_hat: with_variance.then_some(s),
        lifted: Some(y),
        method,
        diagnostics: Diagnostics { objective: Some(objective), condition_number: Some(cond), ..Diagnostics::default() },
    })
}

fn gtrs_estimate(design: &DesignSystem, method: Method) -> Result<Estimate> {
    let inst = GtrsInstance::from_design(design);
    let sol = gtrs::solve_bias_eli(&inst)?;
    let n = design.dim();
    Ok(Estimate {
        x_hat: sol.y.rows(0, n).into_owned(),
        sigma2_hat: None,
        lifted: Some(sol.y),
        method,
        diagnostics: Diagnostics {
            path: Some(sol.path),
            iterations: sol.diagnostics.bisection_iterations,
            objective: Some(sol.diagnostics.objective),
            condition_number: Some(condition_number(&inst.ata)),
            warnings: sol.diagnostics.warnings.into_iter().map(Warning::Gtrs).collect(),
        },
    })
}

/// Global minimizer of the bias-eliminated squared-range problem.
pub fn bias_eli(design: &DesignSystem) -> Result<Estimate> {
    require_mode(design, DesignMode::BiasEli)?;
    gtrs_estimate(design, Method::First(FirstStep::BiasEli))
}

/// Squared-range least squares: the same solver with no variance removed.
/// The design must be built in bias-eli mode with variance zero.
pub fn s_ls(design: &DesignSystem) -> Result<Estimate> {
    require_mode(design, DesignMode::BiasEli)?;
    if design.subtracted.iter().any(|s| *s != 0.0) {
        return Err(Error::Config("S-LS uses a design with zero variance".into()));
    }
    gtrs_estimate(design, Method::First(FirstStep::SLs))
}

/// `(AᵀA)⁻¹Aᵀb`, the bias-eliminated problem without its constraint.
pub fn bias_eli_lin(design: &DesignSystem) -> Result<Estimate> {
    require_mode(design, DesignMode::BiasEli)?;
    linear_estimate(design, Method::First(FirstStep::BiasEliLin), false)
}

/// Joint position/variance estimate: minimize `‖Aȳ − b̄‖²` subject to
/// `ȳ_{n+1} ≥ ‖ȳ_{1:n}‖²`. The variance estimate is `ȳ_{n+1} − ‖ȳ_{1:n}‖²`.
pub fn noise_est(design: &DesignSystem) -> Result<Estimate> {
    require_mode(design, DesignMode::NoiseEst)?;
    let inst = GtrsInstance::from_design(design);
    let sol = gtrs::solve_inequality(&inst)?;
    let (x_hat, s) = split(&sol.y);
    let s = if sol.path == SolverPath::Interior { s } else { s.max(0.0) };
    Ok(Estimate {
        x_hat,
        sigma2_hat: Some(s),
        lifted: Some(sol.y),
        method: Method::First(FirstStep::NoiseEst),
        diagnostics: Diagnostics {
            path: Some(sol.path),
            iterations: sol.diagnostics.bisection_iterations,
            objective: Some(sol.diagnostics.objective),
            condition_number: Some(condition_number(&inst.ata)),
            warnings: sol.diagnostics.warnings.into_iter().map(Warning::Gtrs).collect(),
        },
    })
}

/// `(AᵀA)⁻¹Aᵀb̄`; the variance estimate is not clamped and may be negative.
pub fn noise_est_lin(design: &DesignSystem) -> Result<Estimate> {
    require_mode(design, DesignMode::NoiseEst)?;
    linear_estimate(design, Method::First(FirstStep::NoiseEstLin), true)
}

/// `(AᵀWA)⁻¹AᵀW b_σ` with `W = diag(1/σ²_s(i))`.
pub fn w_bias_eli_lin(design: &DesignSystem) -> Result<Estimate> {
    require_mode(design, DesignMode::Weighted)?;
    match &design.weights {
        Some(w) if w.iter().all(|wi| *wi > 0.0 && wi.is_finite()) => {}
        _ => return Err(Error::Config("weighted design needs positive finite weights".into())),
    }
    linear_estimate(design, Method::First(FirstStep::WBiasEliLin), false)
}

/// Sample variance of each sensor's repeated ranges, `1/(T−1) Σ (d_ij − d̄_i)²`.
///
/// With a single repetition there is nothing to estimate and every sensor
/// gets variance 1. Variances at the rounding level of the ranges are
/// reported as 0.
pub fn estimate_variances(meas: &MeasurementSet) -> VarianceEstimates {
    let t = meas.repeats();
    let per_sensor = (0..meas.sensor_count())
        .map(|i| {
            if t < 2 {
                return 1.0;
            }
            let g = meas.grouped(i);
            let mean = g.iter().sum::<f64>() / t as f64;
            let v = g.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (t - 1) as f64;
            let ulp = 16.0 * f64::EPSILON * g.iter().fold(0.0f64, |m, d| m.max(d.abs()));
            if v <= ulp * ulp {
                0.0
            } else {
                v
            }
        })
        .collect();
    VarianceEstimates { per_sensor, repeats: t }
}

/// Floor estimated variances at `VARIANCE_FLOOR · max σ̂²`; returns the
/// floored list and the indices that were raised.
pub fn floor_variances(var: &VarianceEstimates) -> (Vec<f64>, Vec<usize>) {
    let top = var.per_sensor.iter().fold(0.0f64, |m, v| m.max(*v));
    let floor = if top > 0.0 { VARIANCE_FLOOR * top } else { 1.0 };
    let mut raised = Vec::new();
    let floored = var
        .per_sensor
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v < floor {
                raised.push(i);
                floor
            } else {
                v
            }
        })
        .collect();
    (floored, raised)
}

/// Weighted bias-eliminated fit with estimated per-sensor variances.
pub fn aw_bias_eli_lin(scenario: &Scenario, meas: &MeasurementSet, var: &VarianceEstimates) -> Result<Estimate> {
    if var.per_sensor.len() != scenario.sensor_count() {
        return Err(Error::Config("variance estimates do not match the sensors".into()));
    }
    let (floored, raised) = floor_variances(var);
    let design = build_design(scenario, meas, DesignMode::Weighted, Some(&VarianceInput::PerSensor(floored)))?;
    let mut est = linear_estimate(&design, Method::First(FirstStep::AwBiasEliLin), false)?;
    if !raised.is_empty() {
        est.diagnostics.warnings.push(Warning::VarianceFloored(raised));
    }
    Ok(est)
}

/// Variance information available to an estimator.
#[derive(Debug, Clone, PartialEq)]
pub enum Knowledge {
    /// Nothing is known about the noise.
    Unknown,
    /// Common variance known.
    Common(f64),
    /// Per-sensor variances known.
    PerSensor(Vec<f64>),
}

impl Knowledge {
    /// What a scenario's own noise model reveals.
    pub fn from_scenario(scenario: &Scenario) -> Self {
        match scenario.noise().common_variance() {
            Some(s) => Knowledge::Common(s),
            None => Knowledge::PerSensor(scenario.noise().per_sensor(scenario.sensor_count())),
        }
    }
}

fn unusable(first: FirstStep, why: &str) -> Error {
    Error::Config(alloc::format!("{first} is not applicable: {why}"))
}

/// Run `first` on raw measurements, building the design it needs.
///
/// Also returns the per-sensor variances the second step should weight by
/// (`None` for unweighted refinement).
pub fn run_first_step(
    first: FirstStep,
    scenario: &Scenario,
    meas: &MeasurementSet,
    knowledge: &Knowledge,
) -> Result<(Estimate, Option<Vec<f64>>)> {
    let common = |why: &str| match knowledge {
        Knowledge::Common(s) => Ok(*s),
        _ => Err(unusable(first, why)),
    };
    match first {
        FirstStep::SLs => {
            let d = build_design(scenario, meas, DesignMode::BiasEli, Some(&VarianceInput::Common(0.0)))?;
            Ok((s_ls(&d)?, None))
        }
        FirstStep::BiasEli | FirstStep::BiasEliLin => {
            let s = common("needs a known common variance")?;
            let d = build_design(scenario, meas, DesignMode::BiasEli, Some(&VarianceInput::Common(s)))?;
            let est = if first == FirstStep::BiasEli { bias_eli(&d)? } else { bias_eli_lin(&d)? };
            Ok((est, None))
        }
        FirstStep::NoiseEst | FirstStep::NoiseEstLin => {
            let d = build_design(scenario, meas, DesignMode::NoiseEst, None)?;
            let est = if first == FirstStep::NoiseEst { noise_est(&d)? } else { noise_est_lin(&d)? };
            Ok((est, None))
        }
        FirstStep::WBiasEliLin => {
            let var = match knowledge {
                Knowledge::PerSensor(v) => v.clone(),
                Knowledge::Common(s) => alloc::vec![*s; scenario.sensor_count()],
                Knowledge::Unknown => return Err(unusable(first, "needs known variances")),
            };
            let d = build_design(scenario, meas, DesignMode::Weighted, Some(&VarianceInput::PerSensor(var.clone())))?;
            Ok((w_bias_eli_lin(&d)?, Some(var)))
        }
        FirstStep::AwBiasEliLin => {
            let var = estimate_variances(meas);
            let est = aw_bias_eli_lin(scenario, meas, &var)?;
            Ok((est, Some(floor_variances(&var).0)))
        }
    }
}

/// Short label of a solver path.
pub fn path_name(path: SolverPath) -> &'static str {
    match path {
        SolverPath::Regular => "regular",
        SolverPath::HardCase => "hard_case",
        SolverPath::Interior => "interior",
    }
}
