//! Gauss–Newton refinement on the range residuals `d − f̄(x)`.
//!
//! One step from a √m-consistent start is the second half of the two-step
//! estimator; iterating to convergence gives a local least-squares solution
//! used as a reference.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::estimators::{run_first_step, Diagnostics, Estimate, FirstStep, Knowledge, Method, Warning};
use crate::model::{MeasurementSet, Scenario};
use crate::{Error, Result};

/// Largest accepted condition number of `JᵀWJ`.
pub const MAX_CONDITION: f64 = 1e12;

/// Step-norm tolerance and iteration cap of [`Method::LsGn`].
pub const LS_GN_TOL: f64 = 1e-10;
pub const LS_GN_MAX_ITER: usize = 100;

/// Residuals and Jacobian of the range model at one point.
#[derive(Debug, Clone)]
pub struct GnState {
    pub x: DVector<f64>,
    /// `d_i − ‖a_s(i) − x‖`.
    pub residuals: DVector<f64>,
    /// Rows `(x − a_s(i))ᵀ / ‖x − a_s(i)‖`.
    pub jacobian: DMatrix<f64>,
}

impl GnState {
    pub fn new(x: &DVector<f64>, scenario: &Scenario, meas: &MeasurementSet) -> Result<Self> {
        let n = scenario.dim();
        if x.len() != n {
            return Err(Error::InvalidInput(alloc::format!("start point has dimension {}", x.len())));
        }
        if meas.sensor_count() != scenario.sensor_count() {
            return Err(Error::InvalidInput("measurements do not match the scenario".into()));
        }
        // Unit directions per sensor, reused across repetitions.
        let mut dirs = Vec::with_capacity(scenario.sensor_count());
        for (i, a) in scenario.sensors().iter().enumerate() {
            let diff = x - a;
            let dist = diff.norm();
            if dist == 0.0 {
                return Err(Error::SingularJacobian(i));
            }
            dirs.push((diff / dist, dist));
        }
        let m = meas.len();
        let mut jacobian = DMatrix::zeros(m, n);
        let mut residuals = DVector::zeros(m);
        for (k, (&d, &s)) in meas.values().iter().zip(meas.sensor_index()).enumerate() {
            let (u, dist) = &dirs[s];
            for c in 0..n {
                jacobian[(k, c)] = u[c];
            }
            residuals[k] = d - dist;
        }
        Ok(GnState { x: x.clone(), residuals, jacobian })
    }

    /// `(JᵀWJ)⁻¹JᵀW r`.
    fn increment(&self, weights: Option<&[f64]>) -> Result<DVector<f64>> {
        let (jtj, jtr) = match weights {
            None => (self.jacobian.tr_mul(&self.jacobian), self.jacobian.tr_mul(&self.residuals)),
            Some(w) => {
                if w.len() != self.residuals.len() {
                    return Err(Error::InvalidInput("one weight per measurement expected".into()));
                }
                let mut wj = self.jacobian.clone();
                for (mut row, wi) in wj.row_iter_mut().zip(w) {
                    row *= *wi;
                }
                (self.jacobian.tr_mul(&wj), wj.tr_mul(&self.residuals))
            }
        };
        let ev = jtj.symmetric_eigenvalues();
        let (lo, hi) = (ev.min(), ev.max());
        let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(cond <= MAX_CONDITION) {
            return Err(Error::IllConditioned(cond));
        }
        let chol = jtj.cholesky().ok_or(Error::IllConditioned(f64::INFINITY))?;
        Ok(chol.solve(&jtr))
    }
}

/// Expand per-sensor variances into per-measurement weights `1/σ²`.
pub fn measurement_weights(per_sensor_variance: &[f64], meas: &MeasurementSet) -> Result<Vec<f64>> {
    if per_sensor_variance.len() != meas.sensor_count() {
        return Err(Error::Config("one variance per sensor expected".into()));
    }
    if per_sensor_variance.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Config("weights need positive finite variances".into()));
    }
    Ok(meas.sensor_index().iter().map(|&s| 1.0 / per_sensor_variance[s]).collect())
}

/// One Gauss–Newton step `x0 + (JᵀWJ)⁻¹JᵀW(d − f̄(x0))`, `W = I` without
/// weights.
pub fn gn_step(
    x0: &DVector<f64>,
    scenario: &Scenario,
    meas: &MeasurementSet,
    weights: Option<&[f64]>,
) -> Result<DVector<f64>> {
    let state = GnState::new(x0, scenario, meas)?;
    Ok(x0 + state.increment(weights)?)
}

/// Run `first`, then exactly one Gauss–Newton step. Weighted first steps
/// are refined with the same weights they were fitted with.
pub fn two_step(
    first: FirstStep,
    scenario: &Scenario,
    meas: &MeasurementSet,
    knowledge: &Knowledge,
) -> Result<Estimate> {
    let (est, variances) = run_first_step(first, scenario, meas, knowledge)?;
    let weights = variances.map(|v| measurement_weights(&v, meas)).transpose()?;
    let x = gn_step(&est.x_hat, scenario, meas, weights.as_deref())?;
    Ok(Estimate {
        x_hat: x,
        sigma2_hat: est.sigma2_hat,
        lifted: None,
        method: Method::TwoStep(first),
        diagnostics: Diagnostics { iterations: 1, ..est.diagnostics },
    })
}

/// Iterate Gauss–Newton until the step norm drops below `tol` or
/// `max_iter` steps were taken.
///
/// Diverges (error) when the step norm grows tenfold within five iterations.
pub fn gn_converge(
    x0: &DVector<f64>,
    scenario: &Scenario,
    meas: &MeasurementSet,
    weights: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<Estimate> {
    let mut x = x0.clone();
    let mut norms: Vec<f64> = Vec::new();
    let mut converged = max_iter == 0;
    let mut iterations = 0;
    while iterations < max_iter {
        let state = GnState::new(&x, scenario, meas)?;
        let step = state.increment(weights)?;
        iterations += 1;
        x += &step;
        let norm = step.norm();
        norms.push(norm);
        if norm < tol {
            converged = true;
            break;
        }
        if norms.len() > 5 && norm > 10.0 * norms[norms.len() - 6] {
            return Err(Error::Divergence(iterations));
        }
    }
    let objective = {
        let state = GnState::new(&x, scenario, meas)?;
        match weights {
            None => state.residuals.norm_squared(),
            Some(w) => state.residuals.iter().zip(w).map(|(r, wi)| wi * r * r).sum(),
        }
    };
    let mut diagnostics = Diagnostics { iterations, objective: Some(objective), ..Diagnostics::default() };
    if !converged {
        diagnostics.warnings.push(Warning::IterationCap);
    }
    Ok(Estimate { x_hat: x, sigma2_hat: None, lifted: None, method: Method::LsGn, diagnostics })
}

/// Run any [`Method`] on raw measurements.
///
/// `LsGn` iterates from the noise-estimating linear fit, weighting by known
/// per-sensor variances when there are any.
pub fn run_method(
    method: Method,
    scenario: &Scenario,
    meas: &MeasurementSet,
    knowledge: &Knowledge,
) -> Result<Estimate> {
    match method {
        Method::First(first) => run_first_step(first, scenario, meas, knowledge).map(|(est, _)| est),
        Method::TwoStep(first) => two_step(first, scenario, meas, knowledge),
        Method::LsGn => {
            let (start, _) = run_first_step(FirstStep::NoiseEstLin, scenario, meas, knowledge)?;
            let weights = match knowledge {
                Knowledge::PerSensor(v) => Some(measurement_weights(v, meas)?),
                _ => None,
            };
            gn_converge(&start.x_hat, scenario, meas, weights.as_deref(), LS_GN_TOL, LS_GN_MAX_ITER)
        }
    }
}
