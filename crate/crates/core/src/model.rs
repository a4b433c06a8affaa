//! Scenarios, range measurements and the lifted linear design.
//!
//! Measurements are stored sensor-major: measurement `i * T + j` is the
//! `j`-th repetition of sensor `i`.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// Sensor positions used throughout the benchmark trials (ten sensors in a
/// 10 m cube, not coplanar).
pub const BENCHMARK_SENSORS: [[f64; 3]; 10] = [
    [5.0, 0.0, 5.0],
    [5.0, 5.0, -5.0],
    [5.0, -5.0, 5.0],
    [5.0, 0.0, 0.0],
    [5.0, 5.0, 5.0],
    [-5.0, 0.0, -5.0],
    [-5.0, -5.0, 5.0],
    [-5.0, 5.0, -5.0],
    [-5.0, 0.0, 0.0],
    [-5.0, -5.0, -5.0],
];

/// True target of the benchmark trials.
pub const BENCHMARK_TARGET: [f64; 3] = [6.0, 6.0, 6.0];

/// Per-sensor variances of the heterogeneous benchmark, `(k / 10)²`.
pub const BENCHMARK_HETEROGENEOUS_VARIANCES: [f64; 10] = [0.01, 0.04, 0.09, 0.16, 0.25, 0.36, 0.49, 0.64, 0.81, 1.0];

/// Zero-mean Gaussian range noise.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    /// Every measurement has variance `sigma2`.
    Homogeneous { sigma2: f64 },
    /// Sensor `i` has variance `sigma2[i]`.
    Heterogeneous { sigma2: Vec<f64> },
}

impl NoiseModel {
    pub fn homogeneous(sigma2: f64) -> Self {
        NoiseModel::Homogeneous { sigma2 }
    }

    pub fn heterogeneous(sigma2: Vec<f64>) -> Self {
        NoiseModel::Heterogeneous { sigma2 }
    }

    /// Variance of the noise on sensor `sensor`.
    pub fn variance(&self, sensor: usize) -> f64 {
        match self {
            NoiseModel::Homogeneous { sigma2 } => *sigma2,
            NoiseModel::Heterogeneous { sigma2 } => sigma2[sensor],
        }
    }

    /// Common variance, `None` for heterogeneous noise.
    pub fn common_variance(&self) -> Option<f64> {
        match self {
            NoiseModel::Homogeneous { sigma2 } => Some(*sigma2),
            NoiseModel::Heterogeneous { .. } => None,
        }
    }

    /// Variances expanded to one entry per sensor.
    pub fn per_sensor(&self, sensors: usize) -> Vec<f64> {
        (0..sensors).map(|i| self.variance(i)).collect()
    }

    /// Same model with every variance multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            NoiseModel::Homogeneous { sigma2 } => NoiseModel::homogeneous(sigma2 * factor),
            NoiseModel::Heterogeneous { sigma2 } => {
                NoiseModel::heterogeneous(sigma2.iter().map(|s| s * factor).collect())
            }
        }
    }
}

/// Sensors, target, noise and number of repetitions per sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    sensors: Vec<DVector<f64>>,
    target: DVector<f64>,
    noise: NoiseModel,
    repeats: usize,
}

impl Scenario {
    pub fn new(sensors: Vec<DVector<f64>>, target: DVector<f64>, noise: NoiseModel, repeats: usize) -> Result<Self> {
        let invalid = |msg: alloc::string::String| Err(Error::InvalidScenario(msg));
        let n = target.len();
        if sensors.is_empty() {
            return invalid("no sensors".into());
        }
        if n == 0 {
            return invalid("zero-dimensional target".into());
        }
        if n != 2 && n != 3 {
            return invalid(format!("dimension {n} is not 2 or 3"));
        }
        if let Some(i) = sensors.iter().position(|a| a.len() != n) {
            return invalid(format!("sensor {i} has dimension {}", sensors[i].len()));
        }
        if sensors.len() < n + 1 {
            return invalid(format!("{} sensors, need at least {}", sensors.len(), n + 1));
        }
        if repeats == 0 {
            return invalid("repeats must be positive".into());
        }
        let finite = |v: &DVector<f64>| v.iter().all(|c| c.is_finite());
        if !finite(&target) || !sensors.iter().all(finite) {
            return invalid("non-finite coordinate".into());
        }
        if let Some(i) = sensors.iter().position(|a| (a - &target).norm() == 0.0) {
            return invalid(format!("sensor {i} coincides with the target"));
        }
        match &noise {
            NoiseModel::Homogeneous { sigma2 } => {
                if !(*sigma2 >= 0.0 && sigma2.is_finite()) {
                    return invalid(format!("variance {sigma2} is not a finite non-negative number"));
                }
            }
            NoiseModel::Heterogeneous { sigma2 } => {
                if sigma2.len() != sensors.len() {
                    return invalid(format!("{} variances for {} sensors", sigma2.len(), sensors.len()));
                }
                if let Some(s) = sigma2.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
                    return invalid(format!("variance {s} is not a finite non-negative number"));
                }
            }
        }
        Ok(Scenario { sensors, target, noise, repeats })
    }

    /// Build from plain coordinate slices.
    pub fn from_coords(sensors: &[&[f64]], target: &[f64], noise: NoiseModel, repeats: usize) -> Result<Self> {
        let sensors = sensors.iter().map(|a| DVector::from_column_slice(a)).collect();
        Scenario::new(sensors, DVector::from_column_slice(target), noise, repeats)
    }

    /// The ten-sensor benchmark with target `[6, 6, 6]`.
    pub fn benchmark(noise: NoiseModel, repeats: usize) -> Result<Self> {
        let sensors = BENCHMARK_SENSORS.iter().map(|a| DVector::from_row_slice(a)).collect();
        Scenario::new(sensors, DVector::from_row_slice(&BENCHMARK_TARGET), noise, repeats)
    }

    pub fn sensors(&self) -> &[DVector<f64>] {
        &self.sensors
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn repeats(&self) -> usize {
        self.repeats
    }

    /// Spatial dimension `n`.
    pub fn dim(&self) -> usize {
        self.target.len()
    }

    /// Number of distinct sensors `M`.
    pub fn sensor_count(&self) -> usize {
        self.sensors.len()
    }

    /// Total number of measurements `m = M·T`.
    pub fn measurement_count(&self) -> usize {
        self.sensors.len() * self.repeats
    }

    /// Noise-free range from each sensor to the target.
    pub fn true_distances(&self) -> Vec<f64> {
        self.sensors.iter().map(|a| (a - &self.target).norm()).collect()
    }

    pub fn with_noise(&self, noise: NoiseModel) -> Result<Self> {
        Scenario::new(self.sensors.clone(), self.target.clone(), noise, self.repeats)
    }

    pub fn with_repeats(&self, repeats: usize) -> Result<Self> {
        Scenario::new(self.sensors.clone(), self.target.clone(), self.noise.clone(), repeats)
    }

    pub fn with_target(&self, target: DVector<f64>) -> Result<Self> {
        Scenario::new(self.sensors.clone(), target, self.noise.clone(), self.repeats)
    }
}

/// Range measurements of one scenario, sensor-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    values: Vec<f64>,
    sensor_index: Vec<usize>,
    repeats: usize,
}

impl MeasurementSet {
    /// Build from `(sensor, repetition, distance)` rows in any order.
    ///
    /// Every `(sensor, repetition)` pair of the `sensors × repeats` grid must
    /// appear exactly once.
    pub fn from_rows(sensors: usize, rows: &[(usize, usize, f64)]) -> Result<Self> {
        if sensors == 0 || rows.is_empty() || !rows.len().is_multiple_of(sensors) {
            return Err(Error::InvalidInput(format!(
                "{} rows do not form a complete grid over {sensors} sensors",
                rows.len()
            )));
        }
        let repeats = rows.len() / sensors;
        let mut values = alloc::vec![f64::NAN; rows.len()];
        let mut seen = alloc::vec![false; rows.len()];
        for &(i, j, d) in rows {
            if i >= sensors || j >= repeats {
                return Err(Error::InvalidInput(format!(
                    "row ({i}, {j}) outside {sensors} sensors x {repeats} repetitions"
                )));
            }
            let k = i * repeats + j;
            if seen[k] {
                return Err(Error::InvalidInput(format!("duplicate row ({i}, {j})")));
            }
            seen[k] = true;
            values[k] = d;
        }
        let sensor_index = (0..sensors).flat_map(|i| core::iter::repeat_n(i, repeats)).collect();
        Ok(MeasurementSet { values, sensor_index, repeats })
    }

    /// Flat list of the `m` ranges.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Sensor of each measurement.
    pub fn sensor_index(&self) -> &[usize] {
        &self.sensor_index
    }

    pub fn repeats(&self) -> usize {
        self.repeats
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sensor_count(&self) -> usize {
        self.values.len() / self.repeats
    }

    /// The `T` repeated ranges of sensor `sensor`.
    pub fn grouped(&self, sensor: usize) -> &[f64] {
        &self.values[sensor * self.repeats..(sensor + 1) * self.repeats]
    }

    /// `(sensor, repetition, distance)` rows in storage order.
    pub fn rows(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.values.iter().enumerate().map(move |(k, &d)| (k / self.repeats, k % self.repeats, d))
    }

    fn check_against(&self, scenario: &Scenario) -> Result<()> {
        if self.sensor_count() != scenario.sensor_count() {
            return Err(Error::InvalidInput(format!(
                "measurements cover {} sensors, scenario has {}",
                self.sensor_count(),
                scenario.sensor_count()
            )));
        }
        Ok(())
    }
}

/// Draw `d_ij = ‖a_i − x°‖ + r_ij` with `r_ij ~ N(0, σ²_i)`.
///
/// Each sensor draws from its own ChaCha8 stream (`set_stream(i)`) of a
/// generator keyed by `seed`; within a stream the standard normals come from
/// the ziggurat sampler of `rand_distr`, in repetition order. Output depends
/// only on `(scenario, seed)`; bit-exactness is promised within one build.
pub fn simulate(scenario: &Scenario, seed: u64) -> Result<MeasurementSet> {
    if scenario.sensors.is_empty() || scenario.dim() == 0 {
        return Err(Error::InvalidScenario("empty scenario".into()));
    }
    let t = scenario.repeats;
    let distances = scenario.true_distances();
    let mut values = Vec::with_capacity(scenario.measurement_count());
    let mut sensor_index = Vec::with_capacity(scenario.measurement_count());
    let base = ChaCha8Rng::seed_from_u64(seed);
    for (i, &dist) in distances.iter().enumerate() {
        let sigma = scenario.noise.variance(i).sqrt();
        let mut rng = base.clone();
        rng.set_stream(i as u64);
        rng.set_word_pos(0);
        for _ in 0..t {
            let z: f64 = StandardNormal.sample(&mut rng);
            values.push(dist + sigma * z);
            sensor_index.push(i);
        }
    }
    Ok(MeasurementSet { values, sensor_index, repeats: t })
}

/// Which right-hand side a [`DesignSystem`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignMode {
    /// `b_i = d_i² − ‖a_i‖² − σ²` with a known common variance.
    BiasEli,
    /// `b̄_i = d_i² − ‖a_i‖²`, variance unknown.
    NoiseEst,
    /// `b_σ,i = d_i² − ‖a_i‖² − σ²_s(i)` with weights `1/σ²_s(i)`.
    Weighted,
}

/// Variance knowledge supplied to [`build_design`].
#[derive(Debug, Clone, PartialEq)]
pub enum VarianceInput {
    Common(f64),
    PerSensor(Vec<f64>),
}

/// Lifted linear model `A y ≈ rhs` with `y = [x; ‖x‖²]`.
#[derive(Debug, Clone)]
pub struct DesignSystem {
    /// `m × (n+1)`, row `i` is `[−2 a_s(i)ᵀ, 1]`.
    pub a: DMatrix<f64>,
    /// `b`, `b̄` or `b_σ` depending on [`DesignSystem::mode`].
    pub rhs: DVector<f64>,
    /// Diagonal of `W` (weighted mode only).
    pub weights: Option<DVector<f64>>,
    /// Variance subtracted from each entry of `rhs` (zero in noise-est mode).
    pub subtracted: DVector<f64>,
    pub mode: DesignMode,
}

impl DesignSystem {
    /// Spatial dimension `n`.
    pub fn dim(&self) -> usize {
        self.a.ncols() - 1
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    /// `D = diag(I_n, 0)`.
    pub fn d(&self) -> DMatrix<f64> {
        constraint_matrix(self.dim())
    }

    /// `g = [0, …, 0, −1/2]`.
    pub fn g(&self) -> DVector<f64> {
        constraint_vector(self.dim())
    }

    /// `(AᵀWA, AᵀW rhs)` with `W = I` when unweighted.
    pub fn normal_equations(&self) -> (DMatrix<f64>, DVector<f64>) {
        match &self.weights {
            None => (self.a.tr_mul(&self.a), self.a.tr_mul(&self.rhs)),
            Some(w) => {
                let mut wa = self.a.clone();
                for (mut row, wi) in wa.row_iter_mut().zip(w.iter()) {
                    row *= *wi;
                }
                (self.a.tr_mul(&wa), wa.tr_mul(&self.rhs))
            }
        }
    }
}

/// `diag(I_n, 0)`.
pub fn constraint_matrix(n: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(n + 1, n + 1);
    for k in 0..n {
        d[(k, k)] = 1.0;
    }
    d
}

/// `[0, …, 0, −1/2]` of length `n + 1`.
pub fn constraint_vector(n: usize) -> DVector<f64> {
    let mut g = DVector::zeros(n + 1);
    g[n] = -0.5;
    g
}

/// Assemble `A`, the mode's right-hand side and, in weighted mode, `W`.
pub fn build_design(
    scenario: &Scenario,
    meas: &MeasurementSet,
    mode: DesignMode,
    variance: Option<&VarianceInput>,
) -> Result<DesignSystem> {
    meas.check_against(scenario)?;
    let m_sensors = scenario.sensor_count();
    let per_sensor: Vec<f64> = match (mode, variance) {
        (DesignMode::NoiseEst, None) => alloc::vec![0.0; m_sensors],
        (DesignMode::NoiseEst, Some(_)) => return Err(Error::Config("noise-est design takes no variance".into())),
        (DesignMode::BiasEli, Some(VarianceInput::Common(s))) => alloc::vec![*s; m_sensors],
        (DesignMode::BiasEli, Some(VarianceInput::PerSensor(_))) => {
            return Err(Error::Config("bias-eli design needs a common variance".into()))
        }
        (DesignMode::Weighted, Some(VarianceInput::Common(s))) => alloc::vec![*s; m_sensors],
        (DesignMode::Weighted, Some(VarianceInput::PerSensor(v))) => {
            if v.len() != m_sensors {
                return Err(Error::Config(format!("{} variances for {m_sensors} sensors", v.len())));
            }
            v.clone()
        }
        (_, None) => return Err(Error::Config(format!("{mode:?} design needs a variance"))),
    };
    if per_sensor.iter().any(|s| !s.is_finite()) {
        return Err(Error::Config("non-finite variance".into()));
    }
    if mode == DesignMode::Weighted && per_sensor.iter().any(|s| *s <= 0.0) {
        return Err(Error::Config("weighted design needs positive variances".into()));
    }

    let n = scenario.dim();
    let m = meas.len();
    let norms2: Vec<f64> = scenario.sensors.iter().map(|a| a.norm_squared()).collect();
    let mut a = DMatrix::zeros(m, n + 1);
    let mut rhs = DVector::zeros(m);
    let mut subtracted = DVector::zeros(m);
    for (k, (&d, &s)) in meas.values.iter().zip(&meas.sensor_index).enumerate() {
        let sensor = &scenario.sensors[s];
        for c in 0..n {
            a[(k, c)] = -2.0 * sensor[c];
        }
        a[(k, n)] = 1.0;
        rhs[k] = d * d - norms2[s] - per_sensor[s];
        subtracted[k] = per_sensor[s];
    }
    let weights = (mode == DesignMode::Weighted)
        .then(|| DVector::from_iterator(m, meas.sensor_index.iter().map(|&s| 1.0 / per_sensor[s])));
    Ok(DesignSystem { a, rhs, weights, subtracted, mode })
}

/// Lift of the true target: `[x°; ‖x°‖²]` for the bias-eliminated model and
/// `[x°; ‖x°‖² + σ²]` for the noise-estimating one.
///
/// The noise-estimating lift needs a common variance; heterogeneous noise is
/// rejected.
pub fn true_lift(scenario: &Scenario, mode: DesignMode) -> Result<DVector<f64>> {
    let x = scenario.target();
    let n = x.len();
    let mut y = DVector::zeros(n + 1);
    y.rows_mut(0, n).copy_from(x);
    y[n] = x.norm_squared();
    if mode == DesignMode::NoiseEst {
        y[n] += scenario
            .noise
            .common_variance()
            .ok_or_else(|| Error::Config("noise-est lift needs a homogeneous noise model".into()))?;
    }
    Ok(y)
}
