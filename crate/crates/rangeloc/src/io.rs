//! Scenario JSON, measurement CSV and estimate JSON.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rangeloc_core::analysis::{FisherReport, TheoreticalMse};
use rangeloc_core::estimators::{path_name, Estimate, Warning};
use rangeloc_core::gtrs::GtrsWarning;
use rangeloc_core::model::{MeasurementSet, NoiseModel, Scenario};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Noise block of a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum NoiseSpec {
    Homogeneous { sigma2: f64 },
    Heterogeneous { sigma2: Vec<f64> },
}

impl From<&NoiseModel> for NoiseSpec {
    fn from(noise: &NoiseModel) -> Self {
        match noise {
            NoiseModel::Homogeneous { sigma2 } => NoiseSpec::Homogeneous { sigma2: *sigma2 },
            NoiseModel::Heterogeneous { sigma2 } => NoiseSpec::Heterogeneous { sigma2: sigma2.clone() },
        }
    }
}

impl From<NoiseSpec> for NoiseModel {
    fn from(spec: NoiseSpec) -> Self {
        match spec {
            NoiseSpec::Homogeneous { sigma2 } => NoiseModel::homogeneous(sigma2),
            NoiseSpec::Heterogeneous { sigma2 } => NoiseModel::heterogeneous(sigma2),
        }
    }
}

/// On-disk form of a [`Scenario`].
///
/// ```json
/// {"sensors": [[0, 0], [10, 0], [0, 10]], "target": [3, 4],
///  "noise": {"kind": "homogeneous", "sigma2": 1.0}, "repeats": 1}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub sensors: Vec<Vec<f64>>,
    pub target: Vec<f64>,
    pub noise: NoiseSpec,
    pub repeats: usize,
}

impl From<&Scenario> for ScenarioFile {
    fn from(s: &Scenario) -> Self {
        ScenarioFile {
            sensors: s.sensors().iter().map(|a| a.iter().copied().collect()).collect(),
            target: s.target().iter().copied().collect(),
            noise: s.noise().into(),
            repeats: s.repeats(),
        }
    }
}

impl TryFrom<ScenarioFile> for Scenario {
    type Error = rangeloc_core::Error;

    fn try_from(f: ScenarioFile) -> rangeloc_core::Result<Self> {
        Scenario::new(
            f.sensors.into_iter().map(DVector::from_vec).collect(),
            DVector::from_vec(f.target),
            f.noise.into(),
            f.repeats,
        )
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    let mut s = String::new();
    fs::File::open(path).and_then(|mut f| f.read_to_string(&mut s)).map_err(Error::io(path))?;
    Ok(s)
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    let file: ScenarioFile = serde_json::from_str(&read_to_string(path)?).map_err(Error::json(path))?;
    Ok(Scenario::try_from(file)?)
}

pub fn write_scenario(path: &Path, scenario: &Scenario) -> Result<()> {
    write_json(path, &ScenarioFile::from(scenario))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::json(path))?;
    text.push('\n');
    fs::write(path, text).map_err(Error::io(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_to_string(path)?).map_err(Error::json(path))
}

#[derive(Debug, Serialize, Deserialize)]
struct MeasurementRow {
    sensor_index: usize,
    repetition: usize,
    distance: f64,
}

/// Write `sensor_index,repetition,distance` rows in storage order.
pub fn write_measurements<W: Write>(out: W, meas: &MeasurementSet) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (sensor_index, repetition, distance) in meas.rows() {
        w.serialize(MeasurementRow { sensor_index, repetition, distance })?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_measurements(path: &Path, meas: &MeasurementSet) -> Result<()> {
    let file = fs::File::create(path).map_err(Error::io(path))?;
    write_measurements(file, meas).map_err(Error::csv(path))
}

/// Read a measurement CSV covering `sensors` sensors. Rows may come in any
/// order but must form a complete sensor × repetition grid.
pub fn read_measurements<R: Read>(input: R, sensors: usize) -> Result<MeasurementSet> {
    let mut rows = Vec::new();
    for rec in csv::Reader::from_reader(input).deserialize() {
        let r: MeasurementRow = rec.map_err(Error::csv("<measurements>"))?;
        rows.push((r.sensor_index, r.repetition, r.distance));
    }
    Ok(MeasurementSet::from_rows(sensors, &rows)?)
}

pub fn load_measurements(path: &Path, sensors: usize) -> Result<MeasurementSet> {
    let file = fs::File::open(path).map_err(Error::io(path))?;
    read_measurements(file, sensors).map_err(|e| match e {
        Error::Csv { source, .. } => Error::Csv { path: path.into(), source },
        other => other,
    })
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsJson {
    pub path: Option<String>,
    pub iterations: usize,
    pub objective: Option<f64>,
    pub condition_number: Option<f64>,
    pub warnings: Vec<String>,
}

fn warning_text(w: &Warning) -> String {
    match w {
        Warning::Gtrs(GtrsWarning::MultipleRoots(k)) => format!("multiple_roots:{k}"),
        Warning::Gtrs(GtrsWarning::BisectionCap) => "bisection_cap".into(),
        Warning::Gtrs(GtrsWarning::CountMismatch) => "count_mismatch".into(),
        Warning::VarianceFloored(idx) => format!("variance_floored:{idx:?}"),
        Warning::IterationCap => "iteration_cap".into(),
    }
}

/// JSON form of an [`Estimate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateJson {
    pub method: String,
    pub x_hat: Vec<f64>,
    pub sigma2_hat: Option<f64>,
    pub lifted: Option<Vec<f64>>,
    pub diagnostics: DiagnosticsJson,
}

impl From<&Estimate> for EstimateJson {
    fn from(e: &Estimate) -> Self {
        let d = &e.diagnostics;
        EstimateJson {
            method: e.method.to_string(),
            x_hat: e.x_hat.iter().copied().collect(),
            sigma2_hat: e.sigma2_hat,
            lifted: e.lifted.as_ref().map(|y| y.iter().copied().collect()),
            diagnostics: DiagnosticsJson {
                path: d.path.map(|p| path_name(p).to_string()),
                iterations: d.iterations,
                objective: d.objective,
                condition_number: d.condition_number,
                warnings: d.warnings.iter().map(warning_text).collect(),
            },
        }
    }
}

/// JSON form of a [`FisherReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherJson {
    pub crlb: f64,
    pub diag: Vec<f64>,
    pub fisher: Vec<Vec<f64>>,
}

impl From<&FisherReport> for FisherJson {
    fn from(r: &FisherReport) -> Self {
        FisherJson { crlb: r.crlb, diag: r.diag.clone(), fisher: rows(&r.f) }
    }
}

/// JSON form of a [`TheoreticalMse`].
///
/// `lambda` holds one entry per sensor since repeated measurements of a
/// sensor share the same value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryJson {
    pub position_mse: f64,
    pub sigma2_bias: f64,
    pub mse_matrix: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
}

impl TheoryJson {
    pub fn new(t: &TheoreticalMse, repeats: usize) -> Self {
        TheoryJson {
            position_mse: t.position_trace(),
            sigma2_bias: t.sigma2_bias,
            mse_matrix: rows(&t.mse_matrix),
            lambda: t.lambda.iter().step_by(repeats.max(1)).copied().collect(),
        }
    }
}
