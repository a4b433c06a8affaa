//! Trial configurations and the builtin trial set.

use std::path::PathBuf;

use nalgebra::DVector;
use rangeloc_core::estimators::Method;
use rangeloc_core::model::{NoiseModel, Scenario, BENCHMARK_HETEROGENEOUS_VARIANCES};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Geometry of a trial: the benchmark, or sensors and target given inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Named(String),
    Inline(Geometry),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub sensors: Vec<Vec<f64>>,
    pub target: Vec<f64>,
}

/// A Monte-Carlo experiment over a grid of repeat counts and noise levels.
///
/// Each `sigma2` value sets homogeneous noise, or scales `noise_profile`
/// when one is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialConfig {
    pub name: String,
    pub scenario: ScenarioRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_profile: Option<Vec<f64>>,
    pub estimators: Vec<String>,
    pub repeats: Vec<usize>,
    pub sigma2: Vec<f64>,
    pub runs: usize,
    pub seed: u64,
    #[serde(default, skip_serializing)]
    pub output: Option<PathBuf>,
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.estimators.is_empty() || self.repeats.is_empty() || self.sigma2.is_empty() {
            return bad("estimators, repeats and sigma2 must be nonempty".into());
        }
        if self.repeats.contains(&0) {
            return bad("repeat counts must be positive".into());
        }
        if let Some(s) = self.sigma2.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return bad(format!("sigma2 {s} is not a finite nonnegative number"));
        }
        self.methods()?;
        self.cell_scenario(self.repeats[0], self.sigma2[0])?;
        Ok(())
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        self.estimators
            .iter()
            .map(|name| name.parse().map_err(|_| Error::Config(format!("unknown estimator {name:?}"))))
            .collect()
    }

    /// Scenario of the `(T, σ²)` cell.
    pub fn cell_scenario(&self, repeats: usize, sigma2: f64) -> Result<Scenario> {
        let noise = match &self.noise_profile {
            Some(p) => NoiseModel::heterogeneous(p.iter().map(|v| v * sigma2).collect()),
            None => NoiseModel::homogeneous(sigma2),
        };
        let scenario = match &self.scenario {
            ScenarioRef::Named(n) if n == "benchmark" => Scenario::benchmark(noise, repeats),
            ScenarioRef::Named(n) => return Err(Error::Config(format!("unknown scenario {n:?}"))),
            ScenarioRef::Inline(g) => Scenario::new(
                g.sensors.iter().map(|a| DVector::from_column_slice(a)).collect(),
                DVector::from_column_slice(&g.target),
                noise,
                repeats,
            ),
        };
        Ok(scenario?)
    }

    /// SHA-256 of the canonical JSON encoding, output directory excluded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}

pub const BUILTINS: [&str; 8] =
    ["trial1-tiny", "trial1", "trial2", "trial3", "trial3-small", "trial4", "trial5", "trial6"];

const FIRST_STEPS: [&str; 4] = ["bias-eli", "bias-eli-lin", "noise-est", "noise-est-lin"];

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn two_steps(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| format!("two-step:{s}")).collect()
}

fn decades(full: bool) -> Vec<usize> {
    if full {
        vec![1, 10, 100, 1000, 10_000]
    } else {
        vec![1, 10, 100, 1000]
    }
}

/// A builtin configuration at CI scale, or at full scale with `full`.
pub fn builtin(name: &str, full: bool) -> Result<TrialConfig> {
    let base = |estimators: Vec<String>, repeats: Vec<usize>, sigma2: Vec<f64>, runs: usize| TrialConfig {
        name: name.to_string(),
        scenario: ScenarioRef::Named("benchmark".into()),
        noise_profile: None,
        estimators,
        repeats,
        sigma2,
        runs,
        seed: 20_240_917,
        output: None,
    };
    let sweep = vec![0.1, 0.3, 1.0, 3.0, 10.0];
    let n = if full { 1000 } else { 200 };
    let config = match name {
        "trial1-tiny" => base(names(&FIRST_STEPS), vec![1], vec![1.0], 20),
        "trial1" => base(names(&FIRST_STEPS), vec![1], vec![1.0], if full { 100_000 } else { 1000 }),
        "trial2" => base(names(&["bias-eli", "noise-est", "noise-est-lin", "s-ls"]), decades(full), vec![1.0], n),
        "trial3" | "trial3-small" => {
            let mut est = names(&["s-ls"]);
            est.extend(names(&FIRST_STEPS));
            est.extend(two_steps(&FIRST_STEPS));
            let (repeats, runs) = if name == "trial3" { (decades(full), n) } else { (vec![1, 10, 100, 1000], 200) };
            base(est, repeats, vec![1.0], runs)
        }
        "trial4" => {
            let mut est = names(&FIRST_STEPS);
            est.extend(two_steps(&FIRST_STEPS));
            base(est, vec![if full { 10_000 } else { 1000 }], sweep, n)
        }
        "trial5" => base(names(&["noise-est-lin"]), vec![1], sweep, if full { 100_000 } else { 1000 }),
        "trial6" => {
            let weighted = ["w-bias-eli-lin", "aw-bias-eli-lin"];
            let mut est = names(&weighted);
            est.extend(two_steps(&weighted));
            let mut c = base(est, decades(full), vec![1.0], n);
            c.noise_profile = Some(BENCHMARK_HETEROGENEOUS_VARIANCES.to_vec());
            c
        }
        _ => return Err(Error::Config(format!("unknown builtin {name:?}; expected one of {BUILTINS:?}"))),
    };
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate() {
        for name in BUILTINS {
            builtin(name, false).unwrap().validate().unwrap();
            builtin(name, true).unwrap().validate().unwrap();
        }
        assert!(builtin("trial7", false).is_err());
    }

    #[test]
    fn hash_ignores_output_and_tracks_content() {
        let a = builtin("trial3-small", false).unwrap();
        let mut b = a.clone();
        b.output = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn inline_scenario_parses() {
        let text = r#"{"name":"x","scenario":{"sensors":[[0,0],[4,0],[0,4]],"target":[1,1]},
            "estimators":["noise-est-lin"],"repeats":[2],"sigma2":[0.5],"runs":3,"seed":1}"#;
        let c: TrialConfig = serde_json::from_str(text).unwrap();
        c.validate().unwrap();
        assert_eq!(c.cell_scenario(2, 0.5).unwrap().dim(), 2);
    }

    #[test]
    fn invalid_configs() {
        let mut c = builtin("trial1-tiny", false).unwrap();
        c.runs = 0;
        assert!(c.validate().is_err());
        let mut c = builtin("trial1-tiny", false).unwrap();
        c.estimators.push("kalman".into());
        assert!(c.validate().is_err());
        let mut c = builtin("trial1-tiny", false).unwrap();
        c.scenario = ScenarioRef::Named("moon".into());
        assert!(c.validate().is_err());
    }
}
