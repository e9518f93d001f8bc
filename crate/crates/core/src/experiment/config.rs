//! Run configuration: one TOML file with sections, schema-versioned, unknown
//! keys rejected. Every defaulted value is written back into the run
//! directory, so the echoed config is complete.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::DynamicsConfig;
use crate::error::{Error, Result};
use crate::stopping::{CalibrationSettings, StoppingConfig};
use crate::torus::TorusGrid;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Calibrate,
    Contraction,
    SpectralGap,
    Verify,
    BeCheck,
    ComingDown,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Calibrate => "calibrate",
            Experiment::Contraction => "contraction",
            Experiment::SpectralGap => "spectral-gap",
            Experiment::Verify => "verify",
            Experiment::BeCheck => "be-check",
            Experiment::ComingDown => "coming-down",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    #[serde(default = "one")]
    pub l: f64,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    #[serde(default = "one")]
    pub m: f64,
    /// Mass sweep for contraction and spectral-gap runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masses: Option<Vec<f64>>,
    #[serde(default = "DynamicsSection::default_dt")]
    pub dt: f64,
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default = "yes")]
    pub noise: bool,
    #[serde(default = "yes")]
    pub renormalize: bool,
    #[serde(default = "yes")]
    pub cubic: bool,
    #[serde(default = "DynamicsSection::default_substeps")]
    pub noise_substeps: usize,
    /// Run with `f = 0` and no noise, so the linearisation is the heat flow.
    #[serde(default)]
    pub potential_free: bool,
}

impl DynamicsSection {
    fn default_dt() -> f64 {
        1e-3
    }
    fn default_substeps() -> usize {
        1
    }
}

impl Default for DynamicsSection {
    fn default() -> Self {
        toml::from_str("").expect("all fields defaulted")
    }
}

/// `eta = 2.5`, `eta = inf` or `eta = "calibrate"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaSpec {
    Value(f64),
    Keyword(EtaKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EtaKeyword {
    Calibrate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppingSection {
    pub eta: EtaSpec,
    #[serde(default = "StoppingSection::default_theta")]
    pub theta: f64,
    #[serde(default = "StoppingSection::default_alpha")]
    pub alpha: f64,
    #[serde(default = "StoppingSection::default_epsilon")]
    pub epsilon: f64,
}

impl StoppingSection {
    fn default_theta() -> f64 {
        0.5
    }
    fn default_alpha() -> f64 {
        0.3
    }
    fn default_epsilon() -> f64 {
        0.1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    /// Monte Carlo replicas of the main estimator.
    #[serde(default = "EstimatorSection::d_replicas")]
    pub replicas: u64,
    /// Power-iteration (or probe) budget per operator norm.
    #[serde(default = "EstimatorSection::d_budget")]
    pub budget: usize,
    #[serde(default = "EstimatorSection::d_p")]
    pub p: f64,
    #[serde(default = "EstimatorSection::d_kappa")]
    pub kappa: f64,
    /// Regularity of the smoothing check, `alpha < (1 - kappa) / 5`.
    #[serde(default = "EstimatorSection::d_alpha")]
    pub alpha: f64,
    /// Fit times for contraction rates.
    #[serde(default = "EstimatorSection::d_times")]
    pub times: Vec<f64>,
    /// Short-time grid for the smoothing exponent; empty skips it.
    #[serde(default)]
    pub short_times: Vec<f64>,
    /// Step of the smoothing runs (defaults to the dynamics step).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub short_dt: Option<f64>,

    // barrier calibration and restart tails
    #[serde(default = "EstimatorSection::d_cal_replicas")]
    pub calibration_replicas: u64,
    #[serde(default = "EstimatorSection::d_cal_dt")]
    pub calibration_dt: f64,
    #[serde(default = "EstimatorSection::d_cal_step")]
    pub calibration_step: f64,
    #[serde(default = "EstimatorSection::d_eta_max")]
    pub eta_max: f64,

    // variance identity
    #[serde(default = "EstimatorSection::d_be_t")]
    pub t: f64,
    #[serde(default = "EstimatorSection::d_octaves")]
    pub s_octaves: usize,
    #[serde(default = "EstimatorSection::d_per_octave")]
    pub s_per_octave: usize,
    #[serde(default = "EstimatorSection::d_lhs")]
    pub lhs_replicas: u64,
    #[serde(default = "EstimatorSection::d_outer")]
    pub outer: u64,
    #[serde(default = "EstimatorSection::d_inner")]
    pub inner: u64,
    /// `linear`, `quadratic` or `tanh_sum` from the shipped list.
    #[serde(default = "EstimatorSection::d_functional")]
    pub functional: String,

    // spectral gap
    #[serde(default = "EstimatorSection::d_chains")]
    pub chains: u64,
    #[serde(default = "EstimatorSection::d_burn_in")]
    pub burn_in: f64,
    #[serde(default = "EstimatorSection::d_run_length")]
    pub run_length: f64,
    #[serde(default = "EstimatorSection::d_sample_every")]
    pub sample_every: usize,
    #[serde(default = "EstimatorSection::d_batches")]
    pub batches: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_star_hat: Option<f64>,
    /// Earlier contraction `report.json` to read `m_star_hat` from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contraction_report: Option<String>,

    // coming down from infinity
    #[serde(default = "EstimatorSection::d_magnitudes")]
    pub magnitudes: Vec<f64>,
    #[serde(default = "EstimatorSection::d_lp")]
    pub lp: f64,

    /// Test hook: multiplies the Wick constant used by the moment check.
    #[serde(default = "one")]
    pub wick_constant_scale: f64,
}

impl EstimatorSection {
    fn d_replicas() -> u64 {
        32
    }
    fn d_budget() -> usize {
        50
    }
    fn d_p() -> f64 {
        2.0
    }
    fn d_kappa() -> f64 {
        0.5
    }
    fn d_alpha() -> f64 {
        0.05
    }
    fn d_times() -> Vec<f64> {
        vec![0.25, 0.5, 0.75, 1.0]
    }
    fn d_cal_replicas() -> u64 {
        1000
    }
    fn d_cal_dt() -> f64 {
        0.01
    }
    fn d_cal_step() -> f64 {
        0.05
    }
    fn d_eta_max() -> f64 {
        1e4
    }
    fn d_be_t() -> f64 {
        0.25
    }
    fn d_octaves() -> usize {
        6
    }
    fn d_per_octave() -> usize {
        2
    }
    fn d_lhs() -> u64 {
        1000
    }
    fn d_outer() -> u64 {
        32
    }
    fn d_inner() -> u64 {
        8
    }
    fn d_functional() -> String {
        "quadratic".into()
    }
    fn d_chains() -> u64 {
        4
    }
    fn d_burn_in() -> f64 {
        2.0
    }
    fn d_run_length() -> f64 {
        20.0
    }
    fn d_sample_every() -> usize {
        10
    }
    fn d_batches() -> usize {
        10
    }
    fn d_magnitudes() -> Vec<f64> {
        vec![1.0, 10.0, 100.0]
    }
    fn d_lp() -> f64 {
        4.0
    }
}

impl Default for EstimatorSection {
    fn default() -> Self {
        toml::from_str("").expect("all fields defaulted")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub experiment: Experiment,
    #[serde(default)]
    pub base_seed: u64,
    pub grid: GridSection,
    #[serde(default)]
    pub dynamics: DynamicsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopping: Option<StoppingSection>,
    #[serde(default)]
    pub estimator: EstimatorSection,
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Resolved config with every default filled in.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serialisable")
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.grid.n, self.grid.l)
    }

    /// Dynamics at mass `m` and the configured horizon.
    pub fn dynamics_at(&self, m: f64) -> Result<DynamicsConfig> {
        let d = &self.dynamics;
        let mut c = DynamicsConfig::new(self.grid()?, m, d.dt, d.horizon).with_substeps(d.noise_substeps);
        c.noise = d.noise && !d.potential_free;
        c.renormalize = d.renormalize && c.noise;
        c.cubic = d.cubic;
        Ok(c)
    }

    pub fn calibration(&self) -> CalibrationSettings {
        let e = &self.estimator;
        CalibrationSettings { dt: e.calibration_dt, step: e.calibration_step, eta_max: e.eta_max }
    }

    /// Stopping config with a known barrier (`None` if the barrier still has
    /// to be calibrated).
    pub fn stopping_with(&self, eta: Option<f64>) -> Result<Option<StoppingConfig>> {
        let Some(s) = &self.stopping else { return Ok(None) };
        let eta = match (&s.eta, eta) {
            (EtaSpec::Value(v), _) => *v,
            (EtaSpec::Keyword(EtaKeyword::Calibrate), Some(v)) => v,
            (EtaSpec::Keyword(EtaKeyword::Calibrate), None) => return Ok(None),
        };
        StoppingConfig::new(eta, s.theta, s.alpha, s.epsilon).map(Some)
    }

    pub fn masses(&self) -> Result<Vec<f64>> {
        match &self.dynamics.masses {
            Some(ms) if !ms.is_empty() => Ok(ms.clone()),
            _ => Err(cfg_err(format!("{} needs dynamics.masses", self.experiment.name()))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(cfg_err(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let wrap = |e: Error| cfg_err(e.to_string());
        self.grid().map_err(wrap)?;
        self.dynamics_at(self.dynamics.m)?.validate().map_err(wrap)?;
        if let Some(s) = &self.stopping {
            if let EtaSpec::Value(v) = s.eta {
                StoppingConfig::new(v, s.theta, s.alpha, s.epsilon).map_err(wrap)?;
            }
        }
        let e = &self.estimator;
        if e.replicas == 0 {
            return Err(cfg_err("estimator.replicas must be positive"));
        }
        if let Some(ms) = &self.dynamics.masses {
            if ms.iter().any(|m| !(*m > 0.0)) {
                return Err(cfg_err("masses must be positive"));
            }
        }
        match self.experiment {
            Experiment::Calibrate => {
                if (e.calibration_replicas as usize) < crate::stopping::MIN_CALIBRATION_REPLICAS {
                    return Err(cfg_err(format!(
                        "estimator.calibration_replicas = {} is below the minimum {}",
                        e.calibration_replicas,
                        crate::stopping::MIN_CALIBRATION_REPLICAS
                    )));
                }
                if self.stopping.is_none() {
                    return Err(cfg_err("calibrate needs a [stopping] section for alpha"));
                }
            }
            Experiment::Contraction => {
                self.masses()?;
                if e.times.len() < 4 {
                    return Err(cfg_err("estimator.times needs at least 4 points"));
                }
            }
            Experiment::SpectralGap => {
                self.masses()?;
                if e.m_star_hat.is_none() && e.contraction_report.is_none() {
                    return Err(cfg_err("spectral-gap needs estimator.m_star_hat or estimator.contraction_report"));
                }
            }
            Experiment::BeCheck => {
                if !["linear", "quadratic", "tanh_sum"].contains(&e.functional.as_str()) {
                    return Err(cfg_err(format!("unknown functional {}", e.functional)));
                }
            }
            Experiment::ComingDown => {
                if self.dynamics.horizon > 1.0 || e.magnitudes.is_empty() {
                    return Err(cfg_err("coming-down needs horizon <= 1 and at least one magnitude"));
                }
            }
            Experiment::Verify => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "schema_version = 1\nexperiment = \"verify\"\n[grid]\nn = 16\n";

    #[test]
    fn defaults_are_echoed() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        let echoed = c.to_toml();
        assert!(echoed.contains("dt = 0.001"));
        assert!(echoed.contains("calibration_replicas = 1000"));
        assert_eq!(RunConfig::from_toml(&echoed).unwrap(), c);
    }

    #[test]
    fn rejects_unknown_keys_and_versions() {
        assert!(matches!(RunConfig::from_toml(&format!("{MINIMAL}bogus = 1\n")), Err(Error::Config(_))));
        let nested = format!("{MINIMAL}[dynamics]\nmass = 2.0\n");
        assert!(RunConfig::from_toml(&nested).is_err());
        assert!(RunConfig::from_toml(&MINIMAL.replace("= 1\n", "= 2\n")).is_err());
    }

    #[test]
    fn experiment_preconditions() {
        let c = "schema_version = 1\nexperiment = \"contraction\"\n[grid]\nn = 16\n";
        assert!(RunConfig::from_toml(c).unwrap_err().to_string().contains("masses"));
        let ok = format!("{c}[dynamics]\nmasses = [5.0, 10.0]\n");
        assert!(RunConfig::from_toml(&ok).is_ok());
        let cal = "schema_version = 1\nexperiment = \"calibrate\"\n[grid]\nn = 16\n[stopping]\neta = \"calibrate\"\n[estimator]\ncalibration_replicas = 10\n";
        assert!(RunConfig::from_toml(cal).unwrap_err().to_string().contains("minimum"));
    }

    #[test]
    fn eta_forms() {
        for (eta, want) in [("2.5", Some(2.5)), ("inf", Some(f64::INFINITY)), ("\"calibrate\"", None)] {
            let c = RunConfig::from_toml(&format!("{MINIMAL}[stopping]\neta = {eta}\n")).unwrap();
            assert_eq!(c.stopping_with(None).unwrap().map(|s| s.eta), want);
        }
        let c = RunConfig::from_toml(&format!("{MINIMAL}[stopping]\neta = \"calibrate\"\n")).unwrap();
        assert_eq!(c.stopping_with(Some(3.0)).unwrap().unwrap().eta, 3.0);
        assert!(RunConfig::from_toml(&format!("{MINIMAL}[stopping]\neta = \"soon\"\n")).is_err());
    }
}
