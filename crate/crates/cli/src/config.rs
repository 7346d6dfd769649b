//! Scenario documents: versioned JSON with matrices as row-major nested arrays.

use std::path::Path;

use lpvnet::analysis::{CertificateValues, LoopSpec};
use lpvnet::decomposition::{DecomposableMatrixSpec, DecomposablePlant, GainSchedule, PatternConvention, PatternPair};
use lpvnet::{DelayProfile, DwellSpec, Matrix};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// The built-in six-agent scenario.
pub const REFERENCE_SCENARIO: &str = include_str!("../scenarios/reference.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    pub plant: PlantConfig,
    pub pattern: PatternConfig,
    pub gains: GainSchedule,
    pub dwell: DwellSpec,
    pub delay: DelayProfile,
    pub certificates: CertificatesConfig,
    pub simulation: SimulationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub a: DecomposableMatrixSpec,
    pub b: DecomposableMatrixSpec,
    pub c: DecomposableMatrixSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternConfig {
    pub p1: Matrix,
    pub p2: Matrix,
    #[serde(default)]
    pub convention: PatternConvention,
    /// In the chosen convention; defaults to its full range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_range: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificatesConfig {
    pub grid_size: usize,
    pub controller: LoopConfig,
    pub observer: LoopConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopConfig {
    pub eta: u32,
    pub horizon: f64,
    /// Certificate to verify; when absent (or failing) one is searched for.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supplied: Option<CertificateValues>,
}

impl LoopConfig {
    pub fn spec(&self) -> LoopSpec {
        LoopSpec { eta: self.eta, horizon: self.horizon, supplied: self.supplied.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub step: f64,
    pub horizon: f64,
    pub seeds: Vec<u64>,
    /// Plant initial states are uniform on `[−spread, spread]`.
    #[serde(default = "default_spread")]
    pub initial_spread: f64,
}

fn default_spread() -> f64 {
    1.0
}

/// A configuration that passed every module-level check.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub plant: DecomposablePlant,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        ScenarioConfig::from_json(&text)
    }

    pub fn reference() -> Self {
        ScenarioConfig::from_json(REFERENCE_SCENARIO).expect("embedded scenario parses")
    }

    pub fn validate(self) -> Result<Scenario, CliError> {
        let v = |field: &str, e: &dyn std::fmt::Display| CliError::Validation(format!("{field}: {e}"));
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Validation(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            )));
        }
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(CliError::Validation(format!("name: {:?} must be nonempty [A-Za-z0-9_-]", self.name)));
        }
        for (field, spec) in [("plant.a", &self.plant.a), ("plant.b", &self.plant.b), ("plant.c", &self.plant.c)] {
            spec.validate().map_err(|e| v(field, &e))?;
        }
        let pattern = PatternPair::with_convention(
            self.pattern.p1.clone(),
            self.pattern.p2.clone(),
            self.pattern.convention,
            self.pattern.sigma_range,
        )
        .map_err(|e| v("pattern", &e))?;
        let plant = DecomposablePlant::new(self.plant.a.clone(), self.plant.b.clone(), self.plant.c.clone(), pattern)
            .map_err(|e| v("plant", &e))?;
        self.gains.validate(plant.state_dim(), plant.input_dim(), plant.output_dim()).map_err(|e| v("gains", &e))?;
        let cert = &self.certificates;
        if cert.grid_size < 2 {
            return Err(v("certificates.grid_size", &"must be at least 2"));
        }
        for (field, lc) in [("certificates.controller", &cert.controller), ("certificates.observer", &cert.observer)] {
            if lc.eta == 0 || !(lc.horizon > 0.0) {
                return Err(v(field, &"eta and horizon must be positive"));
            }
            if let Some(s) = &lc.supplied {
                s.on_grid(vec![0.0]).map_err(|e| v(&format!("{field}.supplied"), &e))?;
                if s.q0.dims() != (plant.state_dim(), plant.state_dim()) {
                    return Err(v(&format!("{field}.supplied.q0"), &"must match the agent state dimension"));
                }
            }
        }
        let sim = &self.simulation;
        if !(sim.horizon > 0.0) {
            return Err(v("simulation.horizon", &format!("must be positive, got {}", sim.horizon)));
        }
        if !(sim.step > 0.0) {
            return Err(v("simulation.step", &format!("must be positive, got {}", sim.step)));
        }
        if sim.seeds.is_empty() {
            return Err(v("simulation.seeds", &"need at least one seed"));
        }
        if !(sim.initial_spread >= 0.0) {
            return Err(v("simulation.initial_spread", &"must be nonnegative"));
        }
        Ok(Scenario { config: self, plant })
    }
}

impl Scenario {
    /// `--eta` applies to both loops with `T = η δ̲`.
    pub fn override_eta(&mut self, eta: u32) {
        let horizon = lpvnet::certificates::suggest_horizon(eta, &self.config.dwell);
        for lc in [&mut self.config.certificates.controller, &mut self.config.certificates.observer] {
            lc.eta = eta;
            lc.horizon = horizon;
        }
    }
}
