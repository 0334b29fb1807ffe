//! Discrete-event simulation of fault scenarios under the adaptive and the
//! inverse-time protection schemes.

mod batch;
mod engine;
mod protection;
mod report;

pub use batch::{compare_schemes, BatchRow, ComparisonTable};
pub use engine::{inject_fault, run_scenario, run_scheme, RelayCurrents};
pub use protection::{ProtectionSettings, SettingsSource, LOAD_MARGIN};
pub use report::{LogEntry, RelayTiming, SchemeRun, TimingReport, TraceRow};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comms::{BusConfig, CommsError, RetransmitSchedule};
use crate::grid::{Contingency, FaultSpec, GridError, GridTopology};
use crate::relay::RelayConfig;
use crate::settings::{delta_t_min, IdmtCurve, RelayTimeSettings, SettingsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Settings(#[from] SettingsError),
    #[error(transparent)]
    Comms(#[from] CommsError),
    #[error("scenario `{name}`: {message}")]
    Scenario { name: String, message: String },
    #[error("scenario document: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Adaptive,
    Baseline,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Adaptive => "adaptive",
            Scheme::Baseline => "baseline",
        })
    }
}

fn default_fault_time() -> f64 {
    0.02
}

fn default_duration() -> f64 {
    1.0
}

fn default_step() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub contingency: Contingency,
    pub fault: FaultSpec,
    #[serde(default = "default_fault_time")]
    pub fault_time: f64,
    /// Relays forced inert for the whole run.
    #[serde(default)]
    pub adjacent_failure: BTreeSet<String>,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_step")]
    pub sample_step: f64,
    /// Optional row and column labels for tabular batch output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
}

impl Scenario {
    pub fn new(name: impl Into<String>, contingency: Contingency, fault: FaultSpec) -> Self {
        Self {
            name: name.into(),
            contingency,
            fault,
            fault_time: default_fault_time(),
            adjacent_failure: BTreeSet::new(),
            duration: default_duration(),
            sample_step: default_step(),
            row: None,
            column: None,
        }
    }

    pub fn validate(&self, topo: &GridTopology) -> Result<()> {
        let err = |message: String| SimError::Scenario {
            name: self.name.clone(),
            message,
        };
        if !(self.sample_step > 0.0 && self.sample_step.is_finite()) {
            return Err(err(format!(
                "sample_step must be positive, got {}",
                self.sample_step
            )));
        }
        if !(self.fault_time >= 0.0 && self.fault_time < self.duration) {
            return Err(err(format!(
                "fault_time {} must lie in [0, duration {})",
                self.fault_time, self.duration
            )));
        }
        self.fault.validate()?;
        self.contingency.validate(topo)?;
        let line = topo.line_index(&self.fault.line)?;
        if self.contingency.line_outages.contains(&self.fault.line) || !topo.lines[line].in_service
        {
            return Err(GridError::FaultLineOutOfService(self.fault.line.clone()).into());
        }
        for r in &self.adjacent_failure {
            topo.relay_index(r)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    #[serde(default)]
    scenarios: Vec<Scenario>,
}

/// Parses a scenario document: either one scenario at the top level or a
/// list under `[[scenarios]]`.
pub fn parse_scenarios(text: &str) -> Result<Vec<Scenario>> {
    let value: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| SimError::Parse(e.to_string()))?;
    if value.contains_key("scenarios") {
        let doc: ScenarioDoc = toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        Ok(doc.scenarios)
    } else {
        let s: Scenario = toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        Ok(vec![s])
    }
}

/// Time constant at which a first-order rise reaches 95 % in 2 ms.
pub const FAST_RISE_TAU: f64 = 6.676_164_013_906_681e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub bus: BusConfig,
    pub retransmit: RetransmitSchedule,
    pub times: RelayTimeSettings,
    pub persistence: u32,
    pub drop_ratio: f64,
    /// Upper bound on the fault-loop time constant, seconds. `None` keeps the
    /// pure `L/R` value.
    pub rise_tau_limit: Option<f64>,
    pub baseline_curve: String,
    pub baseline_time_multiplier: f64,
    /// Collect per-sample relay currents.
    pub trace_waveforms: bool,
    /// Keep a capture of every delivered frame.
    pub capture_frames: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            bus: BusConfig::default(),
            retransmit: RetransmitSchedule::default(),
            times: RelayTimeSettings::default(),
            persistence: 3,
            drop_ratio: 0.95,
            rise_tau_limit: Some(FAST_RISE_TAU),
            baseline_curve: "standard_inverse".into(),
            baseline_time_multiplier: 0.025,
            trace_waveforms: false,
            capture_frames: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.bus.validate()?;
        self.retransmit.validate()?;
        self.curve()?;
        if !(self.drop_ratio > 0.0 && self.drop_ratio <= 1.0) || self.persistence == 0 {
            return Err(SimError::Parse(
                "persistence must be >= 1 and drop_ratio in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn curve(&self) -> Result<IdmtCurve> {
        IdmtCurve::by_name(&self.baseline_curve)
            .ok_or_else(|| SimError::Parse(format!("unknown curve `{}`", self.baseline_curve)))
    }

    /// Rule-three wait: two worst-case deliveries plus the first repeat.
    pub fn staleness_ns(&self) -> u64 {
        2 * self.bus.max_latency().as_nanos() as u64 + self.retransmit.first_interval_ns()
    }

    pub fn relay_config(&self) -> RelayConfig {
        RelayConfig {
            persistence: self.persistence,
            drop_ratio: self.drop_ratio,
            staleness_ns: self.staleness_ns(),
            delay_ns: delta_t_min(&self.times).as_nanos() as u64,
        }
    }
}
