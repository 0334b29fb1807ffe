//! DC microgrid model and the simplified fault-current solver.
//!
//! The network is treated as a linear resistive circuit between the positive
//! pole and the return, with every in-service source represented as an ideal
//! EMF behind its internal resistance. Transients use a single first-order RL
//! rise whose time constant comes from an inductive reduction of the same
//! network.

mod solver;
mod table;
mod topology;

pub use solver::{
    fault_waveform, thevenin_fault_current, FaultCurrent, FaultSolution, FaultWaveform,
    NetworkState,
};
pub use table::{
    default_protection_zone, min_fault_current_grid, min_fault_current_table, ContingencyGrid,
    FaultStudy, MinFaultTable, TableCell, ZonePoint, DEFAULT_ZONE_OVERLAP,
};
pub use topology::{
    Bus, GridTopology, Line, LineEnd, Load, RelayPlacement, Source, SourceKind, SystemParams,
};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid topology at {field}: {message}")]
    Invalid { field: String, message: String },
    #[error("unknown {kind} `{id}`")]
    UnknownId { kind: &'static str, id: String },
    #[error("fault line `{0}` is out of service")]
    FaultLineOutOfService(String),
    #[error("fault position {0} is outside [0, 1]")]
    BadPosition(f64),
    #[error("fault resistance {0} is negative")]
    BadFaultResistance(f64),
}

pub type Result<T> = std::result::Result<T, GridError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    PolePole,
    PoleGround,
}

impl std::fmt::Display for FaultKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FaultKind::PolePole => f.write_str("pole_pole"),
            FaultKind::PoleGround => f.write_str("pole_ground"),
        }
    }
}

/// A short circuit somewhere along a line.
///
/// `position` is measured from the line's `from` bus. The fault point always
/// sits on the line side of both terminal breakers, so a fault at position 0
/// is still seen by the relay at the `from` end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub line: String,
    pub position: f64,
    pub kind: FaultKind,
    #[serde(default)]
    pub resistance: f64,
}

impl FaultSpec {
    pub fn bolted(line: impl Into<String>, position: f64, kind: FaultKind) -> Self {
        Self {
            line: line.into(),
            position,
            kind,
            resistance: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.position) {
            return Err(GridError::BadPosition(self.position));
        }
        if self.resistance < 0.0 || self.resistance.is_nan() {
            return Err(GridError::BadFaultResistance(self.resistance));
        }
        Ok(())
    }
}

/// A pre-fault outage condition.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Contingency {
    #[serde(default)]
    pub line_outages: BTreeSet<String>,
    #[serde(default)]
    pub source_outages: BTreeSet<String>,
}

impl Contingency {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new<L, S>(lines: L, sources: S) -> Self
    where
        L: IntoIterator,
        L::Item: Into<String>,
        S: IntoIterator,
        S::Item: Into<String>,
    {
        Self {
            line_outages: lines.into_iter().map(Into::into).collect(),
            source_outages: sources.into_iter().map(Into::into).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.line_outages.is_empty() && self.source_outages.is_empty()
    }

    pub fn validate(&self, topo: &GridTopology) -> Result<()> {
        for l in &self.line_outages {
            topo.line_index(l)?;
        }
        for s in &self.source_outages {
            topo.source_index(s)?;
        }
        Ok(())
    }
}

impl std::fmt::Display for Contingency {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_empty() {
            return f.write_str("none");
        }
        let ids: Vec<&str> = self
            .line_outages
            .iter()
            .chain(self.source_outages.iter())
            .map(String::as_str)
            .collect();
        write!(f, "{}", ids.join("+"))
    }
}
