use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{GridError, Result};

/// System-wide electrical parameters.
///
/// All buses are referred to the main bipolar level: buses with a different
/// nominal voltage (the 380 V area) are converter-interfaced and their
/// quantities are expressed at the ±`pole_voltage` level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    #[serde(default)]
    pub name: String,
    /// Pole-to-ground voltage of the main area, volts.
    #[serde(default = "default_pole_voltage")]
    pub pole_voltage: f64,
    /// Resistance of the TN-S earth return appended to pole-ground faults, ohms.
    #[serde(default = "default_grounding_resistance")]
    pub grounding_resistance: f64,
}

fn default_pole_voltage() -> f64 {
    750.0
}

fn default_grounding_resistance() -> f64 {
    0.1
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            name: String::new(),
            pole_voltage: default_pole_voltage(),
            grounding_resistance: default_grounding_resistance(),
        }
    }
}

impl SystemParams {
    /// Pole-to-pole driving voltage.
    pub fn pole_pole_voltage(&self) -> f64 {
        2.0 * self.pole_voltage
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: String,
    pub nominal_voltage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub id: String,
    #[serde(rename = "from")]
    pub from_bus: String,
    #[serde(rename = "to")]
    pub to_bus: String,
    pub length_km: f64,
    pub r_ohm_per_km: f64,
    pub l_h_per_km: f64,
    #[serde(default = "yes")]
    pub in_service: bool,
}

impl Line {
    pub fn resistance(&self) -> f64 {
        self.length_km * self.r_ohm_per_km
    }

    pub fn inductance(&self) -> f64 {
        self.length_km * self.l_h_per_km
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Slack,
    Pv,
    Synchronous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Source {
    pub id: String,
    pub bus: String,
    /// Watts or VA.
    pub rating: f64,
    pub kind: SourceKind,
    /// Explicit internal resistance. When absent it is derived from the rating.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub internal_resistance: Option<f64>,
    #[serde(default = "one")]
    pub resistance_factor: f64,
    #[serde(default)]
    pub internal_inductance: f64,
    #[serde(default = "yes")]
    pub in_service: bool,
}

impl Source {
    /// `V² / S` at the driving voltage, scaled by `resistance_factor`,
    /// unless an explicit value is configured.
    pub fn effective_resistance(&self, driving_voltage: f64) -> f64 {
        self.internal_resistance
            .unwrap_or(driving_voltage * driving_voltage / self.rating * self.resistance_factor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Load {
    pub id: String,
    pub bus: String,
    pub power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineEnd {
    From,
    To,
}

impl LineEnd {
    pub fn index(self) -> usize {
        match self {
            LineEnd::From => 0,
            LineEnd::To => 1,
        }
    }

    pub fn opposite(self) -> LineEnd {
        match self {
            LineEnd::From => LineEnd::To,
            LineEnd::To => LineEnd::From,
        }
    }
}

/// A directional relay (and its breaker) at one end of a line, protecting
/// into the line away from the bus it sits on.
#[derive(Debug, Clone, PartialEq)]
pub struct RelayPlacement {
    pub id: String,
    pub line: usize,
    pub end: LineEnd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RelayDoc {
    id: String,
    line: String,
    at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyDoc {
    #[serde(default)]
    system: SystemParams,
    buses: Vec<Bus>,
    lines: Vec<Line>,
    #[serde(default)]
    sources: Vec<Source>,
    #[serde(default)]
    loads: Vec<Load>,
    #[serde(default)]
    relays: Vec<RelayDoc>,
}

fn yes() -> bool {
    true
}

fn one() -> f64 {
    1.0
}

/// A validated microgrid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTopology {
    pub system: SystemParams,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub sources: Vec<Source>,
    pub loads: Vec<Load>,
    pub relays: Vec<RelayPlacement>,
    bus_index: HashMap<String, usize>,
    line_index: HashMap<String, usize>,
    source_index: HashMap<String, usize>,
    relay_index: HashMap<String, usize>,
    line_ends: Vec<[usize; 2]>,
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> GridError {
    GridError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

fn location(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

fn index_unique<'a>(
    section: &str,
    ids: impl Iterator<Item = &'a str>,
) -> Result<HashMap<String, usize>> {
    let mut map = HashMap::new();
    for (i, id) in ids.enumerate() {
        if id.is_empty() {
            return Err(invalid(format!("{section}[{i}].id"), "empty identifier"));
        }
        if map.insert(id.to_string(), i).is_some() {
            return Err(invalid(
                format!("{section}[{i}].id"),
                format!("duplicate identifier `{id}`"),
            ));
        }
    }
    Ok(map)
}

fn positive(field: String, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive, got {value}")))
    }
}

impl GridTopology {
    /// Parses and validates a topology document.
    pub fn parse(text: &str) -> Result<Self> {
        let doc: TopologyDoc = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map(|s| location(text, s.start)).unwrap_or((1, 1));
            GridError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        Self::from_doc(doc)
    }

    fn from_doc(doc: TopologyDoc) -> Result<Self> {
        positive("system.pole_voltage".into(), doc.system.pole_voltage)?;
        if !(doc.system.grounding_resistance >= 0.0) {
            return Err(invalid(
                "system.grounding_resistance",
                "must be non-negative",
            ));
        }
        if doc.buses.is_empty() {
            return Err(invalid("buses", "at least one bus is required"));
        }
        let bus_index = index_unique("buses", doc.buses.iter().map(|b| b.id.as_str()))?;
        let line_index = index_unique("lines", doc.lines.iter().map(|l| l.id.as_str()))?;
        let source_index = index_unique("sources", doc.sources.iter().map(|s| s.id.as_str()))?;
        index_unique("loads", doc.loads.iter().map(|l| l.id.as_str()))?;
        let relay_index = index_unique("relays", doc.relays.iter().map(|r| r.id.as_str()))?;

        for (i, b) in doc.buses.iter().enumerate() {
            positive(format!("buses[{i}].nominal_voltage"), b.nominal_voltage)?;
        }
        let bus_of = |field: String, id: &str| -> Result<usize> {
            bus_index
                .get(id)
                .copied()
                .ok_or_else(|| invalid(field, format!("unknown bus `{id}`")))
        };
        let mut line_ends = Vec::with_capacity(doc.lines.len());
        for (i, l) in doc.lines.iter().enumerate() {
            let a = bus_of(format!("lines[{i}].from"), &l.from_bus)?;
            let b = bus_of(format!("lines[{i}].to"), &l.to_bus)?;
            if a == b {
                return Err(invalid(
                    format!("lines[{i}].to"),
                    "line endpoints must differ",
                ));
            }
            positive(format!("lines[{i}].length_km"), l.length_km)?;
            positive(format!("lines[{i}].r_ohm_per_km"), l.r_ohm_per_km)?;
            if !(l.l_h_per_km >= 0.0 && l.l_h_per_km.is_finite()) {
                return Err(invalid(
                    format!("lines[{i}].l_h_per_km"),
                    format!("must be non-negative, got {}", l.l_h_per_km),
                ));
            }
            line_ends.push([a, b]);
        }
        for (i, s) in doc.sources.iter().enumerate() {
            bus_of(format!("sources[{i}].bus"), &s.bus)?;
            positive(format!("sources[{i}].rating"), s.rating)?;
            positive(
                format!("sources[{i}].resistance_factor"),
                s.resistance_factor,
            )?;
            if let Some(r) = s.internal_resistance {
                positive(format!("sources[{i}].internal_resistance"), r)?;
            }
            if !(s.internal_inductance >= 0.0 && s.internal_inductance.is_finite()) {
                return Err(invalid(
                    format!("sources[{i}].internal_inductance"),
                    "must be non-negative",
                ));
            }
        }
        for (i, l) in doc.loads.iter().enumerate() {
            bus_of(format!("loads[{i}].bus"), &l.bus)?;
            if !(l.power >= 0.0 && l.power.is_finite()) {
                return Err(invalid(
                    format!("loads[{i}].power"),
                    format!("must be non-negative, got {}", l.power),
                ));
            }
        }
        let mut relays = Vec::with_capacity(doc.relays.len());
        let mut seen_ends = HashSet::new();
        for (i, r) in doc.relays.iter().enumerate() {
            let li = *line_index.get(&r.line).ok_or_else(|| {
                invalid(
                    format!("relays[{i}].line"),
                    format!("unknown line `{}`", r.line),
                )
            })?;
            let at = bus_of(format!("relays[{i}].at"), &r.at)?;
            let end = if line_ends[li][0] == at {
                LineEnd::From
            } else if line_ends[li][1] == at {
                LineEnd::To
            } else {
                return Err(invalid(
                    format!("relays[{i}].at"),
                    format!("bus `{}` is not an end of line `{}`", r.at, r.line),
                ));
            };
            if !seen_ends.insert((li, end)) {
                return Err(invalid(
                    format!("relays[{i}]"),
                    format!("line `{}` already has a relay at `{}`", r.line, r.at),
                ));
            }
            relays.push(RelayPlacement {
                id: r.id.clone(),
                line: li,
                end,
            });
        }

        let topo = GridTopology {
            system: doc.system,
            buses: doc.buses,
            lines: doc.lines,
            sources: doc.sources,
            loads: doc.loads,
            relays,
            bus_index,
            line_index,
            source_index,
            relay_index,
            line_ends,
        };
        if !topo.is_connected() {
            return Err(invalid("lines", "network is not connected"));
        }
        Ok(topo)
    }

    fn is_connected(&self) -> bool {
        let n = self.buses.len();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(b) = queue.pop_front() {
            for ends in &self.line_ends {
                for (x, y) in [(ends[0], ends[1]), (ends[1], ends[0])] {
                    if x == b && !seen[y] {
                        seen[y] = true;
                        queue.push_back(y);
                    }
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn bus_index(&self, id: &str) -> Result<usize> {
        self.bus_index
            .get(id)
            .copied()
            .ok_or_else(|| GridError::UnknownId {
                kind: "bus",
                id: id.to_string(),
            })
    }

    pub fn line_index(&self, id: &str) -> Result<usize> {
        self.line_index
            .get(id)
            .copied()
            .ok_or_else(|| GridError::UnknownId {
                kind: "line",
                id: id.to_string(),
            })
    }

    pub fn source_index(&self, id: &str) -> Result<usize> {
        self.source_index
            .get(id)
            .copied()
            .ok_or_else(|| GridError::UnknownId {
                kind: "source",
                id: id.to_string(),
            })
    }

    pub fn relay_index(&self, id: &str) -> Result<usize> {
        self.relay_index
            .get(id)
            .copied()
            .ok_or_else(|| GridError::UnknownId {
                kind: "relay",
                id: id.to_string(),
            })
    }

    /// Bus indices of a line's `[from, to]` ends.
    pub fn line_buses(&self, line: usize) -> [usize; 2] {
        self.line_ends[line]
    }

    /// Bus the relay sits on.
    pub fn relay_bus(&self, relay: usize) -> usize {
        let r = &self.relays[relay];
        self.line_ends[r.line][r.end.index()]
    }

    /// Bus at the far end of the relay's line.
    pub fn relay_far_bus(&self, relay: usize) -> usize {
        let r = &self.relays[relay];
        self.line_ends[r.line][r.end.opposite().index()]
    }

    /// Relay installed at the given line end, if any.
    pub fn relay_at(&self, line: usize, end: LineEnd) -> Option<usize> {
        self.relays
            .iter()
            .position(|r| r.line == line && r.end == end)
    }

    /// Lines incident to a bus, with the end of the line that touches it.
    pub fn lines_at_bus(&self, bus: usize) -> impl Iterator<Item = (usize, LineEnd)> + '_ {
        self.line_ends.iter().enumerate().filter_map(move |(i, e)| {
            if e[0] == bus {
                Some((i, LineEnd::From))
            } else if e[1] == bus {
                Some((i, LineEnd::To))
            } else {
                None
            }
        })
    }

    pub fn driving_voltage(&self) -> f64 {
        self.system.pole_pole_voltage()
    }

    /// Human-readable one-line summary.
    pub fn summary(&self) -> String {
        format!(
            "{} buses, {} lines, {} sources, {} loads, {} relays",
            self.buses.len(),
            self.lines.len(),
            self.sources.len(),
            self.loads.len(),
            self.relays.len()
        )
    }
}
