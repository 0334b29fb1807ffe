use serde::{Deserialize, Serialize};

use super::{
    Contingency, FaultCurrent, FaultKind, FaultSpec, GridError, GridTopology, LineEnd,
    NetworkState, Result,
};

/// A worst-case fault location inside a relay's protection zone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZonePoint {
    pub line: String,
    pub position: f64,
}

/// Fault kinds and resistance swept when building minimum-current tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultStudy {
    pub kinds: Vec<FaultKind>,
    pub fault_resistance: f64,
}

impl Default for FaultStudy {
    fn default() -> Self {
        Self {
            kinds: vec![FaultKind::PolePole, FaultKind::PoleGround],
            fault_resistance: 0.0,
        }
    }
}

/// Share of each downstream line covered by a relay's primary zone.
pub const DEFAULT_ZONE_OVERLAP: f64 = 0.1;

/// The relay's own line faulted at its far end, plus every other line leaving
/// the far bus faulted `overlap` of the way along it.
pub fn default_protection_zone(topo: &GridTopology, relay: usize, overlap: f64) -> Vec<ZonePoint> {
    let placement = &topo.relays[relay];
    let far_end = placement.end.opposite();
    let far_position = |end: LineEnd| match end {
        LineEnd::From => 0.0,
        LineEnd::To => 1.0,
    };
    // position `overlap` away from the given end
    let near_position = |end: LineEnd| match end {
        LineEnd::From => overlap,
        LineEnd::To => 1.0 - overlap,
    };
    let mut zone = vec![ZonePoint {
        line: topo.lines[placement.line].id.clone(),
        position: far_position(far_end),
    }];
    let far_bus = topo.relay_far_bus(relay);
    for (li, end) in topo.lines_at_bus(far_bus) {
        if li == placement.line {
            continue;
        }
        zone.push(ZonePoint {
            line: topo.lines[li].id.clone(),
            position: near_position(end),
        });
    }
    zone
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub contingency: Contingency,
    pub value: FaultCurrent,
}

/// Minimum relay-seen fault current for each contingency.
///
/// For every zone point and fault kind the relay's measured current in its
/// protected direction is evaluated; points the relay cannot see (no
/// fault-induced increase in its direction) are skipped. A contingency with no
/// visible point is `N/D`.
pub fn min_fault_current_table(
    topo: &GridTopology,
    relay: &str,
    contingencies: &[Contingency],
    zone: &[ZonePoint],
    study: &FaultStudy,
) -> Result<Vec<TableCell>> {
    if zone.is_empty() {
        return Err(GridError::Invalid {
            field: "protection_zone".into(),
            message: "zone must contain at least one point".into(),
        });
    }
    let ri = topo.relay_index(relay)?;
    let relay_line = topo.relays[ri].line;
    let zone_lines = zone
        .iter()
        .map(|z| topo.line_index(&z.line))
        .collect::<Result<Vec<_>>>()?;
    contingencies
        .iter()
        .map(|c| {
            let state = NetworkState::new(topo, c)?;
            let mut best: Option<f64> = None;
            if !state.is_line_out(relay_line) {
                for (point, &li) in zone.iter().zip(&zone_lines) {
                    if state.is_line_out(li) {
                        continue;
                    }
                    for &kind in &study.kinds {
                        let fault = FaultSpec {
                            line: point.line.clone(),
                            position: point.position,
                            kind,
                            resistance: study.fault_resistance,
                        };
                        let sol = state.solve(Some(&fault))?;
                        if !sol.current.is_detected() {
                            continue;
                        }
                        let seen = sol.faulted[ri];
                        let tol = 1e-9 * sol.current.amperes().unwrap_or(0.0).max(1.0);
                        if sol.relay_delta(ri) > tol && seen > tol {
                            best = Some(best.map_or(seen, |b: f64| b.min(seen)));
                        }
                    }
                }
            }
            Ok(TableCell {
                contingency: c.clone(),
                value: best.map_or(FaultCurrent::NotDetected, FaultCurrent::Amperes),
            })
        })
        .collect()
}

/// Row/column layout of a contingency sweep: rows are single line outages,
/// columns single source outages. `None` means "no outage" on that axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyGrid {
    pub rows: Vec<Option<String>>,
    pub columns: Vec<Option<String>>,
}

impl ContingencyGrid {
    /// Every line as a row, "no source outage" plus every source as columns.
    pub fn line_by_source(topo: &GridTopology, include_base_row: bool) -> Self {
        let mut rows: Vec<Option<String>> = Vec::new();
        if include_base_row {
            rows.push(None);
        }
        rows.extend(topo.lines.iter().map(|l| Some(l.id.clone())));
        let mut columns = vec![None];
        columns.extend(topo.sources.iter().map(|s| Some(s.id.clone())));
        Self { rows, columns }
    }

    pub fn contingencies(&self) -> Vec<Contingency> {
        self.rows
            .iter()
            .flat_map(|r| {
                self.columns.iter().map(move |c| Contingency {
                    line_outages: r.iter().cloned().collect(),
                    source_outages: c.iter().cloned().collect(),
                })
            })
            .collect()
    }
}

/// A minimum-fault-current table in row/column form.
#[derive(Debug, Clone, PartialEq)]
pub struct MinFaultTable {
    pub relay: String,
    pub grid: ContingencyGrid,
    /// Row-major, `rows × columns`.
    pub cells: Vec<TableCell>,
}

pub fn min_fault_current_grid(
    topo: &GridTopology,
    relay: &str,
    grid: &ContingencyGrid,
    zone: &[ZonePoint],
    study: &FaultStudy,
) -> Result<MinFaultTable> {
    let cells = min_fault_current_table(topo, relay, &grid.contingencies(), zone, study)?;
    Ok(MinFaultTable {
        relay: relay.to_string(),
        grid: grid.clone(),
        cells,
    })
}

fn axis_label(v: &Option<String>) -> &str {
    v.as_deref().unwrap_or("none")
}

fn parse_axis(label: &str) -> Option<String> {
    match label.trim() {
        "none" | "" => None,
        other => Some(other.to_string()),
    }
}

impl MinFaultTable {
    pub fn rows(&self) -> usize {
        self.grid.rows.len()
    }

    pub fn columns(&self) -> usize {
        self.grid.columns.len()
    }

    pub fn cell(&self, row: usize, column: usize) -> &TableCell {
        &self.cells[row * self.columns() + column]
    }

    pub fn get(&self, contingency: &Contingency) -> Option<FaultCurrent> {
        self.cells
            .iter()
            .find(|c| &c.contingency == contingency)
            .map(|c| c.value)
    }

    /// Largest finite entry.
    pub fn max(&self) -> Option<f64> {
        self.cells
            .iter()
            .filter_map(|c| c.value.amperes())
            .fold(None, |m, v| Some(m.map_or(v, |m: f64| m.max(v))))
    }

    /// Parses the fixture layout: `#` comments, a `relay,<id>` line, a header
    /// `line_outage,<col>...` and one row per line outage with amperes or `N/D`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut relay = None;
        let mut columns: Option<Vec<Option<String>>> = None;
        let mut rows = Vec::new();
        let mut cells = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| GridError::Parse {
                line: e.position().map_or(0, |p| p.line() as usize),
                column: 1,
                message: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let err = |message: String| GridError::Parse {
                line,
                column: 1,
                message,
            };
            let head = rec.get(0).unwrap_or("");
            if relay.is_none() {
                if head != "relay" || rec.len() != 2 {
                    return Err(err("expected `relay,<id>`".into()));
                }
                relay = Some(rec[1].to_string());
                continue;
            }
            let Some(cols) = &columns else {
                if head != "line_outage" || rec.len() < 2 {
                    return Err(err("expected `line_outage,<columns>` header".into()));
                }
                columns = Some(rec.iter().skip(1).map(parse_axis).collect());
                continue;
            };
            if rec.len() != cols.len() + 1 {
                return Err(err(format!(
                    "expected {} values, found {}",
                    cols.len(),
                    rec.len() - 1
                )));
            }
            let row = parse_axis(head);
            for (field, col) in rec.iter().skip(1).zip(cols) {
                let value = if field == "N/D" {
                    FaultCurrent::NotDetected
                } else {
                    let a: f64 = field
                        .parse()
                        .map_err(|_| err(format!("bad current `{field}`")))?;
                    if !(a > 0.0 && a.is_finite()) {
                        return Err(err(format!("current must be positive, got {a}")));
                    }
                    FaultCurrent::Amperes(a)
                };
                cells.push(TableCell {
                    contingency: Contingency {
                        line_outages: row.iter().cloned().collect(),
                        source_outages: col.iter().cloned().collect(),
                    },
                    value,
                });
            }
            rows.push(row);
        }
        let (Some(relay), Some(columns)) = (relay, columns) else {
            return Err(GridError::Parse {
                line: 1,
                column: 1,
                message: "table is empty".into(),
            });
        };
        Ok(Self {
            relay,
            grid: ContingencyGrid { rows, columns },
            cells,
        })
    }

    pub fn to_fixture_string(&self) -> String {
        let mut out = format!("relay,{}\nline_outage", self.relay);
        for c in &self.grid.columns {
            out.push(',');
            out.push_str(axis_label(c));
        }
        out.push('\n');
        for (r, row) in self.grid.rows.iter().enumerate() {
            out.push_str(axis_label(row));
            for c in 0..self.columns() {
                out.push(',');
                out.push_str(&self.cell(r, c).value.to_string());
            }
            out.push('\n');
        }
        out
    }

    /// Validates that every referenced line and source exists.
    pub fn validate_against(&self, topo: &GridTopology) -> Result<()> {
        topo.relay_index(&self.relay)?;
        self.cells
            .iter()
            .try_for_each(|c| c.contingency.validate(topo))
    }
}
