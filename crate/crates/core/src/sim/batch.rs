use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use crate::grid::GridTopology;

use super::{run_scenario, ProtectionSettings, Result, Scenario, Scheme, SimConfig, TimingReport};

/// One scenario's outcome for the relay under comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchRow {
    pub scenario: String,
    pub row: Option<String>,
    pub column: Option<String>,
    /// Trip-command times after fault inception, seconds.
    pub adaptive: Option<f64>,
    pub baseline: Option<f64>,
    /// `Err` holds the message of a scenario that could not be simulated.
    pub report: std::result::Result<TimingReport, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub relay: String,
    pub rows: Vec<BatchRow>,
}

fn ms(v: Option<f64>) -> String {
    v.map_or_else(|| "N/D".to_string(), |s| format!("{:.3}", s * 1e3))
}

impl BatchRow {
    /// `adaptive (baseline)` in milliseconds.
    pub fn cell(&self) -> String {
        match &self.report {
            Ok(_) => format!("{} ({})", ms(self.adaptive), ms(self.baseline)),
            Err(_) => "error".to_string(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.report.is_err()
    }
}

impl ComparisonTable {
    /// Pivoted on the scenarios' row and column labels when every scenario
    /// carries both, else one line per scenario.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let labelled = !self.rows.is_empty()
            && self
                .rows
                .iter()
                .all(|r| r.row.is_some() && r.column.is_some());
        if !labelled {
            let _ = writeln!(s, "scenario\t{} adaptive (baseline) ms", self.relay);
            for r in &self.rows {
                let _ = writeln!(s, "{}\t{}", r.scenario, r.cell());
            }
            return s;
        }
        let mut rows: Vec<&str> = Vec::new();
        let mut cols: Vec<&str> = Vec::new();
        for r in &self.rows {
            let (row, col) = (r.row.as_deref().unwrap(), r.column.as_deref().unwrap());
            if !rows.contains(&row) {
                rows.push(row);
            }
            if !cols.contains(&col) {
                cols.push(col);
            }
        }
        let _ = write!(s, "{}", self.relay);
        for c in &cols {
            let _ = write!(s, "\t{c}");
        }
        s.push('\n');
        for row in rows {
            s.push_str(row);
            for col in &cols {
                let cell = self
                    .rows
                    .iter()
                    .find(|r| r.row.as_deref() == Some(row) && r.column.as_deref() == Some(col))
                    .map_or_else(|| "-".to_string(), BatchRow::cell);
                let _ = write!(s, "\t{cell}");
            }
            s.push('\n');
        }
        s
    }

    /// The full per-scenario timing reports, in scenario order.
    pub fn render_reports(&self) -> String {
        self.rows
            .iter()
            .map(|r| match &r.report {
                Ok(report) => report.render(),
                Err(e) => format!("scenario\t{}\nerror\t{e}\n", r.scenario),
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn errors(&self) -> usize {
        self.rows.iter().filter(|r| r.is_error()).count()
    }
}

/// Runs every scenario under both schemes and tabulates `relay`'s trip
/// times. Output order follows the input regardless of `parallel`; a scenario
/// that fails to run becomes an error row.
pub fn compare_schemes(
    topo: &Arc<GridTopology>,
    settings: &ProtectionSettings,
    scenarios: &[Scenario],
    config: &SimConfig,
    relay: &str,
    parallel: bool,
) -> Result<ComparisonTable> {
    topo.relay_index(relay)?;
    let one = |s: &Scenario| -> BatchRow {
        let report = run_scenario(topo, settings, s, config).map_err(|e| e.to_string());
        let times = |scheme| {
            report
                .as_ref()
                .ok()
                .and_then(|r: &TimingReport| r.run(scheme).trip_time(relay))
        };
        BatchRow {
            scenario: s.name.clone(),
            row: s.row.clone(),
            column: s.column.clone(),
            adaptive: times(Scheme::Adaptive),
            baseline: times(Scheme::Baseline),
            report,
        }
    };
    let rows = if parallel {
        scenarios.par_iter().map(one).collect()
    } else {
        scenarios.iter().map(one).collect()
    };
    Ok(ComparisonTable {
        relay: relay.to_string(),
        rows,
    })
}
