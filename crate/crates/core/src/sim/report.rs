use std::fmt::Write as _;

use crate::relay::TripRule;

use super::Scheme;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub time_ns: u64,
    pub actor: String,
    pub kind: &'static str,
    pub detail: String,
}

impl std::fmt::Display for LogEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}",
            self.time_ns, self.actor, self.kind, self.detail
        )
    }
}

/// Instants for one relay, nanoseconds from the start of the run.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RelayTiming {
    pub relay: String,
    pub pickup_ns: Option<u64>,
    pub trip_ns: Option<u64>,
    pub clear_ns: Option<u64>,
    pub rule: Option<TripRule>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub time_ns: u64,
    pub relay: usize,
    pub amperes: f64,
}

/// Everything one scheme produced for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeRun {
    pub scheme: Scheme,
    pub fault_ns: u64,
    pub relays: Vec<RelayTiming>,
    pub log: Vec<LogEntry>,
    pub trace: Vec<TraceRow>,
    /// `at\tsubscriber\thex` lines of every delivered frame, when enabled.
    pub capture: String,
    /// Instant the fault stopped drawing current, if it did.
    pub fault_cleared_ns: Option<u64>,
}

impl SchemeRun {
    pub fn timing(&self, relay: &str) -> Option<&RelayTiming> {
        self.relays.iter().find(|r| r.relay == relay)
    }

    fn since_fault(&self, t: Option<u64>) -> Option<f64> {
        t.map(|t| (t as f64 - self.fault_ns as f64) * 1e-9)
    }

    /// Seconds from fault inception to the relay's trip command.
    pub fn trip_time(&self, relay: &str) -> Option<f64> {
        self.timing(relay).and_then(|r| self.since_fault(r.trip_ns))
    }

    /// Seconds from fault inception to the relay's breaker opening.
    pub fn clear_time(&self, relay: &str) -> Option<f64> {
        self.timing(relay)
            .and_then(|r| self.since_fault(r.clear_ns))
    }

    pub fn pickup_time(&self, relay: &str) -> Option<f64> {
        self.timing(relay)
            .and_then(|r| self.since_fault(r.pickup_ns))
    }

    /// Relays that issued a trip command, in relay order.
    pub fn tripped(&self) -> Vec<&str> {
        self.relays
            .iter()
            .filter(|r| r.trip_ns.is_some())
            .map(|r| r.relay.as_str())
            .collect()
    }

    pub fn log_text(&self) -> String {
        let mut s = String::new();
        for e in &self.log {
            let _ = writeln!(s, "{e}");
        }
        s
    }

    pub fn trace_csv(&self, relay_ids: &[String]) -> String {
        let mut s = String::from("time_s,relay,amperes\n");
        for r in &self.trace {
            let _ = writeln!(
                s,
                "{:.6},{},{:.3}",
                r.time_ns as f64 * 1e-9,
                relay_ids[r.relay],
                r.amperes
            );
        }
        s
    }
}

fn ms(v: Option<f64>) -> String {
    v.map_or_else(|| "N/D".to_string(), |s| format!("{:.3}", s * 1e3))
}

/// Per-relay operating instants of both schemes for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingReport {
    pub scenario: String,
    pub adaptive: SchemeRun,
    pub baseline: SchemeRun,
}

impl TimingReport {
    pub fn run(&self, scheme: Scheme) -> &SchemeRun {
        match scheme {
            Scheme::Adaptive => &self.adaptive,
            Scheme::Baseline => &self.baseline,
        }
    }

    /// Tab-separated table in milliseconds after fault inception. Relays with
    /// no activity in either scheme are left out.
    pub fn render(&self) -> String {
        let mut s = format!("scenario\t{}\n", self.scenario);
        s.push_str(
            "relay\tadaptive_pickup_ms\tadaptive_trip_ms\tadaptive_clear_ms\tadaptive_rule\t\
             baseline_pickup_ms\tbaseline_trip_ms\tbaseline_clear_ms\n",
        );
        for (a, b) in self.adaptive.relays.iter().zip(&self.baseline.relays) {
            if a.pickup_ns.is_none() && b.pickup_ns.is_none() {
                continue;
            }
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                a.relay,
                ms(self.adaptive.since_fault(a.pickup_ns)),
                ms(self.adaptive.since_fault(a.trip_ns)),
                ms(self.adaptive.since_fault(a.clear_ns)),
                a.rule.map_or_else(|| "-".to_string(), |r| r.to_string()),
                ms(self.baseline.since_fault(b.pickup_ns)),
                ms(self.baseline.since_fault(b.trip_ns)),
                ms(self.baseline.since_fault(b.clear_ns)),
            );
        }
        s
    }
}
