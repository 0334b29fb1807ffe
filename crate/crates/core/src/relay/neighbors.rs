use std::collections::{HashMap, VecDeque};

use crate::comms::{kind, GooseFrame};
use crate::grid::{Contingency, GridTopology};

use super::{relay_from_wire_id, STATION_PUBLISHER};

/// Relays whose status an adaptive relay consults. For `R_ab`: the opposite
/// relay is `R_ba`; downstream same-direction relays are `R_bc` for every
/// other line `bc` at bus `b`; downstream opposite-direction relays are the
/// matching `R_cb`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NeighborMap {
    pub opposite: Option<usize>,
    pub downstream_same: Vec<usize>,
    pub downstream_opposite: Vec<usize>,
    /// Relays looking into the opposite relay's bus. Ingested, not used by
    /// any rule.
    pub upstream_of_opposite: Vec<usize>,
    /// `(R_bc, R_cb, line bc)` triples.
    pub downstream_pairs: Vec<(usize, usize, usize)>,
}

impl NeighborMap {
    pub fn for_relay(topo: &GridTopology, relay: usize) -> Self {
        let placement = &topo.relays[relay];
        let mut map = NeighborMap {
            opposite: topo.relay_at(placement.line, placement.end.opposite()),
            ..Default::default()
        };
        let far = topo.relay_far_bus(relay);
        for (line, end) in topo.lines_at_bus(far) {
            if line == placement.line {
                continue;
            }
            let same = topo.relay_at(line, end);
            let opp = topo.relay_at(line, end.opposite());
            if let Some(s) = same {
                map.downstream_same.push(s);
            }
            if let Some(o) = opp {
                map.downstream_opposite.push(o);
                map.upstream_of_opposite.push(o);
            }
            if let (Some(s), Some(o)) = (same, opp) {
                map.downstream_pairs.push((s, o, line));
            }
        }
        map
    }

    pub fn all(&self) -> impl Iterator<Item = usize> + '_ {
        self.opposite
            .iter()
            .copied()
            .chain(self.downstream_same.iter().copied())
            .chain(self.downstream_opposite.iter().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NeighborStatus {
    pub picked_up: bool,
    pub tripped: bool,
    pub breaker_closed: bool,
    pub last_update_ns: u64,
}

/// Latest status heard from each neighbour plus per-publisher sequence
/// numbers for replay rejection.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NeighborView {
    status: HashMap<usize, NeighborStatus>,
    seen: HashMap<u32, (u32, u32)>,
}

impl NeighborView {
    pub fn new(map: &NeighborMap) -> Self {
        Self {
            status: map
                .all()
                .map(|r| {
                    (
                        r,
                        NeighborStatus {
                            breaker_closed: true,
                            ..Default::default()
                        },
                    )
                })
                .collect(),
            seen: HashMap::new(),
        }
    }

    pub fn get(&self, relay: usize) -> Option<&NeighborStatus> {
        self.status.get(&relay)
    }

    pub fn picked_up(&self, relay: usize) -> bool {
        self.status.get(&relay).is_some_and(|s| s.picked_up)
    }

    pub fn is_stale(&self, relay: usize, now_ns: u64, window_ns: u64) -> bool {
        self.status
            .get(&relay)
            .is_none_or(|s| now_ns.saturating_sub(s.last_update_ns) > window_ns)
    }

    /// Applies a frame unless it repeats or predates what was already seen.
    pub fn accept(&mut self, frame: &GooseFrame, now_ns: u64) -> bool {
        if let Some(&(st, sq)) = self.seen.get(&frame.publisher) {
            if frame.st_num < st || (frame.st_num == st && frame.sq_num <= sq) {
                return false;
            }
        }
        self.seen
            .insert(frame.publisher, (frame.st_num, frame.sq_num));
        if frame.publisher == STATION_PUBLISHER {
            return true;
        }
        let Some(relay) = relay_from_wire_id(frame.publisher) else {
            return true;
        };
        if let Some(s) = self.status.get_mut(&relay) {
            s.last_update_ns = now_ns;
            for e in frame.dataset.iter().filter(|e| e.id == frame.publisher) {
                match e.kind {
                    kind::PICKED_UP => s.picked_up = e.value,
                    kind::TRIPPED => s.tripped = e.value,
                    kind::BREAKER_CLOSED => s.breaker_closed = e.value,
                    _ => {}
                }
            }
        }
        true
    }
}

/// Grid operating condition as inferred from received status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservedStatus {
    pub line_out: Vec<bool>,
    pub source_out: Vec<bool>,
    /// Open breakers, indexed by relay.
    pub breaker_open: Vec<bool>,
}

impl ObservedStatus {
    pub fn from_contingency(topo: &GridTopology, contingency: &Contingency) -> Self {
        let mut s = Self {
            line_out: topo.lines.iter().map(|l| !l.in_service).collect(),
            source_out: topo.sources.iter().map(|s| !s.in_service).collect(),
            breaker_open: vec![false; topo.relays.len()],
        };
        for l in &contingency.line_outages {
            if let Ok(i) = topo.line_index(l) {
                s.line_out[i] = true;
            }
        }
        for src in &contingency.source_outages {
            if let Ok(i) = topo.source_index(src) {
                s.source_out[i] = true;
            }
        }
        s
    }

    pub fn open_breaker(&mut self, relay: usize) {
        if let Some(b) = self.breaker_open.get_mut(relay) {
            *b = true;
        }
    }

    pub fn line_conducts(&self, topo: &GridTopology, line: usize) -> bool {
        !self.line_out[line]
            && topo
                .relays
                .iter()
                .enumerate()
                .all(|(r, p)| p.line != line || !self.breaker_open[r])
    }

    pub fn apply(&mut self, topo: &GridTopology, frame: &GooseFrame) {
        for e in &frame.dataset {
            let i = e.id as usize;
            match e.kind {
                kind::BREAKER_CLOSED => {
                    if let Some(r) = relay_from_wire_id(e.id) {
                        if r < self.breaker_open.len() {
                            self.breaker_open[r] = !e.value;
                        }
                    }
                }
                kind::LINE_IN_SERVICE if i < topo.lines.len() => self.line_out[i] = !e.value,
                kind::SOURCE_IN_SERVICE if i < topo.sources.len() => self.source_out[i] = !e.value,
                _ => {}
            }
        }
    }

    /// Outage set as the setting groups key it: a line with any open end
    /// counts as out.
    pub fn contingency(&self, topo: &GridTopology) -> Contingency {
        Contingency {
            line_outages: (0..topo.lines.len())
                .filter(|&l| !self.line_conducts(topo, l) && topo.lines[l].in_service)
                .map(|l| topo.lines[l].id.clone())
                .collect(),
            source_outages: (0..topo.sources.len())
                .filter(|&s| self.source_out[s] && topo.sources[s].in_service)
                .map(|s| topo.sources[s].id.clone())
                .collect(),
        }
    }
}

/// Whether `bus` still reaches an in-service source with `excluded_line`
/// removed.
pub fn has_infeed(
    topo: &GridTopology,
    observed: &ObservedStatus,
    bus: usize,
    excluded_line: usize,
) -> bool {
    let mut seen = vec![false; topo.buses.len()];
    let mut queue = VecDeque::from([bus]);
    seen[bus] = true;
    while let Some(b) = queue.pop_front() {
        if topo
            .sources
            .iter()
            .enumerate()
            .any(|(i, s)| !observed.source_out[i] && topo.bus_index(&s.bus).ok() == Some(b))
        {
            return true;
        }
        for (line, _) in topo.lines_at_bus(b) {
            if line == excluded_line || !observed.line_conducts(topo, line) {
                continue;
            }
            let [x, y] = topo.line_buses(line);
            let next = if x == b { y } else { x };
            if !seen[next] {
                seen[next] = true;
                queue.push_back(next);
            }
        }
    }
    false
}
