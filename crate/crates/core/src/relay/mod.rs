//! Directional overcurrent relays: the communication-assisted adaptive relay
//! and the standalone inverse-time baseline.

mod baseline;
mod neighbors;

pub use baseline::BaselineRelay;
pub use neighbors::{has_infeed, NeighborMap, NeighborStatus, NeighborView, ObservedStatus};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::comms::{kind, DataEntry, GooseFrame};
use crate::grid::GridTopology;
use crate::settings::SettingGroupSet;

/// Publisher id used by the station controller for line and source status.
pub const STATION_PUBLISHER: u32 = 0;

/// Wire id of a relay: its topology index plus one.
pub fn relay_wire_id(relay: usize) -> u32 {
    relay as u32 + 1
}

pub fn relay_from_wire_id(id: u32) -> Option<usize> {
    (id as usize).checked_sub(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelayConfig {
    /// Consecutive samples above pickup before pickup is declared.
    pub persistence: u32,
    pub drop_ratio: f64,
    /// Wait before a picked-up relay with no confirming neighbours presumes
    /// a protection failure.
    pub staleness_ns: u64,
    /// Grading delay for a secondary-zone fault.
    pub delay_ns: u64,
}

impl Default for RelayConfig {
    fn default() -> Self {
        Self {
            persistence: 3,
            drop_ratio: 0.95,
            staleness_ns: 2 * 66_000 + 1_000_000,
            delay_ns: 29_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelayState {
    Idle,
    PickedUp { since_ns: u64 },
    DelayPending { deadline_ns: u64 },
    Tripped { at_ns: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripRule {
    /// Opposite-end relay confirms the fault is on the protected line.
    OppositePickedUp,
    /// Delay elapsed while the downstream pair still saw the fault.
    BackupTimeout,
    /// No neighbour confirmed the fault: presumed protection failure.
    ProtectionFailure,
    /// Inverse-time characteristic of the baseline relay.
    InverseTime,
}

impl std::fmt::Display for TripRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TripRule::OppositePickedUp => "opposite_picked_up",
            TripRule::BackupTimeout => "backup_timeout",
            TripRule::ProtectionFailure => "protection_failure",
            TripRule::InverseTime => "inverse_time",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    InstantTrip(TripRule),
    DelayedTrip { delay_ns: u64 },
    Wait,
}

/// What a relay asks the simulator to do after handling an input.
#[derive(Debug, Clone, PartialEq)]
pub enum RelayAction {
    PickedUp,
    Dropped,
    /// Publish the relay's status dataset.
    Publish(Vec<DataEntry>),
    /// Call `on_timer` at this instant with the given token.
    Timer {
        at_ns: u64,
        token: u64,
    },
    DelayStarted {
        deadline_ns: u64,
    },
    DelayCancelled,
    Trip(TripRule),
    GroupChanged {
        group: u32,
    },
}

/// Adaptive relay runtime.
#[derive(Debug, Clone)]
pub struct RelayRuntime {
    pub index: usize,
    pub id: String,
    topo: Arc<GridTopology>,
    groups: Arc<SettingGroupSet>,
    config: RelayConfig,
    neighbors: NeighborMap,
    view: NeighborView,
    observed: ObservedStatus,
    active_group: u32,
    pickup: f64,
    state: RelayState,
    /// Pickup element, independent of the trip state machine.
    picked: bool,
    above: u32,
    breaker_closed: bool,
    measured: f64,
    timer_token: u64,
    inert: bool,
    unknown_publishers: u64,
    replays: u64,
}

impl RelayRuntime {
    pub fn new(
        topo: Arc<GridTopology>,
        index: usize,
        groups: Arc<SettingGroupSet>,
        config: RelayConfig,
        observed: ObservedStatus,
    ) -> Self {
        let neighbors = NeighborMap::for_relay(&topo, index);
        let view = NeighborView::new(&neighbors);
        let status = observed.contingency(&topo);
        let active_group = groups.select_active_group(&status);
        let pickup = groups.pickup_for(&status);
        Self {
            index,
            id: topo.relays[index].id.clone(),
            topo,
            groups,
            config,
            neighbors,
            view,
            observed,
            active_group,
            pickup,
            state: RelayState::Idle,
            picked: false,
            above: 0,
            breaker_closed: true,
            measured: 0.0,
            timer_token: 0,
            inert: false,
            unknown_publishers: 0,
            replays: 0,
        }
    }

    /// An inert relay never picks up and never trips.
    pub fn set_inert(&mut self, inert: bool) {
        self.inert = inert;
    }

    pub fn is_inert(&self) -> bool {
        self.inert
    }

    pub fn state(&self) -> RelayState {
        self.state
    }

    pub fn is_picked_up(&self) -> bool {
        self.picked
    }

    pub fn active_group(&self) -> u32 {
        self.active_group
    }

    pub fn pickup(&self) -> f64 {
        self.pickup
    }

    pub fn measured(&self) -> f64 {
        self.measured
    }

    pub fn neighbors(&self) -> &NeighborMap {
        &self.neighbors
    }

    pub fn view(&self) -> &NeighborView {
        &self.view
    }

    pub fn observed(&self) -> &ObservedStatus {
        &self.observed
    }

    pub fn wire_id(&self) -> u32 {
        relay_wire_id(self.index)
    }

    /// Frames dropped because the publisher is unknown, and replays ignored.
    pub fn diagnostics(&self) -> (u64, u64) {
        (self.unknown_publishers, self.replays)
    }

    pub fn status_dataset(&self) -> Vec<DataEntry> {
        let id = self.wire_id();
        vec![
            DataEntry::new(kind::PICKED_UP, id, self.picked),
            DataEntry::new(
                kind::TRIPPED,
                id,
                matches!(self.state, RelayState::Tripped { .. }),
            ),
            DataEntry::new(kind::BREAKER_CLOSED, id, self.breaker_closed),
        ]
    }

    fn publish(&self, out: &mut Vec<RelayAction>) {
        out.push(RelayAction::Publish(self.status_dataset()));
    }

    /// Processes one current sample (signed, positive in the protected
    /// direction).
    pub fn on_sample(&mut self, current: f64, now_ns: u64) -> Vec<RelayAction> {
        let mut out = Vec::new();
        if self.inert {
            return out;
        }
        let directional = current.max(0.0);
        self.measured = directional;
        if !self.picked {
            if directional > self.pickup {
                self.above += 1;
                if self.above >= self.config.persistence {
                    self.picked = true;
                    out.push(RelayAction::PickedUp);
                    self.publish(&mut out);
                    if self.state == RelayState::Idle {
                        self.state = RelayState::PickedUp { since_ns: now_ns };
                        self.evaluate(now_ns, &mut out);
                        if matches!(self.state, RelayState::PickedUp { .. }) {
                            self.arm_timer(now_ns + self.config.staleness_ns, &mut out);
                        }
                    }
                }
            } else {
                self.above = 0;
            }
        } else if directional < self.config.drop_ratio * self.pickup {
            self.picked = false;
            self.above = 0;
            out.push(RelayAction::Dropped);
            self.publish(&mut out);
            match self.state {
                RelayState::PickedUp { .. } => self.go_idle(&mut out),
                RelayState::DelayPending { .. } => {
                    out.push(RelayAction::DelayCancelled);
                    self.go_idle(&mut out);
                }
                _ => {}
            }
        }
        out
    }

    fn go_idle(&mut self, out: &mut Vec<RelayAction>) {
        self.state = RelayState::Idle;
        self.timer_token += 1;
        self.reselect_group(out);
    }

    fn arm_timer(&mut self, at_ns: u64, out: &mut Vec<RelayAction>) {
        self.timer_token += 1;
        out.push(RelayAction::Timer {
            at_ns,
            token: self.timer_token,
        });
    }

    fn reselect_group(&mut self, out: &mut Vec<RelayAction>) {
        let status = self.observed.contingency(&self.topo);
        let group = self.groups.select_active_group(&status);
        if group != self.active_group {
            self.active_group = group;
            self.pickup = self.groups.pickup_for(&status);
            out.push(RelayAction::GroupChanged { group });
        }
    }

    fn any_picked(&self, relays: &[usize]) -> bool {
        relays.iter().any(|&r| self.view.picked_up(r))
    }

    fn rule_one(&self) -> bool {
        self.neighbors
            .opposite
            .is_some_and(|r| self.view.picked_up(r))
    }

    /// Downstream same-direction relay picked up, and the fault confirmed
    /// beyond it: its opposite-end partner is picked up too, or that partner
    /// has no source behind it and so cannot see the fault.
    fn rule_two(&self) -> bool {
        if self.any_picked(&self.neighbors.downstream_opposite) {
            return self.any_picked(&self.neighbors.downstream_same);
        }
        self.neighbors
            .downstream_pairs
            .iter()
            .any(|&(same, opp, line)| {
                self.view.picked_up(same) && {
                    let bus = self.topo.relay_bus(opp);
                    !has_infeed(&self.topo, &self.observed, bus, line)
                }
            })
    }

    /// Rule evaluation for a picked-up relay.
    pub fn decide(&self, now_ns: u64) -> Decision {
        let RelayState::PickedUp { since_ns } = self.state else {
            return Decision::Wait;
        };
        if self.rule_one() {
            Decision::InstantTrip(TripRule::OppositePickedUp)
        } else if self.rule_two() {
            Decision::DelayedTrip {
                delay_ns: self.config.delay_ns,
            }
        } else if now_ns >= since_ns + self.config.staleness_ns {
            Decision::InstantTrip(TripRule::ProtectionFailure)
        } else {
            Decision::Wait
        }
    }

    fn trip(&mut self, rule: TripRule, now_ns: u64, out: &mut Vec<RelayAction>) {
        self.state = RelayState::Tripped { at_ns: now_ns };
        self.timer_token += 1;
        out.push(RelayAction::Trip(rule));
        self.publish(out);
    }

    fn evaluate(&mut self, now_ns: u64, out: &mut Vec<RelayAction>) {
        match self.state {
            RelayState::PickedUp { .. } => match self.decide(now_ns) {
                Decision::InstantTrip(rule) => self.trip(rule, now_ns, out),
                Decision::DelayedTrip { delay_ns } => {
                    let deadline_ns = now_ns + delay_ns;
                    self.state = RelayState::DelayPending { deadline_ns };
                    out.push(RelayAction::DelayStarted { deadline_ns });
                    self.arm_timer(deadline_ns, out);
                }
                Decision::Wait => {}
            },
            RelayState::DelayPending { .. } => {
                if self.rule_one() {
                    self.trip(TripRule::OppositePickedUp, now_ns, out);
                } else if !self.any_picked(&self.neighbors.downstream_same) {
                    // downstream cleared its fault
                    out.push(RelayAction::DelayCancelled);
                    if self.picked {
                        self.state = RelayState::PickedUp { since_ns: now_ns };
                        self.arm_timer(now_ns + self.config.staleness_ns, out);
                    } else {
                        self.go_idle(out);
                    }
                }
            }
            _ => {}
        }
    }

    /// Timer expiry requested through [`RelayAction::Timer`].
    pub fn on_timer(&mut self, token: u64, now_ns: u64) -> Vec<RelayAction> {
        let mut out = Vec::new();
        if token != self.timer_token || self.inert {
            return out;
        }
        match self.state {
            RelayState::PickedUp { .. } => self.evaluate(now_ns, &mut out),
            RelayState::DelayPending { deadline_ns } if now_ns >= deadline_ns => {
                self.trip(TripRule::BackupTimeout, now_ns, &mut out)
            }
            _ => {}
        }
        out
    }

    /// Ingests a decoded status frame.
    pub fn on_goose(&mut self, frame: &GooseFrame, now_ns: u64) -> Vec<RelayAction> {
        let mut out = Vec::new();
        if frame.publisher == self.wire_id() {
            return out;
        }
        let known = frame.publisher == STATION_PUBLISHER
            || relay_from_wire_id(frame.publisher).is_some_and(|r| r < self.topo.relays.len());
        if !known {
            self.unknown_publishers += 1;
            return out;
        }
        if !self.view.accept(frame, now_ns) {
            self.replays += 1;
            return out;
        }
        self.observed.apply(&self.topo, frame);
        if self.inert {
            return out;
        }
        match self.state {
            RelayState::Idle => self.reselect_group(&mut out),
            RelayState::PickedUp { .. } | RelayState::DelayPending { .. } => {
                self.evaluate(now_ns, &mut out)
            }
            RelayState::Tripped { .. } => {}
        }
        out
    }

    /// The co-located breaker has opened.
    pub fn on_breaker_open(&mut self) -> Vec<RelayAction> {
        self.breaker_closed = false;
        self.observed.open_breaker(self.index);
        let mut out = Vec::new();
        self.publish(&mut out);
        out
    }
}

#[cfg(test)]
mod tests;
