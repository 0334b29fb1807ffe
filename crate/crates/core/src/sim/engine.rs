use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use crate::comms::{decode_frame, encode_frame, kind, DataEntry, MulticastBus, Publisher};
use crate::grid::{FaultSpec, GridTopology, NetworkState};
use crate::relay::{
    relay_from_wire_id, relay_wire_id, BaselineRelay, ObservedStatus, RelayAction, RelayRuntime,
    STATION_PUBLISHER,
};
use crate::settings::IdmtConfig;

use super::report::{LogEntry, RelayTiming, SchemeRun, TimingReport, TraceRow};
use super::{ProtectionSettings, Result, Scenario, Scheme, SimConfig};

const APP_ID: u16 = 0x0001;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Epoch {
    t0_ns: u64,
    start: f64,
    target: f64,
    tau: f64,
}

/// Relay currents as first-order transitions between network solutions.
#[derive(Debug, Clone, PartialEq)]
pub struct RelayCurrents {
    epochs: Vec<Epoch>,
}

impl RelayCurrents {
    /// Constant currents from `t0_ns` on.
    pub fn steady(t0_ns: u64, values: &[f64]) -> Self {
        Self {
            epochs: values
                .iter()
                .map(|&v| Epoch {
                    t0_ns,
                    start: v,
                    target: v,
                    tau: 0.0,
                })
                .collect(),
        }
    }

    pub fn at(&self, relay: usize, t_ns: u64) -> f64 {
        let e = &self.epochs[relay];
        if t_ns <= e.t0_ns {
            return e.start;
        }
        if e.tau <= 0.0 {
            return e.target;
        }
        let dt = (t_ns - e.t0_ns) as f64 * 1e-9;
        e.target + (e.start - e.target) * (-dt / e.tau).exp()
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }
}

/// Re-solves the network at `t_ns` and returns the currents moving from
/// their present values towards the new steady state, plus whether the fault
/// still draws current. Relays at open line ends drop to zero at once.
pub fn inject_fault(
    state: &NetworkState,
    fault: Option<&FaultSpec>,
    previous: &RelayCurrents,
    t_ns: u64,
    tau_limit: Option<f64>,
) -> Result<(RelayCurrents, bool)> {
    let topo = state.topology();
    let sol = state.solve(fault)?;
    let energized = sol.current.is_detected();
    let tau = if energized {
        tau_limit.map_or(sol.tau, |cap| sol.tau.min(cap))
    } else {
        0.0
    };
    let epochs = (0..topo.relays.len())
        .map(|r| {
            let p = &topo.relays[r];
            let open = state.is_end_open(p.line, p.end);
            Epoch {
                t0_ns: t_ns,
                start: if open { 0.0 } else { previous.at(r, t_ns) },
                target: sol.faulted[r],
                tau,
            }
        })
        .collect();
    Ok((RelayCurrents { epochs }, energized))
}

#[derive(Debug, Clone)]
enum Event {
    Sample,
    Fault,
    Deliver {
        relay: usize,
        bytes: Vec<u8>,
    },
    Retransmit {
        publisher: usize,
        st: u32,
        origin_ns: u64,
        k: usize,
    },
    Timer {
        relay: usize,
        token: u64,
    },
    Breaker {
        relay: usize,
        stage: u8,
    },
}

#[derive(Debug)]
struct Queued {
    at_ns: u64,
    seq: u64,
    event: Event,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        (self.at_ns, self.seq) == (other.at_ns, other.seq)
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    // reversed: BinaryHeap pops the earliest
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at_ns, other.seq).cmp(&(self.at_ns, self.seq))
    }
}

fn secs_to_ns(s: f64) -> u64 {
    (s * 1e9).round() as u64
}

enum Relays {
    Adaptive(Vec<RelayRuntime>),
    Baseline(Vec<BaselineRelay>),
}

struct Engine<'a> {
    topo: &'a GridTopology,
    scenario: &'a Scenario,
    config: &'a SimConfig,
    queue: BinaryHeap<Queued>,
    seq: u64,
    network: NetworkState<'a>,
    currents: RelayCurrents,
    fault_applied: bool,
    relays: Relays,
    /// Index 0 is the station, relay `r` is `r + 1`.
    publishers: Vec<Publisher>,
    bus: Option<MulticastBus>,
    timing: Vec<RelayTiming>,
    log: Vec<LogEntry>,
    trace: Vec<TraceRow>,
    fault_cleared_ns: Option<u64>,
    end_ns: u64,
    step_ns: u64,
}

impl<'a> Engine<'a> {
    fn push(&mut self, at_ns: u64, event: Event) {
        self.seq += 1;
        self.queue.push(Queued {
            at_ns,
            seq: self.seq,
            event,
        });
    }

    fn note(&mut self, time_ns: u64, actor: &str, kind: &'static str, detail: String) {
        self.log.push(LogEntry {
            time_ns,
            actor: actor.to_string(),
            kind,
            detail,
        });
    }

    fn actor(&self, relay: usize) -> String {
        self.topo.relays[relay].id.clone()
    }

    fn send(&mut self, publisher: usize, frame: &crate::comms::GooseFrame, now: u64) {
        let Some(bus) = self.bus.as_mut() else {
            return;
        };
        let bytes = encode_frame(frame).expect("status datasets fit a frame");
        let deliveries = bus.publish(frame.publisher, &bytes, now);
        let actor = if publisher == 0 {
            "station".to_string()
        } else {
            self.actor(publisher - 1)
        };
        self.note(
            now,
            &actor,
            "tx",
            format!("st={} sq={}", frame.st_num, frame.sq_num),
        );
        for d in deliveries {
            if let Some(relay) = relay_from_wire_id(d.subscriber) {
                self.push(
                    d.at_ns,
                    Event::Deliver {
                        relay,
                        bytes: bytes.clone(),
                    },
                );
            }
        }
    }

    fn publish_change(&mut self, publisher: usize, dataset: Vec<DataEntry>, now: u64) {
        let frame = self.publishers[publisher].publish_change(dataset, now);
        self.send(publisher, &frame, now);
        let offsets = self.config.retransmit.burst_offsets_ns();
        let (next, k) = match offsets.first() {
            Some(&o) => (now + o, 0),
            None => (now + self.config.retransmit.heartbeat_ns(), 0),
        };
        self.push(
            next,
            Event::Retransmit {
                publisher,
                st: frame.st_num,
                origin_ns: now,
                k,
            },
        );
    }

    fn retransmit(&mut self, publisher: usize, st: u32, origin_ns: u64, k: usize, now: u64) {
        if self.publishers[publisher].st_num() != st {
            return;
        }
        let frame = self.publishers[publisher].retransmit(now);
        self.send(publisher, &frame, now);
        let offsets = self.config.retransmit.burst_offsets_ns();
        let (next, k) = if k + 1 < offsets.len() {
            (origin_ns + offsets[k + 1], k + 1)
        } else {
            (now + self.config.retransmit.heartbeat_ns(), offsets.len())
        };
        self.push(
            next,
            Event::Retransmit {
                publisher,
                st,
                origin_ns,
                k,
            },
        );
    }

    fn handle(&mut self, relay: usize, actions: Vec<RelayAction>, now: u64) {
        let actor = self.actor(relay);
        for a in actions {
            match a {
                RelayAction::PickedUp => {
                    self.timing[relay].pickup_ns.get_or_insert(now);
                    let i = self.currents.at(relay, now);
                    self.note(now, &actor, "pickup", format!("{i:.3} A"));
                }
                RelayAction::Dropped => self.note(now, &actor, "drop", String::new()),
                RelayAction::Publish(ds) => self.publish_change(relay + 1, ds, now),
                RelayAction::Timer { at_ns, token } => {
                    self.push(at_ns, Event::Timer { relay, token })
                }
                RelayAction::DelayStarted { deadline_ns } => self.note(
                    now,
                    &actor,
                    "delay_start",
                    format!("deadline={deadline_ns}"),
                ),
                RelayAction::DelayCancelled => {
                    self.note(now, &actor, "delay_cancel", String::new())
                }
                RelayAction::Trip(rule) => {
                    let t = &mut self.timing[relay];
                    if t.trip_ns.is_none() {
                        t.trip_ns = Some(now);
                        t.rule = Some(rule);
                        self.note(now, &actor, "trip", rule.to_string());
                        let t_tr = self.config.times.t_tr.as_nanos() as u64;
                        self.push(now + t_tr, Event::Breaker { relay, stage: 1 });
                    }
                }
                RelayAction::GroupChanged { group } => {
                    self.note(now, &actor, "group", group.to_string())
                }
            }
        }
    }

    fn resolve(&mut self, now: u64) -> Result<()> {
        let fault = self.fault_applied.then_some(&self.scenario.fault);
        let (currents, energized) = inject_fault(
            &self.network,
            fault,
            &self.currents,
            now,
            self.config.rise_tau_limit,
        )?;
        self.currents = currents;
        if self.fault_applied && !energized && self.fault_cleared_ns.is_none() {
            self.fault_cleared_ns = Some(now);
            self.note(now, "grid", "fault_cleared", String::new());
        }
        Ok(())
    }

    fn sample(&mut self, now: u64) {
        for r in 0..self.topo.relays.len() {
            let i = self.currents.at(r, now);
            if self.config.trace_waveforms {
                self.trace.push(TraceRow {
                    time_ns: now,
                    relay: r,
                    amperes: i,
                });
            }
            let actions = match &mut self.relays {
                Relays::Adaptive(v) => v[r].on_sample(i, now),
                Relays::Baseline(v) => v[r].on_sample(i, now),
            };
            if !actions.is_empty() {
                self.handle(r, actions, now);
            }
        }
        let next = now + self.step_ns;
        if next <= self.end_ns {
            self.push(next, Event::Sample);
        }
    }

    fn breaker(&mut self, relay: usize, stage: u8, now: u64) -> Result<()> {
        let actor = self.actor(relay);
        let times = self.config.times;
        match stage {
            1 => {
                self.note(now, &actor, "trip_coil", String::new());
                self.push(
                    now + times.t_cb_op.as_nanos() as u64,
                    Event::Breaker { relay, stage: 2 },
                );
            }
            2 => {
                self.note(now, &actor, "contacts_part", String::new());
                self.push(
                    now + times.t_arc.as_nanos() as u64,
                    Event::Breaker { relay, stage: 3 },
                );
            }
            _ => {
                self.timing[relay].clear_ns = Some(now);
                self.note(now, &actor, "breaker_open", String::new());
                self.network.open_relay_breaker(relay);
                self.resolve(now)?;
                if let Relays::Adaptive(v) = &mut self.relays {
                    let actions = v[relay].on_breaker_open();
                    self.handle(relay, actions, now);
                }
            }
        }
        Ok(())
    }

    fn station_dataset(&self) -> Vec<DataEntry> {
        let c = &self.scenario.contingency;
        let lines = self.topo.lines.iter().enumerate().map(|(i, l)| {
            DataEntry::new(
                kind::LINE_IN_SERVICE,
                i as u32,
                l.in_service && !c.line_outages.contains(&l.id),
            )
        });
        let sources = self.topo.sources.iter().enumerate().map(|(i, s)| {
            DataEntry::new(
                kind::SOURCE_IN_SERVICE,
                i as u32,
                s.in_service && !c.source_outages.contains(&s.id),
            )
        });
        lines.chain(sources).collect()
    }

    fn run(mut self, scheme: Scheme, fault_ns: u64) -> Result<SchemeRun> {
        self.push(0, Event::Sample);
        self.push(fault_ns, Event::Fault);
        if let Relays::Adaptive(v) = &self.relays {
            let initial: Vec<Vec<DataEntry>> = v.iter().map(|r| r.status_dataset()).collect();
            let station = self.station_dataset();
            if station.len() <= crate::comms::MAX_ENTRIES {
                self.publish_change(0, station, 0);
            }
            for (r, ds) in initial.into_iter().enumerate() {
                self.publish_change(r + 1, ds, 0);
            }
        }
        while let Some(q) = self.queue.pop() {
            let now = q.at_ns;
            if now > self.end_ns {
                break;
            }
            match q.event {
                Event::Sample => self.sample(now),
                Event::Fault => {
                    self.fault_applied = true;
                    let f = &self.scenario.fault;
                    self.note(
                        now,
                        "grid",
                        "fault",
                        format!(
                            "{} at {} {:?} {} ohm",
                            f.line, f.position, f.kind, f.resistance
                        ),
                    );
                    self.resolve(now)?;
                }
                Event::Deliver { relay, bytes } => {
                    let Relays::Adaptive(v) = &mut self.relays else {
                        continue;
                    };
                    match decode_frame(&bytes) {
                        Ok(frame) => {
                            let actions = v[relay].on_goose(&frame, now);
                            if !actions.is_empty() {
                                self.handle(relay, actions, now);
                            }
                        }
                        Err(e) => {
                            let actor = self.actor(relay);
                            self.note(now, &actor, "decode_error", e.to_string());
                        }
                    }
                }
                Event::Retransmit {
                    publisher,
                    st,
                    origin_ns,
                    k,
                } => self.retransmit(publisher, st, origin_ns, k, now),
                Event::Timer { relay, token } => {
                    if let Relays::Adaptive(v) = &mut self.relays {
                        let actions = v[relay].on_timer(token, now);
                        if !actions.is_empty() {
                            self.handle(relay, actions, now);
                        }
                    }
                }
                Event::Breaker { relay, stage } => self.breaker(relay, stage, now)?,
            }
        }
        Ok(SchemeRun {
            scheme,
            fault_ns,
            relays: self.timing,
            log: self.log,
            trace: self.trace,
            capture: self.bus.map(|b| b.capture_dump()).unwrap_or_default(),
            fault_cleared_ns: self.fault_cleared_ns,
        })
    }
}

/// Simulates one scenario under one protection scheme.
pub fn run_scheme(
    topo: &Arc<GridTopology>,
    settings: &ProtectionSettings,
    scenario: &Scenario,
    config: &SimConfig,
    scheme: Scheme,
) -> Result<SchemeRun> {
    config.validate()?;
    scenario.validate(topo)?;
    let network = NetworkState::new(topo, &scenario.contingency)?;
    let pre = network.solve(None)?;
    let n = topo.relays.len();
    let inert: Vec<bool> = topo
        .relays
        .iter()
        .map(|r| scenario.adjacent_failure.contains(&r.id))
        .collect();
    let relay_config = config.relay_config();

    let (relays, bus) = match scheme {
        Scheme::Adaptive => {
            let observed = ObservedStatus::from_contingency(topo, &scenario.contingency);
            let v = (0..n)
                .map(|r| {
                    let mut rt = RelayRuntime::new(
                        topo.clone(),
                        r,
                        settings.for_relay(r).clone(),
                        relay_config,
                        observed.clone(),
                    );
                    rt.set_inert(inert[r]);
                    rt
                })
                .collect();
            let mut bus = MulticastBus::new(config.bus.clone())?;
            for r in 0..n {
                bus.subscribe(relay_wire_id(r));
            }
            if config.capture_frames {
                bus.enable_capture();
            }
            (Relays::Adaptive(v), Some(bus))
        }
        Scheme::Baseline => {
            let curve = config.curve()?;
            let v = (0..n)
                .map(|r| {
                    let idmt = IdmtConfig::new(
                        curve,
                        config.baseline_time_multiplier,
                        settings.baseline_pickup(r),
                    )?;
                    let mut b =
                        BaselineRelay::new(r, topo.relays[r].id.clone(), idmt, relay_config);
                    b.set_inert(inert[r]);
                    Ok(b)
                })
                .collect::<Result<Vec<_>>>()?;
            (Relays::Baseline(v), None)
        }
    };

    let mut publishers = vec![Publisher::new(APP_ID, STATION_PUBLISHER)];
    publishers.extend((0..n).map(|r| Publisher::new(APP_ID, relay_wire_id(r))));
    let engine = Engine {
        topo,
        scenario,
        config,
        queue: BinaryHeap::new(),
        seq: 0,
        network,
        currents: RelayCurrents::steady(0, &pre.prefault),
        fault_applied: false,
        relays,
        publishers,
        bus,
        timing: topo
            .relays
            .iter()
            .map(|r| RelayTiming {
                relay: r.id.clone(),
                ..Default::default()
            })
            .collect(),
        log: Vec::new(),
        trace: Vec::new(),
        fault_cleared_ns: None,
        end_ns: secs_to_ns(scenario.duration),
        step_ns: secs_to_ns(scenario.sample_step).max(1),
    };
    engine.run(scheme, secs_to_ns(scenario.fault_time))
}

/// Simulates one scenario under both schemes with identical physics.
pub fn run_scenario(
    topo: &Arc<GridTopology>,
    settings: &ProtectionSettings,
    scenario: &Scenario,
    config: &SimConfig,
) -> Result<TimingReport> {
    Ok(TimingReport {
        scenario: scenario.name.clone(),
        adaptive: run_scheme(topo, settings, scenario, config, Scheme::Adaptive)?,
        baseline: run_scheme(topo, settings, scenario, config, Scheme::Baseline)?,
    })
}
