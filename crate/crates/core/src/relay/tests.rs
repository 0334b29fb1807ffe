use std::sync::Arc;

use super::*;
use crate::comms::Publisher;
use crate::grid::Contingency;
use crate::settings::{synthesize_setting_groups, SettingGroup};

const CHAIN: &str = r#"
[[buses]]
id = "B1"
nominal_voltage = 750.0
[[buses]]
id = "B2"
nominal_voltage = 750.0
[[buses]]
id = "B3"
nominal_voltage = 750.0
[[lines]]
id = "L12"
from = "B1"
to = "B2"
length_km = 5.0
r_ohm_per_km = 0.018
l_h_per_km = 0.0032
[[lines]]
id = "L23"
from = "B2"
to = "B3"
length_km = 5.0
r_ohm_per_km = 0.018
l_h_per_km = 0.0032
[[sources]]
id = "S1"
bus = "B1"
rating = 1e6
kind = "slack"
[[relays]]
id = "R12"
line = "L12"
at = "B1"
[[relays]]
id = "R21"
line = "L12"
at = "B2"
[[relays]]
id = "R23"
line = "L23"
at = "B2"
[[relays]]
id = "R32"
line = "L23"
at = "B3"
"#;

fn single_group(pickup: f64) -> Arc<SettingGroupSet> {
    Arc::new(SettingGroupSet {
        relay: "R".into(),
        width: 100.0,
        ratio: 0.1,
        default_group: 1,
        groups: vec![SettingGroup {
            id: 1,
            lower_bound: 2.0 * pickup,
            upper_bound: 2.0 * pickup + 100.0,
            pickup,
            activation: vec![Contingency::none()],
        }],
    })
}

fn chain_relay(id: &str) -> RelayRuntime {
    let topo = Arc::new(GridTopology::parse(CHAIN).unwrap());
    let idx = topo.relay_index(id).unwrap();
    let obs = ObservedStatus::from_contingency(&topo, &Contingency::none());
    RelayRuntime::new(topo, idx, single_group(350.0), RelayConfig::default(), obs)
}

fn status_frame(p: &mut Publisher, picked: bool, now: u64) -> GooseFrame {
    p.publish_change(
        vec![
            DataEntry::new(kind::PICKED_UP, p.id, picked),
            DataEntry::new(kind::TRIPPED, p.id, false),
            DataEntry::new(kind::BREAKER_CLOSED, p.id, true),
        ],
        now,
    )
}

fn feed(r: &mut RelayRuntime, amps: f64, from: u64, n: u64) -> Vec<RelayAction> {
    (0..n)
        .flat_map(|k| r.on_sample(amps, from + k * 100_000))
        .collect()
}

#[test]
fn neighbour_map_of_chain() {
    let r = chain_relay("R12");
    assert_eq!(r.neighbors().opposite, Some(1));
    assert_eq!(r.neighbors().downstream_same, vec![2]);
    assert_eq!(r.neighbors().downstream_opposite, vec![3]);
    assert_eq!(r.neighbors().upstream_of_opposite, vec![3]);
}

#[test]
fn pickup_needs_persistence() {
    let mut r = chain_relay("R12");
    let a = feed(&mut r, 400.0, 0, 3);
    assert!(a.contains(&RelayAction::PickedUp));
    assert!(a.iter().any(|x| matches!(x, RelayAction::Publish(_))));
    assert!(matches!(
        r.state(),
        RelayState::PickedUp { since_ns: 200_000 }
    ));
}

#[test]
fn single_spike_is_ignored() {
    let mut r = chain_relay("R12");
    feed(&mut r, 400.0, 0, 1);
    feed(&mut r, 100.0, 100_000, 1);
    feed(&mut r, 400.0, 200_000, 2);
    assert_eq!(r.state(), RelayState::Idle);
    assert!(!r.is_picked_up());
}

#[test]
fn reverse_current_reads_zero() {
    let mut r = chain_relay("R12");
    feed(&mut r, -5000.0, 0, 10);
    assert_eq!(r.state(), RelayState::Idle);
    assert_eq!(r.measured(), 0.0);
}

#[test]
fn drop_below_ratio_returns_idle() {
    let mut r = chain_relay("R12");
    feed(&mut r, 400.0, 0, 3);
    feed(&mut r, 340.0, 300_000, 1);
    assert!(r.is_picked_up(), "hysteresis keeps it picked up");
    let a = feed(&mut r, 0.0, 400_000, 1);
    assert!(a.contains(&RelayAction::Dropped));
    assert_eq!(r.state(), RelayState::Idle);
}

#[test]
fn rule_one_opposite_picked_up() {
    let mut r = chain_relay("R12");
    let mut r21 = Publisher::new(1, relay_wire_id(1));
    r.on_goose(&status_frame(&mut r21, true, 0), 0);
    assert!(r.view().picked_up(1));
    let a = feed(&mut r, 400.0, 0, 3);
    assert!(a.contains(&RelayAction::Trip(TripRule::OppositePickedUp)));
}

#[test]
fn rule_two_delays_then_cancels() {
    let mut r = chain_relay("R12");
    let mut r23 = Publisher::new(1, relay_wire_id(2));
    let mut r32 = Publisher::new(1, relay_wire_id(3));
    feed(&mut r, 400.0, 0, 3);
    r.on_goose(&status_frame(&mut r32, true, 250_000), 250_000);
    assert!(matches!(r.state(), RelayState::PickedUp { .. }));
    let a = r.on_goose(&status_frame(&mut r23, true, 300_000), 300_000);
    let deadline = 300_000 + 29_000_000;
    assert!(a.contains(&RelayAction::DelayStarted {
        deadline_ns: deadline
    }));
    let a = r.on_goose(&status_frame(&mut r23, false, 20_000_000), 20_000_000);
    assert!(a.contains(&RelayAction::DelayCancelled));
    assert!(matches!(r.state(), RelayState::PickedUp { .. }));
}

#[test]
fn rule_two_deadline_trips_as_backup() {
    let mut r = chain_relay("R12");
    let mut r23 = Publisher::new(1, relay_wire_id(2));
    let mut r32 = Publisher::new(1, relay_wire_id(3));
    r.on_goose(&status_frame(&mut r23, true, 0), 0);
    r.on_goose(&status_frame(&mut r32, true, 0), 0);
    let a = feed(&mut r, 400.0, 0, 3);
    let Some(&RelayAction::Timer { at_ns, token }) =
        a.iter().find(|x| matches!(x, RelayAction::Timer { .. }))
    else {
        panic!("no timer in {a:?}");
    };
    assert_eq!(at_ns, 200_000 + 29_000_000);
    let a = r.on_timer(token, at_ns);
    assert_eq!(a.first(), Some(&RelayAction::Trip(TripRule::BackupTimeout)));
}

#[test]
fn rule_three_after_window() {
    let mut r = chain_relay("R12");
    let a = feed(&mut r, 400.0, 0, 3);
    let &RelayAction::Timer { at_ns, token } = a.last().unwrap() else {
        panic!("{a:?}");
    };
    assert_eq!(at_ns, 200_000 + RelayConfig::default().staleness_ns);
    assert_eq!(r.decide(at_ns - 1), Decision::Wait);
    let a = r.on_timer(token, at_ns);
    assert_eq!(
        a.first(),
        Some(&RelayAction::Trip(TripRule::ProtectionFailure))
    );
}

#[test]
fn no_infeed_behind_partner_counts_as_confirmation() {
    // B3 has no source, so R32 can never pick up for an L23 fault.
    let mut r = chain_relay("R12");
    let mut r23 = Publisher::new(1, relay_wire_id(2));
    feed(&mut r, 400.0, 0, 3);
    let a = r.on_goose(&status_frame(&mut r23, true, 300_000), 300_000);
    assert!(a
        .iter()
        .any(|x| matches!(x, RelayAction::DelayStarted { .. })));
}

#[test]
fn replayed_frame_is_ignored() {
    let mut r = chain_relay("R12");
    let mut r21 = Publisher::new(1, relay_wire_id(1));
    for _ in 0..4 {
        status_frame(&mut r21, false, 0);
    }
    let newer = status_frame(&mut r21, false, 0);
    assert_eq!(newer.st_num, 5);
    r.on_goose(&newer, 0);
    let mut older = newer.clone();
    older.st_num = 4;
    older.dataset[0].value = true;
    r.on_goose(&older, 10);
    assert!(!r.view().picked_up(1));
    assert_eq!(r.diagnostics(), (0, 1));
}

#[test]
fn unknown_publisher_counted() {
    let mut r = chain_relay("R12");
    let mut p = Publisher::new(1, 999);
    r.on_goose(&status_frame(&mut p, true, 0), 0);
    assert_eq!(r.diagnostics(), (1, 0));
}

#[test]
fn inert_relay_never_acts() {
    let mut r = chain_relay("R12");
    r.set_inert(true);
    assert!(feed(&mut r, 10_000.0, 0, 50).is_empty());
    assert_eq!(r.state(), RelayState::Idle);
}

#[test]
fn breaker_status_switches_group_while_idle() {
    let topo = Arc::new(crate::fixtures::ieee14());
    let table = crate::fixtures::r12_min_fault();
    let set = synthesize_setting_groups("R12", &table.cells, 0.1, Some(85.0)).unwrap();
    let r12 = topo.relay_index("R12").unwrap();
    let obs = ObservedStatus::from_contingency(&topo, &Contingency::none());
    let mut r = RelayRuntime::new(
        topo.clone(),
        r12,
        Arc::new(set),
        RelayConfig::default(),
        obs,
    );
    assert_eq!(r.active_group(), 7);
    let r15 = topo.relay_index("R15").unwrap();
    let mut p = Publisher::new(1, relay_wire_id(r15));
    let frame = p.publish_change(
        vec![DataEntry::new(
            kind::BREAKER_CLOSED,
            relay_wire_id(r15),
            false,
        )],
        0,
    );
    let a = r.on_goose(&frame, 0);
    assert_eq!(r.active_group(), 1);
    assert!(a.contains(&RelayAction::GroupChanged { group: 1 }));
}

#[test]
fn baseline_trips_on_inverse_time() {
    use crate::settings::{IdmtConfig, IEC_STANDARD_INVERSE};
    let cfg = IdmtConfig::new(IEC_STANDARD_INVERSE, 0.025, 100.0).unwrap();
    let mut b = BaselineRelay::new(0, "R", cfg, RelayConfig::default());
    let mut trip = None;
    for k in 0..10_000u64 {
        let now = k * 100_000;
        if b.on_sample(200.0, now)
            .contains(&RelayAction::Trip(TripRule::InverseTime))
        {
            trip = Some(now);
            break;
        }
    }
    // pickup after 3 samples, then 0.2507 s of accumulation
    let t = trip.unwrap() as f64 * 1e-9;
    assert!((t - (0.0002 + 0.250_725_7)).abs() < 1.5e-4, "{t}");
}

#[test]
fn baseline_below_pickup_never_trips() {
    use crate::settings::{IdmtConfig, IEC_STANDARD_INVERSE};
    let cfg = IdmtConfig::new(IEC_STANDARD_INVERSE, 0.025, 100.0).unwrap();
    let mut b = BaselineRelay::new(0, "R", cfg, RelayConfig::default());
    for k in 0..100_000u64 {
        assert!(b.on_sample(99.0, k * 100_000).is_empty());
    }
}
