use proptest::prelude::*;

use dcprot::fixtures;
use dcprot::grid::{
    Contingency, FaultCurrent, FaultKind, FaultSpec, GridTopology, LineEnd, NetworkState,
};

fn topo() -> GridTopology {
    fixtures::ieee14()
}

fn end_currents(topo: &GridTopology, currents: &[f64], line: usize) -> (f64, f64) {
    let a = topo.relay_at(line, LineEnd::From).unwrap();
    let b = topo.relay_at(line, LineEnd::To).unwrap();
    (currents[a], currents[b])
}

fn kind() -> impl Strategy<Value = FaultKind> {
    prop_oneof![Just(FaultKind::PolePole), Just(FaultKind::PoleGround)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Both end relays look into the line, so a healthy line's readings cancel
    // and a faulted line's readings add up to the fault current.
    #[test]
    fn line_currents_balance(
        line in 0usize..20,
        position in 0.0f64..=1.0,
        kind in kind(),
        resistance in 0.0f64..5.0,
        source in proptest::option::of(0usize..5),
    ) {
        let topo = topo();
        let c = Contingency::new(
            Vec::<String>::new(),
            source.map(|s| topo.sources[s].id.clone()),
        );
        let fault = FaultSpec { resistance, ..FaultSpec::bolted(topo.lines[line].id.clone(), position, kind) };
        let sol = NetworkState::new(&topo, &c).unwrap().solve(Some(&fault)).unwrap();
        let total = match sol.current {
            FaultCurrent::Amperes(i) => i,
            FaultCurrent::NotDetected => 0.0,
        };
        for li in 0..topo.lines.len() {
            let (a, b) = end_currents(&topo, &sol.prefault, li);
            prop_assert!((a + b).abs() < 1e-6 * (1.0 + a.abs()), "prefault {li}: {a} {b}");
            let (a, b) = end_currents(&topo, &sol.faulted, li);
            let expected = if li == line { total } else { 0.0 };
            prop_assert!(
                (a + b - expected).abs() < 1e-6 * (1.0 + total.abs()),
                "line {li}: {a} + {b} vs {expected}"
            );
        }
    }

    #[test]
    fn fault_current_falls_with_resistance(
        line in 0usize..20,
        position in 0.0f64..=1.0,
        kind in kind(),
        r in 0.0f64..3.0,
        dr in 0.01f64..3.0,
    ) {
        let topo = topo();
        let state = NetworkState::new(&topo, &Contingency::none()).unwrap();
        let at = |resistance: f64| {
            let f = FaultSpec { resistance, ..FaultSpec::bolted(topo.lines[line].id.clone(), position, kind) };
            state.solve(Some(&f)).unwrap().current.amperes().unwrap()
        };
        prop_assert!(at(r + dr) < at(r));
    }
}

#[test]
fn open_line_end_reads_zero() {
    let topo = topo();
    let c = Contingency::new(["L24"], Vec::<String>::new());
    let sol = NetworkState::new(&topo, &c)
        .unwrap()
        .solve(Some(&FaultSpec::bolted("L12", 0.5, FaultKind::PolePole)))
        .unwrap();
    let l24 = topo.line_index("L24").unwrap();
    assert_eq!(end_currents(&topo, &sol.faulted, l24), (0.0, 0.0));
}

#[test]
fn source_outage_lowers_nearby_fault_current() {
    let topo = topo();
    let f = FaultSpec::bolted("L12", 0.1, FaultKind::PolePole);
    let all = NetworkState::new(&topo, &Contingency::none())
        .unwrap()
        .solve(Some(&f))
        .unwrap();
    let s1 = NetworkState::new(&topo, &Contingency::new(Vec::<String>::new(), ["S1"]))
        .unwrap()
        .solve(Some(&f))
        .unwrap();
    assert!(s1.current.amperes().unwrap() < all.current.amperes().unwrap());
}
