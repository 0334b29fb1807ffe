use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::{Command, Output};

use dcprot::comms::decode_frame;
use dcprot::fixtures;
use dcprot::grid::{
    default_protection_zone, min_fault_current_table, ContingencyGrid, FaultStudy,
    DEFAULT_ZONE_OVERLAP,
};
use dcprot::settings::SettingGroupSet;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scenario(name: &str) -> String {
    root().join("scenarios").join(name).display().to_string()
}

fn tmp(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name)
}

fn dcprot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcprot"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn validate_summarizes_the_shipped_grid() {
    let path = root().join("crates/core/fixtures/ieee14_dc.toml");
    let o = dcprot(&["validate", "--topology", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("14 buses, 20 lines"), "{}", stdout(&o));
}

#[test]
fn validate_locates_bad_fields() {
    let path = tmp("negative_length.toml");
    let text = fixtures::IEEE14_TOPOLOGY.replacen("length_km = 5.0", "length_km = -5.0", 1);
    std::fs::write(&path, text).unwrap();
    let o = dcprot(&["validate", "--topology", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("lines[0].length_km"), "{}", stderr(&o));
}

#[test]
fn missing_files_are_io_errors() {
    let o = dcprot(&["validate", "--topology", "/nonexistent/grid.toml"]);
    assert_eq!(o.status.code(), Some(3));
    let o = dcprot(&["run", "--scenario", "/nonexistent/s.toml"]);
    assert_eq!(o.status.code(), Some(3));
    let o = dcprot(&["validate"]);
    assert_eq!(o.status.code(), Some(2), "missing flag is a usage error");
}

#[test]
fn groups_from_the_fixture_table() {
    let out = tmp("r12_groups.toml");
    let o = dcprot(&[
        "groups",
        "--relay",
        "R12",
        "--mode",
        "fixture",
        "--width",
        "85",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("R12: 7 groups"), "{}", stdout(&o));
    let set = SettingGroupSet::from_toml(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(set.groups.len(), 7);
    assert_eq!(set.groups[0].upper_bound, 881.5);

    let o = dcprot(&["groups", "--relay", "R99"]);
    assert_eq!(o.status.code(), Some(1));
    let o = dcprot(&["groups", "--relay", "R21", "--mode", "fixture"]);
    assert_eq!(o.status.code(), Some(1), "table belongs to R12");
}

#[test]
fn solver_groups_match_a_bin_count() {
    let o = dcprot(&["groups", "--relay", "R12"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let set = SettingGroupSet::from_toml(&stdout(&o)).unwrap();

    let topo = fixtures::ieee14();
    let ri = topo.relay_index("R12").unwrap();
    let cells = min_fault_current_table(
        &topo,
        "R12",
        &ContingencyGrid::line_by_source(&topo, true).contingencies(),
        &default_protection_zone(&topo, ri, DEFAULT_ZONE_OVERLAP),
        &FaultStudy::default(),
    )
    .unwrap();
    let values: Vec<f64> = cells
        .iter()
        .filter_map(|c| c.value.amperes())
        .filter(|&v| v > 0.0)
        .collect();
    let max = values.iter().copied().fold(f64::MIN, f64::max);
    // walk down from the top in steps of the document's width
    let occupied: BTreeSet<u32> = values
        .iter()
        .map(|&v| {
            let mut k = 0u32;
            while v <= max - (k + 1) as f64 * set.width {
                k += 1;
            }
            k
        })
        .collect();
    assert_eq!(set.groups.len(), occupied.len());
}

#[test]
fn run_reports_an_instant_primary_trip() {
    let s = scenario("l12_pole_pole.toml");
    let log = tmp("l12.log");
    let o = dcprot(&["run", "--scenario", &s, "--log", log.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let r12 = text
        .lines()
        .find(|l| l.starts_with("R12\t"))
        .expect("R12 row");
    let fields: Vec<&str> = r12.split('\t').collect();
    assert_eq!(fields[4], "opposite_picked_up");
    let trip_ms: f64 = fields[2].parse().unwrap();
    let baseline_ms: f64 = fields[6].parse().unwrap();
    assert!(trip_ms < 2.0 && trip_ms < baseline_ms, "{r12}");
    let events = std::fs::read_to_string(&log).unwrap();
    assert!(
        events.contains("# L12 pole-pole adaptive") && events.contains("# L12 pole-pole baseline")
    );

    let again = dcprot(&["run", "--scenario", &s]);
    assert_eq!(o.stdout, again.stdout);
}

#[test]
fn batch_tabulates_backup_trips() {
    let s = scenario("adjacent_failure_pp.toml");
    let o = dcprot(&["batch", "--scenario", &s]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4, "{text}");
    assert_eq!(lines[0].split('\t').count(), 7);
    for (line, row) in ["L23", "L24", "L25"].iter().zip(&lines[1..]) {
        let cells: Vec<&str> = row.split('\t').collect();
        assert_eq!(cells[0], *line);
        // every adaptive time is populated
        assert!(cells[1..].iter().all(|c| !c.starts_with("N/D")), "{row}");
    }
    let serial = dcprot(&["batch", "--scenario", &s, "--serial"]);
    assert_eq!(o.stdout, serial.stdout);
}

#[test]
fn batch_keeps_going_past_a_bad_scenario() {
    let path = tmp("mixed.toml");
    std::fs::write(
        &path,
        r#"
[[scenarios]]
name = "good"
fault = { line = "L12", position = 0.5, kind = "pole_pole" }
[[scenarios]]
name = "bad"
fault = { line = "L12", position = 0.5, kind = "pole_pole" }
adjacent_failure = ["R99"]
"#,
    )
    .unwrap();
    let o = dcprot(&["batch", "--scenario", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.starts_with("good\t0.")), "{text}");
    assert!(
        text.contains("bad\terror") && text.contains("R99"),
        "{text}"
    );
}

#[test]
fn frame_dump_decodes() {
    let s = scenario("l12_pole_pole.toml");
    let o = dcprot(&["dump-frames", "--scenario", &s, "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mut frames = 0;
    for line in text.lines().filter(|l| !l.starts_with('#')) {
        let hex_frame = line.split('\t').nth(2).expect("three columns");
        let bytes: Vec<u8> = (0..hex_frame.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&hex_frame[i..i + 2], 16).unwrap())
            .collect();
        decode_frame(&bytes).unwrap();
        frames += 1;
    }
    assert!(frames > 0);
}

#[test]
fn security_overhead_slows_the_primary() {
    let s = scenario("l12_pole_pole.toml");
    let trip = |extra: &[&str]| {
        let mut args = vec!["run", "--scenario", s.as_str()];
        args.extend_from_slice(extra);
        let o = dcprot(&args);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let text = stdout(&o);
        let r12 = text
            .lines()
            .find(|l| l.starts_with("R12\t"))
            .unwrap()
            .to_string();
        r12.split('\t').nth(2).unwrap().parse::<f64>().unwrap()
    };
    let plain = trip(&[]);
    let secured = trip(&["--security-overhead", "1.8"]);
    assert!(
        secured > plain + 1.5 && secured < 4.0,
        "{plain} vs {secured}"
    );
    let o = dcprot(&["run", "--scenario", &s, "--bus-latency=-1"]);
    assert_eq!(o.status.code(), Some(1));
}
