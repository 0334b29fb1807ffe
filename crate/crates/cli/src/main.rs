use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use dcprot::fixtures;
use dcprot::grid::{
    default_protection_zone, min_fault_current_table, ContingencyGrid, FaultStudy, GridTopology,
    MinFaultTable, DEFAULT_ZONE_OVERLAP,
};
use dcprot::settings::{synthesize_setting_groups, SettingGroupSet, DEFAULT_RATIO};
use dcprot::sim::{
    compare_schemes, parse_scenarios, run_scenario, run_scheme, ProtectionSettings, Scenario,
    Scheme, SettingsSource, SimConfig,
};

/// Exit status when inputs are invalid or a run reports errors.
const EXIT_FAILURE: u8 = 1;
/// Exit status when a file cannot be read or written.
const EXIT_IO: u8 = 3;

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io { .. } => EXIT_IO,
            CliError::Invalid(_) => EXIT_FAILURE,
        }
    }
}

fn invalid(context: impl std::fmt::Display, e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(format!("{context}: {e}"))
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "dcprot",
    version,
    about = "Adaptive overcurrent protection simulator for DC microgrids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a topology document and print a summary.
    Validate {
        #[arg(long)]
        topology: PathBuf,
    },
    /// Synthesize one relay's setting groups and write them as TOML.
    Groups {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value = "R12")]
        relay: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the scenarios of a document under both schemes.
    Run {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write both schemes' event logs here.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Write the adaptive run's delivered frames here.
        #[arg(long)]
        dump_frames: Option<PathBuf>,
        /// Write the adaptive run's per-sample relay currents here as CSV.
        #[arg(long)]
        trace_waveforms: Option<PathBuf>,
    },
    /// Tabulate one relay's adaptive (baseline) trip times over many scenarios.
    Batch {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, required = true)]
        scenario: Vec<PathBuf>,
        #[arg(long, default_value = "R12")]
        relay: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Append every scenario's full timing report.
        #[arg(long)]
        reports: bool,
        /// Run scenarios one after another.
        #[arg(long)]
        serial: bool,
    },
    /// Write the frames delivered during a scenario's adaptive run.
    DumpFrames {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Minimum fault currents computed from the network.
    Solver,
    /// The table in `--fixture` (or the shipped R12 table) for its relay.
    Fixture,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Topology document; the shipped 14-bus grid when omitted.
    #[arg(long)]
    topology: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Solver)]
    mode: Mode,
    /// Minimum-fault-current table for fixture mode.
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// Group width in amperes instead of the 10 % rule.
    #[arg(long)]
    width: Option<f64>,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// One-way frame latency, milliseconds.
    #[arg(long)]
    bus_latency: Option<f64>,
    /// Extra per-frame delay for message authentication, milliseconds.
    #[arg(long)]
    security_overhead: Option<f64>,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn millis(flag: &str, v: f64) -> Result<Duration> {
    Duration::try_from_secs_f64(v * 1e-3).map_err(|e| invalid(flag, e))
}

impl GridArgs {
    fn topology(&self) -> Result<GridTopology> {
        match &self.topology {
            Some(p) => GridTopology::parse(&read(p)?).map_err(|e| invalid(p.display(), e)),
            None => Ok(fixtures::ieee14()),
        }
    }

    fn table(&self) -> Result<MinFaultTable> {
        match &self.fixture {
            Some(p) => MinFaultTable::parse(&read(p)?).map_err(|e| invalid(p.display(), e)),
            None => Ok(fixtures::r12_min_fault()),
        }
    }

    fn settings(&self, topo: &GridTopology) -> Result<ProtectionSettings> {
        let source = match self.mode {
            Mode::Solver => {
                if self.fixture.is_some() {
                    return Err(CliError::Invalid("--fixture needs --mode fixture".into()));
                }
                SettingsSource::default()
            }
            Mode::Fixture => SettingsSource::Table {
                table: self.table()?,
                width: self.width,
                ratio: DEFAULT_RATIO,
                overlap: DEFAULT_ZONE_OVERLAP,
            },
        };
        ProtectionSettings::build(topo, &source).map_err(|e| invalid("settings", e))
    }
}

impl SimArgs {
    fn config(&self) -> Result<SimConfig> {
        let mut cfg = SimConfig::default();
        cfg.bus.rng_seed = self.seed;
        if let Some(ms) = self.bus_latency {
            cfg.bus.base_latency = millis("--bus-latency", ms)?;
        }
        if let Some(ms) = self.security_overhead {
            cfg.bus.security_overhead = millis("--security-overhead", ms)?;
        }
        cfg.validate().map_err(|e| invalid("configuration", e))?;
        Ok(cfg)
    }
}

fn scenarios(path: &Path, topo: &GridTopology) -> Result<Vec<Scenario>> {
    let list = parse_scenarios(&read(path)?).map_err(|e| invalid(path.display(), e))?;
    if list.is_empty() {
        return Err(invalid(path.display(), "no scenarios"));
    }
    for s in &list {
        s.validate(topo).map_err(|e| invalid(path.display(), e))?;
    }
    Ok(list)
}

fn cmd_validate(topology: &Path) -> Result<()> {
    let topo = GridTopology::parse(&read(topology)?).map_err(|e| invalid(topology.display(), e))?;
    println!("{}", topo.summary());
    Ok(())
}

fn cmd_groups(grid: &GridArgs, relay: &str, out: Option<&Path>) -> Result<()> {
    let topo = grid.topology()?;
    let ri = topo.relay_index(relay).map_err(|e| invalid("--relay", e))?;
    let set: SettingGroupSet = match grid.mode {
        Mode::Fixture => {
            let table = grid.table()?;
            if table.relay != relay {
                return Err(CliError::Invalid(format!(
                    "fixture table is for `{}`, not `{relay}`",
                    table.relay
                )));
            }
            synthesize_setting_groups(relay, &table.cells, DEFAULT_RATIO, grid.width)
        }
        Mode::Solver => {
            let contingencies = ContingencyGrid::line_by_source(&topo, true).contingencies();
            let zone = default_protection_zone(&topo, ri, DEFAULT_ZONE_OVERLAP);
            let cells = min_fault_current_table(
                &topo,
                relay,
                &contingencies,
                &zone,
                &FaultStudy::default(),
            )
            .map_err(|e| invalid("fault study", e))?;
            synthesize_setting_groups(relay, &cells, DEFAULT_RATIO, grid.width)
        }
    }
    .map_err(|e| invalid(relay, e))?;

    let mut summary = format!(
        "{relay}: {} groups, width {:.3} A, default group {}\n",
        set.groups.len(),
        set.width,
        set.default_group
    );
    for g in &set.groups {
        summary.push_str(&format!(
            "  group {:>3}: ({:.3}, {:.3}] A, pickup {:.3} A, conditions: {}\n",
            g.id,
            g.lower_bound,
            g.upper_bound,
            g.pickup,
            g.activation.len()
        ));
    }
    for d in set.diagnostics() {
        summary.push_str(&format!("  note: {d}\n"));
    }
    match out {
        Some(p) => {
            write(p, &set.to_toml())?;
            print!("{summary}");
        }
        None => {
            eprint!("{summary}");
            print!("{}", set.to_toml());
        }
    }
    Ok(())
}

struct Prepared {
    topo: Arc<GridTopology>,
    settings: ProtectionSettings,
    config: SimConfig,
}

fn prepare(grid: &GridArgs, sim: &SimArgs) -> Result<Prepared> {
    let topo = Arc::new(grid.topology()?);
    let config = sim.config()?;
    let settings = grid.settings(&topo)?;
    Ok(Prepared {
        topo,
        settings,
        config,
    })
}

fn cmd_run(
    grid: &GridArgs,
    sim: &SimArgs,
    scenario: &Path,
    out: Option<&Path>,
    log: Option<&Path>,
    dump: Option<&Path>,
    trace: Option<&Path>,
) -> Result<()> {
    let mut p = prepare(grid, sim)?;
    p.config.capture_frames = dump.is_some();
    p.config.trace_waveforms = trace.is_some();
    let list = scenarios(scenario, &p.topo)?;
    let ids: Vec<String> = p.topo.relays.iter().map(|r| r.id.clone()).collect();
    let (mut report, mut events, mut frames, mut waves) =
        (String::new(), String::new(), String::new(), String::new());
    for s in &list {
        let r =
            run_scenario(&p.topo, &p.settings, s, &p.config).map_err(|e| invalid(&s.name, e))?;
        if !report.is_empty() {
            report.push('\n');
        }
        report.push_str(&r.render());
        for scheme in [Scheme::Adaptive, Scheme::Baseline] {
            events.push_str(&format!("# {} {scheme}\n", s.name));
            events.push_str(&r.run(scheme).log_text());
        }
        frames.push_str(&format!("# {}\n", s.name));
        frames.push_str(&r.adaptive.capture);
        let csv = r.adaptive.trace_csv(&ids);
        if waves.is_empty() {
            waves.push_str("scenario,");
            waves.push_str(csv.lines().next().unwrap_or_default());
            waves.push('\n');
        }
        for line in csv.lines().skip(1) {
            waves.push_str(&format!("{},{line}\n", s.name));
        }
    }
    emit(out, &report)?;
    if let Some(path) = log {
        write(path, &events)?;
    }
    if let Some(path) = dump {
        write(path, &frames)?;
    }
    if let Some(path) = trace {
        write(path, &waves)?;
    }
    Ok(())
}

fn cmd_batch(
    grid: &GridArgs,
    sim: &SimArgs,
    paths: &[PathBuf],
    relay: &str,
    out: Option<&Path>,
    reports: bool,
    serial: bool,
) -> Result<bool> {
    let p = prepare(grid, sim)?;
    let mut list = Vec::new();
    for path in paths {
        // scenarios are checked per row so one bad entry does not sink the batch
        list.extend(parse_scenarios(&read(path)?).map_err(|e| invalid(path.display(), e))?);
    }
    let table = compare_schemes(&p.topo, &p.settings, &list, &p.config, relay, !serial)
        .map_err(|e| invalid("--relay", e))?;
    let mut text = table.render();
    for r in &table.rows {
        if let Err(e) = &r.report {
            text.push_str(&format!("error\t{}\t{e}\n", r.scenario));
        }
    }
    if reports {
        text.push('\n');
        text.push_str(&table.render_reports());
    }
    emit(out, &text)?;
    Ok(table.errors() == 0)
}

fn cmd_dump_frames(
    grid: &GridArgs,
    sim: &SimArgs,
    scenario: &Path,
    out: Option<&Path>,
) -> Result<()> {
    let mut p = prepare(grid, sim)?;
    p.config.capture_frames = true;
    let list = scenarios(scenario, &p.topo)?;
    let mut text = String::new();
    for s in &list {
        let run = run_scheme(&p.topo, &p.settings, s, &p.config, Scheme::Adaptive)
            .map_err(|e| invalid(&s.name, e))?;
        text.push_str(&format!("# {}\n", s.name));
        text.push_str(&run.capture);
    }
    emit(out, &text)
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Validate { topology } => cmd_validate(&topology).map(|_| true),
        Command::Groups { grid, relay, out } => {
            cmd_groups(&grid, &relay, out.as_deref()).map(|_| true)
        }
        Command::Run {
            grid,
            sim,
            scenario,
            out,
            log,
            dump_frames,
            trace_waveforms,
        } => cmd_run(
            &grid,
            &sim,
            &scenario,
            out.as_deref(),
            log.as_deref(),
            dump_frames.as_deref(),
            trace_waveforms.as_deref(),
        )
        .map(|_| true),
        Command::Batch {
            grid,
            sim,
            scenario,
            relay,
            out,
            reports,
            serial,
        } => cmd_batch(
            &grid,
            &sim,
            &scenario,
            &relay,
            out.as_deref(),
            reports,
            serial,
        ),
        Command::DumpFrames {
            grid,
            sim,
            scenario,
            out,
        } => cmd_dump_frames(&grid, &sim, &scenario, out.as_deref()).map(|_| true),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("dcprot: some scenarios failed");
            ExitCode::from(EXIT_FAILURE)
        }
        Err(e) => {
            eprintln!("dcprot: {e}");
            ExitCode::from(e.code())
        }
    }
}
