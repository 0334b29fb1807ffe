use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Contingency, FaultKind, FaultSpec, GridError, GridTopology, LineEnd, Result};

/// Floor applied to zero inductances so the inductive reduction stays solvable.
const MIN_INDUCTANCE: f64 = 1e-12;

/// Steady-state fault current, or the explicit "nothing reaches the fault" case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FaultCurrent {
    Amperes(f64),
    #[serde(rename = "N/D")]
    NotDetected,
}

impl FaultCurrent {
    pub fn amperes(self) -> Option<f64> {
        match self {
            FaultCurrent::Amperes(a) => Some(a),
            FaultCurrent::NotDetected => None,
        }
    }

    pub fn is_detected(self) -> bool {
        matches!(self, FaultCurrent::Amperes(_))
    }
}

impl std::fmt::Display for FaultCurrent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FaultCurrent::Amperes(a) => write!(f, "{a:.1}"),
            FaultCurrent::NotDetected => f.write_str("N/D"),
        }
    }
}

/// First-order RL rise `i(t) = I_ss (1 - e^{-t/τ})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultWaveform {
    pub steady_state: f64,
    pub tau: f64,
}

impl FaultWaveform {
    pub fn current_at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if self.tau <= 0.0 {
            return self.steady_state;
        }
        -self.steady_state * (-t / self.tau).exp_m1()
    }
}

/// Result of one network solve.
///
/// Relay currents are signed: positive means current flowing from the relay's
/// bus into its line, i.e. in the relay's protected direction.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultSolution {
    pub current: FaultCurrent,
    pub thevenin_voltage: f64,
    pub thevenin_resistance: f64,
    pub thevenin_inductance: f64,
    /// Rise time constant of the fault loop, seconds.
    pub tau: f64,
    pub prefault: Vec<f64>,
    pub faulted: Vec<f64>,
}

impl FaultSolution {
    pub fn waveform(&self) -> Option<FaultWaveform> {
        self.current.amperes().map(|i| FaultWaveform {
            steady_state: i,
            tau: self.tau,
        })
    }

    /// Fault-induced change of a relay's signed current.
    pub fn relay_delta(&self, relay: usize) -> f64 {
        self.faulted[relay] - self.prefault[relay]
    }
}

/// Which elements are energized: a contingency plus any opened breakers.
#[derive(Debug, Clone)]
pub struct NetworkState<'a> {
    topo: &'a GridTopology,
    line_out: Vec<bool>,
    source_out: Vec<bool>,
    open_ends: Vec<[bool; 2]>,
}

#[derive(Debug, Clone, Copy)]
struct Branch {
    a: usize,
    b: usize,
    r: f64,
    l: f64,
}

struct Circuit {
    n: usize,
    fault_node: Option<usize>,
    /// Merged fault node: which line end it coincides with.
    merged_end: Option<LineEnd>,
    branches: Vec<Branch>,
    /// (node, conductance, emf, inductance) per in-service source.
    sources: Vec<(usize, f64, f64, f64)>,
    /// (node, conductance) per load.
    loads: Vec<(usize, f64)>,
}

impl<'a> NetworkState<'a> {
    pub fn new(topo: &'a GridTopology, contingency: &Contingency) -> Result<Self> {
        let mut line_out = vec![false; topo.lines.len()];
        let mut source_out = vec![false; topo.sources.len()];
        for (i, l) in topo.lines.iter().enumerate() {
            line_out[i] = !l.in_service;
        }
        for (i, s) in topo.sources.iter().enumerate() {
            source_out[i] = !s.in_service;
        }
        for l in &contingency.line_outages {
            line_out[topo.line_index(l)?] = true;
        }
        for s in &contingency.source_outages {
            source_out[topo.source_index(s)?] = true;
        }
        Ok(Self {
            topo,
            line_out,
            source_out,
            open_ends: vec![[false; 2]; topo.lines.len()],
        })
    }

    pub fn topology(&self) -> &'a GridTopology {
        self.topo
    }

    pub fn open_end(&mut self, line: usize, end: LineEnd) {
        self.open_ends[line][end.index()] = true;
    }

    /// Opens the breaker co-located with a relay.
    pub fn open_relay_breaker(&mut self, relay: usize) {
        let r = &self.topo.relays[relay];
        self.open_end(r.line, r.end);
    }

    pub fn is_line_out(&self, line: usize) -> bool {
        self.line_out[line]
    }

    pub fn is_end_open(&self, line: usize, end: LineEnd) -> bool {
        self.open_ends[line][end.index()]
    }

    pub fn is_source_out(&self, source: usize) -> bool {
        self.source_out[source]
    }

    fn build(&self, fault: Option<(usize, f64)>) -> Circuit {
        let topo = self.topo;
        let nb = topo.buses.len();
        let mut n = nb;
        let mut fault_node = None;
        let mut merged_end = None;
        let mut branches = Vec::new();
        for (i, line) in topo.lines.iter().enumerate() {
            if self.line_out[i] {
                continue;
            }
            let [a, b] = topo.line_buses(i);
            let [open_a, open_b] = self.open_ends[i];
            match fault {
                Some((fl, p)) if fl == i => {
                    let f = if p == 0.0 && !open_a {
                        merged_end = Some(LineEnd::From);
                        a
                    } else if p == 1.0 && !open_b {
                        merged_end = Some(LineEnd::To);
                        b
                    } else {
                        n += 1;
                        n - 1
                    };
                    fault_node = Some(f);
                    if !open_a && f != a {
                        branches.push(Branch {
                            a,
                            b: f,
                            r: p * line.resistance(),
                            l: p * line.inductance(),
                        });
                    }
                    if !open_b && f != b {
                        branches.push(Branch {
                            a: f,
                            b,
                            r: (1.0 - p) * line.resistance(),
                            l: (1.0 - p) * line.inductance(),
                        });
                    }
                }
                _ => {
                    if !open_a && !open_b {
                        branches.push(Branch {
                            a,
                            b,
                            r: line.resistance(),
                            l: line.inductance(),
                        });
                    }
                }
            }
        }
        let emf = topo.driving_voltage();
        let sources = topo
            .sources
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.source_out[*i])
            .map(|(_, s)| {
                let bus = topo.bus_index(&s.bus).expect("validated topology");
                (
                    bus,
                    1.0 / s.effective_resistance(emf),
                    emf,
                    s.internal_inductance,
                )
            })
            .collect();
        let loads = topo
            .loads
            .iter()
            .filter(|l| l.power > 0.0)
            .map(|l| {
                let bus = topo.bus_index(&l.bus).expect("validated topology");
                (bus, l.power / (emf * emf))
            })
            .collect();
        Circuit {
            n,
            fault_node,
            merged_end,
            branches,
            sources,
            loads,
        }
    }

    /// Solves the network, optionally with a fault applied.
    pub fn solve(&self, fault: Option<&FaultSpec>) -> Result<FaultSolution> {
        let located = match fault {
            Some(f) => {
                f.validate()?;
                let li = self.topo.line_index(&f.line)?;
                if self.line_out[li] {
                    return Err(GridError::FaultLineOutOfService(f.line.clone()));
                }
                Some((li, f.position))
            }
            None => None,
        };
        let c = self.build(located);
        let energized = c.energized_nodes();
        let g = c.conductance_matrix(&energized);
        let lu = g.lu();
        let mut rhs = DVector::zeros(c.n);
        for &(node, gs, emf, _) in &c.sources {
            if energized[node] {
                rhs[node] += gs * emf;
            }
        }
        let v_pre = lu
            .solve(&rhs)
            .expect("pinned conductance matrix is nonsingular");
        let prefault = self.relay_currents(&c, located, &v_pre, 0.0);

        let Some(fault) = fault else {
            return Ok(FaultSolution {
                current: FaultCurrent::NotDetected,
                thevenin_voltage: 0.0,
                thevenin_resistance: f64::INFINITY,
                thevenin_inductance: 0.0,
                tau: 0.0,
                faulted: prefault.clone(),
                prefault,
            });
        };
        let f = c.fault_node.expect("fault line is in service");
        if !energized[f] {
            return Ok(FaultSolution {
                current: FaultCurrent::NotDetected,
                thevenin_voltage: 0.0,
                thevenin_resistance: f64::INFINITY,
                thevenin_inductance: 0.0,
                tau: 0.0,
                faulted: prefault.clone(),
                prefault,
            });
        }

        let mut unit = DVector::zeros(c.n);
        unit[f] = 1.0;
        let z = lu.solve(&unit).expect("nonsingular");
        let r_th = z[f];
        let (v_th, r_eff) = match fault.kind {
            FaultKind::PolePole => (v_pre[f], fault.resistance),
            FaultKind::PoleGround => (
                0.5 * v_pre[f],
                fault.resistance + self.topo.system.grounding_resistance,
            ),
        };
        let loop_r = r_th + r_eff;
        let i_f = if loop_r.is_finite() {
            v_th / loop_r
        } else {
            0.0
        };
        let v_fault = &v_pre - &z * i_f;
        let faulted = self.relay_currents(&c, located, &v_fault, i_f);
        let l_th = c.thevenin_inductance(&energized, f);
        let tau = if loop_r.is_finite() && loop_r > 0.0 {
            l_th / loop_r
        } else {
            0.0
        };
        Ok(FaultSolution {
            current: FaultCurrent::Amperes(i_f),
            thevenin_voltage: v_th,
            thevenin_resistance: r_th,
            thevenin_inductance: l_th,
            tau,
            prefault,
            faulted,
        })
    }

    fn relay_currents(
        &self,
        c: &Circuit,
        fault: Option<(usize, f64)>,
        v: &DVector<f64>,
        i_fault: f64,
    ) -> Vec<f64> {
        let topo = self.topo;
        topo.relays
            .iter()
            .map(|relay| {
                let li = relay.line;
                let end = relay.end;
                if self.line_out[li] || self.open_ends[li][end.index()] {
                    return 0.0;
                }
                let line = &topo.lines[li];
                let buses = topo.line_buses(li);
                let here = buses[end.index()];
                let there = buses[end.opposite().index()];
                let other_open = self.open_ends[li][end.opposite().index()];
                match fault {
                    Some((fl, p)) if fl == li => {
                        let f = c.fault_node.expect("fault node");
                        // fraction of the line between this end and the fault
                        let frac = match end {
                            LineEnd::From => p,
                            LineEnd::To => 1.0 - p,
                        };
                        if c.merged_end == Some(end) {
                            let from_other = if other_open {
                                0.0
                            } else {
                                (v[there] - v[f]) / ((1.0 - frac) * line.resistance())
                            };
                            i_fault - from_other
                        } else {
                            (v[here] - v[f]) / (frac * line.resistance())
                        }
                    }
                    _ => {
                        if other_open {
                            0.0
                        } else {
                            (v[here] - v[there]) / line.resistance()
                        }
                    }
                }
            })
            .collect()
    }
}

impl Circuit {
    /// Nodes galvanically connected to at least one in-service source.
    fn energized_nodes(&self) -> Vec<bool> {
        let mut adj = vec![Vec::new(); self.n];
        for br in &self.branches {
            adj[br.a].push(br.b);
            adj[br.b].push(br.a);
        }
        let mut seen = vec![false; self.n];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for &(node, ..) in &self.sources {
            if !seen[node] {
                seen[node] = true;
                queue.push_back(node);
            }
        }
        while let Some(x) = queue.pop_front() {
            for &y in &adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    queue.push_back(y);
                }
            }
        }
        seen
    }

    /// Nodal conductance matrix; nodes outside `keep` are pinned to 0 V.
    fn conductance_matrix(&self, keep: &[bool]) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.n, self.n);
        for br in &self.branches {
            let y = 1.0 / br.r;
            g[(br.a, br.a)] += y;
            g[(br.b, br.b)] += y;
            g[(br.a, br.b)] -= y;
            g[(br.b, br.a)] -= y;
        }
        for &(node, gs, ..) in &self.sources {
            g[(node, node)] += gs;
        }
        for &(node, gl) in &self.loads {
            g[(node, node)] += gl;
        }
        pin(&mut g, keep);
        g
    }

    /// Driving-point inductance at `f` with sources shorted through their
    /// internal inductance and loads left open.
    fn thevenin_inductance(&self, energized: &[bool], f: usize) -> f64 {
        let mut keep = energized.to_vec();
        for &(node, _, _, ls) in &self.sources {
            if ls <= 0.0 {
                keep[node] = false;
            }
        }
        if !keep[f] {
            return 0.0;
        }
        let mut g = DMatrix::zeros(self.n, self.n);
        for br in &self.branches {
            let y = 1.0 / br.l.max(MIN_INDUCTANCE);
            g[(br.a, br.a)] += y;
            g[(br.b, br.b)] += y;
            g[(br.a, br.b)] -= y;
            g[(br.b, br.a)] -= y;
        }
        for &(node, _, _, ls) in &self.sources {
            if ls > 0.0 {
                g[(node, node)] += 1.0 / ls;
            }
        }
        pin(&mut g, &keep);
        let mut unit = DVector::zeros(self.n);
        unit[f] = 1.0;
        match g.lu().solve(&unit) {
            Some(y) => y[f].max(0.0),
            None => 0.0,
        }
    }
}

fn pin(g: &mut DMatrix<f64>, keep: &[bool]) {
    let n = g.nrows();
    for (i, &k) in keep.iter().enumerate() {
        if !k {
            for j in 0..n {
                g[(i, j)] = 0.0;
                g[(j, i)] = 0.0;
            }
            g[(i, i)] = 1.0;
        }
    }
}

/// Steady-state current at the fault point.
pub fn thevenin_fault_current(
    topo: &GridTopology,
    fault: &FaultSpec,
    contingency: &Contingency,
) -> Result<FaultCurrent> {
    Ok(NetworkState::new(topo, contingency)?
        .solve(Some(fault))?
        .current)
}

/// RL rise of the fault-point current; `None` when no source reaches the fault.
pub fn fault_waveform(
    topo: &GridTopology,
    fault: &FaultSpec,
    contingency: &Contingency,
) -> Result<Option<FaultWaveform>> {
    Ok(NetworkState::new(topo, contingency)?
        .solve(Some(fault))?
        .waveform())
}
