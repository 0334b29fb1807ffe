//! Data files shipped with the crate.

use crate::grid::{GridTopology, MinFaultTable};

/// Topology document of the 14-bus bipolar DC microgrid.
pub const IEEE14_TOPOLOGY: &str = include_str!("../fixtures/ieee14_dc.toml");

/// Published minimum fault currents for relay R12.
pub const R12_MIN_FAULT: &str = include_str!("../fixtures/r12_min_fault.csv");

pub fn ieee14() -> GridTopology {
    GridTopology::parse(IEEE14_TOPOLOGY).expect("shipped topology is valid")
}

pub fn r12_min_fault() -> MinFaultTable {
    MinFaultTable::parse(R12_MIN_FAULT).expect("shipped table is valid")
}
