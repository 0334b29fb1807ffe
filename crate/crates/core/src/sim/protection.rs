use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::grid::{
    default_protection_zone, min_fault_current_table, Contingency, ContingencyGrid, FaultStudy,
    GridTopology, MinFaultTable, NetworkState, DEFAULT_ZONE_OVERLAP,
};
use crate::settings::{synthesize_setting_groups, SettingGroupSet, DEFAULT_RATIO};

use super::Result;

/// Where the minimum-fault-current tables behind the setting groups come from.
#[derive(Debug, Clone, PartialEq)]
pub enum SettingsSource {
    /// Every relay's table is computed from the network.
    Solver { ratio: f64, overlap: f64 },
    /// The given relay uses a supplied table; the rest are computed.
    Table {
        table: MinFaultTable,
        width: Option<f64>,
        ratio: f64,
        overlap: f64,
    },
}

impl Default for SettingsSource {
    fn default() -> Self {
        SettingsSource::Solver {
            ratio: DEFAULT_RATIO,
            overlap: DEFAULT_ZONE_OVERLAP,
        }
    }
}

/// Setting groups for every relay of a topology.
#[derive(Debug, Clone)]
pub struct ProtectionSettings {
    pub groups: Vec<Arc<SettingGroupSet>>,
    /// Load-floor and clustering diagnostics.
    pub notes: Vec<String>,
}

/// Pickups sit at least this many times the line's load current.
pub const LOAD_MARGIN: f64 = 2.0;

impl ProtectionSettings {
    pub fn build(topo: &GridTopology, source: &SettingsSource) -> Result<Self> {
        let grid = ContingencyGrid::line_by_source(topo, true);
        let contingencies = grid.contingencies();
        let (ratio, overlap) = match source {
            SettingsSource::Solver { ratio, overlap } => (*ratio, *overlap),
            SettingsSource::Table { ratio, overlap, .. } => (*ratio, *overlap),
        };
        let override_relay = match source {
            SettingsSource::Table { table, .. } => Some(topo.relay_index(&table.relay)?),
            SettingsSource::Solver { .. } => None,
        };

        let prefault: HashMap<Contingency, Vec<f64>> = contingencies
            .par_iter()
            .map(|c| {
                let sol = NetworkState::new(topo, c)?.solve(None)?;
                Ok((c.clone(), sol.prefault))
            })
            .collect::<Result<_>>()?;

        let study = FaultStudy::default();
        let built: Vec<(SettingGroupSet, Vec<String>)> = (0..topo.relays.len())
            .into_par_iter()
            .map(|ri| {
                let id = &topo.relays[ri].id;
                let mut set = match (source, override_relay) {
                    (SettingsSource::Table { table, width, .. }, Some(o)) if o == ri => {
                        let mut set = synthesize_setting_groups(id, &table.cells, ratio, *width)?;
                        // conditions the table leaves out fall back to the default group
                        let default = set.default_group;
                        let listed: Vec<Contingency> = set
                            .groups
                            .iter()
                            .flat_map(|g| g.activation.iter().cloned())
                            .collect();
                        let g = set
                            .groups
                            .iter_mut()
                            .find(|g| g.id == default)
                            .expect("default group exists");
                        g.activation.extend(
                            contingencies
                                .iter()
                                .filter(|c| !listed.contains(c))
                                .cloned(),
                        );
                        set
                    }
                    _ => {
                        let zone = default_protection_zone(topo, ri, overlap);
                        let cells =
                            min_fault_current_table(topo, id, &contingencies, &zone, &study)?;
                        synthesize_setting_groups(id, &cells, ratio, None)?
                    }
                };
                let nominal = prefault[&Contingency::none()][ri];
                let mut notes = set.apply_load_floor(
                    |c| prefault.get(c).map(|p| p[ri].max(0.0)),
                    nominal,
                    LOAD_MARGIN,
                );
                notes.extend(set.diagnostics());
                Ok((set, notes))
            })
            .collect::<Result<_>>()?;

        let mut notes = Vec::new();
        let mut groups = Vec::with_capacity(built.len());
        for (set, n) in built {
            groups.push(Arc::new(set));
            notes.extend(n);
        }
        Ok(Self { groups, notes })
    }

    pub fn solver(topo: &GridTopology) -> Result<Self> {
        Self::build(topo, &SettingsSource::default())
    }

    pub fn for_relay(&self, relay: usize) -> &Arc<SettingGroupSet> {
        &self.groups[relay]
    }

    /// Fixed pickup of the inverse-time scheme: the one chosen for the
    /// intact network.
    pub fn baseline_pickup(&self, relay: usize) -> f64 {
        self.groups[relay].pickup_for(&Contingency::none())
    }
}
