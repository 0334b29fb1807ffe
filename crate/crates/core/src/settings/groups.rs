use serde::{Deserialize, Serialize};

use super::SettingsError;
use crate::grid::{Contingency, TableCell};

/// Fraction of a group's lower bound used as its pickup threshold.
pub const PICKUP_FRACTION: f64 = 0.5;

/// Default clustering ratio: members of a group differ by less than 10 %.
pub const DEFAULT_RATIO: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingGroup {
    pub id: u32,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub pickup: f64,
    pub activation: Vec<Contingency>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingGroupSet {
    pub relay: String,
    pub width: f64,
    pub ratio: f64,
    pub default_group: u32,
    pub groups: Vec<SettingGroup>,
}

/// Width chosen in strict-ratio mode: the largest `w` such that every bin
/// needed to cover `[min, max]` has `w <= ratio * lower_bound`.
///
/// With `n` bins the lowest lower bound is `max - n w`, so the constraint is
/// `w <= ratio max / (1 + ratio n)`; the answer is the first `n` for which
/// that width still spans the range, `n >= span / (ratio min)`.
pub fn strict_ratio_width(max: f64, min: f64, ratio: f64) -> f64 {
    let span = max - min;
    let covers = |n: f64| n * ratio * max / (1.0 + ratio * n) >= span;
    // the ceiling can land one off either way through rounding
    let mut n = (span / (ratio * min)).ceil().max(1.0);
    if n > 1.0 && covers(n - 1.0) {
        n -= 1.0;
    } else if !covers(n) {
        n += 1.0;
    }
    ratio * max / (1.0 + ratio * n)
}

/// Zero-based bin of `value` for bins `[max - (k+1) w, max - k w)`, with the
/// top bin closed at `max`.
pub fn bin_index(max: f64, width: f64, value: f64) -> usize {
    let k = ((max - value) / width).ceil() - 1.0;
    if k <= 0.0 {
        0
    } else {
        k as usize
    }
}

/// Clusters a minimum-fault-current table into uniform-width setting groups.
pub fn synthesize_setting_groups(
    relay: &str,
    table: &[TableCell],
    ratio: f64,
    width_override: Option<f64>,
) -> Result<SettingGroupSet, SettingsError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(SettingsError::Ratio(ratio));
    }
    let visible = |c: &TableCell| c.value.amperes().filter(|&v| v > 0.0);
    let finite: Vec<f64> = table.iter().filter_map(visible).collect();
    let Some(max) = finite.iter().copied().reduce(f64::max) else {
        return Err(SettingsError::NoReachableFaults(relay.to_string()));
    };
    let min = finite.iter().copied().fold(max, f64::min);
    let width = match width_override {
        Some(w) if w > 0.0 && w.is_finite() => w,
        Some(w) => return Err(SettingsError::Width(w)),
        None => strict_ratio_width(max, min, ratio),
    };

    let mut bins: Vec<(usize, Vec<Contingency>)> = Vec::new();
    let mut unreachable = Vec::new();
    for cell in table {
        match visible(cell) {
            Some(v) => {
                let k = bin_index(max, width, v);
                match bins.iter_mut().find(|(b, _)| *b == k) {
                    Some((_, members)) => members.push(cell.contingency.clone()),
                    None => bins.push((k, vec![cell.contingency.clone()])),
                }
            }
            None => unreachable.push(cell.contingency.clone()),
        }
    }
    bins.sort_by_key(|(k, _)| *k);

    let value_of = |c: &Contingency| {
        table
            .iter()
            .find(|cell| &cell.contingency == c)
            .and_then(visible)
            .unwrap_or(max)
    };
    let mut groups: Vec<SettingGroup> = bins
        .into_iter()
        .enumerate()
        .map(|(i, (k, activation))| {
            let upper_bound = max - k as f64 * width;
            // a wide override can push the lowest bins below zero
            let lower_bound = (upper_bound - width).max(0.0);
            let pickup = if lower_bound > 0.0 {
                PICKUP_FRACTION * lower_bound
            } else {
                let smallest = activation.iter().map(value_of).fold(max, f64::min);
                PICKUP_FRACTION * smallest
            };
            SettingGroup {
                id: i as u32 + 1,
                lower_bound,
                upper_bound,
                pickup,
                activation,
            }
        })
        .collect();
    // contingencies the relay cannot see ride on the default group
    let last = groups.last_mut().expect("at least one finite entry");
    last.activation.extend(unreachable);
    let default_group = last.id;
    Ok(SettingGroupSet {
        relay: relay.to_string(),
        width,
        ratio,
        default_group,
        groups,
    })
}

impl SettingGroupSet {
    pub fn group(&self, id: u32) -> Option<&SettingGroup> {
        self.groups.iter().find(|g| g.id == id)
    }

    pub fn default(&self) -> &SettingGroup {
        self.group(self.default_group)
            .expect("default group exists")
    }

    /// Group whose activation list holds `status`, else the default group.
    pub fn select_active_group(&self, status: &Contingency) -> u32 {
        self.groups
            .iter()
            .find(|g| g.activation.contains(status))
            .map_or(self.default_group, |g| g.id)
    }

    pub fn pickup_for(&self, status: &Contingency) -> f64 {
        let id = self.select_active_group(status);
        self.group(id).map_or(self.default().pickup, |g| g.pickup)
    }

    /// Groups whose width exceeds the clustering ratio of their lower bound,
    /// and groups whose lower bound was clipped at zero.
    pub fn diagnostics(&self) -> Vec<String> {
        self.groups
            .iter()
            .filter_map(|g| {
                if g.lower_bound <= 0.0 {
                    Some(format!(
                        "{}: group {} lower bound clipped at 0 A, pickup {:.1} A taken from its smallest member",
                        self.relay, g.id, g.pickup
                    ))
                } else if g.upper_bound - g.lower_bound > self.ratio * g.lower_bound * (1.0 + 1e-12) {
                    Some(format!(
                        "{}: group {} width {:.1} A exceeds {:.0}% of its lower bound {:.1} A",
                        self.relay,
                        g.id,
                        g.upper_bound - g.lower_bound,
                        self.ratio * 100.0,
                        g.lower_bound
                    ))
                } else {
                    None
                }
            })
            .collect()
    }

    /// Raises every pickup to at least `margin` times the worst pre-fault
    /// current under the group's own conditions, so load alone never picks
    /// the relay up. The default group, which also covers conditions nobody
    /// listed, is re-chosen as the lowest pickup still above `margin` times
    /// the nominal load, or the highest pickup when none is. Returns one note
    /// per raised group.
    pub fn apply_load_floor(
        &mut self,
        prefault: impl Fn(&Contingency) -> Option<f64>,
        nominal: f64,
        margin: f64,
    ) -> Vec<String> {
        let mut notes = Vec::new();
        for g in &mut self.groups {
            let load = g
                .activation
                .iter()
                .filter_map(&prefault)
                .fold(0.0, f64::max);
            let floor = margin * load;
            if g.pickup < floor {
                notes.push(format!(
                    "{}: group {} pickup raised from {:.1} A to {:.1} A (load {:.1} A)",
                    self.relay, g.id, g.pickup, floor, load
                ));
                g.pickup = floor;
            }
        }
        let fallback = margin * nominal.max(0.0);
        // ties go to the group with the lower bounds
        let chosen = self
            .groups
            .iter()
            .rev()
            .filter(|g| g.pickup >= fallback)
            .min_by(|a, b| a.pickup.total_cmp(&b.pickup))
            .or_else(|| {
                self.groups
                    .iter()
                    .max_by(|a, b| a.pickup.total_cmp(&b.pickup))
            });
        if let Some(g) = chosen {
            self.default_group = g.id;
        }
        notes
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("setting groups serialize")
    }

    pub fn from_toml(text: &str) -> Result<Self, SettingsError> {
        let set: SettingGroupSet =
            toml::from_str(text).map_err(|e| SettingsError::Parse(e.to_string()))?;
        if set.groups.is_empty() {
            return Err(SettingsError::Parse("no groups".into()));
        }
        if set.group(set.default_group).is_none() {
            return Err(SettingsError::Parse(format!(
                "default group {} is not defined",
                set.default_group
            )));
        }
        for g in &set.groups {
            if !(g.lower_bound >= 0.0 && g.lower_bound < g.upper_bound) || !(g.pickup > 0.0) {
                return Err(SettingsError::Parse(format!(
                    "group {} has invalid bounds",
                    g.id
                )));
            }
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FaultCurrent;

    fn cells(values: &[f64]) -> Vec<TableCell> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| TableCell {
                contingency: Contingency::new([format!("L{i}")], Vec::<String>::new()),
                value: FaultCurrent::Amperes(v),
            })
            .collect()
    }

    #[test]
    fn single_entry_single_group() {
        let set = synthesize_setting_groups("R", &cells(&[500.0]), 0.1, None).unwrap();
        assert_eq!(set.groups.len(), 1);
        let g = &set.groups[0];
        assert!(g.lower_bound <= 500.0 && 500.0 <= g.upper_bound);
        assert_eq!(g.pickup, 0.5 * g.lower_bound);
    }

    #[test]
    fn three_close_values_share_a_group() {
        let set = synthesize_setting_groups("R", &cells(&[881.5, 840.3, 799.1]), 0.1, Some(85.0))
            .unwrap();
        assert_eq!(set.groups.len(), 1);
        assert_eq!(set.groups[0].lower_bound, 796.5);
    }

    #[test]
    fn boundary_value_belongs_to_upper_bin() {
        assert_eq!(bin_index(881.5, 85.0, 796.5), 0);
        assert_eq!(bin_index(881.5, 85.0, 796.4), 1);
        assert_eq!(bin_index(881.5, 85.0, 881.5), 0);
    }

    #[test]
    fn all_unreachable_is_error() {
        let t = vec![TableCell {
            contingency: Contingency::none(),
            value: FaultCurrent::NotDetected,
        }];
        assert!(matches!(
            synthesize_setting_groups("R12", &t, 0.1, None),
            Err(SettingsError::NoReachableFaults(_))
        ));
    }

    #[test]
    fn bad_ratio_or_width_rejected() {
        let t = cells(&[1.0]);
        assert!(synthesize_setting_groups("R", &t, 0.0, None).is_err());
        assert!(synthesize_setting_groups("R", &t, 1.0, None).is_err());
        assert!(synthesize_setting_groups("R", &t, 0.1, Some(-1.0)).is_err());
    }

    #[test]
    fn strict_width_respects_ratio_everywhere() {
        let set =
            synthesize_setting_groups("R", &cells(&[100.0, 55.0, 80.0, 61.0]), 0.1, None).unwrap();
        assert!(set.diagnostics().is_empty(), "{:?}", set.diagnostics());
    }

    #[test]
    fn unseen_contingency_falls_back_to_default() {
        let set = synthesize_setting_groups("R", &cells(&[900.0, 300.0]), 0.1, Some(85.0)).unwrap();
        let triple = Contingency::new(["L0", "L1", "L9"], ["S1"]);
        assert_eq!(set.select_active_group(&triple), set.default_group);
        assert_eq!(set.default_group, set.groups.last().unwrap().id);
    }

    #[test]
    fn load_floor_raises_low_pickups() {
        let mut set = synthesize_setting_groups("R", &cells(&[200.0]), 0.1, None).unwrap();
        let notes = set.apply_load_floor(|_| Some(150.0), 100.0, 1.2);
        assert_eq!(notes.len(), 1);
        assert!((set.groups[0].pickup - 180.0).abs() < 1e-9);
    }

    #[test]
    fn load_floor_uses_nominal_and_moves_default() {
        let mut set =
            synthesize_setting_groups("R", &cells(&[900.0, 300.0]), 0.1, Some(85.0)).unwrap();
        assert_eq!(set.default_group, 2);
        // L1 carries a heavy load, so the low group ends up above the high one
        set.apply_load_floor(
            |c| {
                Some(if c.line_outages.contains("L1") {
                    250.0
                } else {
                    0.0
                })
            },
            180.0,
            2.0,
        );
        assert_eq!(set.groups[0].pickup, 407.5);
        assert_eq!(set.groups[1].pickup, 500.0);
        assert_eq!(set.default_group, 1);
    }

    #[test]
    fn default_group_clears_nominal_load() {
        let mut set =
            synthesize_setting_groups("R", &cells(&[900.0, 300.0]), 0.1, Some(85.0)).unwrap();
        // pickups 407.5 and 110; only the first clears twice 100 A
        set.apply_load_floor(|_| Some(0.0), 100.0, 2.0);
        assert_eq!(set.groups[1].pickup, 110.0);
        assert_eq!(set.default_group, 1);
        set.apply_load_floor(|_| Some(0.0), 500.0, 2.0);
        assert_eq!(set.default_group, 1);
    }

    #[test]
    fn clipped_group_takes_pickup_from_members() {
        let set =
            synthesize_setting_groups("R", &cells(&[900.0, 40.0, 60.0]), 0.1, Some(85.0)).unwrap();
        let low = set.groups.last().unwrap();
        assert_eq!(low.lower_bound, 0.0);
        assert_eq!(low.pickup, 20.0);
        assert!(set.diagnostics().iter().any(|d| d.contains("clipped")));
    }

    #[test]
    fn toml_round_trip() {
        let set = synthesize_setting_groups("R12", &cells(&[881.5, 500.0, 290.0]), 0.1, Some(85.0))
            .unwrap();
        let text = set.to_toml();
        assert_eq!(SettingGroupSet::from_toml(&text).unwrap(), set);
    }

    #[test]
    fn toml_with_missing_default_rejected() {
        let set = synthesize_setting_groups("R12", &cells(&[500.0]), 0.1, None).unwrap();
        let text = set
            .to_toml()
            .replace("default_group = 1", "default_group = 4");
        assert!(SettingGroupSet::from_toml(&text).is_err());
    }
}
