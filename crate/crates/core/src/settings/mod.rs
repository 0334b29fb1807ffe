//! Inverse-time curves, the coordination margin, and adaptive setting groups.

mod groups;
mod idmt;

pub use groups::{
    bin_index, strict_ratio_width, synthesize_setting_groups, SettingGroup, SettingGroupSet,
    DEFAULT_RATIO, PICKUP_FRACTION,
};
pub use idmt::*;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SettingsError {
    #[error("no reachable faults in the table for relay `{0}`")]
    NoReachableFaults(String),
    #[error("clustering ratio must be in (0, 1), got {0}")]
    Ratio(f64),
    #[error("group width must be positive, got {0}")]
    Width(f64),
    #[error("time multiplier {0} is outside [0.025, 1.5]")]
    TimeMultiplier(f64),
    #[error("pickup must be positive, got {0}")]
    Pickup(f64),
    #[error("setting document: {0}")]
    Parse(String),
}
