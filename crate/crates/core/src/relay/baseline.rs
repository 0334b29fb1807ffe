use crate::settings::{IdmtAccumulator, IdmtConfig};

use super::{RelayAction, RelayConfig, TripRule};

/// Directional inverse-time relay without communication.
#[derive(Debug, Clone)]
pub struct BaselineRelay {
    pub index: usize,
    pub id: String,
    config: RelayConfig,
    acc: IdmtAccumulator,
    picked: bool,
    above: u32,
    /// Previous sample while picked up.
    last: Option<(u64, f64)>,
    tripped_at: Option<u64>,
    inert: bool,
}

impl BaselineRelay {
    pub fn new(index: usize, id: impl Into<String>, idmt: IdmtConfig, config: RelayConfig) -> Self {
        Self {
            index,
            id: id.into(),
            config,
            acc: IdmtAccumulator::new(idmt),
            picked: false,
            above: 0,
            last: None,
            tripped_at: None,
            inert: false,
        }
    }

    pub fn set_inert(&mut self, inert: bool) {
        self.inert = inert;
    }

    pub fn pickup(&self) -> f64 {
        self.acc.config().pickup
    }

    pub fn is_picked_up(&self) -> bool {
        self.picked
    }

    pub fn tripped_at(&self) -> Option<u64> {
        self.tripped_at
    }

    pub fn on_sample(&mut self, current: f64, now_ns: u64) -> Vec<RelayAction> {
        let mut out = Vec::new();
        if self.inert {
            return out;
        }
        let i = current.max(0.0);
        let pickup = self.pickup();
        if !self.picked {
            if i > pickup {
                self.above += 1;
                if self.above >= self.config.persistence {
                    self.picked = true;
                    self.last = Some((now_ns, i));
                    out.push(RelayAction::PickedUp);
                }
            } else {
                self.above = 0;
            }
            return out;
        }
        if i < self.config.drop_ratio * pickup {
            self.picked = false;
            self.above = 0;
            self.last = None;
            self.acc.reset();
            out.push(RelayAction::Dropped);
            return out;
        }
        if self.tripped_at.is_none() {
            if let Some((t0, i0)) = self.last {
                let dt = (now_ns - t0) as f64 * 1e-9;
                if self.acc.advance(i0, i, dt).is_some() {
                    self.tripped_at = Some(now_ns);
                    out.push(RelayAction::Trip(TripRule::InverseTime));
                }
            }
        }
        self.last = Some((now_ns, i));
        out
    }
}
