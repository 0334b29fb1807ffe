//! GOOSE-style status frames and the simulated multicast segment.

mod bus;
mod codec;

pub use bus::{BusConfig, CaptureRecord, Delivery, MulticastBus, RetransmitSchedule};
pub use codec::{
    decode_frame, encode_frame, kind, CodecError, DataEntry, GooseFrame, ENTRY_LEN, HEADER_LEN,
    MAGIC, MAX_ENTRIES,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CommsError {
    #[error("loss probability must be in [0, 1), got {0}")]
    LossProbability(f64),
    #[error("retransmit schedule: {0}")]
    Schedule(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// State-number bookkeeping for one publisher.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Publisher {
    pub app_id: u16,
    pub id: u32,
    st_num: u32,
    sq_num: u32,
    dataset: Vec<DataEntry>,
}

impl Publisher {
    pub fn new(app_id: u16, id: u32) -> Self {
        Self {
            app_id,
            id,
            st_num: 0,
            sq_num: 0,
            dataset: Vec::new(),
        }
    }

    pub fn st_num(&self) -> u32 {
        self.st_num
    }

    pub fn dataset(&self) -> &[DataEntry] {
        &self.dataset
    }

    fn frame(&self, now_ns: u64) -> GooseFrame {
        GooseFrame {
            app_id: self.app_id,
            publisher: self.id,
            st_num: self.st_num,
            sq_num: self.sq_num,
            timestamp_ns: now_ns,
            dataset: self.dataset.clone(),
        }
    }

    /// New state: bumps stNum and restarts sqNum at zero.
    pub fn publish_change(&mut self, dataset: Vec<DataEntry>, now_ns: u64) -> GooseFrame {
        self.dataset = dataset;
        self.st_num = self.st_num.wrapping_add(1);
        self.sq_num = 0;
        self.frame(now_ns)
    }

    /// Repeat of the current state.
    pub fn retransmit(&mut self, now_ns: u64) -> GooseFrame {
        self.sq_num = self.sq_num.wrapping_add(1);
        self.frame(now_ns)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn st_sq_discipline() {
        let mut p = Publisher::new(1, 12);
        let a = p.publish_change(vec![DataEntry::new(kind::PICKED_UP, 12, true)], 0);
        assert_eq!((a.st_num, a.sq_num), (1, 0));
        let b = p.retransmit(10);
        assert_eq!((b.st_num, b.sq_num), (1, 1));
        let c = p.retransmit(20);
        assert_eq!((c.st_num, c.sq_num), (1, 2));
        let d = p.publish_change(vec![], 30);
        assert_eq!((d.st_num, d.sq_num), (2, 0));
    }
}
