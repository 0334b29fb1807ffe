use std::fmt::Write as _;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CommsError;
use crate::settings::duration_ms;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BusConfig {
    #[serde(with = "duration_ms")]
    pub base_latency: Duration,
    /// Half-width of the uniform jitter.
    #[serde(with = "duration_ms")]
    pub jitter: Duration,
    pub loss_probability: f64,
    #[serde(with = "duration_ms")]
    pub security_overhead: Duration,
    pub rng_seed: u64,
}

impl Default for BusConfig {
    fn default() -> Self {
        Self {
            base_latency: Duration::from_micros(66),
            jitter: Duration::ZERO,
            loss_probability: 0.0,
            security_overhead: Duration::ZERO,
            rng_seed: 0,
        }
    }
}

impl BusConfig {
    pub fn validate(&self) -> Result<(), CommsError> {
        if !(0.0..1.0).contains(&self.loss_probability) {
            return Err(CommsError::LossProbability(self.loss_probability));
        }
        Ok(())
    }

    /// Worst-case one-way delivery delay.
    pub fn max_latency(&self) -> Duration {
        self.base_latency + self.security_overhead + self.jitter
    }
}

/// Offsets of the state-change burst relative to the initial send, then a
/// steady heartbeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetransmitSchedule {
    pub burst_ms: Vec<f64>,
    pub heartbeat_ms: f64,
}

impl Default for RetransmitSchedule {
    fn default() -> Self {
        Self {
            burst_ms: vec![1.0, 2.0, 4.0, 8.0],
            heartbeat_ms: 1000.0,
        }
    }
}

impl RetransmitSchedule {
    pub fn validate(&self) -> Result<(), CommsError> {
        let mut prev = 0.0;
        for &b in &self.burst_ms {
            if !(b > 0.0 && b.is_finite()) || b < prev {
                return Err(CommsError::Schedule(format!(
                    "burst offsets must be positive and nondecreasing, got {:?}",
                    self.burst_ms
                )));
            }
            prev = b;
        }
        if !(self.heartbeat_ms > 0.0 && self.heartbeat_ms.is_finite()) {
            return Err(CommsError::Schedule(format!(
                "heartbeat must be positive, got {}",
                self.heartbeat_ms
            )));
        }
        Ok(())
    }

    pub fn burst_offsets_ns(&self) -> Vec<u64> {
        self.burst_ms
            .iter()
            .map(|ms| (ms * 1e6).round() as u64)
            .collect()
    }

    pub fn heartbeat_ns(&self) -> u64 {
        (self.heartbeat_ms * 1e6).round() as u64
    }

    /// Gap between the initial send and the first repeat.
    pub fn first_interval_ns(&self) -> u64 {
        self.burst_offsets_ns()
            .first()
            .copied()
            .unwrap_or_else(|| self.heartbeat_ns())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub subscriber: u32,
    pub at_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureRecord {
    pub at_ns: u64,
    pub subscriber: u32,
    pub bytes: Vec<u8>,
}

/// Simulated multicast segment. Every publish fans out to all other
/// subscribers with latency, jitter and independent loss draws.
#[derive(Debug, Clone)]
pub struct MulticastBus {
    config: BusConfig,
    subscribers: Vec<u32>,
    rng: ChaCha8Rng,
    capture: Option<Vec<CaptureRecord>>,
}

impl MulticastBus {
    pub fn new(config: BusConfig) -> Result<Self, CommsError> {
        config.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        Ok(Self {
            config,
            subscribers: Vec::new(),
            rng,
            capture: None,
        })
    }

    pub fn config(&self) -> &BusConfig {
        &self.config
    }

    pub fn subscribe(&mut self, id: u32) {
        if !self.subscribers.contains(&id) {
            self.subscribers.push(id);
        }
    }

    pub fn subscribers(&self) -> &[u32] {
        &self.subscribers
    }

    pub fn enable_capture(&mut self) {
        self.capture.get_or_insert_with(Vec::new);
    }

    pub fn capture(&self) -> &[CaptureRecord] {
        self.capture.as_deref().unwrap_or(&[])
    }

    /// One line per delivered frame: `delivery_ns<TAB>subscriber<TAB>hex`.
    pub fn capture_dump(&self) -> String {
        let mut out = String::new();
        for r in self.capture() {
            let _ = writeln!(
                out,
                "{}\t{}\t{}",
                r.at_ns,
                r.subscriber,
                hex::encode(&r.bytes)
            );
        }
        out
    }

    pub fn publish(&mut self, publisher: u32, frame: &[u8], now_ns: u64) -> Vec<Delivery> {
        let base = (self.config.base_latency + self.config.security_overhead).as_nanos() as u64;
        let jitter = self.config.jitter.as_nanos() as i64;
        let mut out = Vec::with_capacity(self.subscribers.len());
        for &sub in &self.subscribers {
            if sub == publisher {
                continue;
            }
            // both draws always happen so the stream does not depend on config
            let lost = self.rng.random::<f64>() < self.config.loss_probability;
            let offset = if jitter > 0 {
                self.rng.random_range(-jitter..=jitter)
            } else {
                let _ = self.rng.random::<u32>();
                0
            };
            if lost {
                continue;
            }
            let delay = (base as i64 + offset).max(1) as u64;
            let at_ns = now_ns + delay;
            if let Some(cap) = &mut self.capture {
                cap.push(CaptureRecord {
                    at_ns,
                    subscriber: sub,
                    bytes: frame.to_vec(),
                });
            }
            out.push(Delivery {
                subscriber: sub,
                at_ns,
            });
        }
        out
    }
}
