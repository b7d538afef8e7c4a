//! Simulated device sources and non-IoT cross-traffic generators.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{AggregatorId, Bytes, BytesPerSec, LinkId, TopicName};
use crate::scenario::{CrossProfile, CrossTrafficSpec, SourceProfile, SourceSpec};

const US_PER_SEC: u64 = 1_000_000;

/// A device data source emitting whole messages with a carry accumulator, so
/// the long-run byte rate converges exactly to the configured rate.
#[derive(Clone, Debug)]
pub struct DeviceSource {
    pub aggregator: AggregatorId,
    pub topic: TopicName,
    rate: BytesPerSec,
    msg_size: Bytes,
    // Emission credit in byte-microseconds.
    carry: u64,
    jitter: Option<(f64, ChaCha8Rng)>,
}

impl DeviceSource {
    /// `stream_index` keeps per-source jitter streams independent for one run
    /// seed.
    pub fn from_spec(spec: &SourceSpec, seed: u64, stream_index: u64) -> Self {
        let jitter = match spec.profile {
            SourceProfile::Constant => None,
            SourceProfile::Jittered { amplitude } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream_index);
                Some((amplitude, rng))
            }
        };
        DeviceSource {
            aggregator: spec.aggregator_id.clone(),
            topic: spec.topic.clone(),
            rate: spec.rate.expect("validated: rate resolved"),
            msg_size: spec.msg_size.expect("validated: msg_size resolved"),
            carry: spec.phase * US_PER_SEC,
            jitter,
        }
    }

    pub fn msg_size(&self) -> Bytes {
        self.msg_size
    }

    /// Number of whole messages emitted this tick.
    pub fn tick(&mut self, dt_us: u64) -> u64 {
        let rate = match &mut self.jitter {
            None => self.rate,
            Some((amplitude, rng)) => {
                let factor = 1.0 + *amplitude * (rng.gen::<f64>() * 2.0 - 1.0);
                (self.rate as f64 * factor).round().max(0.0) as u64
            }
        };
        self.carry += rate * dt_us;
        let quantum = self.msg_size * US_PER_SEC;
        let msgs = self.carry / quantum;
        self.carry -= msgs * quantum;
        msgs
    }
}

/// Constant-bit-rate (or square-wave bursty) background load, outside BAM
/// accounting.
#[derive(Clone, Debug)]
pub struct CrossTraffic {
    pub id: String,
    pub route: Vec<LinkId>,
    rate: BytesPerSec,
    profile: CrossProfile,
}

impl CrossTraffic {
    pub fn from_spec(spec: &CrossTrafficSpec) -> Self {
        CrossTraffic {
            id: spec.id.clone(),
            route: spec.route.clone(),
            rate: spec.rate,
            profile: spec.profile,
        }
    }

    /// Bytes this generator pushes onto each of its route links in one tick.
    pub fn bytes_at(&self, tick: u64, dt_us: u64) -> Bytes {
        let active = match self.profile {
            CrossProfile::Constant => true,
            CrossProfile::Bursty {
                period_ticks,
                duty_ticks,
            } => tick % period_ticks < duty_ticks,
        };
        if active {
            self.rate * dt_us / US_PER_SEC
        } else {
            0
        }
    }
}
