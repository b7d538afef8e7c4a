//! Per-tick metric rows and the end-of-run summary.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::model::{AggregatorId, Bytes, BytesPerSec, LinkId};

/// One row per (tick, aggregator, QoS level).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggClassRow {
    pub tick: u64,
    pub agg_id: AggregatorId,
    /// QoS level.
    pub class: u8,
    /// End-of-tick buffer occupancy in bytes.
    pub occupancy: Bytes,
    /// Assigned transmission rate, bytes/second.
    pub rate: BytesPerSec,
    /// Bytes delivered this tick, normalized to bytes/second.
    pub delivered: BytesPerSec,
    /// Bytes dropped by the overflow policy this tick.
    pub dropped: Bytes,
}

/// One row per (tick, link).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinkRow {
    pub tick: u64,
    pub link_id: LinkId,
    /// (IoT + cross-traffic bytes) / (capacity * dt), clamped to 1.0.
    pub utilization: f64,
}

#[derive(Clone, Debug, Default)]
pub struct MetricsSeries {
    pub rows: Vec<AggClassRow>,
    pub links: Vec<LinkRow>,
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct ClassLatency {
    pub deliveries: u64,
    pub total_latency_ticks: u64,
}

impl ClassLatency {
    pub fn record(&mut self, latency_ticks: u64) {
        self.deliveries += 1;
        self.total_latency_ticks += latency_ticks;
    }

    pub fn mean_ticks(&self) -> Option<f64> {
        if self.deliveries == 0 {
            None
        } else {
            Some(self.total_latency_ticks as f64 / self.deliveries as f64)
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct AggregatorTotals {
    /// Indexed by QoS level.
    pub delivered_bytes: [Bytes; 3],
    pub dropped_bytes: [Bytes; 3],
    pub max_occupancy: [Bytes; 3],
    pub nosub_bytes: Bytes,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct RunSummary {
    pub ticks: u64,
    pub per_aggregator: BTreeMap<AggregatorId, AggregatorTotals>,
    /// Indexed by QoS level, across all aggregators.
    pub latency: [ClassLatency; 3],
    pub generated_bytes: Bytes,
    pub delivered_bytes: Bytes,
    pub conservation_checked_ticks: u64,
    /// Set when the kernel hit an internal assertion; the run stops there.
    pub fatal: Option<String>,
}
