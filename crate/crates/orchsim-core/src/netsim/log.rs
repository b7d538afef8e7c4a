//! Totally ordered event log. Identical runs produce byte-identical logs:
//! records are appended in the fixed per-tick phase order and carry a global
//! sequence number.

use serde::Serialize;

use crate::model::{AggregatorId, BytesPerSec, ConsumerId, LinkId, QosClass, TopicName};
use crate::orchestrator::OrchEvent;
use crate::scenario::EventKind;

/// Emitting component, in per-tick phase order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Scenario,
    Source,
    CrossTraffic,
    Orchestrator,
    Aggregator,
    Transport,
    Kernel,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SimEvent {
    /// A scenario timeline event was applied.
    Timeline(EventKind),
    SubscriptionCreated {
        aggregator: AggregatorId,
        consumer: ConsumerId,
        topic: TopicName,
        qos: QosClass,
        sub_id: u64,
    },
    SubscriptionRemoved {
        aggregator: AggregatorId,
        consumer: ConsumerId,
        topic: TopicName,
    },
    SubscriptionRejected {
        aggregator: AggregatorId,
        consumer: ConsumerId,
        topic: TopicName,
        reason: String,
    },
    FallbackActivated {
        aggregator: AggregatorId,
        rates: [BytesPerSec; 3],
    },
    AssignmentIgnored {
        aggregator: AggregatorId,
        epoch: u64,
    },
    Orchestrator(OrchEvent),
    Overload {
        link: LinkId,
        utilization: f64,
    },
    /// A flow sent more in one tick than its channel allows; simulator bug.
    TransportViolation {
        aggregator: AggregatorId,
        qos: QosClass,
        bytes: u64,
        allowed: u64,
    },
    /// The end-to-end byte ledger failed to balance; simulator bug.
    ConservationViolation {
        credited: u64,
        debited: u64,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct LogRecord {
    pub tick: u64,
    pub seq: u64,
    pub component: Component,
    pub event: SimEvent,
}

/// Totally ordered record list. Records staged during a tick are flushed in
/// (component, sequence) order, so the whole log is sorted by
/// (tick, component, sequence).
#[derive(Clone, Debug, Default)]
pub struct EventLog {
    records: Vec<LogRecord>,
    staged: Vec<LogRecord>,
    next_seq: u64,
}

impl EventLog {
    pub fn stage(&mut self, tick: u64, component: Component, event: SimEvent) {
        let seq = self.next_seq;
        self.next_seq += 1;
        debug_assert!(self.staged.iter().all(|r| r.tick == tick));
        self.staged.push(LogRecord {
            tick,
            seq,
            component,
            event,
        });
    }

    /// Closes the current tick.
    pub fn flush(&mut self) {
        self.staged.sort_by_key(|r| r.component);
        self.records.append(&mut self.staged);
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn iter(&self) -> impl Iterator<Item = &LogRecord> {
        self.records.iter()
    }
}
