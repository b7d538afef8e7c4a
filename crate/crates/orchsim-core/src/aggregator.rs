//! Gateway aggregator state machine: per-QoS buffers fed by simulated device
//! data, a subscription registry, token-bucket paced transmission under
//! orchestrator-assigned rates, metadata reporting, and predefined fallback
//! rates for orchestrator outages.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::model::{AggregatorId, Bytes, BytesPerSec, ConsumerId, QosClass, TopicName};

/// What to do when an item does not fit in a buffer. `DropOldest` evicts head
/// items until the new one fits (the circular-buffer strategy); `DropNew`
/// discards the incoming item.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverflowPolicy {
    DropNew,
    DropOldest,
}

/// Buffer sizing shared by the three class buffers of one aggregator, with an
/// optional per-class override.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferConfig {
    pub capacity_per_class: Bytes,
    pub overflow: OverflowPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_class_capacity: Option<[Bytes; 3]>,
}

impl BufferConfig {
    pub fn capacity(&self, class: QosClass) -> Bytes {
        self.per_class_capacity
            .map(|c| c[class.idx()])
            .unwrap_or(self.capacity_per_class)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct BufferedItem {
    topic: TopicName,
    size: Bytes,
    enqueue_tick: u64,
}

/// One FIFO class buffer with its byte ledger.
#[derive(Clone, Debug)]
pub struct QosBuffer {
    class: QosClass,
    capacity: Bytes,
    overflow: OverflowPolicy,
    queue: VecDeque<BufferedItem>,
    occupancy: Bytes,
    /// High-water mark of `occupancy`.
    peak_occupancy: Bytes,
    /// Total bytes ever admitted into this buffer.
    ingested_total: Bytes,
    /// Total bytes ever dequeued for transmission.
    transmitted_total: Bytes,
    /// Total bytes dropped by the overflow policy.
    dropped_total: Bytes,
}

impl QosBuffer {
    fn new(class: QosClass, capacity: Bytes, overflow: OverflowPolicy) -> Self {
        QosBuffer {
            class,
            capacity,
            overflow,
            queue: VecDeque::new(),
            occupancy: 0,
            peak_occupancy: 0,
            ingested_total: 0,
            transmitted_total: 0,
            dropped_total: 0,
        }
    }

    pub fn class(&self) -> QosClass {
        self.class
    }

    pub fn occupancy(&self) -> Bytes {
        self.occupancy
    }

    pub fn peak_occupancy(&self) -> Bytes {
        self.peak_occupancy
    }

    pub fn capacity(&self) -> Bytes {
        self.capacity
    }

    pub fn dropped_total(&self) -> Bytes {
        self.dropped_total
    }

    pub fn ingested_total(&self) -> Bytes {
        self.ingested_total
    }

    pub fn transmitted_total(&self) -> Bytes {
        self.transmitted_total
    }

    /// Conservation identity, exact at every tick:
    /// ingested == transmitted + occupancy + dropped.
    pub fn conserves(&self) -> bool {
        self.ingested_total == self.transmitted_total + self.occupancy + self.dropped_total
    }

    // Returns the bytes dropped to make room (or the item itself for DropNew).
    fn push(&mut self, topic: &str, size: Bytes, now: u64) -> Bytes {
        if size > self.capacity {
            // Cannot fit even an empty buffer; counts as dropped input.
            self.ingested_total += size;
            self.dropped_total += size;
            return size;
        }
        let mut dropped = 0;
        if self.occupancy + size > self.capacity {
            match self.overflow {
                OverflowPolicy::DropNew => {
                    self.ingested_total += size;
                    self.dropped_total += size;
                    return size;
                }
                OverflowPolicy::DropOldest => {
                    while self.occupancy + size > self.capacity {
                        let head = self.queue.pop_front().expect("occupancy > 0");
                        self.occupancy -= head.size;
                        self.dropped_total += head.size;
                        dropped += head.size;
                    }
                }
            }
        }
        self.ingested_total += size;
        self.occupancy += size;
        self.peak_occupancy = self.peak_occupancy.max(self.occupancy);
        self.queue.push_back(BufferedItem {
            topic: topic.to_string(),
            size,
            enqueue_tick: now,
        });
        dropped
    }
}

/// An active topic subscription.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Subscription {
    pub sub_id: u64,
    pub consumer_id: ConsumerId,
    pub topic: TopicName,
    pub qos: QosClass,
    pub created_at: u64,
}

/// Snapshot an aggregator sends to the orchestrator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregatorMetadata {
    pub aggregator_id: AggregatorId,
    /// Indexed by QoS level.
    pub buffer_capacity: [Bytes; 3],
    pub occupancy: [Bytes; 3],
    /// Windowed average ingest per class, bytes/second.
    pub ingest_rate: [BytesPerSec; 3],
    pub subscriber_count: [u32; 3],
    /// (topic, qos) pairs, sorted.
    pub subscriptions: Vec<(TopicName, QosClass)>,
    pub timestamp: u64,
}

/// Per-class transmission rates pushed by the orchestrator. Assignments with
/// a stale epoch are ignored, making delivery reorder-safe.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RateAssignment {
    pub aggregator_id: AggregatorId,
    /// Indexed by QoS level, bytes/second.
    pub rate_per_class: [BytesPerSec; 3],
    pub epoch: u64,
}

/// One transmitted item fanned out to one subscriber.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub consumer_id: ConsumerId,
    pub topic: TopicName,
    pub bytes: Bytes,
    pub qos: QosClass,
    pub enqueue_tick: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IngestOutcome {
    Stored,
    /// Stored after the overflow policy discarded this many bytes (the
    /// incoming item itself under DropNew).
    Dropped(Bytes),
    NoSubscribers,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum AggregatorError {
    #[error("topic `{0}` not declared on this aggregator")]
    UnknownTopic(TopicName),
    #[error("consumer `{consumer}` already subscribed to `{topic}`")]
    DuplicateSubscription {
        consumer: ConsumerId,
        topic: TopicName,
    },
    #[error("no subscription of `{consumer}` to `{topic}`")]
    UnknownSubscription {
        consumer: ConsumerId,
        topic: TopicName,
    },
}

// Token bucket in byte-microseconds so budgets are exact integers.
#[derive(Clone, Debug)]
struct TokenBucket {
    rate: BytesPerSec,
    acc_byte_us: u64,
}

const US_PER_SEC: u64 = 1_000_000;

impl TokenBucket {
    fn refill(&mut self, dt_us: u64) {
        self.acc_byte_us += self.rate * dt_us;
    }

    fn budget_bytes(&self) -> Bytes {
        self.acc_byte_us / US_PER_SEC
    }

    fn spend(&mut self, bytes: Bytes) {
        self.acc_byte_us -= bytes * US_PER_SEC;
    }

    // Leftover carries over up to one tick's worth.
    fn cap_carry(&mut self, dt_us: u64) {
        self.acc_byte_us = self.acc_byte_us.min(self.rate * dt_us);
    }
}

/// Number of ticks in the ingest-rate moving-average window.
pub const INGEST_WINDOW_TICKS: usize = 10;

/// ticks between periodic metadata emissions (plus one on every subscription
/// change).
pub const METADATA_PERIOD_TICKS: u64 = 10;

/// The gateway aggregator. Single-writer: all operations on one instance
/// must be serialized; distinct aggregators are independent.
#[derive(Clone, Debug)]
pub struct Aggregator {
    id: AggregatorId,
    tick_us: u64,
    topics: BTreeMap<TopicName, ()>,
    buffers: [QosBuffer; 3],
    subscriptions: BTreeMap<(ConsumerId, TopicName), Subscription>,
    buckets: [TokenBucket; 3],
    fallback_rates: Option<[BytesPerSec; 3]>,
    epoch: u64,
    next_sub_id: u64,
    /// True while running on fallback rates after an orchestrator loss.
    on_fallback: bool,
    // Ring buffer of per-class bytes ingested in recent ticks.
    ingest_window: VecDeque<[Bytes; 3]>,
    ingest_this_tick: [Bytes; 3],
    /// Bytes generated for topics that had no subscriber at any level.
    pub nosub_bytes: Bytes,
    /// Extra copies beyond the first when a message fans into several class
    /// buffers; keeps the end-to-end byte ledger exact.
    pub duplication_bytes: Bytes,
    /// Extra delivered copies beyond the first when a dequeued item fans out
    /// to several subscribers.
    pub fanout_extra_bytes: Bytes,
    /// Bytes dequeued with no remaining subscriber to deliver to.
    pub orphaned_bytes: Bytes,
}

impl Aggregator {
    pub fn new(
        id: impl Into<AggregatorId>,
        tick_us: u64,
        topics: impl IntoIterator<Item = TopicName>,
        buffer: &BufferConfig,
        fallback_rates: Option<[BytesPerSec; 3]>,
    ) -> Self {
        let make = |q: QosClass| QosBuffer::new(q, buffer.capacity(q), buffer.overflow);
        Aggregator {
            id: id.into(),
            tick_us,
            topics: topics.into_iter().map(|t| (t, ())).collect(),
            buffers: [
                make(QosClass::INSENSITIVE),
                make(QosClass::SENSITIVE),
                make(QosClass::PRIORITY),
            ],
            subscriptions: BTreeMap::new(),
            buckets: [
                TokenBucket {
                    rate: 0,
                    acc_byte_us: 0,
                },
                TokenBucket {
                    rate: 0,
                    acc_byte_us: 0,
                },
                TokenBucket {
                    rate: 0,
                    acc_byte_us: 0,
                },
            ],
            fallback_rates,
            epoch: 0,
            next_sub_id: 1,
            on_fallback: false,
            ingest_window: VecDeque::with_capacity(INGEST_WINDOW_TICKS),
            ingest_this_tick: [0; 3],
            nosub_bytes: 0,
            duplication_bytes: 0,
            fanout_extra_bytes: 0,
            orphaned_bytes: 0,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn buffer(&self, class: QosClass) -> &QosBuffer {
        &self.buffers[class.idx()]
    }

    pub fn has_topic(&self, topic: &str) -> bool {
        self.topics.contains_key(topic)
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn current_rates(&self) -> [BytesPerSec; 3] {
        [
            self.buckets[0].rate,
            self.buckets[1].rate,
            self.buckets[2].rate,
        ]
    }

    pub fn subscriptions(&self) -> impl Iterator<Item = &Subscription> {
        self.subscriptions.values()
    }

    fn subscriber_count(&self, topic: &str, qos: QosClass) -> u32 {
        self.subscriptions
            .values()
            .filter(|s| s.topic == topic && s.qos == qos)
            .count() as u32
    }

    /// Registers a subscription and returns it with a fresh metadata snapshot
    /// for immediate emission to the orchestrator.
    pub fn subscribe(
        &mut self,
        consumer_id: impl Into<ConsumerId>,
        topic: impl Into<TopicName>,
        qos: QosClass,
        now: u64,
    ) -> Result<(u64, AggregatorMetadata), AggregatorError> {
        let consumer_id = consumer_id.into();
        let topic = topic.into();
        if !self.has_topic(&topic) {
            return Err(AggregatorError::UnknownTopic(topic));
        }
        let key = (consumer_id.clone(), topic.clone());
        if self.subscriptions.contains_key(&key) {
            return Err(AggregatorError::DuplicateSubscription {
                consumer: consumer_id,
                topic,
            });
        }
        let sub_id = self.next_sub_id;
        self.next_sub_id += 1;
        self.subscriptions.insert(
            key,
            Subscription {
                sub_id,
                consumer_id,
                topic,
                qos,
                created_at: now,
            },
        );
        Ok((sub_id, self.report_metadata(now)))
    }

    /// Removes a subscription; QoS changes are modeled as
    /// unsubscribe + resubscribe.
    pub fn unsubscribe(
        &mut self,
        consumer_id: &str,
        topic: &str,
        now: u64,
    ) -> Result<AggregatorMetadata, AggregatorError> {
        let key = (consumer_id.to_string(), topic.to_string());
        if self.subscriptions.remove(&key).is_none() {
            return Err(AggregatorError::UnknownSubscription {
                consumer: consumer_id.to_string(),
                topic: topic.to_string(),
            });
        }
        Ok(self.report_metadata(now))
    }

    /// Stores one copy of the payload into each class buffer that has at
    /// least one subscriber for this topic at that QoS level.
    pub fn ingest(
        &mut self,
        topic: &str,
        payload_size: Bytes,
        now: u64,
    ) -> Result<IngestOutcome, AggregatorError> {
        debug_assert!(payload_size > 0);
        if !self.has_topic(topic) {
            return Err(AggregatorError::UnknownTopic(topic.to_string()));
        }
        let levels: Vec<QosClass> = QosClass::ALL
            .into_iter()
            .filter(|&q| self.subscriber_count(topic, q) > 0)
            .collect();
        if levels.is_empty() {
            self.nosub_bytes += payload_size;
            return Ok(IngestOutcome::NoSubscribers);
        }
        self.duplication_bytes += payload_size * (levels.len() as u64 - 1);
        let mut dropped = 0;
        for q in &levels {
            dropped += self.buffers[q.idx()].push(topic, payload_size, now);
            self.ingest_this_tick[q.idx()] += payload_size;
        }
        Ok(if dropped > 0 {
            IngestOutcome::Dropped(dropped)
        } else {
            IngestOutcome::Stored
        })
    }

    /// Applies a rate assignment if its epoch is newer than the current one.
    /// Unspent budget above the new rate's one-tick carry cap is discarded.
    pub fn apply_rate_assignment(&mut self, ra: &RateAssignment) -> bool {
        if ra.epoch <= self.epoch {
            return false;
        }
        self.epoch = ra.epoch;
        self.on_fallback = false;
        let tick_us = self.tick_us;
        for (bucket, &rate) in self.buckets.iter_mut().zip(ra.rate_per_class.iter()) {
            bucket.rate = rate;
            bucket.cap_carry(tick_us);
        }
        true
    }

    /// Reverts to the predefined fallback rates (or 10% of the last
    /// assignment when none were configured). The epoch is preserved so a
    /// returning orchestrator's next assignment still applies.
    pub fn on_orchestrator_loss(&mut self) {
        let rates = self
            .fallback_rates
            .unwrap_or_else(|| self.current_rates().map(|r| r / 10));
        let tick_us = self.tick_us;
        for (bucket, rate) in self.buckets.iter_mut().zip(rates) {
            bucket.rate = rate;
            bucket.cap_carry(tick_us);
        }
        self.on_fallback = true;
    }

    pub fn is_on_fallback(&self) -> bool {
        self.on_fallback
    }

    /// Drains each class buffer within its accumulated token budget, fanning
    /// each dequeued item out to the topic's subscribers at that level.
    /// Partial items are never sent; leftover tokens carry over up to one
    /// tick's budget.
    pub fn tick_transmit(&mut self, dt_us: u64, _now: u64) -> Vec<Delivery> {
        debug_assert!(dt_us > 0);
        let mut deliveries = Vec::new();
        for class in QosClass::ALL {
            let c = class.idx();
            self.buckets[c].refill(dt_us);
            while let Some(head) = self.buffers[c].queue.front() {
                if head.size > self.buckets[c].budget_bytes() {
                    break;
                }
                let item = self.buffers[c].queue.pop_front().expect("front exists");
                self.buckets[c].spend(item.size);
                self.buffers[c].occupancy -= item.size;
                self.buffers[c].transmitted_total += item.size;
                let mut copies = 0u64;
                for sub in self.subscriptions.values() {
                    if sub.topic == item.topic && sub.qos == class {
                        copies += 1;
                        deliveries.push(Delivery {
                            consumer_id: sub.consumer_id.clone(),
                            topic: item.topic.clone(),
                            bytes: item.size,
                            qos: class,
                            enqueue_tick: item.enqueue_tick,
                        });
                    }
                }
                match copies {
                    0 => self.orphaned_bytes += item.size,
                    n => self.fanout_extra_bytes += (n - 1) * item.size,
                }
            }
            self.buckets[c].cap_carry(dt_us);
        }
        deliveries
    }

    /// Closes the current tick's ingest sample for the moving average. The
    /// kernel calls this once per tick after transmission.
    pub fn end_tick(&mut self) {
        if self.ingest_window.len() == INGEST_WINDOW_TICKS {
            self.ingest_window.pop_front();
        }
        self.ingest_window.push_back(self.ingest_this_tick);
        self.ingest_this_tick = [0; 3];
    }

    fn windowed_ingest_rate(&self) -> [BytesPerSec; 3] {
        let ticks = self.ingest_window.len() as u64;
        if ticks == 0 {
            return [0; 3];
        }
        let mut sums = [0u64; 3];
        for sample in &self.ingest_window {
            for (s, v) in sums.iter_mut().zip(sample) {
                *s += v;
            }
        }
        sums.map(|s| s * US_PER_SEC / (ticks * self.tick_us))
    }

    /// Produces a snapshot consistent with the live buffers at `now`.
    pub fn report_metadata(&self, now: u64) -> AggregatorMetadata {
        let mut subscriber_count = [0u32; 3];
        for s in self.subscriptions.values() {
            subscriber_count[s.qos.idx()] += 1;
        }
        let mut subscriptions: Vec<(TopicName, QosClass)> = self
            .subscriptions
            .values()
            .map(|s| (s.topic.clone(), s.qos))
            .collect();
        subscriptions.sort();
        AggregatorMetadata {
            aggregator_id: self.id.clone(),
            buffer_capacity: [
                self.buffers[0].capacity,
                self.buffers[1].capacity,
                self.buffers[2].capacity,
            ],
            occupancy: [
                self.buffers[0].occupancy,
                self.buffers[1].occupancy,
                self.buffers[2].occupancy,
            ],
            ingest_rate: self.windowed_ingest_rate(),
            subscriber_count,
            subscriptions,
            timestamp: now,
        }
    }
}
