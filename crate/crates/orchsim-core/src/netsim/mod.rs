//! Deterministic fixed-tick discrete-event kernel.
//!
//! Every tick runs the same phase order: (1) scenario events, (2) device
//! sources feeding aggregator ingest, (3) cross-traffic load update,
//! (4) metadata emission, orchestrator processing, and rate-assignment
//! application, (5) aggregator transmission routed over links, (6) metrics
//! sampling and the end-to-end byte-conservation check. Two runs of the same
//! (scenario, seed) produce identical logs and metrics.

mod log;
mod metrics;
mod source;

pub use log::{Component, EventLog, LogRecord, SimEvent};
pub use metrics::{
    AggClassRow, AggregatorTotals, ClassLatency, LinkRow, MetricsSeries, RunSummary,
};
pub use source::{CrossTraffic, DeviceSource};

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::aggregator::{Aggregator, METADATA_PERIOD_TICKS};
use crate::bam::Network;
use crate::model::{qos_to_tc, AggregatorId, LinkId, QosClass};
use crate::orchestrator::Orchestrator;
use crate::scenario::{EventKind, EventSpec, ValidatedScenario};

const US_PER_SEC: u64 = 1_000_000;

/// Tick counter plus the fixed tick duration.
#[derive(Clone, Copy, Debug)]
pub struct SimClock {
    pub now: u64,
    pub tick_us: u64,
}

/// Everything a finished run produces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub log: EventLog,
    pub metrics: MetricsSeries,
    pub summary: RunSummary,
}

/// One simulation run. All component state is owned here; runs are
/// independent and may execute in parallel.
pub struct Sim {
    clock: SimClock,
    end_tick: u64,
    hosts_started: bool,
    scenario: ValidatedScenario,
    sources: Vec<DeviceSource>,
    cross: Vec<CrossTraffic>,
    aggregators: BTreeMap<AggregatorId, Aggregator>,
    orchestrator: Orchestrator,
    orchestrator_up: bool,
    network: Network,
    pending: VecDeque<EventSpec>,
    md_dirty: BTreeSet<AggregatorId>,
    log: EventLog,
    metrics: MetricsSeries,
    totals: BTreeMap<AggregatorId, AggregatorTotals>,
    latency: [ClassLatency; 3],
    tick_delivered: BTreeMap<AggregatorId, [u64; 3]>,
    dropped_seen: BTreeMap<(AggregatorId, u8), u64>,
    generated: u64,
    delivered: u64,
    conservation_checked: u64,
    fatal: Option<String>,
}

impl Sim {
    /// Builds a run from a validated scenario. `seed` overrides the
    /// scenario's `sim.seed` and only matters for jittered source profiles.
    pub fn new(vs: &ValidatedScenario, seed: u64) -> Self {
        let sc = vs.scenario();
        let tick_us = sc.sim.tick_duration_us;

        let sources: Vec<DeviceSource> = sc
            .sources
            .iter()
            .enumerate()
            .map(|(i, s)| DeviceSource::from_spec(s, seed, i as u64))
            .collect();
        let cross = sc
            .cross_traffic
            .iter()
            .map(CrossTraffic::from_spec)
            .collect();

        let mut aggregators = BTreeMap::new();
        let mut totals = BTreeMap::new();
        for spec in &sc.aggregators {
            aggregators.insert(
                spec.id.clone(),
                Aggregator::new(
                    spec.id.clone(),
                    tick_us,
                    spec.topics.iter().map(|t| t.name.clone()),
                    &spec.buffer,
                    spec.fallback_rates,
                ),
            );
            totals.insert(spec.id.clone(), AggregatorTotals::default());
        }

        let mut orchestrator = Orchestrator::new(sc.orchestrator.to_config());
        for spec in &sc.aggregators {
            let route = vs
                .topology()
                .route(&spec.id, &sc.orchestrator.channel_sink)
                .expect("validated: channel route exists")
                .to_vec();
            orchestrator.register_route(spec.id.clone(), route);
        }

        let has_start = sc
            .events
            .iter()
            .any(|e| matches!(e.kind, EventKind::StartHosts));
        let pending = sc
            .events
            .iter()
            .filter(|e| !matches!(e.kind, EventKind::End))
            .cloned()
            .collect();

        Sim {
            clock: SimClock { now: 0, tick_us },
            end_tick: vs.end_tick(),
            hosts_started: !has_start,
            scenario: vs.clone(),
            sources,
            cross,
            aggregators,
            orchestrator,
            orchestrator_up: true,
            network: vs.build_network(),
            pending,
            md_dirty: BTreeSet::new(),
            log: EventLog::default(),
            metrics: MetricsSeries::default(),
            totals,
            latency: Default::default(),
            tick_delivered: BTreeMap::new(),
            dropped_seen: BTreeMap::new(),
            generated: 0,
            delivered: 0,
            conservation_checked: 0,
            fatal: None,
        }
    }

    pub fn now(&self) -> u64 {
        self.clock.now
    }

    pub fn aggregator(&self, id: &str) -> Option<&Aggregator> {
        self.aggregators.get(id)
    }

    pub fn aggregators(&self) -> impl Iterator<Item = &Aggregator> {
        self.aggregators.values()
    }

    pub fn orchestrator(&self) -> &Orchestrator {
        &self.orchestrator
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn generated_bytes(&self) -> u64 {
        self.generated
    }

    pub fn delivered_bytes(&self) -> u64 {
        self.delivered
    }

    /// Advances one tick. Returns false once the scenario has ended or an
    /// internal assertion fired.
    pub fn step(&mut self) -> bool {
        if self.clock.now >= self.end_tick || self.fatal.is_some() {
            return false;
        }
        let t = self.clock.now;
        let dt = self.clock.tick_us;

        self.apply_scenario_events(t);
        self.run_sources(t, dt);
        let cross_load = self.cross_loads(t, dt);
        self.run_orchestration(t);
        let iot_load = self.run_transmission(t, dt);
        self.sample_link_utilization(t, dt, &cross_load, &iot_load);
        self.sample_metrics(t, dt);
        self.check_conservation(t);

        for agg in self.aggregators.values_mut() {
            agg.end_tick();
        }
        self.log.flush();
        self.clock.now += 1;
        self.fatal.is_none() && self.clock.now < self.end_tick
    }

    /// Runs to the End event and returns the collected outputs.
    pub fn run_to_end(mut self) -> RunOutput {
        while self.step() {}
        self.log.stage(
            self.end_tick,
            Component::Scenario,
            SimEvent::Timeline(EventKind::End),
        );
        self.log.flush();
        let summary = RunSummary {
            ticks: self.clock.now,
            per_aggregator: self.totals,
            latency: self.latency,
            generated_bytes: self.generated,
            delivered_bytes: self.delivered,
            conservation_checked_ticks: self.conservation_checked,
            fatal: self.fatal,
        };
        RunOutput {
            log: self.log,
            metrics: self.metrics,
            summary,
        }
    }

    fn apply_scenario_events(&mut self, t: u64) {
        while self.pending.front().map(|e| e.at == t).unwrap_or(false) {
            let ev = self.pending.pop_front().expect("front checked");
            self.log
                .stage(t, Component::Scenario, SimEvent::Timeline(ev.kind.clone()));
            match ev.kind {
                EventKind::StartHosts => self.hosts_started = true,
                EventKind::Subscribe {
                    consumer,
                    aggregator,
                    topic,
                    qos,
                } => {
                    let agg = self
                        .aggregators
                        .get_mut(&aggregator)
                        .expect("validated: aggregator exists");
                    match agg.subscribe(consumer.clone(), topic.clone(), qos, t) {
                        Ok((sub_id, _snapshot)) => {
                            self.md_dirty.insert(aggregator.clone());
                            self.log.stage(
                                t,
                                Component::Aggregator,
                                SimEvent::SubscriptionCreated {
                                    aggregator,
                                    consumer,
                                    topic,
                                    qos,
                                    sub_id,
                                },
                            );
                        }
                        Err(e) => self.log.stage(
                            t,
                            Component::Aggregator,
                            SimEvent::SubscriptionRejected {
                                aggregator,
                                consumer,
                                topic,
                                reason: e.to_string(),
                            },
                        ),
                    }
                }
                EventKind::Unsubscribe {
                    consumer,
                    aggregator,
                    topic,
                } => {
                    let agg = self
                        .aggregators
                        .get_mut(&aggregator)
                        .expect("validated: aggregator exists");
                    match agg.unsubscribe(&consumer, &topic, t) {
                        Ok(_snapshot) => {
                            self.md_dirty.insert(aggregator.clone());
                            self.log.stage(
                                t,
                                Component::Aggregator,
                                SimEvent::SubscriptionRemoved {
                                    aggregator,
                                    consumer,
                                    topic,
                                },
                            );
                        }
                        Err(e) => self.log.stage(
                            t,
                            Component::Aggregator,
                            SimEvent::SubscriptionRejected {
                                aggregator,
                                consumer,
                                topic,
                                reason: e.to_string(),
                            },
                        ),
                    }
                }
                EventKind::OrchestratorDown => {
                    self.orchestrator_up = false;
                    for (id, agg) in self.aggregators.iter_mut() {
                        agg.on_orchestrator_loss();
                        self.log.stage(
                            t,
                            Component::Aggregator,
                            SimEvent::FallbackActivated {
                                aggregator: id.clone(),
                                rates: agg.current_rates(),
                            },
                        );
                    }
                }
                EventKind::OrchestratorUp => {
                    self.orchestrator_up = true;
                    self.orchestrator.mark_assignments_stale();
                }
                EventKind::End => unreachable!("End events are not queued"),
            }
        }
    }

    fn run_sources(&mut self, t: u64, dt: u64) {
        if !self.hosts_started {
            return;
        }
        for src in &mut self.sources {
            let msgs = src.tick(dt);
            if msgs == 0 {
                continue;
            }
            let agg = self
                .aggregators
                .get_mut(&src.aggregator)
                .expect("validated: source aggregator exists");
            for _ in 0..msgs {
                self.generated += src.msg_size();
                agg.ingest(&src.topic, src.msg_size(), t)
                    .expect("validated: source topic declared");
            }
        }
    }

    fn cross_loads(&self, t: u64, dt: u64) -> BTreeMap<LinkId, u64> {
        let mut load = BTreeMap::new();
        if !self.hosts_started {
            return load;
        }
        for x in &self.cross {
            let bytes = x.bytes_at(t, dt);
            if bytes == 0 {
                continue;
            }
            for lid in &x.route {
                *load.entry(lid.clone()).or_insert(0) += bytes;
            }
        }
        load
    }

    fn run_orchestration(&mut self, t: u64) {
        if !self.orchestrator_up {
            return;
        }
        let due: Vec<AggregatorId> = self
            .aggregators
            .keys()
            .filter(|id| self.md_dirty.contains(*id) || t.is_multiple_of(METADATA_PERIOD_TICKS))
            .cloned()
            .collect();
        for id in due {
            self.md_dirty.remove(&id);
            let md = self.aggregators[&id].report_metadata(t);
            let outcome = self.orchestrator.handle_metadata(md, &mut self.network, t);
            for ev in outcome.events {
                self.log
                    .stage(t, Component::Orchestrator, SimEvent::Orchestrator(ev));
            }
            for ra in outcome.assignments {
                let agg = self
                    .aggregators
                    .get_mut(&ra.aggregator_id)
                    .expect("assignments target known aggregators");
                if !agg.apply_rate_assignment(&ra) {
                    self.log.stage(
                        t,
                        Component::Aggregator,
                        SimEvent::AssignmentIgnored {
                            aggregator: ra.aggregator_id.clone(),
                            epoch: ra.epoch,
                        },
                    );
                }
            }
        }
    }

    // Transmits from every aggregator and routes deliveries over their
    // aggregator->consumer paths. Returns per-link IoT bytes.
    fn run_transmission(&mut self, t: u64, dt: u64) -> BTreeMap<LinkId, u64> {
        let mut iot_load: BTreeMap<LinkId, u64> = BTreeMap::new();
        let ids: Vec<AggregatorId> = self.aggregators.keys().cloned().collect();
        for id in ids {
            let deliveries = self
                .aggregators
                .get_mut(&id)
                .expect("listed")
                .tick_transmit(dt, t);
            let mut sent_per_class = [0u64; 3];
            for d in &deliveries {
                sent_per_class[d.qos.idx()] += d.bytes;
                self.delivered += d.bytes;
                self.latency[d.qos.idx()].record(t - d.enqueue_tick);
                let totals = self.totals.get_mut(&id).expect("listed");
                totals.delivered_bytes[d.qos.idx()] += d.bytes;
                let route = self
                    .scenario
                    .topology()
                    .route(&id, &d.consumer_id)
                    .expect("validated: aggregator->consumer route exists");
                for lid in route {
                    *iot_load.entry(lid.clone()).or_insert(0) += d.bytes;
                }
            }
            self.assert_channel_bounds(t, dt, &id, &sent_per_class);
            self.record_delivered_rows(t, dt, &id, &sent_per_class);
        }
        iot_load
    }

    // Token buckets enforce assigned rates upstream; this asserts the
    // per-tick bytes of each flow stay within its channel's bandwidth plus
    // the one-tick carry allowance.
    fn assert_channel_bounds(&mut self, t: u64, dt: u64, id: &AggregatorId, sent: &[u64; 3]) {
        if self.aggregators[id].is_on_fallback() {
            return;
        }
        for level in QosClass::ALL {
            let bytes = sent[level.idx()];
            if bytes == 0 {
                continue;
            }
            let allowed = self
                .orchestrator
                .channel(id, qos_to_tc(level))
                .map(|g| 2 * g.bw * dt / US_PER_SEC)
                .unwrap_or(0);
            if bytes > allowed {
                self.log.stage(
                    t,
                    Component::Transport,
                    SimEvent::TransportViolation {
                        aggregator: id.clone(),
                        qos: level,
                        bytes,
                        allowed,
                    },
                );
                self.fatal = Some(format!(
                    "flow {id}/q{level} sent {bytes} bytes in one tick, channel allows {allowed}"
                ));
            }
        }
    }

    // Stashes per-class delivered bytes for this tick; sample_metrics turns
    // them into rows.
    fn record_delivered_rows(&mut self, _t: u64, _dt: u64, id: &AggregatorId, sent: &[u64; 3]) {
        let entry = self.tick_delivered.entry(id.clone()).or_insert([0u64; 3]);
        for (e, s) in entry.iter_mut().zip(sent) {
            *e = *s;
        }
    }

    fn sample_link_utilization(
        &mut self,
        t: u64,
        dt: u64,
        cross: &BTreeMap<LinkId, u64>,
        iot: &BTreeMap<LinkId, u64>,
    ) {
        let link_ids: Vec<(LinkId, u64)> = self
            .network
            .links()
            .map(|l| (l.link_id.clone(), l.capacity))
            .collect();
        for (lid, capacity) in link_ids {
            let bytes = cross.get(&lid).copied().unwrap_or(0) + iot.get(&lid).copied().unwrap_or(0);
            let cap_bytes = capacity * dt / US_PER_SEC;
            let raw = bytes as f64 / cap_bytes as f64;
            let utilization = if raw > 1.0 {
                self.log.stage(
                    t,
                    Component::Transport,
                    SimEvent::Overload {
                        link: lid.clone(),
                        utilization: raw,
                    },
                );
                1.0
            } else {
                raw
            };
            self.metrics.links.push(LinkRow {
                tick: t,
                link_id: lid,
                utilization,
            });
        }
    }

    fn sample_metrics(&mut self, t: u64, dt: u64) {
        for (id, agg) in &self.aggregators {
            let delivered = self.tick_delivered.get(id).copied().unwrap_or([0u64; 3]);
            let rates = agg.current_rates();
            for level in QosClass::ALL {
                let buf = agg.buffer(level);
                let seen = self
                    .dropped_seen
                    .entry((id.clone(), level.level()))
                    .or_insert(0);
                let dropped = buf.dropped_total() - *seen;
                *seen = buf.dropped_total();
                let totals = self.totals.get_mut(id).expect("all aggregators tracked");
                totals.max_occupancy[level.idx()] = buf.peak_occupancy();
                totals.dropped_bytes[level.idx()] += dropped;
                totals.nosub_bytes = agg.nosub_bytes;
                self.metrics.rows.push(AggClassRow {
                    tick: t,
                    agg_id: id.clone(),
                    class: level.level(),
                    occupancy: buf.occupancy(),
                    rate: rates[level.idx()],
                    delivered: delivered[level.idx()] * US_PER_SEC / dt,
                    dropped,
                });
            }
        }
        self.tick_delivered.clear();
    }

    // Exact end-to-end byte ledger:
    // generated + duplication + fanout_extra
    //   == delivered + occupancy + dropped + nosub + orphaned
    fn check_conservation(&mut self, t: u64) {
        let mut credited = self.generated;
        let mut debited = self.delivered;
        for agg in self.aggregators.values() {
            credited += agg.duplication_bytes + agg.fanout_extra_bytes;
            debited += agg.nosub_bytes + agg.orphaned_bytes;
            for level in QosClass::ALL {
                let buf = agg.buffer(level);
                debited += buf.occupancy() + buf.dropped_total();
            }
        }
        if credited != debited {
            self.log.stage(
                t,
                Component::Kernel,
                SimEvent::ConservationViolation { credited, debited },
            );
            self.fatal = Some(format!(
                "byte ledger off at tick {t}: credited {credited}, debited {debited}"
            ));
        } else {
            self.conservation_checked += 1;
        }
    }
}

/// Runs a validated scenario to its End event.
pub fn run(vs: &ValidatedScenario, seed: u64) -> RunOutput {
    Sim::new(vs, seed).run_to_end()
}
