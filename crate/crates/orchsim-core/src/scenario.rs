//! Declarative experiment input: the scenario schema, whole-file validation
//! with exhaustive error reporting, defaults resolution, and the built-in
//! `paper-poc` scenario.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::aggregator::BufferConfig;
use crate::bam::{BamModel, BandwidthConstraints, LinkState};
use crate::model::{
    self, AggregatorId, BytesPerSec, ConsumerId, LinkId, NodeId, NodeKind, QosClass, Topic,
    TopicName, Topology, ValidatedTopology,
};
use crate::orchestrator::{OrchestratorConfig, RecomputePolicy};

fn default_tick_us() -> u64 {
    100_000
}

/// Simulation timing and seeding.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Tick duration in microseconds (default 100ms).
    #[serde(default = "default_tick_us")]
    pub tick_duration_us: u64,
    /// Seed for jittered source profiles; defaults are fully deterministic
    /// without it.
    #[serde(default)]
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            tick_duration_us: default_tick_us(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregatorSpec {
    pub id: AggregatorId,
    pub topics: Vec<Topic>,
    pub buffer: BufferConfig,
    /// Predefined output rates used on orchestrator loss; when absent, 10% of
    /// the last assignment is used instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_rates: Option<[BytesPerSec; 3]>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsumerSpec {
    pub id: ConsumerId,
}

fn default_split() -> [f64; 3] {
    [0.25, 0.35, 0.45]
}

fn default_threshold() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrchestratorSpec {
    /// Consumer-side node the per-aggregator channels terminate at.
    pub channel_sink: NodeId,
    pub total_budget: BytesPerSec,
    #[serde(default = "default_split")]
    pub class_split: [f64; 3],
    #[serde(default = "default_threshold")]
    pub buffer_threshold: f64,
    #[serde(default)]
    pub recompute: RecomputePolicy,
}

impl OrchestratorSpec {
    pub fn to_config(&self) -> OrchestratorConfig {
        OrchestratorConfig {
            total_budget: self.total_budget,
            class_split: self.class_split,
            buffer_threshold: self.buffer_threshold,
            recompute: self.recompute,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkBamSpec {
    pub link_id: LinkId,
    pub model: BamModel,
    /// Per-class constraints by traffic-class index; when absent they are
    /// derived proportionally to the orchestrator's class split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bc: Option<[BytesPerSec; 3]>,
    /// Proactive return of loaned pool space. Not supported; must stay false.
    #[serde(default)]
    pub devolution: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceProfile {
    #[default]
    Constant,
    /// Per-tick multiplicative jitter of the rate, seeded from the run seed.
    Jittered { amplitude: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub aggregator_id: AggregatorId,
    pub topic: TopicName,
    /// Defaults to the topic's `gen_rate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<BytesPerSec>,
    /// Defaults to the topic's `msg_size`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msg_size: Option<u64>,
    /// Initial emission credit in bytes.
    #[serde(default)]
    pub phase: u64,
    #[serde(default)]
    pub profile: SourceProfile,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossProfile {
    #[default]
    Constant,
    /// On/off square wave: full rate for `duty_ticks` out of every
    /// `period_ticks`.
    Bursty { period_ticks: u64, duty_ticks: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossTrafficSpec {
    pub id: String,
    pub src: NodeId,
    pub dst: NodeId,
    pub rate: BytesPerSec,
    pub route: Vec<LinkId>,
    #[serde(default)]
    pub profile: CrossProfile,
}

/// Timeline event kinds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    StartHosts,
    Subscribe {
        consumer: ConsumerId,
        aggregator: AggregatorId,
        topic: TopicName,
        qos: QosClass,
    },
    Unsubscribe {
        consumer: ConsumerId,
        aggregator: AggregatorId,
        topic: TopicName,
    },
    OrchestratorDown,
    OrchestratorUp,
    End,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSpec {
    pub at: u64,
    pub kind: EventKind,
}

/// A complete experiment description. Optional sections have defaults that
/// are filled in during validation and echoed into the run manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub sim: SimConfig,
    pub topology: Topology,
    pub aggregators: Vec<AggregatorSpec>,
    pub consumers: Vec<ConsumerSpec>,
    pub orchestrator: OrchestratorSpec,
    #[serde(default)]
    pub bam: Vec<LinkBamSpec>,
    #[serde(default)]
    pub sources: Vec<SourceSpec>,
    #[serde(default)]
    pub cross_traffic: Vec<CrossTrafficSpec>,
    pub events: Vec<EventSpec>,
}

/// One validation failure, with the scenario path it was found at.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ValidationIssue {
    pub path: String,
    pub message: String,
}

fn issue(path: impl Into<String>, message: impl std::fmt::Display) -> ValidationIssue {
    ValidationIssue {
        path: path.into(),
        message: message.to_string(),
    }
}

/// A scenario that passed validation, with defaults resolved and lookups
/// prebuilt. `scenario()` returns the fully resolved form: serializing and
/// re-validating it yields the same scenario.
#[derive(Clone, Debug)]
pub struct ValidatedScenario {
    scenario: Scenario,
    topology: ValidatedTopology,
    end_tick: u64,
}

impl ValidatedScenario {
    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn topology(&self) -> &ValidatedTopology {
        &self.topology
    }

    pub fn end_tick(&self) -> u64 {
        self.end_tick
    }

    /// Builds the initial per-link BAM state.
    pub fn build_network(&self) -> crate::bam::Network {
        let mut net = crate::bam::Network::new();
        for spec in &self.scenario.bam {
            let capacity = self
                .topology
                .capacity(&spec.link_id)
                .expect("validated: bam entry references a declared link");
            let link = LinkState::new(
                spec.link_id.clone(),
                capacity,
                BandwidthConstraints {
                    model: spec.model,
                    bc: spec.bc.expect("validated: bc resolved"),
                },
            )
            .expect("validated: constraints fit the model");
            net.insert_link(link);
        }
        net
    }
}

/// Splits a link capacity into per-traffic-class constraints proportional to
/// the per-level class split (level 2 maps to TC 0). Rounds down and gives
/// the remainder to the highest-priority pool so the parts sum exactly to the
/// capacity.
pub fn proportional_bc(capacity: BytesPerSec, class_split: &[f64; 3]) -> [BytesPerSec; 3] {
    let weight: [f64; 3] = std::array::from_fn(|tc| class_split[2 - tc]);
    let total: f64 = weight.iter().sum();
    let mut bc: [BytesPerSec; 3] =
        std::array::from_fn(|tc| (capacity as f64 * weight[tc] / total).floor() as u64);
    let assigned: u64 = bc.iter().sum();
    bc[0] += capacity - assigned;
    bc
}

/// Validates every scenario invariant, resolving defaulted sections (BAM
/// constraints, device sources) along the way. The error report lists every
/// violation found, not just the first.
pub fn validate(scenario: &Scenario) -> Result<ValidatedScenario, Vec<ValidationIssue>> {
    let mut issues = Vec::new();
    let mut resolved = scenario.clone();

    if resolved.sim.tick_duration_us == 0 {
        issues.push(issue("sim.tick_duration_us", "must be positive"));
    }

    let topology = match model::validate_topology(&resolved.topology) {
        Ok(v) => Some(v),
        Err(errs) => {
            for e in errs {
                issues.push(issue("topology", e));
            }
            None
        }
    };

    let node_kinds: BTreeMap<&str, NodeKind> = resolved
        .topology
        .nodes
        .iter()
        .map(|n| (n.id.as_str(), n.kind))
        .collect();

    // Aggregators and their topics.
    let mut agg_topics: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (i, agg) in resolved.aggregators.iter().enumerate() {
        let path = format!("aggregators[{i}]");
        if agg_topics.contains_key(agg.id.as_str()) {
            issues.push(issue(
                &path,
                format!("duplicate aggregator id `{}`", agg.id),
            ));
        }
        match node_kinds.get(agg.id.as_str()) {
            Some(NodeKind::Aggregator) => {}
            Some(_) => issues.push(issue(
                &path,
                format!("node `{}` is not an aggregator", agg.id),
            )),
            None => issues.push(issue(&path, format!("no topology node `{}`", agg.id))),
        }
        let topics = agg_topics.entry(agg.id.clone()).or_default();
        for (j, t) in agg.topics.iter().enumerate() {
            let tpath = format!("{path}.topics[{j}]");
            if t.name.is_empty() {
                issues.push(issue(&tpath, "topic name must be non-empty"));
            }
            if !topics.insert(t.name.clone()) {
                issues.push(issue(&tpath, format!("duplicate topic `{}`", t.name)));
            }
            if t.msg_size == 0 {
                issues.push(issue(&tpath, "msg_size must be positive"));
            }
        }
        if agg.buffer.capacity_per_class == 0 {
            issues.push(issue(format!("{path}.buffer"), "capacity must be positive"));
        }
        if let Some(caps) = agg.buffer.per_class_capacity {
            if caps.contains(&0) {
                issues.push(issue(
                    format!("{path}.buffer"),
                    "per-class capacity must be positive",
                ));
            }
        }
    }

    let mut consumer_ids: BTreeSet<String> = BTreeSet::new();
    for (i, c) in resolved.consumers.iter().enumerate() {
        let path = format!("consumers[{i}]");
        if !consumer_ids.insert(c.id.clone()) {
            issues.push(issue(&path, format!("duplicate consumer id `{}`", c.id)));
        }
        match node_kinds.get(c.id.as_str()) {
            Some(NodeKind::Consumer) => {}
            Some(_) => issues.push(issue(&path, format!("node `{}` is not a consumer", c.id))),
            None => issues.push(issue(&path, format!("no topology node `{}`", c.id))),
        }
    }

    if let Err(msg) = resolved.orchestrator.to_config().validate() {
        issues.push(issue("orchestrator", msg));
    }
    if !node_kinds.contains_key(resolved.orchestrator.channel_sink.as_str()) {
        issues.push(issue(
            "orchestrator.channel_sink",
            format!("no topology node `{}`", resolved.orchestrator.channel_sink),
        ));
    } else if let Some(topo) = &topology {
        for agg in &resolved.aggregators {
            if topo
                .route(&agg.id, &resolved.orchestrator.channel_sink)
                .is_none()
            {
                issues.push(issue(
                    "orchestrator.channel_sink",
                    format!(
                        "no route from aggregator `{}` to channel sink `{}`",
                        agg.id, resolved.orchestrator.channel_sink
                    ),
                ));
            }
        }
    }

    // BAM configuration: every link exactly once, constraints fitting the
    // model. Missing bc vectors are resolved proportionally to the split.
    let link_capacity: BTreeMap<String, BytesPerSec> = resolved
        .topology
        .links
        .iter()
        .map(|l| (l.id.clone(), l.capacity))
        .collect();
    let split = resolved.orchestrator.class_split;
    let mut covered = BTreeSet::new();
    for (i, spec) in resolved.bam.iter_mut().enumerate() {
        let path = format!("bam[{i}]");
        let Some(&capacity) = link_capacity.get(spec.link_id.as_str()) else {
            issues.push(issue(&path, format!("no topology link `{}`", spec.link_id)));
            continue;
        };
        if !covered.insert(spec.link_id.clone()) {
            issues.push(issue(
                &path,
                format!("duplicate bam entry for `{}`", spec.link_id),
            ));
        }
        if spec.devolution {
            issues.push(issue(
                format!("{path}.devolution"),
                "devolution is not supported; set to false",
            ));
        }
        let bc = spec.bc.unwrap_or_else(|| proportional_bc(capacity, &split));
        if let Err(e) = LinkState::new(
            spec.link_id.clone(),
            capacity,
            BandwidthConstraints {
                model: spec.model,
                bc,
            },
        ) {
            issues.push(issue(&path, e));
        }
        spec.bc = Some(bc);
    }
    for link in resolved.topology.links.iter() {
        if !covered.contains(&link.id) {
            issues.push(issue("bam", format!("link `{}` has no bam entry", link.id)));
        }
    }

    // Sources: explicit entries are checked and defaulted; an empty section
    // derives one source per declared topic.
    if resolved.sources.is_empty() {
        for agg in &resolved.aggregators {
            for t in &agg.topics {
                resolved.sources.push(SourceSpec {
                    aggregator_id: agg.id.clone(),
                    topic: t.name.clone(),
                    rate: Some(t.gen_rate),
                    msg_size: Some(t.msg_size),
                    phase: 0,
                    profile: SourceProfile::Constant,
                });
            }
        }
    } else {
        let aggregators = resolved.aggregators.clone();
        for (i, s) in resolved.sources.iter_mut().enumerate() {
            let path = format!("sources[{i}]");
            let topic = aggregators
                .iter()
                .find(|a| a.id == s.aggregator_id)
                .and_then(|a| a.topics.iter().find(|t| t.name == s.topic));
            match topic {
                Some(t) => {
                    s.rate.get_or_insert(t.gen_rate);
                    s.msg_size.get_or_insert(t.msg_size);
                }
                None => {
                    issues.push(issue(
                        &path,
                        format!("no topic `{}` on aggregator `{}`", s.topic, s.aggregator_id),
                    ));
                    continue;
                }
            }
            if s.msg_size == Some(0) {
                issues.push(issue(&path, "msg_size must be positive"));
            }
            if let SourceProfile::Jittered { amplitude } = s.profile {
                if !(0.0..1.0).contains(&amplitude) {
                    issues.push(issue(&path, "jitter amplitude must be in [0, 1)"));
                }
            }
        }
    }

    for (i, x) in resolved.cross_traffic.iter().enumerate() {
        let path = format!("cross_traffic[{i}]");
        for end in [&x.src, &x.dst] {
            if !node_kinds.contains_key(end.as_str()) {
                issues.push(issue(&path, format!("no topology node `{end}`")));
            }
        }
        let links: BTreeMap<LinkId, &model::Link> = resolved
            .topology
            .links
            .iter()
            .map(|l| (l.id.clone(), l))
            .collect();
        let as_route = model::Route {
            src: x.src.clone(),
            dst: x.dst.clone(),
            links: x.route.clone(),
        };
        if x.route.iter().any(|l| !links.contains_key(l)) {
            issues.push(issue(&path, "route references an undeclared link"));
        } else if !model::route_connects(&as_route, &links) {
            issues.push(issue(&path, "route links do not form a src->dst path"));
        }
        if let CrossProfile::Bursty {
            period_ticks,
            duty_ticks,
        } = x.profile
        {
            if period_ticks == 0 || duty_ticks > period_ticks {
                issues.push(issue(&path, "bursty profile needs 0 < duty <= period"));
            }
        }
    }

    // Timeline: exactly one End, strictly after every other event; subscribe
    // and unsubscribe must reference declared entities and stay consistent.
    let end_tick = validate_events(&resolved, &consumer_ids, &agg_topics, &mut issues);
    resolved
        .events
        .sort_by_key(|e| (e.at, matches!(e.kind, EventKind::End)));

    if !issues.is_empty() {
        return Err(issues);
    }
    Ok(ValidatedScenario {
        scenario: resolved,
        topology: topology.expect("no issues implies topology validated"),
        end_tick: end_tick.expect("no issues implies End exists"),
    })
}

fn validate_events(
    scenario: &Scenario,
    consumers: &BTreeSet<String>,
    agg_topics: &BTreeMap<String, BTreeSet<String>>,
    issues: &mut Vec<ValidationIssue>,
) -> Option<u64> {
    let mut end_tick = None;
    for (i, e) in scenario.events.iter().enumerate() {
        if let EventKind::End = e.kind {
            if end_tick.replace(e.at).is_some() {
                issues.push(issue(format!("events[{i}]"), "more than one End event"));
            }
        }
    }
    if end_tick.is_none() {
        issues.push(issue("events", "missing End event"));
    }

    for (i, e) in scenario.events.iter().enumerate() {
        let path = format!("events[{i}]");
        if let Some(end) = end_tick {
            if !matches!(e.kind, EventKind::End) && e.at >= end {
                issues.push(issue(
                    &path,
                    "event at or after the End tick is unreachable",
                ));
            }
        }
        match &e.kind {
            EventKind::Subscribe {
                consumer,
                aggregator,
                topic,
                ..
            } => {
                if !consumers.contains(consumer) {
                    issues.push(issue(&path, format!("unknown consumer `{consumer}`")));
                }
                match agg_topics.get(aggregator) {
                    None => issues.push(issue(&path, format!("unknown aggregator `{aggregator}`"))),
                    Some(topics) if !topics.contains(topic) => {
                        issues.push(issue(
                            &path,
                            format!("no topic `{topic}` on aggregator `{aggregator}`"),
                        ));
                    }
                    _ => {}
                }
            }
            EventKind::Unsubscribe {
                consumer,
                aggregator,
                ..
            } => {
                if !consumers.contains(consumer) {
                    issues.push(issue(&path, format!("unknown consumer `{consumer}`")));
                }
                if !agg_topics.contains_key(aggregator) {
                    issues.push(issue(&path, format!("unknown aggregator `{aggregator}`")));
                }
            }
            _ => {}
        }
    }

    // Replay in timeline order to catch duplicate/unmatched subscriptions.
    let mut ordered: Vec<&EventSpec> = scenario.events.iter().collect();
    ordered.sort_by_key(|e| e.at);
    let mut live: BTreeSet<(String, String, String)> = BTreeSet::new();
    for e in ordered {
        match &e.kind {
            EventKind::Subscribe {
                consumer,
                aggregator,
                topic,
                ..
            } => {
                let key = (aggregator.clone(), consumer.clone(), topic.clone());
                if !live.insert(key) {
                    issues.push(issue(
                        format!("events[at={}]", e.at),
                        format!("`{consumer}` already subscribed to `{aggregator}/{topic}`"),
                    ));
                }
            }
            EventKind::Unsubscribe {
                consumer,
                aggregator,
                topic,
            } => {
                let key = (aggregator.clone(), consumer.clone(), topic.clone());
                if !live.remove(&key) {
                    issues.push(issue(
                        format!("events[at={}]", e.at),
                        format!("`{consumer}` is not subscribed to `{aggregator}/{topic}`"),
                    ));
                }
            }
            _ => {}
        }
    }
    end_tick
}

/// The built-in proof-of-concept scenario: three aggregators with three
/// 2_000 B/s topics each (plus a 200_000 B/s fourth topic on ag1), two
/// consumers, two cross-traffic generators, 1 MB/s links under ATCS, a
/// 900_000 B/s budget split (0.25, 0.35, 0.45), and the four-phase timeline.
pub fn build_paper_poc() -> Scenario {
    let node = |id: &str, kind: NodeKind| model::Node {
        id: id.into(),
        kind,
    };
    let link = |id: &str, a: &str, b: &str| model::Link {
        id: id.into(),
        a: a.into(),
        b: b.into(),
        capacity: 1_000_000,
    };
    let route = |src: &str, dst: &str, links: &[&str]| model::Route {
        src: src.into(),
        dst: dst.into(),
        links: links.iter().map(|l| l.to_string()).collect(),
    };

    let mut routes = Vec::new();
    for ag in ["ag1", "ag2", "ag3"] {
        let access = format!("l-{ag}");
        for c in ["c1", "c2"] {
            routes.push(route(ag, c, &[&access, "l-bb", &format!("l-{c}")]));
        }
        routes.push(route(ag, "s2", &[&access, "l-bb"]));
    }
    routes.push(route("tg1", "tg2", &["l-tg1", "l-bb", "l-tg2"]));
    routes.push(route("tg2", "tg1", &["l-tg2", "l-bb", "l-tg1"]));

    let topology = Topology {
        nodes: vec![
            node("ag1", NodeKind::Aggregator),
            node("ag2", NodeKind::Aggregator),
            node("ag3", NodeKind::Aggregator),
            node("c1", NodeKind::Consumer),
            node("c2", NodeKind::Consumer),
            node("orch", NodeKind::Orchestrator),
            node("s1", NodeKind::Switch),
            node("s2", NodeKind::Switch),
            node("tg1", NodeKind::TrafficGen),
            node("tg2", NodeKind::TrafficGen),
        ],
        links: vec![
            link("l-ag1", "ag1", "s1"),
            link("l-ag2", "ag2", "s1"),
            link("l-ag3", "ag3", "s1"),
            link("l-bb", "s1", "s2"),
            link("l-c1", "s2", "c1"),
            link("l-c2", "s2", "c2"),
            link("l-orch", "orch", "s1"),
            link("l-tg1", "tg1", "s1"),
            link("l-tg2", "s2", "tg2"),
        ],
        routes,
    };

    let regular = |name: &str| Topic {
        name: name.into(),
        gen_rate: 2_000,
        msg_size: 500,
    };
    let buffer = BufferConfig {
        capacity_per_class: 1_000_000,
        overflow: crate::aggregator::OverflowPolicy::DropOldest,
        per_class_capacity: None,
    };
    let aggregators = vec![
        AggregatorSpec {
            id: "ag1".into(),
            topics: vec![
                regular("t1"),
                regular("t2"),
                regular("t3"),
                Topic {
                    name: "t4".into(),
                    gen_rate: 200_000,
                    msg_size: 500,
                },
            ],
            buffer: buffer.clone(),
            fallback_rates: None,
        },
        AggregatorSpec {
            id: "ag2".into(),
            topics: vec![regular("t1"), regular("t2"), regular("t3")],
            buffer: buffer.clone(),
            fallback_rates: None,
        },
        AggregatorSpec {
            id: "ag3".into(),
            topics: vec![regular("t1"), regular("t2"), regular("t3")],
            buffer,
            fallback_rates: None,
        },
    ];

    let split = default_split();
    let bam = topology
        .links
        .iter()
        .map(|l| LinkBamSpec {
            link_id: l.id.clone(),
            model: BamModel::Atcs,
            bc: Some(proportional_bc(l.capacity, &split)),
            devolution: false,
        })
        .collect();

    let mut sources = Vec::new();
    for agg in &aggregators {
        for t in &agg.topics {
            sources.push(SourceSpec {
                aggregator_id: agg.id.clone(),
                topic: t.name.clone(),
                rate: Some(t.gen_rate),
                msg_size: Some(t.msg_size),
                phase: 0,
                profile: SourceProfile::Constant,
            });
        }
    }

    let cross_traffic = vec![
        CrossTrafficSpec {
            id: "x1".into(),
            src: "tg1".into(),
            dst: "tg2".into(),
            rate: 100_000,
            route: vec!["l-tg1".into(), "l-bb".into(), "l-tg2".into()],
            profile: CrossProfile::Constant,
        },
        CrossTrafficSpec {
            id: "x2".into(),
            src: "tg2".into(),
            dst: "tg1".into(),
            rate: 100_000,
            route: vec!["l-tg2".into(), "l-bb".into(), "l-tg1".into()],
            profile: CrossProfile::Constant,
        },
    ];

    let sub = |at: u64, consumer: &str, aggregator: &str, topic: &str, level: u8| EventSpec {
        at,
        kind: EventKind::Subscribe {
            consumer: consumer.into(),
            aggregator: aggregator.into(),
            topic: topic.into(),
            qos: QosClass::new(level).expect("level in range"),
        },
    };
    let events = vec![
        EventSpec {
            at: 0,
            kind: EventKind::StartHosts,
        },
        sub(100, "c1", "ag1", "t1", 1),
        sub(100, "c1", "ag2", "t1", 1),
        sub(100, "c1", "ag3", "t1", 1),
        sub(600, "c2", "ag1", "t2", 2),
        sub(600, "c2", "ag2", "t2", 2),
        sub(600, "c2", "ag3", "t2", 2),
        sub(600, "c2", "ag1", "t4", 2),
        EventSpec {
            at: 1800,
            kind: EventKind::End,
        },
    ];

    Scenario {
        name: "paper-poc".into(),
        sim: SimConfig::default(),
        topology,
        aggregators,
        consumers: vec![
            ConsumerSpec { id: "c1".into() },
            ConsumerSpec { id: "c2".into() },
        ],
        orchestrator: OrchestratorSpec {
            channel_sink: "s2".into(),
            total_budget: 900_000,
            class_split: split,
            buffer_threshold: 0.5,
            recompute: RecomputePolicy::OnEveryMetadata,
        },
        bam,
        sources,
        cross_traffic,
        events,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_poc_validates() {
        let s = build_paper_poc();
        let v = validate(&s).expect("builtin scenario must validate");
        assert_eq!(v.end_tick(), 1800);
        assert_eq!(v.scenario().aggregators.len(), 3);
        assert_eq!(v.scenario().consumers.len(), 2);
        assert_eq!(v.scenario().cross_traffic.len(), 2);
        assert_eq!(v.scenario().sources.len(), 10);
    }

    #[test]
    fn paper_poc_is_fully_resolved() {
        // The builtin is its own resolution fixed point.
        let s = build_paper_poc();
        let v = validate(&s).unwrap();
        assert_eq!(v.scenario(), &s);
    }

    #[test]
    fn paper_poc_timeline_order() {
        let s = build_paper_poc();
        let at: Vec<u64> = s.events.iter().map(|e| e.at).collect();
        assert!(at.windows(2).all(|w| w[0] <= w[1]));
        assert!(matches!(
            s.events.first().unwrap().kind,
            EventKind::StartHosts
        ));
        assert!(matches!(s.events.last().unwrap().kind, EventKind::End));
    }

    #[test]
    fn proportional_bc_sums_to_capacity() {
        let bc = proportional_bc(1_000_000, &[0.25, 0.35, 0.45]);
        assert_eq!(bc, [428_572, 333_333, 238_095]);
        assert_eq!(bc.iter().sum::<u64>(), 1_000_000);
    }

    #[test]
    fn json_round_trip_is_identity() {
        let s = build_paper_poc();
        let v = validate(&s).unwrap();
        let json = serde_json::to_string_pretty(v.scenario()).unwrap();
        let parsed: Scenario = serde_json::from_str(&json).unwrap();
        let revalidated = validate(&parsed).unwrap();
        assert_eq!(revalidated.scenario(), v.scenario());
    }

    #[test]
    fn split_out_of_range_names_field() {
        let mut s = build_paper_poc();
        s.orchestrator.class_split = [0.4, 0.4, 0.4];
        let errs = validate(&s).unwrap_err();
        assert!(errs
            .iter()
            .any(|e| e.path == "orchestrator" && e.message.contains("class_split")));
    }

    #[test]
    fn missing_route_reported_with_location() {
        let mut s = build_paper_poc();
        s.topology
            .routes
            .retain(|r| !(r.src == "ag1" && r.dst == "c1"));
        let errs = validate(&s).unwrap_err();
        assert!(errs
            .iter()
            .any(|e| e.path == "topology" && e.message.contains("no route")));
    }

    #[test]
    fn devolution_stub_rejected() {
        let mut s = build_paper_poc();
        s.bam[0].devolution = true;
        let errs = validate(&s).unwrap_err();
        assert!(errs.iter().any(|e| e.path.ends_with("devolution")));
    }

    #[test]
    fn all_violations_reported() {
        let mut s = build_paper_poc();
        s.orchestrator.class_split = [2.0, 0.0, 0.0];
        s.sim.tick_duration_us = 0;
        s.bam[0].devolution = true;
        let errs = validate(&s).unwrap_err();
        assert!(errs.len() >= 3);
    }

    #[test]
    fn duplicate_subscription_in_timeline_rejected() {
        let mut s = build_paper_poc();
        let dup = s.events[1].clone();
        s.events.insert(2, EventSpec { at: 200, ..dup });
        let errs = validate(&s).unwrap_err();
        assert!(errs
            .iter()
            .any(|e| e.message.contains("already subscribed")));
    }

    #[test]
    fn event_after_end_rejected() {
        let mut s = build_paper_poc();
        s.events.push(EventSpec {
            at: 1900,
            kind: EventKind::OrchestratorDown,
        });
        let errs = validate(&s).unwrap_err();
        assert!(errs.iter().any(|e| e.message.contains("unreachable")));
    }

    #[test]
    fn sources_derived_from_topics_when_omitted() {
        let mut s = build_paper_poc();
        s.sources.clear();
        let v = validate(&s).unwrap();
        assert_eq!(v.scenario().sources.len(), 10);
        let t4 = v
            .scenario()
            .sources
            .iter()
            .find(|src| src.topic == "t4")
            .unwrap();
        assert_eq!(t4.rate, Some(200_000));
        assert_eq!(t4.msg_size, Some(500));
    }

    #[test]
    fn bam_must_cover_every_link() {
        let mut s = build_paper_poc();
        s.bam.remove(0);
        let errs = validate(&s).unwrap_err();
        assert!(errs.iter().any(|e| e.message.contains("no bam entry")));
    }
}
