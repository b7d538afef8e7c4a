//! Shared domain vocabulary: QoS classes, traffic classes, topics, and the
//! backbone topology with its validation. Everything here is an immutable
//! value after construction and safe to share across threads.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Node, link and topic identifiers are plain strings from the scenario file.
pub type NodeId = String;
pub type LinkId = String;
pub type TopicName = String;
pub type AggregatorId = String;
pub type ConsumerId = String;

/// Byte counts.
pub type Bytes = u64;
/// Rates in bytes per second.
pub type BytesPerSec = u64;

/// Time-sensitivity level of IoT traffic. Level 0 is best-effort
/// ("insensitive"), level 2 is the most urgent ("priority").
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct QosClass(u8);

impl QosClass {
    pub const INSENSITIVE: QosClass = QosClass(0);
    pub const SENSITIVE: QosClass = QosClass(1);
    pub const PRIORITY: QosClass = QosClass(2);

    /// All three classes in ascending urgency order.
    pub const ALL: [QosClass; 3] = [Self::INSENSITIVE, Self::SENSITIVE, Self::PRIORITY];

    pub fn new(level: u8) -> Result<Self, InvalidClass> {
        if level <= 2 {
            Ok(QosClass(level))
        } else {
            Err(InvalidClass(level))
        }
    }

    pub fn level(self) -> u8 {
        self.0
    }

    /// Index into per-class arrays.
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for QosClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl TryFrom<u8> for QosClass {
    type Error = InvalidClass;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        QosClass::new(v)
    }
}

impl From<QosClass> for u8 {
    fn from(q: QosClass) -> u8 {
        q.0
    }
}

/// Backbone traffic class. Index 0 is the highest-priority class.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct TrafficClass(u8);

impl TrafficClass {
    pub const ALL: [TrafficClass; 3] = [TrafficClass(0), TrafficClass(1), TrafficClass(2)];

    pub fn new(index: u8) -> Result<Self, InvalidClass> {
        if index <= 2 {
            Ok(TrafficClass(index))
        } else {
            Err(InvalidClass(index))
        }
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TrafficClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl TryFrom<u8> for TrafficClass {
    type Error = InvalidClass;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        TrafficClass::new(v)
    }
}

impl From<TrafficClass> for u8 {
    fn from(tc: TrafficClass) -> u8 {
        tc.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("class value {0} out of range (expected 0..=2)")]
pub struct InvalidClass(pub u8);

/// Maps a QoS level onto its backbone traffic class. The most urgent level
/// lands in the most-protected class: level 2 ↔ TC 0.
pub fn qos_to_tc(q: QosClass) -> TrafficClass {
    TrafficClass(2 - q.0)
}

/// Inverse of [`qos_to_tc`].
pub fn tc_to_qos(tc: TrafficClass) -> QosClass {
    QosClass(2 - tc.0)
}

/// A named data stream published by one aggregator. `gen_rate`/`msg_size`
/// describe the simulated device source feeding it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub name: TopicName,
    /// Simulated source rate in bytes per second.
    pub gen_rate: BytesPerSec,
    /// Whole-message payload size in bytes.
    pub msg_size: Bytes,
}

/// Role a topology node plays in the scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Aggregator,
    Consumer,
    Orchestrator,
    Switch,
    TrafficGen,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
}

/// An undirected link with a fixed capacity in bytes per second.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub a: NodeId,
    pub b: NodeId,
    pub capacity: BytesPerSec,
}

/// A static route: the ordered links connecting `src` to `dst`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub src: NodeId,
    pub dst: NodeId,
    pub links: Vec<LinkId>,
}

/// Declarative backbone description. Routes are static for the lifetime of a
/// scenario.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    pub routes: Vec<Route>,
}

/// Violations reported by [`validate_topology`]. The validator reports every
/// violation it finds, not just the first.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum TopologyError {
    #[error("no route declared from aggregator `{src}` to consumer `{dst}`")]
    MissingRoute { src: NodeId, dst: NodeId },
    #[error("route `{src}`->`{dst}` references undeclared link or node `{id}`")]
    DanglingLink {
        src: NodeId,
        dst: NodeId,
        id: String,
    },
    #[error("link `{0}` has non-positive capacity")]
    NonPositiveCapacity(LinkId),
    #[error("duplicate identifier `{0}`")]
    DuplicateId(String),
    #[error("route `{src}`->`{dst}` links do not form a connected path")]
    DisconnectedRoute { src: NodeId, dst: NodeId },
}

/// A topology that passed [`validate_topology`], with route/link lookups
/// prebuilt.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidatedTopology {
    topology: Topology,
    routes: BTreeMap<(NodeId, NodeId), Vec<LinkId>>,
    link_capacity: BTreeMap<LinkId, BytesPerSec>,
}

impl ValidatedTopology {
    pub fn as_topology(&self) -> &Topology {
        &self.topology
    }

    pub fn route(&self, src: &str, dst: &str) -> Option<&[LinkId]> {
        self.routes
            .get(&(src.to_string(), dst.to_string()))
            .map(|v| v.as_slice())
    }

    pub fn capacity(&self, link: &str) -> Option<BytesPerSec> {
        self.link_capacity.get(link).copied()
    }

    pub fn nodes_of_kind(&self, kind: NodeKind) -> impl Iterator<Item = &Node> {
        self.topology.nodes.iter().filter(move |n| n.kind == kind)
    }
}

/// Checks every topology invariant: unique identifiers, positive capacities,
/// links referencing declared nodes, routes referencing declared links and
/// forming connected src→dst paths, and a route for every
/// aggregator→consumer pair.
pub fn validate_topology(t: &Topology) -> Result<ValidatedTopology, Vec<TopologyError>> {
    let mut errors = Vec::new();

    let mut node_ids = BTreeSet::new();
    for n in &t.nodes {
        if !node_ids.insert(n.id.clone()) {
            errors.push(TopologyError::DuplicateId(n.id.clone()));
        }
    }

    let mut links = BTreeMap::new();
    for l in &t.links {
        if links.insert(l.id.clone(), l).is_some() {
            errors.push(TopologyError::DuplicateId(l.id.clone()));
        }
        if l.capacity == 0 {
            errors.push(TopologyError::NonPositiveCapacity(l.id.clone()));
        }
        for end in [&l.a, &l.b] {
            if !node_ids.contains(end) {
                errors.push(TopologyError::DanglingLink {
                    src: l.a.clone(),
                    dst: l.b.clone(),
                    id: end.clone(),
                });
            }
        }
    }

    let mut routes = BTreeMap::new();
    for r in &t.routes {
        let key = (r.src.clone(), r.dst.clone());
        if routes.insert(key, r.links.clone()).is_some() {
            errors.push(TopologyError::DuplicateId(format!("{}->{}", r.src, r.dst)));
        }
        let mut dangling = false;
        for lid in &r.links {
            if !links.contains_key(lid) {
                errors.push(TopologyError::DanglingLink {
                    src: r.src.clone(),
                    dst: r.dst.clone(),
                    id: lid.clone(),
                });
                dangling = true;
            }
        }
        if !dangling && !route_connects(r, &links) {
            errors.push(TopologyError::DisconnectedRoute {
                src: r.src.clone(),
                dst: r.dst.clone(),
            });
        }
    }

    // Every aggregator must be able to reach every consumer.
    for agg in t.nodes.iter().filter(|n| n.kind == NodeKind::Aggregator) {
        for con in t.nodes.iter().filter(|n| n.kind == NodeKind::Consumer) {
            if !routes.contains_key(&(agg.id.clone(), con.id.clone())) {
                errors.push(TopologyError::MissingRoute {
                    src: agg.id.clone(),
                    dst: con.id.clone(),
                });
            }
        }
    }

    if !errors.is_empty() {
        return Err(errors);
    }
    let link_capacity = t.links.iter().map(|l| (l.id.clone(), l.capacity)).collect();
    Ok(ValidatedTopology {
        topology: t.clone(),
        routes,
        link_capacity,
    })
}

pub(crate) fn route_connects(r: &Route, links: &BTreeMap<LinkId, &Link>) -> bool {
    if r.links.is_empty() {
        return false;
    }
    let mut at = r.src.clone();
    for lid in &r.links {
        let link = links[lid];
        at = if link.a == at {
            link.b.clone()
        } else if link.b == at {
            link.a.clone()
        } else {
            return false;
        };
    }
    at == r.dst
}
