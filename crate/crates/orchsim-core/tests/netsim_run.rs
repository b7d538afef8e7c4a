//! End-to-end kernel behavior on small scenarios and the builtin one.

use orchsim_core::aggregator::{BufferConfig, OverflowPolicy};
use orchsim_core::bam::BamModel;
use orchsim_core::model::{Link, Node, NodeKind, QosClass, Route, Topic, Topology};
use orchsim_core::netsim::{self, SimEvent};
use orchsim_core::orchestrator::RecomputePolicy;
use orchsim_core::scenario::{
    self, AggregatorSpec, ConsumerSpec, EventKind, EventSpec, LinkBamSpec, OrchestratorSpec,
    Scenario, SimConfig,
};

fn sub(at: u64, consumer: &str, aggregator: &str, topic: &str, level: u8) -> EventSpec {
    EventSpec {
        at,
        kind: EventKind::Subscribe {
            consumer: consumer.into(),
            aggregator: aggregator.into(),
            topic: topic.into(),
            qos: QosClass::new(level).unwrap(),
        },
    }
}

fn end(at: u64) -> EventSpec {
    EventSpec {
        at,
        kind: EventKind::End,
    }
}

/// One aggregator, one consumer, one 1 MB/s link.
fn mini_scenario(topics: Vec<Topic>, budget: u64, events: Vec<EventSpec>) -> Scenario {
    Scenario {
        name: "mini".into(),
        sim: SimConfig::default(),
        topology: Topology {
            nodes: vec![
                Node {
                    id: "ag1".into(),
                    kind: NodeKind::Aggregator,
                },
                Node {
                    id: "c1".into(),
                    kind: NodeKind::Consumer,
                },
            ],
            links: vec![Link {
                id: "l1".into(),
                a: "ag1".into(),
                b: "c1".into(),
                capacity: 1_000_000,
            }],
            routes: vec![Route {
                src: "ag1".into(),
                dst: "c1".into(),
                links: vec!["l1".into()],
            }],
        },
        aggregators: vec![AggregatorSpec {
            id: "ag1".into(),
            topics,
            buffer: BufferConfig {
                capacity_per_class: 1_000_000,
                overflow: OverflowPolicy::DropOldest,
                per_class_capacity: None,
            },
            fallback_rates: Some([10_000, 20_000, 30_000]),
        }],
        consumers: vec![ConsumerSpec { id: "c1".into() }],
        orchestrator: OrchestratorSpec {
            channel_sink: "c1".into(),
            total_budget: budget,
            class_split: [0.25, 0.35, 0.45],
            buffer_threshold: 0.5,
            recompute: RecomputePolicy::OnEveryMetadata,
        },
        bam: vec![LinkBamSpec {
            link_id: "l1".into(),
            model: BamModel::Atcs,
            bc: None,
            devolution: false,
        }],
        sources: vec![],
        cross_traffic: vec![],
        events,
    }
}

fn topic(name: &str, rate: u64) -> Topic {
    Topic {
        name: name.into(),
        gen_rate: rate,
        msg_size: 500,
    }
}

#[test]
fn paper_poc_main_event_markers_in_order() {
    let vs = scenario::validate(&scenario::build_paper_poc()).unwrap();
    let out = netsim::run(&vs, 1);
    assert!(out.summary.fatal.is_none());
    let mut markers = Vec::new();
    for r in out.log.iter() {
        match &r.event {
            SimEvent::Timeline(EventKind::StartHosts) => markers.push(("start", r.tick)),
            SimEvent::Timeline(EventKind::Subscribe { consumer, .. }) => {
                markers.push((if consumer == "c1" { "c1" } else { "c2" }, r.tick))
            }
            SimEvent::Timeline(EventKind::End) => markers.push(("end", r.tick)),
            _ => {}
        }
    }
    assert_eq!(markers[0], ("start", 0));
    assert_eq!(markers[1], ("c1", 100));
    assert_eq!(markers[4], ("c2", 600));
    assert_eq!(*markers.last().unwrap(), ("end", 1800));
    let ticks: Vec<u64> = markers.iter().map(|m| m.1).collect();
    assert!(ticks.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn empty_scenario_produces_no_rows() {
    let s = mini_scenario(vec![topic("t1", 2_000)], 900_000, vec![end(0)]);
    let vs = scenario::validate(&s).unwrap();
    let out = netsim::run(&vs, 0);
    assert_eq!(out.summary.ticks, 0);
    assert!(out.metrics.rows.is_empty());
    assert!(out.metrics.links.is_empty());
}

#[test]
fn identical_runs_are_identical() {
    let s = mini_scenario(
        vec![topic("t1", 50_000)],
        300_000,
        vec![sub(2, "c1", "ag1", "t1", 2), end(60)],
    );
    let vs = scenario::validate(&s).unwrap();
    let a = netsim::run(&vs, 7);
    let b = netsim::run(&vs, 7);
    let dump = |o: &netsim::RunOutput| {
        let log: Vec<String> = o
            .log
            .iter()
            .map(|r| serde_json::to_string(r).unwrap())
            .collect();
        let rows: Vec<String> = o
            .metrics
            .rows
            .iter()
            .map(|r| serde_json::to_string(r).unwrap())
            .collect();
        (log, rows)
    };
    assert_eq!(dump(&a), dump(&b));
}

#[test]
fn metrics_rows_complete_per_tick_aggregator_class() {
    let s = mini_scenario(
        vec![topic("t1", 2_000)],
        900_000,
        vec![sub(1, "c1", "ag1", "t1", 1), end(50)],
    );
    let vs = scenario::validate(&s).unwrap();
    let out = netsim::run(&vs, 0);
    // ticks x aggregators x classes
    assert_eq!(out.metrics.rows.len(), 50 * 3);
    assert_eq!(out.metrics.links.len(), 50);
    // No gaps: every tick appears exactly three times.
    for t in 0..50 {
        assert_eq!(out.metrics.rows.iter().filter(|r| r.tick == t).count(), 3);
    }
}

#[test]
fn utilization_is_flow_over_capacity() {
    // 135_000 B/s delivered over a 1 MB/s link: utilization 0.135.
    let s = mini_scenario(
        vec![topic("t1", 135_000)],
        900_000,
        vec![sub(0, "c1", "ag1", "t1", 2), end(40)],
    );
    let vs = scenario::validate(&s).unwrap();
    let out = netsim::run(&vs, 0);
    assert!(out.summary.fatal.is_none());
    // Steady state (away from startup): 13_500 bytes per 100_000-byte tick.
    let late: Vec<f64> = out
        .metrics
        .links
        .iter()
        .filter(|l| l.tick >= 20)
        .map(|l| l.utilization)
        .collect();
    assert!(!late.is_empty());
    for u in late {
        assert!((u - 0.135).abs() < 0.01, "utilization {u}");
    }
}

#[test]
fn overload_is_clamped_and_logged() {
    let mut s = mini_scenario(
        vec![topic("t1", 135_000)],
        900_000,
        vec![sub(0, "c1", "ag1", "t1", 2), end(30)],
    );
    s.cross_traffic.push(scenario::CrossTrafficSpec {
        id: "x1".into(),
        src: "ag1".into(),
        dst: "c1".into(),
        rate: 950_000,
        route: vec!["l1".into()],
        profile: scenario::CrossProfile::Constant,
    });
    let vs = scenario::validate(&s).unwrap();
    let out = netsim::run(&vs, 0);
    assert!(out
        .log
        .iter()
        .any(|r| matches!(&r.event, SimEvent::Overload { link, utilization } if link == "l1" && *utilization > 1.0)));
    assert!(out
        .metrics
        .links
        .iter()
        .filter(|l| l.tick >= 20)
        .all(|l| l.utilization <= 1.0));
    assert!(out.metrics.links.iter().any(|l| l.utilization == 1.0));
}

#[test]
fn orchestrator_loss_keeps_deliveries_flowing() {
    // 5_000 B/s in 500-byte messages is one message per tick; deliveries must
    // continue through the outage on the predefined fallback rates and the
    // returning orchestrator's fresh assignment must win.
    let s = mini_scenario(
        vec![topic("t1", 5_000)],
        900_000,
        vec![
            sub(5, "c1", "ag1", "t1", 1),
            EventSpec {
                at: 50,
                kind: EventKind::OrchestratorDown,
            },
            EventSpec {
                at: 70,
                kind: EventKind::OrchestratorUp,
            },
            end(100),
        ],
    );
    let vs = scenario::validate(&s).unwrap();
    let out = netsim::run(&vs, 0);
    assert!(out.summary.fatal.is_none());
    // No subscribers yet: nothing flows, utilization is zero.
    assert!(out
        .metrics
        .links
        .iter()
        .filter(|l| l.tick < 5)
        .all(|l| l.utilization == 0.0));
    for t in 5..100 {
        let row = out
            .metrics
            .rows
            .iter()
            .find(|r| r.tick == t && r.class == 1)
            .unwrap();
        assert_eq!(row.delivered, 5_000, "gap at tick {t}");
    }
    assert!(out
        .log
        .iter()
        .any(|r| r.tick == 50 && matches!(&r.event, SimEvent::FallbackActivated { rates, .. } if rates == &[10_000, 20_000, 30_000])));
    let rate_at = |t: u64| {
        out.metrics
            .rows
            .iter()
            .find(|r| r.tick == t && r.class == 1)
            .unwrap()
            .rate
    };
    assert_eq!(rate_at(49), 315_000);
    assert_eq!(rate_at(55), 20_000);
    // First metadata after the outage (tick 70) restores assigned rates.
    assert_eq!(rate_at(70), 315_000);
}

#[test]
fn priority_class_sees_lower_latency_than_insensitive() {
    // Identical 100_000 B/s topics on all three levels; only level 0's rate
    // (75_000 B/s) is below its ingest, so only level 0 queues.
    let s = mini_scenario(
        vec![
            topic("t0", 100_000),
            topic("t1", 100_000),
            topic("t2", 100_000),
        ],
        300_000,
        vec![
            sub(0, "c1", "ag1", "t0", 0),
            sub(0, "c1", "ag1", "t1", 1),
            sub(0, "c1", "ag1", "t2", 2),
            end(200),
        ],
    );
    let vs = scenario::validate(&s).unwrap();
    let out = netsim::run(&vs, 0);
    assert!(out.summary.fatal.is_none());
    let insensitive = out.summary.latency[0].mean_ticks().unwrap();
    let priority = out.summary.latency[2].mean_ticks().unwrap();
    assert!(priority <= insensitive, "{priority} > {insensitive}");
    assert!(insensitive > 0.0);
    assert_eq!(priority, 0.0);
}

#[test]
fn conservation_holds_under_overflow_drops() {
    // Ingest far above any assignable rate forces DropOldest evictions.
    let mut s = mini_scenario(
        vec![topic("t1", 500_000)],
        90_000,
        vec![sub(0, "c1", "ag1", "t1", 2), end(300)],
    );
    s.aggregators[0].buffer.capacity_per_class = 100_000;
    let vs = scenario::validate(&s).unwrap();
    let out = netsim::run(&vs, 0);
    assert!(out.summary.fatal.is_none());
    assert_eq!(out.summary.conservation_checked_ticks, 300);
    let totals = &out.summary.per_aggregator["ag1"];
    assert!(totals.dropped_bytes[2] > 0);
    assert_eq!(totals.max_occupancy[2], 100_000);
}

#[test]
fn unsubscribe_stops_fanout_and_balances_ledger() {
    let s = mini_scenario(
        vec![topic("t1", 20_000)],
        900_000,
        vec![
            sub(0, "c1", "ag1", "t1", 1),
            EventSpec {
                at: 40,
                kind: EventKind::Unsubscribe {
                    consumer: "c1".into(),
                    aggregator: "ag1".into(),
                    topic: "t1".into(),
                },
            },
            end(80),
        ],
    );
    let vs = scenario::validate(&s).unwrap();
    let out = netsim::run(&vs, 0);
    assert!(out.summary.fatal.is_none());
    assert_eq!(out.summary.conservation_checked_ticks, 80);
    assert!(out
        .log
        .iter()
        .any(|r| matches!(&r.event, SimEvent::SubscriptionRemoved { .. })));
    // After the unsubscribe, ingest stops (no subscriber) and deliveries end.
    let late_delivered: u64 = out
        .metrics
        .rows
        .iter()
        .filter(|r| r.tick > 41 && r.class == 1)
        .map(|r| r.delivered)
        .sum();
    assert_eq!(late_delivered, 0);
}
