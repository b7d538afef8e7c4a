//! The central mediator: computes per-aggregator per-class transmission
//! rates (static proportional split plus buffer-threshold reactive
//! reallocation) and backs every rate with a channel obtained through the
//! BAM broker.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::aggregator::{AggregatorMetadata, RateAssignment};
use crate::bam::{Decision, LspId, Network};
use crate::model::{qos_to_tc, AggregatorId, BytesPerSec, LinkId, QosClass, TrafficClass};

/// When the orchestrator recomputes rates. The reactive default recomputes on
/// every metadata arrival; `Interval` recomputes at most once per that many
/// ticks (triggered by the next metadata arrival).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecomputePolicy {
    #[default]
    OnEveryMetadata,
    Interval(u64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrchestratorConfig {
    /// IoT bandwidth budget on the bottleneck, bytes/second.
    pub total_budget: BytesPerSec,
    /// Per-QoS-level fractions of each aggregator's share, indexed by level.
    pub class_split: [f64; 3],
    /// Fraction of buffer capacity that marks a class as hot.
    pub buffer_threshold: f64,
    pub recompute: RecomputePolicy,
}

/// Largest accepted class-split sum. The canonical profile (0.25, 0.35, 0.45)
/// deliberately over-partitions the share at 1.05.
pub const MAX_SPLIT_SUM: f64 = 1.05;

impl OrchestratorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.total_budget == 0 {
            return Err("total_budget must be positive".into());
        }
        let mut sum = 0.0;
        for (i, f) in self.class_split.iter().enumerate() {
            if !f.is_finite() || *f < 0.0 {
                return Err(format!("class_split[{i}] must be a nonnegative number"));
            }
            sum += f;
        }
        if sum <= 0.0 || sum > MAX_SPLIT_SUM + 1e-9 {
            return Err(format!(
                "class_split sums to {sum}, expected within (0, {MAX_SPLIT_SUM}]"
            ));
        }
        if !(self.buffer_threshold > 0.0 && self.buffer_threshold <= 1.0) {
            return Err("buffer_threshold must be in (0, 1]".into());
        }
        if let RecomputePolicy::Interval(0) = self.recompute {
            return Err("recompute interval must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("no active aggregators")]
pub struct NoAggregators;

/// Evenly divides the budget between aggregators, then splits each share over
/// QoS levels. Identical input sets produce identical results regardless of
/// ordering.
pub fn compute_rates(
    cfg: &OrchestratorConfig,
    aggregators: &[AggregatorId],
) -> Result<BTreeMap<AggregatorId, [BytesPerSec; 3]>, NoAggregators> {
    if aggregators.is_empty() {
        return Err(NoAggregators);
    }
    let share = cfg.total_budget / aggregators.len() as u64;
    let rates: [BytesPerSec; 3] =
        std::array::from_fn(|l| (share as f64 * cfg.class_split[l]).round() as u64);
    Ok(aggregators.iter().map(|id| (id.clone(), rates)).collect())
}

/// A granted backbone channel for one (aggregator, traffic class).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChannelGrant {
    pub lsp_id: LspId,
    pub bw: BytesPerSec,
}

/// Events the orchestrator reports to the simulation log.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OrchEvent {
    MetadataReceived {
        aggregator: AggregatorId,
        occupancy: [u64; 3],
        ingest_rate: [BytesPerSec; 3],
    },
    Reallocation {
        aggregator: AggregatorId,
        level: QosClass,
        deficit: BytesPerSec,
        slack: BytesPerSec,
        headroom: BytesPerSec,
        granted: BytesPerSec,
        donors: Vec<(AggregatorId, BytesPerSec)>,
    },
    ChannelGranted {
        aggregator: AggregatorId,
        tc: TrafficClass,
        bw: BytesPerSec,
        preempted: Vec<LspId>,
    },
    ChannelReleased {
        aggregator: AggregatorId,
        tc: TrafficClass,
        freed: BytesPerSec,
    },
    ChannelDenied {
        aggregator: AggregatorId,
        tc: TrafficClass,
        requested: BytesPerSec,
        kept: BytesPerSec,
    },
    ChannelPreempted {
        aggregator: AggregatorId,
        tc: TrafficClass,
        lsp_id: LspId,
    },
    RateAssigned(RateAssignment),
}

/// Result of processing one metadata message.
#[derive(Clone, Debug, Default)]
pub struct HandleOutcome {
    pub assignments: Vec<RateAssignment>,
    pub events: Vec<OrchEvent>,
}

/// Orchestrator state. Single-writer: metadata is processed one message at a
/// time in arrival order.
#[derive(Clone, Debug)]
pub struct Orchestrator {
    cfg: OrchestratorConfig,
    /// Channel route per aggregator, toward the consumer-side sink.
    routes: BTreeMap<AggregatorId, Vec<LinkId>>,
    known: BTreeMap<AggregatorId, AggregatorMetadata>,
    assignments: BTreeMap<AggregatorId, RateAssignment>,
    channels: BTreeMap<(AggregatorId, TrafficClass), ChannelGrant>,
    epoch: u64,
    last_recompute: Option<u64>,
}

impl Orchestrator {
    pub fn new(cfg: OrchestratorConfig) -> Self {
        Orchestrator {
            cfg,
            routes: BTreeMap::new(),
            known: BTreeMap::new(),
            assignments: BTreeMap::new(),
            channels: BTreeMap::new(),
            epoch: 0,
            last_recompute: None,
        }
    }

    pub fn config(&self) -> &OrchestratorConfig {
        &self.cfg
    }

    /// Registers the backbone route an aggregator's channels reserve.
    pub fn register_route(&mut self, aggregator: impl Into<AggregatorId>, route: Vec<LinkId>) {
        self.routes.insert(aggregator.into(), route);
    }

    pub fn channel(&self, aggregator: &str, tc: TrafficClass) -> Option<&ChannelGrant> {
        self.channels.get(&(aggregator.to_string(), tc))
    }

    pub fn assignment(&self, aggregator: &str) -> Option<&RateAssignment> {
        self.assignments.get(aggregator)
    }

    /// Forgets emitted assignments (channels stay), forcing the next
    /// recompute to re-emit everything with fresh epochs. Called after an
    /// orchestrator outage so aggregators on fallback rates get re-assigned.
    pub fn mark_assignments_stale(&mut self) {
        self.assignments.clear();
    }

    fn recompute_due(&self, now: u64) -> bool {
        match self.cfg.recompute {
            RecomputePolicy::OnEveryMetadata => true,
            RecomputePolicy::Interval(ticks) => match self.last_recompute {
                None => true,
                Some(last) => now.saturating_sub(last) >= ticks,
            },
        }
    }

    /// Stores the metadata, recomputes all rates (per the recompute policy),
    /// reallocates toward hot buffers, reconciles channels through the BAM
    /// broker, and emits fresh-epoch assignments to every affected
    /// aggregator. BAM denials are absorbed: the emitted rate falls back to
    /// the granted amount.
    pub fn handle_metadata(
        &mut self,
        md: AggregatorMetadata,
        net: &mut Network,
        now: u64,
    ) -> HandleOutcome {
        let mut out = HandleOutcome::default();
        out.events.push(OrchEvent::MetadataReceived {
            aggregator: md.aggregator_id.clone(),
            occupancy: md.occupancy,
            ingest_rate: md.ingest_rate,
        });
        self.known.insert(md.aggregator_id.clone(), md);
        if !self.recompute_due(now) {
            return out;
        }
        self.last_recompute = Some(now);
        self.recompute(net, now, &mut out);
        out
    }

    fn recompute(&mut self, net: &mut Network, now: u64, out: &mut HandleOutcome) {
        let ids: Vec<AggregatorId> = self.known.keys().cloned().collect();
        let mut target = compute_rates(&self.cfg, &ids).expect("known is non-empty");

        // Reactive pass: every aggregator whose latest metadata shows a class
        // buffer at or above the threshold gets slack harvested toward it.
        for id in &ids {
            let md = &self.known[id];
            for level in QosClass::ALL {
                let cap = md.buffer_capacity[level.idx()];
                if cap == 0 {
                    continue;
                }
                let hot =
                    md.occupancy[level.idx()] as f64 >= self.cfg.buffer_threshold * cap as f64;
                if hot {
                    let ev = self.reactive_reallocate(&mut target, id, level, net);
                    out.events.push(ev);
                }
            }
        }

        self.reconcile_channels(&ids, &mut target, net, now, out);

        for id in &ids {
            let rates = target[id];
            let changed = self
                .assignments
                .get(id)
                .map(|a| a.rate_per_class != rates)
                .unwrap_or(true);
            if changed {
                self.epoch += 1;
                let ra = RateAssignment {
                    aggregator_id: id.clone(),
                    rate_per_class: rates,
                    epoch: self.epoch,
                };
                out.events.push(OrchEvent::RateAssigned(ra.clone()));
                self.assignments.insert(id.clone(), ra.clone());
                out.assignments.push(ra);
            }
        }
    }

    /// Harvests bandwidth other aggregators are not using toward one hot
    /// class. The boost is capped by the hot aggregator's deficit, by the
    /// donors' total slack, and by the free (no-preemption) headroom on the
    /// hot aggregator's channel route; donors are never pushed below their
    /// measured ingest rate.
    fn reactive_reallocate(
        &self,
        target: &mut BTreeMap<AggregatorId, [BytesPerSec; 3]>,
        hot: &AggregatorId,
        level: QosClass,
        net: &Network,
    ) -> OrchEvent {
        let l = level.idx();
        let tc = qos_to_tc(level);
        let assigned = target[hot][l];
        let ingest = self.known[hot].ingest_rate[l];
        let deficit = ingest.saturating_sub(assigned);

        let mut donors: Vec<(AggregatorId, BytesPerSec)> = Vec::new();
        let mut slack_total = 0u64;
        for (id, md) in &self.known {
            if id == hot {
                continue;
            }
            let slack = target[id][l].saturating_sub(md.ingest_rate[l]);
            if slack > 0 {
                slack_total += slack;
                donors.push((id.clone(), slack));
            }
        }

        let headroom = self
            .routes
            .get(hot)
            .map(|r| net.path_headroom(r, tc))
            .unwrap_or(0);
        let granted = deficit.min(slack_total).min(headroom);

        let mut gives: Vec<(AggregatorId, BytesPerSec)> = Vec::new();
        if granted > 0 {
            // Proportional reduction with largest-remainder rounding; the
            // leftover bytes go to the first donors with spare slack.
            let mut assigned_sum = 0u64;
            for (id, slack) in &donors {
                let give = granted * slack / slack_total;
                assigned_sum += give;
                gives.push((id.clone(), give));
            }
            let mut remainder = granted - assigned_sum;
            for (i, (_, slack)) in donors.iter().enumerate() {
                if remainder == 0 {
                    break;
                }
                if gives[i].1 < *slack {
                    gives[i].1 += 1;
                    remainder -= 1;
                }
            }
            debug_assert_eq!(remainder, 0, "donor slack covers the grant");
            for (id, give) in &gives {
                let t = target.get_mut(id).expect("donor is known");
                t[l] -= give;
            }
            target.get_mut(hot).expect("hot is known")[l] += granted;
        }

        OrchEvent::Reallocation {
            aggregator: hot.clone(),
            level,
            deficit,
            slack: slack_total,
            headroom,
            granted,
            donors: gives,
        }
    }

    // Brings every (aggregator, class) channel to its target bandwidth.
    // Shrinks run before growths so freed space is visible to them; a denied
    // growth keeps the previous grant and caps the emitted rate at it.
    fn reconcile_channels(
        &mut self,
        ids: &[AggregatorId],
        target: &mut BTreeMap<AggregatorId, [BytesPerSec; 3]>,
        net: &mut Network,
        now: u64,
        out: &mut HandleOutcome,
    ) {
        for shrink_pass in [true, false] {
            for id in ids {
                for level in QosClass::ALL {
                    let tc = qos_to_tc(level);
                    let desired = target[id][level.idx()];
                    let current = self
                        .channels
                        .get(&(id.clone(), tc))
                        .map(|g| g.bw)
                        .unwrap_or(0);
                    if desired == current || (desired < current) != shrink_pass {
                        continue;
                    }
                    let actual = self.resize_channel(net, id, tc, desired, now, out);
                    target.get_mut(id).expect("listed")[level.idx()] = actual;
                }
            }
        }
    }

    /// Establishes, resizes, or tears down the channel backing one
    /// (aggregator, traffic class), via release-then-admit with rollback to
    /// the previous grant on denial. Returns the bandwidth now backed.
    pub fn request_channel(
        &mut self,
        net: &mut Network,
        aggregator: &str,
        tc: TrafficClass,
        bw: BytesPerSec,
        now: u64,
    ) -> BytesPerSec {
        let mut out = HandleOutcome::default();
        let actual = self.resize_channel(net, &aggregator.to_string(), tc, bw, now, &mut out);
        // Standalone calls drop the events; the simulator always goes through
        // handle_metadata, which collects them.
        actual
    }

    /// Same as [`Orchestrator::request_channel`] but collecting events.
    pub fn request_channel_with_events(
        &mut self,
        net: &mut Network,
        aggregator: &str,
        tc: TrafficClass,
        bw: BytesPerSec,
        now: u64,
    ) -> (BytesPerSec, Vec<OrchEvent>) {
        let mut out = HandleOutcome::default();
        let actual = self.resize_channel(net, &aggregator.to_string(), tc, bw, now, &mut out);
        (actual, out.events)
    }

    fn resize_channel(
        &mut self,
        net: &mut Network,
        id: &AggregatorId,
        tc: TrafficClass,
        desired: BytesPerSec,
        now: u64,
        out: &mut HandleOutcome,
    ) -> BytesPerSec {
        let key = (id.clone(), tc);
        let route = match self.routes.get(id) {
            Some(r) if !r.is_empty() => r.clone(),
            _ => return 0,
        };
        let current = self.channels.get(&key).map(|g| g.bw).unwrap_or(0);
        if desired == current {
            return current;
        }
        let lsp_id = channel_lsp_id(id, tc);
        if current > 0 {
            let freed = net
                .release_path(&route, &lsp_id)
                .expect("grant is tracked, so the LSP is on its route");
            self.channels.remove(&key);
            out.events.push(OrchEvent::ChannelReleased {
                aggregator: id.clone(),
                tc,
                freed,
            });
        }
        if desired == 0 {
            return 0;
        }
        match net
            .allocate_path(&route, tc, desired, lsp_id.clone(), now)
            .expect("route validated at setup")
        {
            Decision::Granted => {
                self.channels.insert(
                    key,
                    ChannelGrant {
                        lsp_id,
                        bw: desired,
                    },
                );
                out.events.push(OrchEvent::ChannelGranted {
                    aggregator: id.clone(),
                    tc,
                    bw: desired,
                    preempted: Vec::new(),
                });
                desired
            }
            Decision::GrantedWithPreemptions(victims) => {
                self.channels.insert(
                    key,
                    ChannelGrant {
                        lsp_id,
                        bw: desired,
                    },
                );
                for v in &victims {
                    self.handle_preempted(v, out);
                }
                out.events.push(OrchEvent::ChannelGranted {
                    aggregator: id.clone(),
                    tc,
                    bw: desired,
                    preempted: victims,
                });
                desired
            }
            Decision::Denied(_) => {
                // Roll back to the previous grant; the state the release left
                // behind still has room for it.
                if current > 0 {
                    let restored = net
                        .allocate_path(&route, tc, current, lsp_id.clone(), now)
                        .expect("route exists");
                    assert!(
                        restored.is_granted(),
                        "re-admitting the prior grant must succeed"
                    );
                    self.channels.insert(
                        key,
                        ChannelGrant {
                            lsp_id,
                            bw: current,
                        },
                    );
                }
                out.events.push(OrchEvent::ChannelDenied {
                    aggregator: id.clone(),
                    tc,
                    requested: desired,
                    kept: current,
                });
                current
            }
        }
    }

    // A preempted LSP of ours: drop the grant and cut the victim's assigned
    // rate to what remains backed (nothing). The next recompute re-requests
    // it rather than retrying immediately.
    fn handle_preempted(&mut self, lsp_id: &str, out: &mut HandleOutcome) {
        let victim = self
            .channels
            .iter()
            .find(|(_, g)| g.lsp_id == lsp_id)
            .map(|(k, _)| k.clone());
        let Some((agg, tc)) = victim else {
            return;
        };
        self.channels.remove(&(agg.clone(), tc));
        let level = crate::model::tc_to_qos(tc);
        if let Some(a) = self.assignments.get_mut(&agg) {
            a.rate_per_class[level.idx()] = 0;
        }
        out.events.push(OrchEvent::ChannelPreempted {
            aggregator: agg,
            tc,
            lsp_id: lsp_id.to_string(),
        });
    }
}

fn channel_lsp_id(aggregator: &str, tc: TrafficClass) -> LspId {
    format!("ch:{aggregator}:tc{}", tc.index())
}
