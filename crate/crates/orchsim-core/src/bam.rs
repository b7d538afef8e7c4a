//! Bandwidth allocation models (MAM, RDM, AllocTC-Sharing) with per-link LSP
//! lifecycle, loan accounting, preemption, and multi-link atomic path
//! allocation.
//!
//! A link carries three traffic-class pools sized by its bandwidth
//! constraints `bc`. MAM caps each class at its own constraint. RDM nests the
//! constraints so higher-priority classes (lower `tc` index) may consume
//! lower classes' unused share. AllocTC-Sharing (ATCS) additionally lets a
//! request borrow free space from any pool, and lets a pool's native class
//! reclaim loaned space by preempting the borrowers.
//!
//! Link state mutates only through `admit`/`release`; callers must hold
//! exclusive access per link for the duration of a mutation, and across all
//! path links for `allocate_path`. The simulation kernel provides that by
//! construction.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::model::{Bytes, BytesPerSec, LinkId, TrafficClass};

/// Which allocation model governs a link.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BamModel {
    Mam,
    Rdm,
    Atcs,
}

/// Per-link bandwidth constraints, indexed by traffic class (index 0 is the
/// highest priority).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct BandwidthConstraints {
    pub model: BamModel,
    pub bc: [BytesPerSec; 3],
}

/// A reserved channel holding `bw` bytes/second across `path`. Under ATCS the
/// reservation may be decomposed across donor pools; `draw[p]` is the amount
/// taken from pool `p` on this link. MAM and RDM always draw from the LSP's
/// own class pool only.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Lsp {
    pub id: LspId,
    pub tc: TrafficClass,
    pub bw: BytesPerSec,
    pub draw: [BytesPerSec; 3],
    pub path: Vec<LinkId>,
    pub created_at: u64,
    // Per-link admission order; larger means more recently admitted.
    seq: u64,
}

pub type LspId = String;

/// Outcome of an admission request.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Decision {
    Granted,
    /// Granted after tearing down the listed LSPs. Only ATCS preempts.
    GrantedWithPreemptions(Vec<LspId>),
    Denied(DenyReason),
}

impl Decision {
    pub fn is_granted(&self) -> bool {
        !matches!(self, Decision::Denied(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum DenyReason {
    InsufficientBandwidth { link: LinkId },
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum BamError {
    #[error("lsp `{0}` already active on link")]
    DuplicateLspId(LspId),
    #[error("lsp `{0}` not active on link")]
    UnknownLsp(LspId),
    #[error("link `{0}` does not exist")]
    UnknownLink(LinkId),
    #[error("path is empty")]
    EmptyPath,
    #[error("requested bandwidth must be positive")]
    ZeroBandwidth,
    #[error("invalid constraints: {0}")]
    InvalidConstraints(String),
}

/// Invariant violations reported by [`LinkState::check`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    CapacityExceeded,
    /// MAM: class usage above its constraint.
    ClassCapExceeded(u8),
    /// RDM: nested usage of classes >= k above the nested constraint.
    NestedCapExceeded(u8),
    /// ATCS: pool draw total above the pool constraint.
    PoolOverflow(u8),
    /// An LSP whose draw entries do not sum to its bandwidth.
    DrawMismatch(LspId),
    /// MAM/RDM: an LSP drawing outside its own class pool.
    ForeignDraw(LspId),
}

/// Admission state of one link.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LinkState {
    pub link_id: LinkId,
    pub capacity: BytesPerSec,
    pub constraints: BandwidthConstraints,
    active: BTreeMap<LspId, Lsp>,
    next_seq: u64,
}

impl LinkState {
    /// Builds a link, validating the constraint/model pairing: RDM and ATCS
    /// require `sum(bc) == capacity`; MAM requires each `bc[i] <= capacity`.
    pub fn new(
        link_id: impl Into<LinkId>,
        capacity: BytesPerSec,
        constraints: BandwidthConstraints,
    ) -> Result<Self, BamError> {
        let sum: u64 = constraints.bc.iter().sum();
        match constraints.model {
            BamModel::Mam => {
                if let Some(i) = constraints.bc.iter().position(|&b| b > capacity) {
                    return Err(BamError::InvalidConstraints(format!(
                        "bc[{i}] exceeds link capacity"
                    )));
                }
            }
            BamModel::Rdm | BamModel::Atcs => {
                if sum != capacity {
                    return Err(BamError::InvalidConstraints(format!(
                        "bc sums to {sum}, link capacity is {capacity}"
                    )));
                }
            }
        }
        Ok(LinkState {
            link_id: link_id.into(),
            capacity,
            constraints,
            active: BTreeMap::new(),
            next_seq: 0,
        })
    }

    pub fn active(&self) -> impl Iterator<Item = &Lsp> {
        self.active.values()
    }

    pub fn lsp(&self, id: &str) -> Option<&Lsp> {
        self.active.get(id)
    }

    pub fn total_reserved(&self) -> BytesPerSec {
        self.active.values().map(|l| l.bw).sum()
    }

    fn pool_usage(&self, pool: usize) -> BytesPerSec {
        self.active.values().map(|l| l.draw[pool]).sum()
    }

    fn class_usage(&self, tc: TrafficClass) -> BytesPerSec {
        self.active
            .values()
            .filter(|l| l.tc == tc)
            .map(|l| l.bw)
            .sum()
    }

    // Usage of all classes with index >= k, for the RDM nesting.
    fn nested_usage(&self, k: usize) -> BytesPerSec {
        self.active
            .values()
            .filter(|l| l.tc.idx() >= k)
            .map(|l| l.bw)
            .sum()
    }

    fn nested_cap(&self, k: usize) -> BytesPerSec {
        self.constraints.bc[k..].iter().sum()
    }

    /// Free space per pool under ATCS accounting.
    fn free_pools(&self) -> [BytesPerSec; 3] {
        let mut free = [0; 3];
        for (p, f) in free.iter_mut().enumerate() {
            *f = self.constraints.bc[p].saturating_sub(self.pool_usage(p));
        }
        free
    }

    /// Largest request the configured model would admit for `tc` without
    /// preempting anything.
    pub fn headroom(&self, tc: TrafficClass) -> BytesPerSec {
        match self.constraints.model {
            BamModel::Mam => {
                let class_room = self.constraints.bc[tc.idx()].saturating_sub(self.class_usage(tc));
                let cap_room = self.capacity.saturating_sub(self.total_reserved());
                class_room.min(cap_room)
            }
            BamModel::Rdm => (0..=tc.idx())
                .map(|k| self.nested_cap(k).saturating_sub(self.nested_usage(k)))
                .min()
                .unwrap_or(0),
            BamModel::Atcs => self.free_pools().iter().sum(),
        }
    }

    /// Requests admission of a new LSP. On any granted outcome the LSP is
    /// active and all model invariants hold; on denial the link state is
    /// untouched.
    ///
    /// ATCS fills the request from free space in preference order (own pool,
    /// then lower-priority pools ascending, then higher-priority pools from
    /// the nearest down to 0), and only then preempts loans occupying the
    /// requester's own pool: lowest-priority borrowers first, most recently
    /// admitted first within a class, never more than needed.
    pub fn admit(
        &mut self,
        tc: TrafficClass,
        bw: BytesPerSec,
        lsp_id: impl Into<LspId>,
        path: Vec<LinkId>,
        created_at: u64,
    ) -> Result<Decision, BamError> {
        let lsp_id = lsp_id.into();
        if bw == 0 {
            return Err(BamError::ZeroBandwidth);
        }
        if self.active.contains_key(&lsp_id) {
            return Err(BamError::DuplicateLspId(lsp_id));
        }

        let denied = Decision::Denied(DenyReason::InsufficientBandwidth {
            link: self.link_id.clone(),
        });

        match self.constraints.model {
            BamModel::Mam => {
                if self.class_usage(tc) + bw > self.constraints.bc[tc.idx()]
                    || self.total_reserved() + bw > self.capacity
                {
                    return Ok(denied);
                }
                self.install(tc, bw, lsp_id, own_pool_draw(tc, bw), path, created_at);
                Ok(Decision::Granted)
            }
            BamModel::Rdm => {
                for k in 0..=tc.idx() {
                    if self.nested_usage(k) + bw > self.nested_cap(k) {
                        return Ok(denied);
                    }
                }
                self.install(tc, bw, lsp_id, own_pool_draw(tc, bw), path, created_at);
                Ok(Decision::Granted)
            }
            BamModel::Atcs => {
                let free = self.free_pools();
                let free_total: u64 = free.iter().sum();
                if free_total >= bw {
                    let draw = preferred_draw(tc, bw, &free);
                    self.install(tc, bw, lsp_id, draw, path, created_at);
                    return Ok(Decision::Granted);
                }
                let shortfall = bw - free_total;
                let victims = match self.select_preemptions(tc, shortfall) {
                    Some(v) => v,
                    None => return Ok(denied),
                };
                for v in &victims {
                    self.active.remove(v);
                }
                let free = self.free_pools();
                debug_assert!(free.iter().sum::<u64>() >= bw);
                let draw = preferred_draw(tc, bw, &free);
                self.install(tc, bw, lsp_id, draw, path, created_at);
                Ok(Decision::GrantedWithPreemptions(victims))
            }
        }
    }

    // Picks the loans to tear down so that `shortfall` extra bytes/second fit.
    // Candidates are LSPs of another class drawing from pool `tc on`, taken in
    // preference order, then pruned so no victim is redundant.
    fn select_preemptions(&self, tc: TrafficClass, shortfall: BytesPerSec) -> Option<Vec<LspId>> {
        let mut candidates: Vec<&Lsp> = self
            .active
            .values()
            .filter(|l| l.tc != tc && l.draw[tc.idx()] > 0)
            .collect();
        // Lowest-priority borrower first; most recently admitted first within
        // a class.
        candidates.sort_by(|a, b| b.tc.cmp(&a.tc).then(b.seq.cmp(&a.seq)));

        let mut selected: Vec<&Lsp> = Vec::new();
        let mut reclaimed = 0u64;
        for l in candidates {
            if reclaimed >= shortfall {
                break;
            }
            // Tearing down a borrower frees its whole reservation, wherever
            // its draws sit; ATCS splitting lets the new request use all of it.
            reclaimed += l.bw;
            selected.push(l);
        }
        if reclaimed < shortfall {
            return None;
        }
        // Drop victims made redundant by later, larger ones.
        let mut kept: Vec<&Lsp> = Vec::new();
        for l in selected {
            if reclaimed - l.bw >= shortfall {
                reclaimed -= l.bw;
            } else {
                kept.push(l);
            }
        }
        Some(kept.into_iter().map(|l| l.id.clone()).collect())
    }

    fn install(
        &mut self,
        tc: TrafficClass,
        bw: BytesPerSec,
        id: LspId,
        draw: [BytesPerSec; 3],
        path: Vec<LinkId>,
        created_at: u64,
    ) {
        debug_assert_eq!(draw.iter().sum::<u64>(), bw);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.active.insert(
            id.clone(),
            Lsp {
                id,
                tc,
                bw,
                draw,
                path,
                created_at,
                seq,
            },
        );
    }

    /// Tears down an LSP and returns its freed bandwidth. Surviving loans are
    /// left untouched; freed pool space is only reused by later admissions.
    pub fn release(&mut self, lsp_id: &str) -> Result<Bytes, BamError> {
        match self.active.remove(lsp_id) {
            Some(l) => Ok(l.bw),
            None => Err(BamError::UnknownLsp(lsp_id.to_string())),
        }
    }

    /// Returns every violated model invariant; empty for any state reachable
    /// through `admit`/`release`.
    pub fn check(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.total_reserved() > self.capacity {
            out.push(Violation::CapacityExceeded);
        }
        for l in self.active.values() {
            if l.draw.iter().sum::<u64>() != l.bw {
                out.push(Violation::DrawMismatch(l.id.clone()));
            }
        }
        match self.constraints.model {
            BamModel::Mam => {
                for tc in TrafficClass::ALL {
                    if self.class_usage(tc) > self.constraints.bc[tc.idx()] {
                        out.push(Violation::ClassCapExceeded(tc.index()));
                    }
                }
                self.check_own_pool_draws(&mut out);
            }
            BamModel::Rdm => {
                for k in 0..3 {
                    if self.nested_usage(k) > self.nested_cap(k) {
                        out.push(Violation::NestedCapExceeded(k as u8));
                    }
                }
                self.check_own_pool_draws(&mut out);
            }
            BamModel::Atcs => {
                for p in 0..3 {
                    if self.pool_usage(p) > self.constraints.bc[p] {
                        out.push(Violation::PoolOverflow(p as u8));
                    }
                }
            }
        }
        out
    }

    fn check_own_pool_draws(&self, out: &mut Vec<Violation>) {
        for l in self.active.values() {
            let foreign = (0..3).any(|p| p != l.tc.idx() && l.draw[p] != 0);
            if foreign {
                out.push(Violation::ForeignDraw(l.id.clone()));
            }
        }
    }

    /// Installs an LSP without admission checks. For building states in
    /// diagnostics and tests of [`LinkState::check`].
    pub fn install_unchecked(
        &mut self,
        tc: TrafficClass,
        bw: BytesPerSec,
        draw: [BytesPerSec; 3],
        lsp_id: impl Into<LspId>,
    ) {
        let id = lsp_id.into();
        let seq = self.next_seq;
        self.next_seq += 1;
        self.active.insert(
            id.clone(),
            Lsp {
                id,
                tc,
                bw,
                draw,
                path: Vec::new(),
                created_at: 0,
                seq,
            },
        );
    }
}

fn own_pool_draw(tc: TrafficClass, bw: BytesPerSec) -> [BytesPerSec; 3] {
    let mut draw = [0; 3];
    draw[tc.idx()] = bw;
    draw
}

// Fill order: own pool, lower-priority pools ascending, then higher-priority
// pools from the nearest down to 0.
fn pool_preference(tc: TrafficClass) -> impl Iterator<Item = usize> {
    let own = tc.idx();
    std::iter::once(own).chain(own + 1..3).chain((0..own).rev())
}

fn preferred_draw(tc: TrafficClass, bw: BytesPerSec, free: &[BytesPerSec; 3]) -> [BytesPerSec; 3] {
    let mut draw = [0; 3];
    let mut remaining = bw;
    for p in pool_preference(tc) {
        let take = remaining.min(free[p]);
        draw[p] = take;
        remaining -= take;
        if remaining == 0 {
            break;
        }
    }
    debug_assert_eq!(remaining, 0, "caller must ensure the request fits");
    draw
}

/// The brokered backbone: all link states, keyed by link id.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Network {
    links: BTreeMap<LinkId, LinkState>,
}

impl Network {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_link(&mut self, link: LinkState) {
        self.links.insert(link.link_id.clone(), link);
    }

    pub fn link(&self, id: &str) -> Option<&LinkState> {
        self.links.get(id)
    }

    pub fn link_mut(&mut self, id: &str) -> Option<&mut LinkState> {
        self.links.get_mut(id)
    }

    pub fn links(&self) -> impl Iterator<Item = &LinkState> {
        self.links.values()
    }

    /// Largest request admissible on every link of `path` without preemption.
    pub fn path_headroom(&self, path: &[LinkId], tc: TrafficClass) -> BytesPerSec {
        path.iter()
            .map(|lid| self.links.get(lid).map(|l| l.headroom(tc)).unwrap_or(0))
            .min()
            .unwrap_or(0)
    }

    /// Admits an LSP on every link of `path` or on none (two-phase: tentative
    /// admissions in path order, full rollback on the first denial).
    /// Preemptions from any link are aggregated and the victims are released
    /// from all links of their own paths.
    pub fn allocate_path(
        &mut self,
        path: &[LinkId],
        tc: TrafficClass,
        bw: BytesPerSec,
        lsp_id: impl Into<LspId>,
        created_at: u64,
    ) -> Result<Decision, BamError> {
        let lsp_id = lsp_id.into();
        if path.is_empty() {
            return Err(BamError::EmptyPath);
        }
        for lid in path {
            if !self.links.contains_key(lid) {
                return Err(BamError::UnknownLink(lid.clone()));
            }
        }

        let snapshot = self.links.clone();
        let mut preempted: Vec<LspId> = Vec::new();
        for lid in path {
            let link = self.links.get_mut(lid).expect("checked above");
            match link.admit(tc, bw, lsp_id.clone(), path.to_vec(), created_at) {
                Ok(Decision::Granted) => {}
                Ok(Decision::GrantedWithPreemptions(victims)) => {
                    for v in victims {
                        self.release_everywhere(&v, lid);
                        preempted.push(v);
                    }
                }
                Ok(Decision::Denied(_)) => {
                    self.links = snapshot;
                    return Ok(Decision::Denied(DenyReason::InsufficientBandwidth {
                        link: lid.clone(),
                    }));
                }
                Err(e) => {
                    self.links = snapshot;
                    return Err(e);
                }
            }
        }
        if preempted.is_empty() {
            Ok(Decision::Granted)
        } else {
            Ok(Decision::GrantedWithPreemptions(preempted))
        }
    }

    /// Releases an LSP from every link of `path`, returning its bandwidth.
    /// Fails without touching anything if any link does not hold it.
    pub fn release_path(&mut self, path: &[LinkId], lsp_id: &str) -> Result<Bytes, BamError> {
        for lid in path {
            let link = self
                .links
                .get(lid)
                .ok_or_else(|| BamError::UnknownLink(lid.clone()))?;
            if link.lsp(lsp_id).is_none() {
                return Err(BamError::UnknownLsp(lsp_id.to_string()));
            }
        }
        let mut freed = 0;
        for lid in path {
            freed = self
                .links
                .get_mut(lid)
                .expect("checked above")
                .release(lsp_id)?;
        }
        Ok(freed)
    }

    // Removes a preempted LSP from every link except `already_removed`, where
    // the preempting admission has dropped it.
    fn release_everywhere(&mut self, lsp_id: &str, already_removed: &LinkId) {
        let holding: Vec<LinkId> = self
            .links
            .values()
            .filter(|l| &l.link_id != already_removed && l.lsp(lsp_id).is_some())
            .map(|l| l.link_id.clone())
            .collect();
        for lid in holding {
            let _ = self
                .links
                .get_mut(&lid)
                .expect("listed above")
                .release(lsp_id);
        }
    }

    /// Runs [`LinkState::check`] on every link.
    pub fn check_all(&self) -> Vec<(LinkId, Violation)> {
        self.links
            .values()
            .flat_map(|l| l.check().into_iter().map(move |v| (l.link_id.clone(), v)))
            .collect()
    }
}
