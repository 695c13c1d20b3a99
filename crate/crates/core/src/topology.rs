// SPDX-License-Identifier: Apache-2.0

//! The Topology Manager's authoritative graph.
//!
//! The TM owns every identifier in the deployment: it hands out NIDs, LIDs
//! and iLIDs, keeps the directed link graph, computes each node's TMFID
//! together with the explicit link list it was built from, selects
//! load-aware paths for traffic engineering, and repairs managed paths when
//! links fail.
//!
//! Allocations are two-phase. [`TopologyGraph::allocate_resources`] creates
//! a tentative node plus both directed links of its attachment;
//! [`TopologyGraph::commit_grant`] makes it permanent and
//! [`TopologyGraph::expire_grant`] rolls it back.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::{self, Write as _};

use rand::Rng;
use thiserror::Error;

use crate::fid::{fid_or, new_lid, Fid, FidError, FidParams, LidRegistry, LinkId};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
pub struct NodeId(pub u64);

impl NodeId {
    pub const UNASSIGNED: NodeId = NodeId(0);
    pub const TM: NodeId = NodeId(1);
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum NodeKind {
    Tm,
    IcnNode,
    SdnSwitch,
}

impl NodeKind {
    pub fn code(self) -> u8 {
        match self {
            NodeKind::Tm => 0,
            NodeKind::IcnNode => 1,
            NodeKind::SdnSwitch => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(NodeKind::Tm),
            1 => Some(NodeKind::IcnNode),
            2 => Some(NodeKind::SdnSwitch),
            _ => None,
        }
    }

    pub fn has_ilid(self) -> bool {
        self != NodeKind::SdnSwitch
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectedLink {
    pub src: NodeId,
    pub dst: NodeId,
    pub lid: LinkId,
    /// One-way delay in simulated microseconds.
    pub delay_us: u64,
    /// Utilization in `[0, 1]` as last reported by the controller.
    pub load: f64,
    pub up: bool,
}

impl DirectedLink {
    pub fn key(&self) -> (NodeId, NodeId) {
        (self.src, self.dst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeStatus {
    Tentative,
    Committed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub nid: NodeId,
    pub kind: NodeKind,
    /// Present iff the node is not an SDN switch.
    pub ilid: Option<LinkId>,
    /// Cached TMFID; `None` until committed or while disconnected.
    pub tmfid: Option<Fid>,
    /// Links from the node to the TM that `tmfid` was built from.
    pub managed_path: Vec<DirectedLink>,
    pub status: NodeStatus,
}

impl NodeRecord {
    pub fn is_committed(&self) -> bool {
        self.status == NodeStatus::Committed
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceGrant {
    pub nid: NodeId,
    pub attach: NodeId,
    /// LID of the downstream link `attach -> nid`; the one carried in offers.
    pub lid: LinkId,
    /// LID of the upstream link `nid -> attach`.
    pub upstream_lid: LinkId,
    pub ilid: Option<LinkId>,
}

impl ResourceGrant {
    /// Number of identifiers drawn for this grant.
    pub fn lid_count(&self) -> usize {
        2 + usize::from(self.ilid.is_some())
    }
}

/// Link change reported to the TM. Events address the bidirectional pair
/// `a <-> b`.
#[derive(Debug, Clone, PartialEq)]
pub enum LinkEvent {
    Add { a: NodeId, b: NodeId },
    Remove { a: NodeId, b: NodeId },
    Update { a: NodeId, b: NodeId, load: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum RepairAction {
    /// The node's managed path and TMFID changed.
    Reroute {
        nid: NodeId,
        tmfid: Fid,
        path: Vec<DirectedLink>,
    },
    /// No path to the TM is left; the cached TMFID was dropped.
    Disconnected { nid: NodeId },
    /// `node` must forward `lid` towards `next_hop`.
    InstallRule {
        node: NodeId,
        next_hop: NodeId,
        lid: LinkId,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkStat {
    pub lid: LinkId,
    pub tx_bytes: u64,
    pub utilization: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkStatsReport {
    pub entries: Vec<LinkStat>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("unknown attachment point {0}")]
    UnknownAttachPoint(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("no pending grant for {0}")]
    NoPendingGrant(NodeId),
    #[error("{dst} unreachable from {src}")]
    Unreachable { src: NodeId, dst: NodeId },
    #[error("unknown link")]
    UnknownLink,
    #[error("cannot allocate a node of kind {0:?}")]
    InvalidKind(NodeKind),
    #[error("link identifier space exhausted")]
    Exhausted,
    #[error(transparent)]
    Fid(FidError),
}

impl From<FidError> for TopologyError {
    fn from(e: FidError) -> Self {
        match e {
            FidError::Exhausted => TopologyError::Exhausted,
            other => TopologyError::Fid(other),
        }
    }
}

type LinkKey = (NodeId, NodeId);

#[derive(Debug, Clone)]
pub struct TopologyGraph {
    params: FidParams,
    nodes: BTreeMap<NodeId, NodeRecord>,
    links: BTreeMap<LinkKey, DirectedLink>,
    out_adj: BTreeMap<NodeId, BTreeSet<NodeId>>,
    in_adj: BTreeMap<NodeId, BTreeSet<NodeId>>,
    lid_index: HashMap<LinkId, LinkKey>,
    registry: LidRegistry,
    pending: BTreeMap<NodeId, ResourceGrant>,
    next_nid: u64,
    free_nids: BTreeSet<u64>,
}

impl TopologyGraph {
    /// A graph holding only the TM (NID 1) with a freshly drawn iLID.
    pub fn new<R: Rng + ?Sized>(params: FidParams, rng: &mut R) -> Result<Self, TopologyError> {
        params.validate()?;
        let mut registry = LidRegistry::new();
        let ilid = new_lid(rng, &mut registry, &params)?;
        let mut nodes = BTreeMap::new();
        nodes.insert(
            NodeId::TM,
            NodeRecord {
                nid: NodeId::TM,
                kind: NodeKind::Tm,
                ilid: Some(ilid),
                tmfid: Some(Fid::empty(params.m)),
                managed_path: Vec::new(),
                status: NodeStatus::Committed,
            },
        );
        Ok(TopologyGraph {
            params,
            nodes,
            links: BTreeMap::new(),
            out_adj: BTreeMap::new(),
            in_adj: BTreeMap::new(),
            lid_index: HashMap::new(),
            registry,
            pending: BTreeMap::new(),
            next_nid: 2,
            free_nids: BTreeSet::new(),
        })
    }

    pub fn params(&self) -> &FidParams {
        &self.params
    }

    pub fn tm(&self) -> NodeId {
        NodeId::TM
    }

    pub fn node(&self, nid: NodeId) -> Option<&NodeRecord> {
        self.nodes.get(&nid)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeRecord> {
        self.nodes.values()
    }

    pub fn links(&self) -> impl Iterator<Item = &DirectedLink> {
        self.links.values()
    }

    pub fn link(&self, src: NodeId, dst: NodeId) -> Option<&DirectedLink> {
        self.links.get(&(src, dst))
    }

    pub fn link_by_lid(&self, lid: &LinkId) -> Option<&DirectedLink> {
        self.lid_index.get(lid).and_then(|k| self.links.get(k))
    }

    /// Outgoing links of `nid`, in destination order.
    pub fn out_links(&self, nid: NodeId) -> impl Iterator<Item = &DirectedLink> {
        self.out_adj
            .get(&nid)
            .into_iter()
            .flatten()
            .filter_map(move |dst| self.links.get(&(nid, *dst)))
    }

    pub fn registry(&self) -> &LidRegistry {
        &self.registry
    }

    pub fn pending_grant(&self, nid: NodeId) -> Option<&ResourceGrant> {
        self.pending.get(&nid)
    }

    pub fn set_link_delay(&mut self, src: NodeId, dst: NodeId, delay_us: u64) -> Result<(), TopologyError> {
        let link = self.links.get_mut(&(src, dst)).ok_or(TopologyError::UnknownLink)?;
        link.delay_us = delay_us;
        Ok(())
    }

    fn is_committed(&self, nid: NodeId) -> bool {
        self.nodes.get(&nid).is_some_and(NodeRecord::is_committed)
    }

    fn take_nid(&mut self) -> NodeId {
        if let Some(n) = self.free_nids.pop_first() {
            return NodeId(n);
        }
        let n = self.next_nid;
        self.next_nid += 1;
        NodeId(n)
    }

    fn insert_link(&mut self, src: NodeId, dst: NodeId, lid: LinkId) {
        self.lid_index.insert(lid.clone(), (src, dst));
        self.links.insert(
            (src, dst),
            DirectedLink {
                src,
                dst,
                lid,
                delay_us: 0,
                load: 0.0,
                up: true,
            },
        );
        self.out_adj.entry(src).or_default().insert(dst);
        self.in_adj.entry(dst).or_default().insert(src);
    }

    fn drop_link(&mut self, src: NodeId, dst: NodeId) {
        if let Some(link) = self.links.remove(&(src, dst)) {
            self.lid_index.remove(&link.lid);
            self.registry.remove(&link.lid);
        }
        if let Some(s) = self.out_adj.get_mut(&src) {
            s.remove(&dst);
        }
        if let Some(s) = self.in_adj.get_mut(&dst) {
            s.remove(&src);
        }
    }

    /// Allocates a fresh NID, both link LIDs of the attachment and, unless
    /// the requester is a switch, an iLID. The grant stays tentative until
    /// [`commit_grant`](Self::commit_grant).
    pub fn allocate_resources<R: Rng + ?Sized>(
        &mut self,
        kind: NodeKind,
        attach: NodeId,
        rng: &mut R,
    ) -> Result<ResourceGrant, TopologyError> {
        if kind == NodeKind::Tm {
            return Err(TopologyError::InvalidKind(kind));
        }
        if !self.is_committed(attach) {
            return Err(TopologyError::UnknownAttachPoint(attach));
        }
        let params = self.params;
        let lid = new_lid(rng, &mut self.registry, &params)?;
        let upstream_lid = match new_lid(rng, &mut self.registry, &params) {
            Ok(l) => l,
            Err(e) => {
                self.registry.remove(&lid);
                return Err(e.into());
            }
        };
        let ilid = if kind.has_ilid() {
            match new_lid(rng, &mut self.registry, &params) {
                Ok(l) => Some(l),
                Err(e) => {
                    self.registry.remove(&lid);
                    self.registry.remove(&upstream_lid);
                    return Err(e.into());
                }
            }
        } else {
            None
        };
        let nid = self.take_nid();
        self.nodes.insert(
            nid,
            NodeRecord {
                nid,
                kind,
                ilid: ilid.clone(),
                tmfid: None,
                managed_path: Vec::new(),
                status: NodeStatus::Tentative,
            },
        );
        self.insert_link(attach, nid, lid.clone());
        self.insert_link(nid, attach, upstream_lid.clone());
        let grant = ResourceGrant {
            nid,
            attach,
            lid,
            upstream_lid,
            ilid,
        };
        self.pending.insert(nid, grant.clone());
        Ok(grant)
    }

    /// Makes a tentative grant permanent and caches the node's TMFID.
    pub fn commit_grant(&mut self, nid: NodeId) -> Result<Fid, TopologyError> {
        if !self.pending.contains_key(&nid) {
            return Err(TopologyError::NoPendingGrant(nid));
        }
        let path = self.shortest_path(nid, NodeId::TM)?;
        self.pending.remove(&nid);
        let fid = fid_or(self.params.m, path.iter().map(|l| &l.lid))?;
        let rec = self.nodes.get_mut(&nid).expect("pending node has a record");
        rec.status = NodeStatus::Committed;
        rec.tmfid = Some(fid.clone());
        rec.managed_path = path;
        Ok(fid)
    }

    /// Abandons a tentative grant, returning all its identifiers.
    pub fn expire_grant(&mut self, nid: NodeId) -> Result<(), TopologyError> {
        let grant = self
            .pending
            .remove(&nid)
            .ok_or(TopologyError::NoPendingGrant(nid))?;
        self.drop_link(grant.attach, nid);
        self.drop_link(nid, grant.attach);
        if let Some(ilid) = &grant.ilid {
            self.registry.remove(ilid);
        }
        self.nodes.remove(&nid);
        self.out_adj.remove(&nid);
        self.in_adj.remove(&nid);
        if nid.0 + 1 == self.next_nid {
            self.next_nid -= 1;
        } else {
            self.free_nids.insert(nid.0);
        }
        Ok(())
    }

    fn check_endpoints(&self, src: NodeId, dst: NodeId) -> Result<(), TopologyError> {
        for n in [src, dst] {
            if !self.nodes.contains_key(&n) {
                return Err(TopologyError::UnknownNode(n));
            }
        }
        Ok(())
    }

    /// Minimum-hop path over links accepted by `usable`. Among equal-length
    /// paths the lexicographically smallest sequence of intermediate NIDs
    /// wins. Only committed nodes may appear as intermediates.
    fn lex_shortest<F>(&self, src: NodeId, dst: NodeId, usable: F) -> Option<Vec<LinkKey>>
    where
        F: Fn(&DirectedLink) -> bool,
    {
        if src == dst {
            return Some(Vec::new());
        }
        // Hop distance of every node to dst, over reversed usable links.
        let mut dist: HashMap<NodeId, usize> = HashMap::new();
        let mut queue = VecDeque::new();
        dist.insert(dst, 0);
        queue.push_back(dst);
        while let Some(v) = queue.pop_front() {
            let d = dist[&v];
            for &u in self.in_adj.get(&v).into_iter().flatten() {
                if dist.contains_key(&u) {
                    continue;
                }
                let link = &self.links[&(u, v)];
                if !link.up || !usable(link) {
                    continue;
                }
                if u == src {
                    dist.insert(u, d + 1);
                } else if self.is_committed(u) {
                    dist.insert(u, d + 1);
                    queue.push_back(u);
                }
            }
            if dist.contains_key(&src) {
                break;
            }
        }
        let mut remaining = *dist.get(&src)?;
        let mut path = Vec::with_capacity(remaining);
        let mut cur = src;
        while cur != dst {
            let next = self.out_adj[&cur]
                .iter()
                .copied()
                .find(|n| {
                    let link = &self.links[&(cur, *n)];
                    link.up && usable(link) && dist.get(n) == Some(&(remaining - 1))
                })
                .expect("a predecessor on a shortest path always has a next hop");
            path.push((cur, next));
            cur = next;
            remaining -= 1;
        }
        Some(path)
    }

    fn resolve(&self, keys: Vec<LinkKey>) -> Vec<DirectedLink> {
        keys.into_iter().map(|k| self.links[&k].clone()).collect()
    }

    /// Deterministic minimum-hop path from `src` to `dst`.
    pub fn shortest_path(&self, src: NodeId, dst: NodeId) -> Result<Vec<DirectedLink>, TopologyError> {
        self.check_endpoints(src, dst)?;
        self.lex_shortest(src, dst, |_| true)
            .map(|keys| self.resolve(keys))
            .ok_or(TopologyError::Unreachable { src, dst })
    }

    /// Load-aware path: minimizes the largest link load on the path, then
    /// hop count, then the intermediate NID sequence.
    pub fn te_select_path(&self, src: NodeId, dst: NodeId) -> Result<Vec<DirectedLink>, TopologyError> {
        self.check_endpoints(src, dst)?;
        if src == dst {
            return Ok(Vec::new());
        }
        let mut thresholds: Vec<f64> = self
            .links
            .values()
            .filter(|l| l.up)
            .map(|l| l.load)
            .collect();
        thresholds.sort_by(f64::total_cmp);
        thresholds.dedup();
        // Restricting the graph to links with load <= t leaves only paths
        // whose bottleneck is at most t; the first t that connects src to
        // dst is the optimal bottleneck.
        for t in thresholds {
            if let Some(keys) = self.lex_shortest(src, dst, |l| l.load <= t) {
                return Ok(self.resolve(keys));
            }
        }
        Err(TopologyError::Unreachable { src, dst })
    }

    /// OR of the LIDs on the node's path to the TM; refreshes the cached
    /// TMFID and managed path of a committed node.
    pub fn compute_tmfid(&mut self, nid: NodeId) -> Result<Fid, TopologyError> {
        if !self.nodes.contains_key(&nid) {
            return Err(TopologyError::UnknownNode(nid));
        }
        let path = self.shortest_path(nid, NodeId::TM)?;
        let fid = fid_or(self.params.m, path.iter().map(|l| &l.lid))?;
        let rec = self.nodes.get_mut(&nid).expect("checked above");
        if rec.is_committed() {
            rec.tmfid = Some(fid.clone());
            rec.managed_path = path;
        }
        Ok(fid)
    }

    /// FID of the downstream path from the TM to `nid`.
    pub fn fid_from_tm(&self, nid: NodeId) -> Result<Fid, TopologyError> {
        self.path_fid(NodeId::TM, nid)
    }

    pub fn path_fid(&self, src: NodeId, dst: NodeId) -> Result<Fid, TopologyError> {
        let path = self.shortest_path(src, dst)?;
        Ok(fid_or(self.params.m, path.iter().map(|l| &l.lid))?)
    }

    fn path_uses(path: &[DirectedLink], a: NodeId, b: NodeId) -> bool {
        path.iter().any(|l| l.key() == (a, b) || l.key() == (b, a))
    }

    /// Re-derives the managed path of one committed node, reporting a
    /// repair when it changed.
    fn refresh(&mut self, nid: NodeId) -> Option<RepairAction> {
        let old: Vec<LinkKey> = self.nodes[&nid].managed_path.iter().map(|l| l.key()).collect();
        let had_fid = self.nodes[&nid].tmfid.is_some();
        match self.lex_shortest(nid, NodeId::TM, |_| true) {
            Some(keys) => {
                if had_fid && keys == old {
                    return None;
                }
                let path = self.resolve(keys);
                let fid = fid_or(self.params.m, path.iter().map(|l| &l.lid))
                    .expect("all LIDs share the deployment width");
                let rec = self.nodes.get_mut(&nid).expect("refreshing a known node");
                rec.tmfid = Some(fid.clone());
                rec.managed_path = path.clone();
                Some(RepairAction::Reroute {
                    nid,
                    tmfid: fid,
                    path,
                })
            }
            None => {
                let rec = self.nodes.get_mut(&nid).expect("refreshing a known node");
                if !had_fid {
                    return None;
                }
                rec.tmfid = None;
                rec.managed_path.clear();
                Some(RepairAction::Disconnected { nid })
            }
        }
    }

    fn committed_non_tm(&self) -> Vec<NodeId> {
        self.nodes
            .values()
            .filter(|r| r.is_committed() && r.kind != NodeKind::Tm)
            .map(|r| r.nid)
            .collect()
    }

    /// Applies a link change and returns what the control plane must do.
    ///
    /// `Remove` keeps the LIDs reserved so that a later `Add` of the same
    /// pair restores the original identifiers. Nodes affected by a removal
    /// are found from the stored link lists, never through Bloom membership
    /// tests. `Add` draws fresh LIDs from `rng` for a pair never seen before.
    pub fn handle_link_event<R: Rng + ?Sized>(
        &mut self,
        event: &LinkEvent,
        rng: &mut R,
    ) -> Result<Vec<RepairAction>, TopologyError> {
        match *event {
            LinkEvent::Add { a, b } => self.link_add(a, b, rng),
            LinkEvent::Remove { a, b } => self.link_remove(a, b),
            LinkEvent::Update { a, b, load } => {
                if !self.links.contains_key(&(a, b)) {
                    return Err(TopologyError::UnknownLink);
                }
                let load = load.clamp(0.0, 1.0);
                for key in [(a, b), (b, a)] {
                    if let Some(l) = self.links.get_mut(&key) {
                        l.load = load;
                    }
                }
                Ok(Vec::new())
            }
        }
    }

    fn link_add<R: Rng + ?Sized>(
        &mut self,
        a: NodeId,
        b: NodeId,
        rng: &mut R,
    ) -> Result<Vec<RepairAction>, TopologyError> {
        for n in [a, b] {
            if !self.is_committed(n) {
                return Err(TopologyError::UnknownNode(n));
            }
        }
        if a == b {
            return Err(TopologyError::UnknownLink);
        }
        let known = self.links.contains_key(&(a, b)) && self.links.contains_key(&(b, a));
        if known {
            if self.links[&(a, b)].up && self.links[&(b, a)].up {
                return Ok(Vec::new());
            }
            for key in [(a, b), (b, a)] {
                self.links.get_mut(&key).expect("known pair").up = true;
            }
        } else {
            let params = self.params;
            let ab = new_lid(rng, &mut self.registry, &params)?;
            let ba = match new_lid(rng, &mut self.registry, &params) {
                Ok(l) => l,
                Err(e) => {
                    self.registry.remove(&ab);
                    return Err(e.into());
                }
            };
            self.insert_link(a, b, ab);
            self.insert_link(b, a, ba);
        }
        let mut actions = vec![
            RepairAction::InstallRule {
                node: a,
                next_hop: b,
                lid: self.links[&(a, b)].lid.clone(),
            },
            RepairAction::InstallRule {
                node: b,
                next_hop: a,
                lid: self.links[&(b, a)].lid.clone(),
            },
        ];
        for nid in self.committed_non_tm() {
            actions.extend(self.refresh(nid));
        }
        Ok(actions)
    }

    fn link_remove(&mut self, a: NodeId, b: NodeId) -> Result<Vec<RepairAction>, TopologyError> {
        if !self.links.contains_key(&(a, b)) {
            return Err(TopologyError::UnknownLink);
        }
        for key in [(a, b), (b, a)] {
            if let Some(l) = self.links.get_mut(&key) {
                l.up = false;
            }
        }
        let affected: Vec<NodeId> = self
            .nodes
            .values()
            .filter(|r| r.is_committed() && Self::path_uses(&r.managed_path, a, b))
            .map(|r| r.nid)
            .collect();
        Ok(affected.into_iter().filter_map(|nid| self.refresh(nid)).collect())
    }

    /// Stores reported utilizations as link loads. The report is applied
    /// only if every LID in it names a known link.
    pub fn record_stats(&mut self, report: &LinkStatsReport) -> Result<(), TopologyError> {
        let keys = report
            .entries
            .iter()
            .map(|e| self.lid_index.get(&e.lid).copied().ok_or(TopologyError::UnknownLink))
            .collect::<Result<Vec<_>, _>>()?;
        for (key, entry) in keys.into_iter().zip(&report.entries) {
            let link = self.links.get_mut(&key).expect("indexed link exists");
            link.load = entry.utilization.clamp(0.0, 1.0);
        }
        Ok(())
    }

    /// Checks the structural invariants of the graph, returning a
    /// description of the first violation.
    pub fn validate(&self) -> Result<(), String> {
        let mut expected = LidRegistry::new();
        for link in self.links.values() {
            for n in [link.src, link.dst] {
                if !self.nodes.contains_key(&n) {
                    return Err(format!("link {}->{} has unknown endpoint {n}", link.src, link.dst));
                }
            }
            if !expected.insert(link.lid.clone()) {
                return Err(format!("duplicate LID {}", link.lid));
            }
        }
        for rec in self.nodes.values() {
            if rec.ilid.is_some() != rec.kind.has_ilid() {
                return Err(format!("node {} has an iLID mismatch for {:?}", rec.nid, rec.kind));
            }
            if let Some(ilid) = &rec.ilid {
                if !expected.insert(ilid.clone()) {
                    return Err(format!("duplicate iLID {ilid}"));
                }
            }
            if !rec.is_committed() || rec.kind == NodeKind::Tm {
                continue;
            }
            let Some(tmfid) = &rec.tmfid else {
                if !rec.managed_path.is_empty() {
                    return Err(format!("node {} has a path but no TMFID", rec.nid));
                }
                continue;
            };
            let mut cur = rec.nid;
            for l in &rec.managed_path {
                let live = self.links.get(&l.key());
                if l.src != cur || live.is_none_or(|x| !x.up || x.lid != l.lid) {
                    return Err(format!("node {} has a broken managed path", rec.nid));
                }
                cur = l.dst;
            }
            if cur != NodeId::TM {
                return Err(format!("managed path of {} does not end at the TM", rec.nid));
            }
            let fid = fid_or(self.params.m, rec.managed_path.iter().map(|l| &l.lid))
                .map_err(|e| e.to_string())?;
            if &fid != tmfid {
                return Err(format!("cached TMFID of {} is stale", rec.nid));
            }
        }
        if expected != self.registry {
            return Err("registry differs from the set of live LIDs and iLIDs".into());
        }
        Ok(())
    }

    /// Plain-text dump: one line per node, then one line per directed link
    /// with its LID in hex.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# nodes: nid kind status ilid tmfid");
        for r in self.nodes.values() {
            let _ = writeln!(
                out,
                "node {} {:?} {:?} {} {}",
                r.nid,
                r.kind,
                r.status,
                r.ilid.as_ref().map_or_else(|| "-".to_string(), |l| l.to_string()),
                r.tmfid.as_ref().map_or_else(|| "-".to_string(), |f| f.to_string()),
            );
        }
        let _ = writeln!(out, "# links: src dst state load lid");
        for l in self.links.values() {
            let _ = writeln!(
                out,
                "link {} {} {} {:.3} {}",
                l.src,
                l.dst,
                if l.up { "up" } else { "down" },
                l.load,
                l.lid
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    fn graph(rng: &mut ChaCha8Rng) -> TopologyGraph {
        TopologyGraph::new(FidParams::default(), rng).unwrap()
    }

    fn attach(g: &mut TopologyGraph, kind: NodeKind, at: NodeId, rng: &mut ChaCha8Rng) -> NodeId {
        let grant = g.allocate_resources(kind, at, rng).unwrap();
        g.commit_grant(grant.nid).unwrap();
        grant.nid
    }

    fn keys(path: &[DirectedLink]) -> Vec<(u64, u64)> {
        path.iter().map(|l| (l.src.0, l.dst.0)).collect()
    }

    fn lid(g: &TopologyGraph, a: NodeId, b: NodeId) -> LinkId {
        g.link(a, b).unwrap().lid.clone()
    }

    fn set_load(g: &mut TopologyGraph, a: NodeId, b: NodeId, load: f64) {
        let report = LinkStatsReport {
            entries: vec![LinkStat {
                lid: lid(g, a, b),
                tx_bytes: 0,
                utilization: load,
            }],
        };
        g.record_stats(&report).unwrap();
    }

    /// TM <- B(2), TM <- C(3), A(4) attached to B, extra link A-C.
    fn diamond(r: &mut ChaCha8Rng) -> (TopologyGraph, NodeId, NodeId, NodeId) {
        let mut g = graph(r);
        let b = attach(&mut g, NodeKind::SdnSwitch, NodeId::TM, r);
        let c = attach(&mut g, NodeKind::SdnSwitch, NodeId::TM, r);
        let a = attach(&mut g, NodeKind::SdnSwitch, b, r);
        g.handle_link_event(&LinkEvent::Add { a, b: c }, r).unwrap();
        (g, a, b, c)
    }

    #[test]
    fn allocate_icn_node() {
        let mut r = rng();
        let mut g = graph(&mut r);
        let s = attach(&mut g, NodeKind::SdnSwitch, NodeId::TM, &mut r);
        let grant = g.allocate_resources(NodeKind::IcnNode, s, &mut r).unwrap();
        assert!(grant.nid.0 >= 2);
        assert!(grant.ilid.is_some());
        assert_eq!(g.link(s, grant.nid).unwrap().lid, grant.lid);
        assert_eq!(g.link(grant.nid, s).unwrap().lid, grant.upstream_lid);
        assert_eq!(g.node(grant.nid).unwrap().status, NodeStatus::Tentative);
        g.validate().unwrap();
    }

    #[test]
    fn allocate_switch_has_no_ilid() {
        let mut r = rng();
        let mut g = graph(&mut r);
        let s = attach(&mut g, NodeKind::SdnSwitch, NodeId::TM, &mut r);
        let grant = g.allocate_resources(NodeKind::SdnSwitch, s, &mut r).unwrap();
        assert!(grant.ilid.is_none());
        assert_eq!(grant.lid_count(), 2);
    }

    #[test]
    fn allocate_unknown_attach_point() {
        let mut r = rng();
        let mut g = graph(&mut r);
        assert_eq!(
            g.allocate_resources(NodeKind::IcnNode, NodeId(999), &mut r),
            Err(TopologyError::UnknownAttachPoint(NodeId(999)))
        );
        // A tentative node is not a valid attachment point either.
        let t = g.allocate_resources(NodeKind::SdnSwitch, NodeId::TM, &mut r).unwrap();
        assert_eq!(
            g.allocate_resources(NodeKind::IcnNode, t.nid, &mut r),
            Err(TopologyError::UnknownAttachPoint(t.nid))
        );
    }

    #[test]
    fn allocate_exhausted() {
        let mut r = rng();
        let params = FidParams::new(8, 4).unwrap(); // C(8,4) = 70 LIDs
        let mut g = TopologyGraph::new(params, &mut r).unwrap();
        let mut err = None;
        for _ in 0..40 {
            match g.allocate_resources(NodeKind::IcnNode, NodeId::TM, &mut r) {
                Ok(grant) => {
                    g.commit_grant(grant.nid).unwrap();
                }
                Err(e) => {
                    err = Some(e);
                    break;
                }
            }
        }
        assert_eq!(err, Some(TopologyError::Exhausted));
        g.validate().unwrap();
    }

    #[test]
    fn commit_lifecycle() {
        let mut r = rng();
        let mut g = graph(&mut r);
        let grant = g.allocate_resources(NodeKind::IcnNode, NodeId::TM, &mut r).unwrap();
        let fid = g.commit_grant(grant.nid).unwrap();
        let rec = g.node(grant.nid).unwrap();
        assert!(rec.is_committed());
        assert_eq!(rec.tmfid.as_ref(), Some(&fid));
        assert_eq!(
            g.commit_grant(grant.nid),
            Err(TopologyError::NoPendingGrant(grant.nid))
        );
        assert_eq!(
            g.commit_grant(NodeId(77)),
            Err(TopologyError::NoPendingGrant(NodeId(77)))
        );
        g.validate().unwrap();
    }

    #[test]
    fn expire_restores_registry() {
        let mut r = rng();
        let mut g = graph(&mut r);
        let s = attach(&mut g, NodeKind::SdnSwitch, NodeId::TM, &mut r);
        let before = g.registry().clone();
        let grant = g.allocate_resources(NodeKind::IcnNode, s, &mut r).unwrap();
        g.expire_grant(grant.nid).unwrap();
        assert_eq!(g.registry(), &before);
        assert!(g.node(grant.nid).is_none());
        assert!(g.link(s, grant.nid).is_none());
        assert_eq!(
            g.expire_grant(NodeId(55)),
            Err(TopologyError::NoPendingGrant(NodeId(55)))
        );
        g.validate().unwrap();
    }

    #[test]
    fn allocate_expire_allocate_keeps_registry_consistent() {
        let mut r = rng();
        let mut g = graph(&mut r);
        let s = attach(&mut g, NodeKind::SdnSwitch, NodeId::TM, &mut r);
        let first = g.allocate_resources(NodeKind::IcnNode, s, &mut r).unwrap();
        g.expire_grant(first.nid).unwrap();
        let second = g.allocate_resources(NodeKind::IcnNode, s, &mut r).unwrap();
        // The NID is recycled; the LIDs come from the advanced rng stream.
        assert_eq!(first.nid, second.nid);
        g.commit_grant(second.nid).unwrap();
        g.validate().unwrap();
        assert_eq!(g.registry().len(), 1 + 2 + 3);
    }

    #[test]
    fn shortest_path_examples() {
        let mut r = rng();
        let mut g = graph(&mut r);
        let b = attach(&mut g, NodeKind::SdnSwitch, NodeId::TM, &mut r);
        let a = attach(&mut g, NodeKind::SdnSwitch, b, &mut r);
        assert!(g.shortest_path(a, a).unwrap().is_empty());
        assert_eq!(keys(&g.shortest_path(a, NodeId::TM).unwrap()), vec![(3, 2), (2, 1)]);
        assert!(matches!(
            g.shortest_path(a, NodeId(40)),
            Err(TopologyError::UnknownNode(_))
        ));
    }

    #[test]
    fn shortest_path_diamond_tie_break() {
        let mut r = rng();
        let (g, a, b, _c) = diamond(&mut r);
        let path = g.shortest_path(a, NodeId::TM).unwrap();
        assert_eq!(keys(&path), vec![(a.0, b.0), (b.0, 1)]);
    }

    #[test]
    fn tmfid_examples() {
        let mut r = rng();
        let mut g = graph(&mut r);
        assert!(g.compute_tmfid(NodeId::TM).unwrap().is_empty());
        let b = attach(&mut g, NodeKind::SdnSwitch, NodeId::TM, &mut r);
        let one_hop = g.compute_tmfid(b).unwrap();
        assert_eq!(one_hop.bits(), lid(&g, b, NodeId::TM).bits());
        let a = attach(&mut g, NodeKind::IcnNode, b, &mut r);
        let mut expected = lid(&g, a, b).bits().clone();
        expected.or_assign(lid(&g, b, NodeId::TM).bits()).unwrap();
        assert_eq!(g.compute_tmfid(a).unwrap().bits(), &expected);
    }

    #[test]
    fn te_all_zero_loads_matches_shortest() {
        let mut r = rng();
        let (g, a, _, _) = diamond(&mut r);
        assert_eq!(
            g.te_select_path(a, NodeId::TM).unwrap(),
            g.shortest_path(a, NodeId::TM).unwrap()
        );
    }

    #[test]
    fn te_diamond_prefers_low_bottleneck() {
        let mut r = rng();
        let (mut g, a, b, c) = diamond(&mut r);
        set_load(&mut g, a, b, 0.9);
        set_load(&mut g, b, NodeId::TM, 0.1);
        set_load(&mut g, a, c, 0.2);
        set_load(&mut g, c, NodeId::TM, 0.2);
        let path = g.te_select_path(a, NodeId::TM).unwrap();
        assert_eq!(keys(&path), vec![(a.0, c.0), (c.0, 1)]);
    }

    #[test]
    fn te_equal_bottleneck_prefers_fewer_hops() {
        let mut r = rng();
        let mut g = graph(&mut r);
        let s1 = attach(&mut g, NodeKind::SdnSwitch, NodeId::TM, &mut r);
        let s2 = attach(&mut g, NodeKind::SdnSwitch, s1, &mut r);
        let a = attach(&mut g, NodeKind::SdnSwitch, s2, &mut r);
        g.handle_link_event(&LinkEvent::Add { a, b: NodeId::TM }, &mut r).unwrap();
        for (x, y) in [(a, s2), (s2, s1), (s1, NodeId::TM), (a, NodeId::TM)] {
            set_load(&mut g, x, y, 0.5);
        }
        assert_eq!(keys(&g.te_select_path(a, NodeId::TM).unwrap()), vec![(a.0, 1)]);
    }

    #[test]
    fn stats_steer_te() {
        let mut r = rng();
        let (mut g, a, b, c) = diamond(&mut r);
        set_load(&mut g, a, b, 0.5);
        set_load(&mut g, a, c, 0.3);
        let path = g.te_select_path(a, NodeId::TM).unwrap();
        assert_eq!(keys(&path), vec![(a.0, c.0), (c.0, 1)]);
    }

    #[test]
    fn stats_edge_cases() {
        let mut r = rng();
        let (mut g, ..) = diamond(&mut r);
        let before = g.dump();
        g.record_stats(&LinkStatsReport::default()).unwrap();
        assert_eq!(g.dump(), before);
        let unknown = LinkStatsReport {
            entries: vec![LinkStat {
                lid: LinkId::from_bits(crate::fid::BitVector::from_positions(256, [0, 1, 2, 3, 4])),
                tx_bytes: 1,
                utilization: 0.1,
            }],
        };
        // Astronomically unlikely to collide with a drawn LID.
        assert_eq!(g.record_stats(&unknown), Err(TopologyError::UnknownLink));
    }

    #[test]
    fn remove_link_off_managed_paths() {
        let mut r = rng();
        let (mut g, a, _b, c) = diamond(&mut r);
        // a's path runs via b; nobody routes over a-c.
        let actions = g
            .handle_link_event(&LinkEvent::Remove { a, b: c }, &mut r)
            .unwrap();
        assert!(actions.is_empty());
        g.validate().unwrap();
    }

    #[test]
    fn remove_reroutes_host_via_backup() {
        let mut r = rng();
        let mut g = graph(&mut r);
        let s2 = attach(&mut g, NodeKind::SdnSwitch, NodeId::TM, &mut r);
        let s1 = attach(&mut g, NodeKind::SdnSwitch, s2, &mut r);
        let h = attach(&mut g, NodeKind::IcnNode, s1, &mut r);
        let s3 = attach(&mut g, NodeKind::SdnSwitch, s1, &mut r);
        g.handle_link_event(&LinkEvent::Add { a: s3, b: NodeId::TM }, &mut r)
            .unwrap();
        assert_eq!(
            keys(&g.node(h).unwrap().managed_path),
            vec![(h.0, s1.0), (s1.0, s2.0), (s2.0, 1)]
        );
        let actions = g
            .handle_link_event(&LinkEvent::Remove { a: s2, b: NodeId::TM }, &mut r)
            .unwrap();
        let host_repairs: Vec<_> = actions
            .iter()
            .filter(|a| matches!(a, RepairAction::Reroute { nid, .. } if *nid == h))
            .collect();
        assert_eq!(host_repairs.len(), 1);
        let RepairAction::Reroute { tmfid, path, .. } = host_repairs[0] else {
            unreachable!()
        };
        assert_eq!(keys(path), vec![(h.0, s1.0), (s1.0, s3.0), (s3.0, 1)]);
        let expected = fid_or(
            256,
            [&lid(&g, h, s1), &lid(&g, s1, s3), &lid(&g, s3, NodeId::TM)],
        )
        .unwrap();
        assert_eq!(tmfid, &expected);
        for rec in g.nodes() {
            assert!(!TopologyGraph::path_uses(&rec.managed_path, s2, NodeId::TM));
        }
        g.validate().unwrap();
    }

    #[test]
    fn remove_then_readd_restores_path() {
        let mut r = rng();
        let (mut g, a, b, _c) = diamond(&mut r);
        let original = g.shortest_path(a, NodeId::TM).unwrap();
        let tables_before = g.dump();
        let repairs = g
            .handle_link_event(&LinkEvent::Remove { a: b, b: NodeId::TM }, &mut r)
            .unwrap();
        assert!(!repairs.is_empty());
        let readd = g
            .handle_link_event(&LinkEvent::Add { a: b, b: NodeId::TM }, &mut r)
            .unwrap();
        assert!(matches!(readd[0], RepairAction::InstallRule { .. }));
        assert_eq!(g.shortest_path(a, NodeId::TM).unwrap(), original);
        assert_eq!(g.dump(), tables_before);
        g.validate().unwrap();
    }

    #[test]
    fn remove_unknown_link() {
        let mut r = rng();
        let mut g = graph(&mut r);
        assert_eq!(
            g.handle_link_event(&LinkEvent::Remove { a: NodeId(4), b: NodeId(5) }, &mut r),
            Err(TopologyError::UnknownLink)
        );
    }

    #[test]
    fn disconnect_and_reconnect() {
        let mut r = rng();
        let mut g = graph(&mut r);
        let s = attach(&mut g, NodeKind::SdnSwitch, NodeId::TM, &mut r);
        let h = attach(&mut g, NodeKind::IcnNode, s, &mut r);
        let out = g
            .handle_link_event(&LinkEvent::Remove { a: s, b: NodeId::TM }, &mut r)
            .unwrap();
        assert!(out.contains(&RepairAction::Disconnected { nid: h }));
        assert!(g.node(h).unwrap().tmfid.is_none());
        g.validate().unwrap();
        let back = g
            .handle_link_event(&LinkEvent::Add { a: s, b: NodeId::TM }, &mut r)
            .unwrap();
        assert!(back
            .iter()
            .any(|a| matches!(a, RepairAction::Reroute { nid, .. } if *nid == h)));
        g.validate().unwrap();
    }

    #[test]
    fn dump_lists_nodes_and_links() {
        let mut r = rng();
        let (g, ..) = diamond(&mut r);
        let text = g.dump();
        assert_eq!(text.lines().filter(|l| l.starts_with("node ")).count(), 4);
        assert_eq!(text.lines().filter(|l| l.starts_with("link ")).count(), 8);
    }
}
