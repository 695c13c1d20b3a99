// SPDX-License-Identifier: Apache-2.0

//! The TM's protocol engine.
//!
//! Requests reach the TM either through the fabric (hosts, source-routed by
//! their TMFID) or over the controller's direct interface (switches, link
//! events, statistics). Replies go back the same way: direct frames for the
//! controller, downstream FIDs computed from the graph for hosts.
//!
//! A host attaching to a switch is only sent its offer after the controller
//! confirmed the switch rule towards the host, so the offer can actually be
//! delivered.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use rand_chacha::ChaCha8Rng;

use crate::fabric::control::{ControlFrame, RuleInstall, RuleOp};
use crate::fid::{Fid, FidParams};
use crate::protocol::fsm::{responder_on_discovery, NodeConfig};
use crate::protocol::wire::Message;
use crate::topology::{
    LinkEvent, NodeId, NodeKind, RepairAction, TopologyError, TopologyGraph,
};

/// Where a message reached the TM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    /// Through the data plane, arriving on a TM port.
    Fabric { port: u32 },
    /// Over the controller's direct interface.
    Controller,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TmOutput {
    ToController(Vec<u8>),
    /// Source-routed from the TM along `fid`.
    ToFabric { fid: Fid, bytes: Vec<u8> },
    /// Link-local reply on one TM port.
    ToPort { port: u32, bytes: Vec<u8> },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TmReply {
    pub outputs: Vec<TmOutput>,
    /// Identifiers drawn while handling the input.
    pub lids_drawn: usize,
    /// NID allocated by a resource request, with its attachment point.
    pub allocated: Option<(NodeId, NodeId)>,
}

#[derive(Debug, Clone)]
struct OfferEntry {
    nid: NodeId,
    origin: Origin,
    bytes: Vec<u8>,
    released: bool,
}

#[derive(Debug)]
pub struct TmEngine {
    graph: TopologyGraph,
    rng: ChaCha8Rng,
    config: NodeConfig,
    offers: HashMap<u64, OfferEntry>,
    finals: HashMap<u64, (Origin, Vec<Vec<u8>>)>,
    audit: Vec<String>,
    alloc_wall: Duration,
    alloc_calls: u64,
}

impl TmEngine {
    pub fn new(params: FidParams, mut rng: ChaCha8Rng) -> Result<Self, TopologyError> {
        let graph = TopologyGraph::new(params, &mut rng)?;
        let mut config = NodeConfig::temporary(params.m);
        config.nid = NodeId::TM;
        config.ilid = graph.node(NodeId::TM).and_then(|r| r.ilid.clone());
        Ok(TmEngine {
            graph,
            rng,
            config,
            offers: HashMap::new(),
            finals: HashMap::new(),
            audit: Vec::new(),
            alloc_wall: Duration::ZERO,
            alloc_calls: 0,
        })
    }

    pub fn graph(&self) -> &TopologyGraph {
        &self.graph
    }

    pub fn config(&self) -> &NodeConfig {
        &self.config
    }

    /// Messages that were dropped, with the reason.
    pub fn audit_log(&self) -> &[String] {
        &self.audit
    }

    /// Total wall-clock time spent in resource allocation and the number of
    /// allocations.
    pub fn allocation_time(&self) -> (Duration, u64) {
        (self.alloc_wall, self.alloc_calls)
    }

    fn m(&self) -> usize {
        self.graph.params().m
    }

    fn audit(&mut self, what: String) {
        info!("tm audit: {what}");
        self.audit.push(what);
    }

    fn timed_allocate(
        &mut self,
        kind: NodeKind,
        attach: NodeId,
    ) -> Result<crate::topology::ResourceGrant, TopologyError> {
        let t0 = Instant::now();
        let r = self.graph.allocate_resources(kind, attach, &mut self.rng);
        self.alloc_wall += t0.elapsed();
        self.alloc_calls += 1;
        r
    }

    /// Seeds a switch by configuration: allocates and commits it attached to
    /// the TM without any message exchange.
    pub fn seed_switch(&mut self) -> Result<crate::topology::ResourceGrant, TopologyError> {
        let grant = self.timed_allocate(NodeKind::SdnSwitch, NodeId::TM)?;
        self.graph.commit_grant(grant.nid)?;
        Ok(grant)
    }

    fn route(&self, origin: Origin, nid: NodeId, bytes: Vec<u8>) -> Option<TmOutput> {
        match origin {
            Origin::Controller => Some(TmOutput::ToController(bytes)),
            Origin::Fabric { .. } => match self.graph.fid_from_tm(nid) {
                Ok(fid) => Some(TmOutput::ToFabric { fid, bytes }),
                Err(e) => {
                    warn!("tm cannot route to {nid}: {e}");
                    None
                }
            },
        }
    }

    pub fn on_message(&mut self, msg: &Message, origin: Origin) -> TmReply {
        let mut reply = TmReply::default();
        match msg {
            Message::ResourceRequest { nonce, kind, attach } => {
                self.on_request(*nonce, *kind, *attach, origin, &mut reply)
            }
            Message::OfferAccepted { nonce, nid } => self.on_accepted(*nonce, *nid, origin, &mut reply),
            Message::DiscoveryRequest { nonce } => {
                if let Origin::Fabric { port } = origin {
                    let offer = responder_on_discovery(*nonce, &self.config)
                        .expect("the TM is always bootstrapped");
                    reply.outputs.push(TmOutput::ToPort {
                        port,
                        bytes: offer.encode(self.m()),
                    });
                }
            }
            Message::Update { nid, .. } => {
                debug!("tm ignores link announcement from {nid}");
            }
            other => self.audit(format!("unexpected {} at the TM", other.name())),
        }
        reply
    }

    fn on_request(&mut self, nonce: u64, kind: NodeKind, attach: NodeId, origin: Origin, reply: &mut TmReply) {
        if let Some(entry) = self.offers.get(&nonce) {
            // Retransmitted request: repeat the offer byte for byte.
            if entry.released {
                let (nid, origin, bytes) = (entry.nid, entry.origin, entry.bytes.clone());
                reply.outputs.extend(self.route(origin, nid, bytes));
            }
            return;
        }
        let before = self.graph.registry().len();
        let grant = match self.timed_allocate(kind, attach) {
            Ok(g) => g,
            Err(e) => {
                self.audit(format!("request {nonce:#x} from {kind:?} at {attach} refused: {e}"));
                return;
            }
        };
        reply.lids_drawn = self.graph.registry().len() - before;
        reply.allocated = Some((grant.nid, attach));
        let bytes = Message::ResourceOffer {
            nonce,
            nid: grant.nid,
            lid: grant.lid.clone(),
            ilid: grant.ilid.clone(),
        }
        .encode(self.m());
        let attach_is_switch = self
            .graph
            .node(attach)
            .is_some_and(|r| r.kind == NodeKind::SdnSwitch);
        let gated = matches!(origin, Origin::Fabric { .. }) && attach_is_switch;
        if gated {
            let rule = ControlFrame::RuleInstall(RuleInstall {
                op: RuleOp::Install,
                switch: attach,
                next_hop: grant.nid,
                nonce,
                lid: grant.lid.clone(),
            });
            reply.outputs.push(TmOutput::ToController(rule.encode()));
        } else {
            reply.outputs.extend(self.route(origin, grant.nid, bytes.clone()));
        }
        self.offers.insert(
            nonce,
            OfferEntry {
                nid: grant.nid,
                origin,
                bytes,
                released: !gated,
            },
        );
    }

    fn on_accepted(&mut self, nonce: u64, nid: NodeId, origin: Origin, reply: &mut TmReply) {
        if let Some((origin, frames)) = self.finals.get(&nonce).cloned() {
            for bytes in frames {
                reply.outputs.extend(self.route(origin, nid, bytes));
            }
            return;
        }
        let matches_offer = self.offers.get(&nonce).is_some_and(|e| e.nid == nid);
        let Some(grant) = self.graph.pending_grant(nid).cloned().filter(|_| matches_offer) else {
            self.audit(format!("OfferAccepted {nonce:#x} for {nid}: no pending grant"));
            return;
        };
        let tmfid = match self.graph.commit_grant(nid) {
            Ok(f) => f,
            Err(e) => {
                self.audit(format!("commit of {nid} failed: {e}"));
                return;
            }
        };
        let m = self.m();
        let frames = vec![
            Message::Update {
                nid: grant.attach,
                lid: grant.upstream_lid,
                tmfid: Some(tmfid),
            }
            .encode(m),
            Message::ResourceAccepted { nonce, nid }.encode(m),
        ];
        for bytes in &frames {
            reply.outputs.extend(self.route(origin, nid, bytes.clone()));
        }
        self.finals.insert(nonce, (origin, frames));
    }

    /// Drops the tentative grant of a handshake its requester gave up on.
    pub fn abandon(&mut self, nonce: u64) {
        let Some(entry) = self.offers.get(&nonce) else {
            return;
        };
        if self.finals.contains_key(&nonce) {
            return;
        }
        let nid = entry.nid;
        if self.graph.expire_grant(nid).is_ok() {
            self.offers.remove(&nonce);
            self.audit(format!("grant of {nid} expired after abandoned handshake {nonce:#x}"));
        }
    }

    pub fn on_control(&mut self, frame: &ControlFrame) -> TmReply {
        let mut reply = TmReply::default();
        match frame {
            ControlFrame::LinkEvent(ev) => self.on_link_event(ev, &mut reply),
            ControlFrame::LinkStats(report) => {
                if let Err(e) = self.graph.record_stats(report) {
                    self.audit(format!("stats report rejected: {e}"));
                }
            }
            ControlFrame::RuleInstall(r) if r.op == RuleOp::InstalledAck => {
                if let Some(entry) = self.offers.get_mut(&r.nonce) {
                    if !entry.released {
                        entry.released = true;
                        let (nid, origin, bytes) = (entry.nid, entry.origin, entry.bytes.clone());
                        reply.outputs.extend(self.route(origin, nid, bytes));
                    }
                }
            }
            ControlFrame::RuleInstall(r) => {
                self.audit(format!("unexpected rule frame {:?} at the TM", r.op));
            }
        }
        reply
    }

    fn on_link_event(&mut self, ev: &LinkEvent, reply: &mut TmReply) {
        let before = self.graph.registry().len();
        let actions = match self.graph.handle_link_event(ev, &mut self.rng) {
            Ok(a) => a,
            Err(e) => {
                self.audit(format!("link event {ev:?} rejected: {e}"));
                return;
            }
        };
        reply.lids_drawn = self.graph.registry().len() - before;
        let m = self.m();
        for action in actions {
            match action {
                RepairAction::InstallRule { node, next_hop, lid } => {
                    if self.kind_of(node) == Some(NodeKind::SdnSwitch) {
                        let frame = ControlFrame::RuleInstall(RuleInstall {
                            op: RuleOp::Install,
                            switch: node,
                            next_hop,
                            nonce: 0,
                            lid,
                        });
                        reply.outputs.push(TmOutput::ToController(frame.encode()));
                    }
                }
                RepairAction::Reroute { nid, tmfid, path } => {
                    let first = &path[0];
                    let bytes = Message::Update {
                        nid: first.dst,
                        lid: first.lid.clone(),
                        tmfid: Some(tmfid),
                    }
                    .encode(m);
                    let origin = if self.kind_of(nid) == Some(NodeKind::SdnSwitch) {
                        Origin::Controller
                    } else {
                        Origin::Fabric { port: 0 }
                    };
                    reply.outputs.extend(self.route(origin, nid, bytes));
                }
                RepairAction::Disconnected { nid } => {
                    self.audit(format!("{nid} lost every path to the TM"));
                }
            }
        }
    }

    fn kind_of(&self, nid: NodeId) -> Option<NodeKind> {
        self.graph.node(nid).map(|r| r.kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn engine() -> TmEngine {
        TmEngine::new(FidParams::default(), ChaCha8Rng::seed_from_u64(3)).unwrap()
    }

    fn request(nonce: u64, kind: NodeKind, attach: NodeId) -> Message {
        Message::ResourceRequest { nonce, kind, attach }
    }

    fn decode(out: &TmOutput) -> Message {
        let bytes = match out {
            TmOutput::ToController(b) | TmOutput::ToFabric { bytes: b, .. } | TmOutput::ToPort { bytes: b, .. } => b,
        };
        Message::decode(bytes, 256).unwrap()
    }

    #[test]
    fn switch_handshake_over_direct_interface() {
        let mut tm = engine();
        let seed = tm.seed_switch().unwrap();
        let r = tm.on_message(&request(7, NodeKind::SdnSwitch, seed.nid), Origin::Controller);
        assert_eq!(r.lids_drawn, 2);
        let Message::ResourceOffer { nid, ilid, .. } = decode(&r.outputs[0]) else {
            panic!("expected an offer")
        };
        assert!(ilid.is_none());
        let r = tm.on_message(&Message::OfferAccepted { nonce: 7, nid }, Origin::Controller);
        assert_eq!(r.outputs.len(), 2);
        assert!(matches!(decode(&r.outputs[0]), Message::Update { nid: n, tmfid: Some(_), .. } if n == seed.nid));
        assert_eq!(decode(&r.outputs[1]), Message::ResourceAccepted { nonce: 7, nid });
        assert!(tm.graph().node(nid).unwrap().is_committed());
    }

    #[test]
    fn duplicate_request_gets_identical_offer() {
        let mut tm = engine();
        let seed = tm.seed_switch().unwrap();
        let a = tm.on_message(&request(9, NodeKind::SdnSwitch, seed.nid), Origin::Controller);
        let b = tm.on_message(&request(9, NodeKind::SdnSwitch, seed.nid), Origin::Controller);
        assert_eq!(a.outputs, b.outputs);
        assert_eq!(b.lids_drawn, 0);
        assert_eq!(tm.graph().nodes().count(), 3);
    }

    #[test]
    fn host_offer_waits_for_rule_ack() {
        let mut tm = engine();
        let seed = tm.seed_switch().unwrap();
        let r = tm.on_message(&request(11, NodeKind::IcnNode, seed.nid), Origin::Fabric { port: 0 });
        assert_eq!(r.lids_drawn, 3);
        let TmOutput::ToController(bytes) = &r.outputs[0] else {
            panic!("expected a rule install")
        };
        let ControlFrame::RuleInstall(rule) = ControlFrame::decode(bytes, 256).unwrap() else {
            panic!("expected a rule install")
        };
        assert_eq!(rule.switch, seed.nid);
        assert_eq!(r.outputs.len(), 1);
        // A retransmission before the ack stays silent.
        let again = tm.on_message(&request(11, NodeKind::IcnNode, seed.nid), Origin::Fabric { port: 0 });
        assert!(again.outputs.is_empty());
        let ack = ControlFrame::RuleInstall(RuleInstall { op: RuleOp::InstalledAck, ..rule.clone() });
        let r = tm.on_control(&ack);
        let TmOutput::ToFabric { fid, .. } = &r.outputs[0] else {
            panic!("expected a fabric offer")
        };
        let host = rule.next_hop;
        assert_eq!(fid, &tm.graph().fid_from_tm(host).unwrap());
        assert!(matches!(decode(&r.outputs[0]), Message::ResourceOffer { nid, .. } if nid == host));
    }

    #[test]
    fn duplicate_accept_repeats_finals() {
        let mut tm = engine();
        let r = tm.on_message(&request(5, NodeKind::IcnNode, NodeId::TM), Origin::Fabric { port: 2 });
        let Message::ResourceOffer { nid, .. } = decode(&r.outputs[0]) else {
            panic!("expected an offer")
        };
        let a = tm.on_message(&Message::OfferAccepted { nonce: 5, nid }, Origin::Fabric { port: 2 });
        let b = tm.on_message(&Message::OfferAccepted { nonce: 5, nid }, Origin::Fabric { port: 2 });
        assert_eq!(a, b);
        assert_eq!(tm.graph().nodes().filter(|n| n.is_committed()).count(), 2);
    }

    #[test]
    fn unknown_accept_is_audited() {
        let mut tm = engine();
        let r = tm.on_message(&Message::OfferAccepted { nonce: 1, nid: NodeId(40) }, Origin::Controller);
        assert!(r.outputs.is_empty());
        assert_eq!(tm.audit_log().len(), 1);
    }

    #[test]
    fn discovery_at_the_tm() {
        let mut tm = engine();
        let r = tm.on_message(&Message::DiscoveryRequest { nonce: 3 }, Origin::Fabric { port: 4 });
        let TmOutput::ToPort { port: 4, .. } = &r.outputs[0] else {
            panic!("expected a link-local reply")
        };
        let Message::DiscoveryOffer { responder, tmfid, .. } = decode(&r.outputs[0]) else {
            panic!("expected an offer")
        };
        assert_eq!(responder, NodeId::TM);
        assert!(tmfid.is_empty());
    }

    #[test]
    fn abandoned_grant_expires() {
        let mut tm = engine();
        let before = tm.graph().registry().clone();
        tm.on_message(&request(8, NodeKind::IcnNode, NodeId::TM), Origin::Fabric { port: 0 });
        tm.abandon(8);
        assert_eq!(tm.graph().registry(), &before);
        tm.graph().validate().unwrap();
    }

    #[test]
    fn link_add_installs_switch_rules() {
        let mut tm = engine();
        let s1 = tm.seed_switch().unwrap().nid;
        let r = tm.on_message(&request(1, NodeKind::SdnSwitch, s1), Origin::Controller);
        let Message::ResourceOffer { nid: s2, .. } = decode(&r.outputs[0]) else {
            panic!("expected an offer")
        };
        tm.on_message(&Message::OfferAccepted { nonce: 1, nid: s2 }, Origin::Controller);
        let r = tm.on_control(&ControlFrame::LinkEvent(LinkEvent::Add { a: s2, b: NodeId::TM }));
        assert_eq!(r.lids_drawn, 2);
        let rules: Vec<_> = r
            .outputs
            .iter()
            .filter_map(|o| match o {
                TmOutput::ToController(b) => ControlFrame::decode(b, 256).ok(),
                _ => None,
            })
            .collect();
        assert_eq!(rules.len(), 1, "only the switch side gets a rule");
        // s2 now reaches the TM directly and is told so.
        assert!(r.outputs.iter().any(|o| matches!(
            o,
            TmOutput::ToController(b) if matches!(Message::decode(b, 256), Ok(Message::Update { nid: NodeId::TM, .. }))
        )));
    }
}
