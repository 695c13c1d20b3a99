// SPDX-License-Identifier: Apache-2.0

//! The SDN controller's ICN application.
//!
//! The controller knows the physical wiring of its switches (which peer sits
//! behind every port) but no ICN identifiers beyond what the TM tells it. It
//! bootstraps switches on their behalf over the direct TM interface, answers
//! host discovery requests escalated as PacketIns, installs the rules the TM
//! asks for and reports link changes and statistics.
//!
//! Like the protocol state machines it is reactive: every handler returns
//! [`CtrlAction`]s and the environment applies them with whatever delays it
//! models. Flow-table changes that carry an `xid` must be confirmed through
//! [`Controller::on_barrier`].

use std::collections::{BTreeMap, BTreeSet, HashMap};

use log::{debug, info};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fabric::control::{ControlFrame, Frame, RuleInstall, RuleOp};
use crate::fabric::{FlowRule, IcnPacket};
use crate::fid::{Fid, LinkId};
use crate::protocol::fsm::Timers;
use crate::protocol::wire::{Message, WireError};
use crate::topology::{LinkEvent, LinkStat, LinkStatsReport, NodeId, NodeKind};

/// Datapath index of a switch.
pub type SwitchId = usize;

/// One end of a link the controller monitors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    Tm,
    Switch(SwitchId),
}

/// What sits behind a switch port.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortPeer {
    Switch { id: SwitchId, port: u32 },
    Tm,
    Host,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PortInfo {
    pub peer: PortPeer,
    pub capacity_bps: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ControlEvent {
    /// `new_switch` was found behind `attach`; `attach_port` is the port of
    /// the attach switch (absent for the TM), `new_port` the new switch's
    /// port towards it.
    SwitchAttached {
        new_switch: SwitchId,
        attach: Endpoint,
        attach_port: Option<u32>,
        new_port: u32,
    },
    PacketIn {
        switch: SwitchId,
        in_port: u32,
        bytes: Vec<u8>,
    },
    LinkDown { a: Endpoint, b: Endpoint },
    LinkUp { a: Endpoint, b: Endpoint },
    StatsTick,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlowOp {
    Add(FlowRule),
    RemovePort(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Milestone {
    AttachStarted(SwitchId),
    SwitchEnabled { switch: SwitchId, nid: NodeId },
    AttachFailed(SwitchId),
    LinkAddStarted(Endpoint, Endpoint),
    LinkReady(Endpoint, Endpoint),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CtrlAction {
    ToTm(Vec<u8>),
    FlowMod {
        switch: SwitchId,
        op: FlowOp,
        /// Barrier id to confirm, if the change must be acknowledged.
        xid: Option<u64>,
    },
    PacketOut {
        switch: SwitchId,
        port: u32,
        bytes: Vec<u8>,
    },
    /// Event produced by topology monitoring, to be fed back in order.
    Emit(ControlEvent),
    ArmTimer {
        switch: SwitchId,
        generation: u64,
        after_us: u64,
    },
    Milestone(Milestone),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ControllerError {
    #[error("attach point {0:?} is not ICN-enabled")]
    AttachNotEnabled(Endpoint),
    #[error("unknown link {0:?} - {1:?}")]
    UnknownLink(Endpoint, Endpoint),
    #[error("unknown switch {0}")]
    UnknownSwitch(SwitchId),
    #[error("undecodable frame: {0}")]
    Decode(#[from] WireError),
    #[error("TM did not answer the bootstrap of switch {0}")]
    TmUnreachable(SwitchId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkState {
    NotIcn,
    Pending { remaining: u32 },
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Handshake {
    nonce: u64,
    attach: Endpoint,
    attach_port: Option<u32>,
    new_port: u32,
    offer: Option<(NodeId, LinkId)>,
    retries_left: u32,
    generation: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Phase {
    Idle,
    Queued,
    Handshake(Box<Handshake>),
    Installing { remaining: u32, attach: Endpoint },
    Enabled,
    Failed,
}

#[derive(Debug, Clone)]
struct SwitchState {
    nid: Option<NodeId>,
    tmfid: Option<Fid>,
    phase: Phase,
}

#[derive(Debug, Clone)]
enum Pending {
    Attach(SwitchId),
    Rule { rule: RuleInstall, link: Option<(Endpoint, Endpoint)> },
}

fn key(a: Endpoint, b: Endpoint) -> (Endpoint, Endpoint) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone)]
pub struct Controller {
    m: usize,
    timers: Timers,
    hop_limit: u8,
    ports: Vec<Vec<PortInfo>>,
    switches: Vec<SwitchState>,
    nid_to_switch: HashMap<NodeId, SwitchId>,
    links: BTreeMap<(Endpoint, Endpoint), LinkState>,
    installed: BTreeMap<(SwitchId, u32), BTreeSet<LinkId>>,
    rule_owner: HashMap<LinkId, (SwitchId, u32)>,
    pending: HashMap<u64, Pending>,
    next_xid: u64,
    discovery: HashMap<u64, (SwitchId, u32)>,
    final_update: Option<(NodeId, LinkId, Fid)>,
    rng: ChaCha8Rng,
    packet_ins: u64,
    attach_rules: u64,
    audit: Vec<String>,
}

impl Controller {
    /// `ports[s]` describes every port of switch `s`.
    pub fn new(ports: Vec<Vec<PortInfo>>, m: usize, timers: Timers, hop_limit: u8, rng: ChaCha8Rng) -> Self {
        let mut links = BTreeMap::new();
        for (s, list) in ports.iter().enumerate() {
            for p in list {
                match p.peer {
                    PortPeer::Switch { id, .. } => {
                        links.insert(key(Endpoint::Switch(s), Endpoint::Switch(id)), LinkState::NotIcn);
                    }
                    PortPeer::Tm => {
                        links.insert(key(Endpoint::Tm, Endpoint::Switch(s)), LinkState::NotIcn);
                    }
                    PortPeer::Host => {}
                }
            }
        }
        let switches = vec![
            SwitchState {
                nid: None,
                tmfid: None,
                phase: Phase::Idle,
            };
            ports.len()
        ];
        Controller {
            m,
            timers,
            hop_limit,
            ports,
            switches,
            nid_to_switch: HashMap::new(),
            links,
            installed: BTreeMap::new(),
            rule_owner: HashMap::new(),
            pending: HashMap::new(),
            next_xid: 1,
            discovery: HashMap::new(),
            final_update: None,
            rng,
            packet_ins: 0,
            attach_rules: 0,
            audit: Vec::new(),
        }
    }

    pub fn switch_count(&self) -> usize {
        self.switches.len()
    }

    pub fn switch_nid(&self, s: SwitchId) -> Option<NodeId> {
        self.switches.get(s).and_then(|st| st.nid)
    }

    pub fn switch_tmfid(&self, s: SwitchId) -> Option<&Fid> {
        self.switches.get(s).and_then(|st| st.tmfid.as_ref())
    }

    pub fn switch_by_nid(&self, nid: NodeId) -> Option<SwitchId> {
        self.nid_to_switch.get(&nid).copied()
    }

    pub fn is_enabled(&self, s: SwitchId) -> bool {
        self.switches.get(s).is_some_and(|st| st.phase == Phase::Enabled)
    }

    pub fn has_failed(&self, s: SwitchId) -> bool {
        self.switches.get(s).is_some_and(|st| st.phase == Phase::Failed)
    }

    pub fn link_state(&self, a: Endpoint, b: Endpoint) -> Option<LinkState> {
        self.links.get(&key(a, b)).copied()
    }

    pub fn links(&self) -> impl Iterator<Item = (&(Endpoint, Endpoint), &LinkState)> {
        self.links.iter()
    }

    /// Number of PacketIns received so far.
    pub fn packet_ins(&self) -> u64 {
        self.packet_ins
    }

    /// Rules installed as part of switch attachments.
    pub fn attach_rules(&self) -> u64 {
        self.attach_rules
    }

    pub fn audit_log(&self) -> &[String] {
        &self.audit
    }

    fn audit(&mut self, what: String) {
        info!("controller audit: {what}");
        self.audit.push(what);
    }

    fn endpoint_enabled(&self, e: Endpoint) -> bool {
        match e {
            Endpoint::Tm => true,
            Endpoint::Switch(s) => self.is_enabled(s),
        }
    }

    fn endpoint_nid(&self, e: Endpoint) -> Option<NodeId> {
        match e {
            Endpoint::Tm => Some(NodeId::TM),
            Endpoint::Switch(s) => self.switch_nid(s),
        }
    }

    fn port_towards(&self, s: SwitchId, peer: Endpoint) -> Option<u32> {
        self.ports[s].iter().position(|p| match (p.peer, peer) {
            (PortPeer::Tm, Endpoint::Tm) => true,
            (PortPeer::Switch { id, .. }, Endpoint::Switch(o)) => id == o,
            _ => false,
        })
        .map(|p| p as u32)
    }

    fn xid(&mut self) -> u64 {
        let x = self.next_xid;
        self.next_xid += 1;
        x
    }

    fn install(&mut self, switch: SwitchId, port: u32, lid: &LinkId, pending: Pending) -> CtrlAction {
        self.installed.entry((switch, port)).or_default().insert(lid.clone());
        self.rule_owner.insert(lid.clone(), (switch, port));
        let xid = self.xid();
        self.pending.insert(xid, pending);
        CtrlAction::FlowMod {
            switch,
            op: FlowOp::Add(FlowRule::icn(lid, port)),
            xid: Some(xid),
        }
    }

    /// Marks `seed` as bootstrapped by configuration with the NID and
    /// upstream LID the TM assigned to it. Returns the rule to install
    /// directly on the seed and the monitoring actions that follow.
    pub fn configure_seed(
        &mut self,
        seed: SwitchId,
        nid: NodeId,
        tmfid: Fid,
        upstream: &LinkId,
    ) -> Result<(FlowRule, Vec<CtrlAction>), ControllerError> {
        let port = self
            .port_towards(seed, Endpoint::Tm)
            .ok_or(ControllerError::UnknownLink(Endpoint::Tm, Endpoint::Switch(seed)))?;
        let st = &mut self.switches[seed];
        st.nid = Some(nid);
        st.tmfid = Some(tmfid);
        st.phase = Phase::Enabled;
        self.nid_to_switch.insert(nid, seed);
        self.installed.entry((seed, port)).or_default().insert(upstream.clone());
        self.rule_owner.insert(upstream.clone(), (seed, port));
        self.links.insert(key(Endpoint::Tm, Endpoint::Switch(seed)), LinkState::Up);
        let mut actions = vec![CtrlAction::Milestone(Milestone::SwitchEnabled { switch: seed, nid })];
        actions.extend(self.monitor(seed));
        for s in 0..self.switches.len() {
            if self.switches[s].phase == Phase::Idle {
                if let Some(p) = self.port_towards(s, Endpoint::Tm) {
                    self.switches[s].phase = Phase::Queued;
                    actions.push(CtrlAction::Emit(ControlEvent::SwitchAttached {
                        new_switch: s,
                        attach: Endpoint::Tm,
                        attach_port: None,
                        new_port: p,
                    }));
                }
            }
        }
        Ok((FlowRule::icn(upstream, port), actions))
    }

    /// Topology monitoring around a freshly enabled switch.
    fn monitor(&mut self, s: SwitchId) -> Vec<CtrlAction> {
        let mut out = Vec::new();
        for (p, info) in self.ports[s].clone().into_iter().enumerate() {
            let peer = match info.peer {
                PortPeer::Host => continue,
                PortPeer::Tm => Endpoint::Tm,
                PortPeer::Switch { id, port } => {
                    if self.switches[id].phase == Phase::Idle {
                        self.switches[id].phase = Phase::Queued;
                        out.push(CtrlAction::Emit(ControlEvent::SwitchAttached {
                            new_switch: id,
                            attach: Endpoint::Switch(s),
                            attach_port: Some(p as u32),
                            new_port: port,
                        }));
                        continue;
                    }
                    Endpoint::Switch(id)
                }
            };
            if self.endpoint_enabled(peer)
                && self.links.get(&key(Endpoint::Switch(s), peer)) == Some(&LinkState::NotIcn)
            {
                out.extend(self.start_link_add(Endpoint::Switch(s), peer, true));
            }
        }
        out
    }

    fn start_link_add(&mut self, a: Endpoint, b: Endpoint, milestone: bool) -> Vec<CtrlAction> {
        let remaining = [a, b].iter().filter(|e| matches!(e, Endpoint::Switch(_))).count() as u32;
        self.links.insert(key(a, b), LinkState::Pending { remaining });
        let (Some(na), Some(nb)) = (self.endpoint_nid(a), self.endpoint_nid(b)) else {
            unreachable!("link adds only start between enabled endpoints")
        };
        let mut out = Vec::new();
        if milestone {
            let (x, y) = key(a, b);
            out.push(CtrlAction::Milestone(Milestone::LinkAddStarted(x, y)));
        }
        let frame = ControlFrame::LinkEvent(LinkEvent::Add { a: na, b: nb });
        out.push(CtrlAction::ToTm(frame.encode()));
        out
    }

    pub fn on_event(&mut self, ev: ControlEvent) -> Result<Vec<CtrlAction>, ControllerError> {
        match ev {
            ControlEvent::SwitchAttached {
                new_switch,
                attach,
                attach_port,
                new_port,
            } => self.on_switch_attached(new_switch, attach, attach_port, new_port),
            ControlEvent::PacketIn { switch, in_port, bytes } => self.on_packet_in(switch, in_port, &bytes),
            ControlEvent::LinkDown { a, b } => self.on_link_down(a, b),
            ControlEvent::LinkUp { a, b } => self.on_link_up(a, b),
            ControlEvent::StatsTick => Ok(Vec::new()),
        }
    }

    fn on_switch_attached(
        &mut self,
        new_switch: SwitchId,
        attach: Endpoint,
        attach_port: Option<u32>,
        new_port: u32,
    ) -> Result<Vec<CtrlAction>, ControllerError> {
        if new_switch >= self.switches.len() {
            return Err(ControllerError::UnknownSwitch(new_switch));
        }
        if !matches!(self.switches[new_switch].phase, Phase::Idle | Phase::Queued) {
            return Ok(Vec::new());
        }
        if !self.endpoint_enabled(attach) {
            self.switches[new_switch].phase = Phase::Idle;
            return Err(ControllerError::AttachNotEnabled(attach));
        }
        let attach_nid = self.endpoint_nid(attach).expect("enabled endpoints have NIDs");
        let nonce: u64 = self.rng.random();
        let hs = Handshake {
            nonce,
            attach,
            attach_port,
            new_port,
            offer: None,
            retries_left: self.timers.max_retries,
            generation: 1,
        };
        self.switches[new_switch].phase = Phase::Handshake(Box::new(hs));
        self.links.insert(key(attach, Endpoint::Switch(new_switch)), LinkState::Pending { remaining: 0 });
        Ok(vec![
            CtrlAction::Milestone(Milestone::AttachStarted(new_switch)),
            CtrlAction::ToTm(self.request_bytes(nonce, attach_nid)),
            CtrlAction::ArmTimer {
                switch: new_switch,
                generation: 1,
                after_us: self.timers.request_timeout_us,
            },
        ])
    }

    fn request_bytes(&self, nonce: u64, attach: NodeId) -> Vec<u8> {
        Message::ResourceRequest {
            nonce,
            kind: NodeKind::SdnSwitch,
            attach,
        }
        .encode(self.m)
    }

    fn handshake_by_nonce(&self, nonce: u64) -> Option<SwitchId> {
        self.switches
            .iter()
            .position(|st| matches!(&st.phase, Phase::Handshake(h) if h.nonce == nonce))
    }

    fn handshake_mut(&mut self, s: SwitchId) -> &mut Handshake {
        match &mut self.switches[s].phase {
            Phase::Handshake(h) => h,
            _ => unreachable!("switch {s} is not handshaking"),
        }
    }

    pub fn on_timeout(&mut self, switch: SwitchId, generation: u64) -> Vec<CtrlAction> {
        let Some(Phase::Handshake(h)) = self.switches.get(switch).map(|s| &s.phase) else {
            return Vec::new();
        };
        if h.generation != generation {
            return Vec::new();
        }
        let h = self.handshake_mut(switch);
        h.retries_left = h.retries_left.saturating_sub(1);
        if h.retries_left == 0 {
            self.switches[switch].phase = Phase::Failed;
            let err = ControllerError::TmUnreachable(switch);
            self.audit(err.to_string());
            return vec![CtrlAction::Milestone(Milestone::AttachFailed(switch))];
        }
        h.generation += 1;
        let (nonce, attach, offer, generation) = (h.nonce, h.attach, h.offer.clone(), h.generation);
        let bytes = match offer {
            None => self.request_bytes(nonce, self.endpoint_nid(attach).expect("attach has a NID")),
            Some((nid, _)) => Message::OfferAccepted { nonce, nid }.encode(self.m),
        };
        vec![
            CtrlAction::ToTm(bytes),
            CtrlAction::ArmTimer {
                switch,
                generation,
                after_us: self.timers.request_timeout_us,
            },
        ]
    }

    /// Handles a frame arriving from the TM over the direct interface.
    pub fn on_tm_frame(&mut self, bytes: &[u8]) -> Result<Vec<CtrlAction>, ControllerError> {
        match Frame::decode(bytes, self.m)? {
            Frame::Protocol(Message::ResourceOffer { nonce, nid, lid, .. }) => {
                let Some(s) = self.handshake_by_nonce(nonce) else {
                    debug!("controller: stale offer {nonce:#x}");
                    return Ok(Vec::new());
                };
                let timeout = self.timers.request_timeout_us;
                let retries = self.timers.max_retries;
                let h = self.handshake_mut(s);
                if h.offer.is_some() {
                    return Ok(Vec::new());
                }
                h.offer = Some((nid, lid));
                h.retries_left = retries;
                h.generation += 1;
                let generation = h.generation;
                Ok(vec![
                    CtrlAction::ToTm(Message::OfferAccepted { nonce, nid }.encode(self.m)),
                    CtrlAction::ArmTimer {
                        switch: s,
                        generation,
                        after_us: timeout,
                    },
                ])
            }
            Frame::Protocol(Message::Update { nid, lid, tmfid: Some(tmfid) }) => {
                if let Some(&(s, _)) = self.rule_owner.get(&lid) {
                    self.switches[s].tmfid = Some(tmfid);
                } else {
                    // Final update of a switch handshake; its acceptance follows.
                    self.final_update = Some((nid, lid, tmfid));
                }
                Ok(Vec::new())
            }
            Frame::Protocol(Message::ResourceAccepted { nonce, nid }) => self.on_resource_accepted(nonce, nid),
            Frame::Control(ControlFrame::RuleInstall(rule)) if rule.op == RuleOp::Install => self.on_rule_install(rule),
            other => {
                self.audit(format!("unexpected frame from the TM: {other:?}"));
                Ok(Vec::new())
            }
        }
    }

    fn on_resource_accepted(&mut self, nonce: u64, nid: NodeId) -> Result<Vec<CtrlAction>, ControllerError> {
        let Some(s) = self.handshake_by_nonce(nonce) else {
            debug!("controller: stale acceptance {nonce:#x}");
            return Ok(Vec::new());
        };
        let h = self.handshake_mut(s).clone();
        let Some((offered, down_lid)) = h.offer else {
            return Ok(Vec::new());
        };
        let attach_nid = self.endpoint_nid(h.attach);
        let Some((_, up_lid, tmfid)) = self
            .final_update
            .take()
            .filter(|(n, ..)| Some(*n) == attach_nid && offered == nid)
        else {
            self.audit(format!("acceptance {nonce:#x} without matching update"));
            return Ok(Vec::new());
        };
        let st = &mut self.switches[s];
        st.nid = Some(nid);
        st.tmfid = Some(tmfid);
        self.nid_to_switch.insert(nid, s);
        let mut out = Vec::new();
        if let (Endpoint::Switch(a), Some(port)) = (h.attach, h.attach_port) {
            out.push(self.install(a, port, &down_lid, Pending::Attach(s)));
        }
        out.push(self.install(s, h.new_port, &up_lid, Pending::Attach(s)));
        self.attach_rules += out.len() as u64;
        self.switches[s].phase = Phase::Installing {
            remaining: out.len() as u32,
            attach: h.attach,
        };
        Ok(out)
    }

    fn on_rule_install(&mut self, rule: RuleInstall) -> Result<Vec<CtrlAction>, ControllerError> {
        let Some(s) = self.switch_by_nid(rule.switch) else {
            self.audit(format!("rule for unknown switch {}", rule.switch));
            return Ok(Vec::new());
        };
        let peer = if rule.next_hop == NodeId::TM {
            Some(Endpoint::Tm)
        } else {
            self.switch_by_nid(rule.next_hop).map(Endpoint::Switch)
        };
        let port = match peer {
            Some(p) => self.port_towards(s, p),
            None => self
                .discovery
                .get(&rule.nonce)
                .filter(|(sw, _)| *sw == s)
                .map(|(_, port)| *port),
        };
        let Some(port) = port else {
            self.audit(format!("no port on switch {s} towards {}", rule.next_hop));
            return Ok(Vec::new());
        };
        let link = peer.map(|p| key(Endpoint::Switch(s), p));
        let lid = rule.lid.clone();
        Ok(vec![self.install(s, port, &lid, Pending::Rule { rule, link })])
    }

    /// Confirms a flow-table change.
    pub fn on_barrier(&mut self, xid: u64) -> Vec<CtrlAction> {
        let Some(p) = self.pending.remove(&xid) else {
            return Vec::new();
        };
        match p {
            Pending::Attach(s) => {
                let Phase::Installing { remaining, attach } = &mut self.switches[s].phase else {
                    return Vec::new();
                };
                *remaining -= 1;
                if *remaining > 0 {
                    return Vec::new();
                }
                let attach = *attach;
                self.switches[s].phase = Phase::Enabled;
                self.links.insert(key(attach, Endpoint::Switch(s)), LinkState::Up);
                let nid = self.switches[s].nid.expect("accepted switch has a NID");
                let mut out = vec![CtrlAction::Milestone(Milestone::SwitchEnabled { switch: s, nid })];
                out.extend(self.monitor(s));
                out
            }
            Pending::Rule { rule, link } => {
                let ack = ControlFrame::RuleInstall(RuleInstall {
                    op: RuleOp::InstalledAck,
                    ..rule
                });
                let mut out = vec![CtrlAction::ToTm(ack.encode())];
                if let Some(k) = link {
                    if let Some(LinkState::Pending { remaining }) = self.links.get_mut(&k) {
                        *remaining = remaining.saturating_sub(1);
                        if *remaining == 0 {
                            self.links.insert(k, LinkState::Up);
                            out.push(CtrlAction::Milestone(Milestone::LinkReady(k.0, k.1)));
                        }
                    }
                }
                out
            }
        }
    }

    fn on_packet_in(&mut self, switch: SwitchId, in_port: u32, bytes: &[u8]) -> Result<Vec<CtrlAction>, ControllerError> {
        self.packet_ins += 1;
        let packet = IcnPacket::decode(bytes, self.m)?;
        let msg = Message::decode(&packet.payload, self.m)?;
        let Message::DiscoveryRequest { nonce } = msg else {
            self.audit(format!("dropped {} escalated by switch {switch}", msg.name()));
            return Ok(Vec::new());
        };
        let st = self.switches.get(switch).ok_or(ControllerError::UnknownSwitch(switch))?;
        let (Some(nid), Some(tmfid), Phase::Enabled) = (st.nid, st.tmfid.clone(), &st.phase) else {
            debug!("controller: switch {switch} not enabled, discovery ignored");
            return Ok(Vec::new());
        };
        self.discovery.insert(nonce, (switch, in_port));
        let offer = Message::DiscoveryOffer {
            nonce,
            responder: nid,
            tmfid,
        };
        let mut reply = IcnPacket::new(Fid::empty(self.m), offer.encode(self.m));
        reply.hop_limit = self.hop_limit;
        Ok(vec![CtrlAction::PacketOut {
            switch,
            port: in_port,
            bytes: reply.encode(),
        }])
    }

    fn link_nids(&self, a: Endpoint, b: Endpoint) -> Option<(NodeId, NodeId)> {
        Some((self.endpoint_nid(a)?, self.endpoint_nid(b)?))
    }

    fn on_link_down(&mut self, a: Endpoint, b: Endpoint) -> Result<Vec<CtrlAction>, ControllerError> {
        let k = key(a, b);
        let state = *self.links.get(&k).ok_or(ControllerError::UnknownLink(a, b))?;
        self.links.insert(k, LinkState::Down);
        if !matches!(state, LinkState::Up | LinkState::Pending { .. }) {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for (x, y) in [(a, b), (b, a)] {
            let Endpoint::Switch(s) = x else { continue };
            let Some(port) = self.port_towards(s, y) else { continue };
            if let Some(lids) = self.installed.remove(&(s, port)) {
                for lid in lids {
                    self.rule_owner.remove(&lid);
                }
            }
            out.push(CtrlAction::FlowMod {
                switch: s,
                op: FlowOp::RemovePort(port),
                xid: None,
            });
        }
        if let Some((na, nb)) = self.link_nids(a, b) {
            let frame = ControlFrame::LinkEvent(LinkEvent::Remove { a: na, b: nb });
            out.push(CtrlAction::ToTm(frame.encode()));
        }
        Ok(out)
    }

    fn on_link_up(&mut self, a: Endpoint, b: Endpoint) -> Result<Vec<CtrlAction>, ControllerError> {
        let k = key(a, b);
        let state = *self.links.get(&k).ok_or(ControllerError::UnknownLink(a, b))?;
        if state != LinkState::Down {
            return Ok(Vec::new());
        }
        if self.endpoint_enabled(a) && self.endpoint_enabled(b) {
            Ok(self.start_link_add(a, b, false))
        } else {
            self.links.insert(k, LinkState::NotIcn);
            Ok(Vec::new())
        }
    }

    /// Builds the statistics report for one period. `tx_bytes` gives the
    /// bytes each `(switch, port)` sent during the period.
    pub fn collect_stats(&self, tx_bytes: &BTreeMap<(SwitchId, u32), u64>, period_us: u64) -> LinkStatsReport {
        let mut entries = Vec::new();
        for (&(s, port), lids) in &self.installed {
            let bytes = tx_bytes.get(&(s, port)).copied().unwrap_or(0);
            let capacity = self.ports[s][port as usize].capacity_bps.max(1) as f64;
            let utilization = (bytes as f64 * 8.0 / (capacity * period_us as f64 / 1e6)).clamp(0.0, 1.0);
            for lid in lids {
                entries.push(LinkStat {
                    lid: lid.clone(),
                    tx_bytes: bytes,
                    utilization,
                });
            }
        }
        LinkStatsReport { entries }
    }

    /// The stats report for a period as a frame for the TM.
    pub fn stats_frame(&self, tx_bytes: &BTreeMap<(SwitchId, u32), u64>, period_us: u64) -> CtrlAction {
        let report = self.collect_stats(tx_bytes, period_us);
        CtrlAction::ToTm(ControlFrame::LinkStats(report).encode())
    }
}
