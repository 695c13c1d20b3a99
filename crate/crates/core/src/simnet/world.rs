// SPDX-License-Identifier: Apache-2.0

//! A simulated deployment: one TM, an SDN controller with its switches, and
//! ICN hosts, wired as a [`TopologySpec`] describes.
//!
//! Timing model:
//! - a packet crossing a link takes the link's one-way delay;
//! - controller to switch (flow mods, barriers, PacketIn, PacketOut) takes
//!   `ctrl_delay`, controller to TM takes `tm_if_delay`;
//! - the TM is a single FIFO server. Resource requests and link additions
//!   cost `tm_service` plus `tm_per_lid` per identifier drawn, everything
//!   else is served at no cost.
//!
//! Switches bootstrap first, the seed switch by configuration and the rest
//! through the controller as topology monitoring finds them. Hosts start once
//! every switch is enabled and every switch link is ICN-ready, in node order.
//!
//! Forwarding: switches use their flow tables and escalate only zero-FID
//! misses to the controller; other misses are dropped. The TM and hosts
//! deliver every packet locally and also forward on each of their own links
//! whose LID the FID contains. Nobody forwards out of the ingress port.

use std::collections::{BTreeMap, HashMap, VecDeque};

use log::{debug, trace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cli::spec::{SimConfig, SpecError, SpecKind, TopologySpec};
use crate::fabric::control::Frame;
use crate::fabric::controller::{
    ControlEvent, Controller, ControllerError, CtrlAction, Endpoint, FlowOp, LinkState, Milestone, PortInfo,
    PortPeer, SwitchId,
};
use crate::fabric::{switch_forward, FlowRule, FlowTable, ForwardResult, IcnPacket};
use crate::fid::{Fid, FidParams};
use crate::protocol::fsm::{Action, FsmState, NodeBootstrapFsm, NodeConfig, TimerId};
use crate::protocol::tm::{Origin, TmEngine, TmOutput, TmReply};
use crate::protocol::wire::Message;
use crate::simnet::{Counters, MeasurementSpan, NodeSummary, SimError, SimReport, Simulator};
use crate::topology::{NodeId, NodeKind, TopologyError};

/// First payload byte of data packets, which never parses as a message.
pub const DATA_MAGIC: u8 = 0xDA;

const STREAM_CONTROLLER: u64 = 1;
const STREAM_HOSTS: u64 = 2;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("{0:?} is not a {1}")]
    WrongKind(String, &'static str),
    #[error("no link between {0:?} and {1:?}")]
    NoLink(String, String),
    #[error("{0:?} has not bootstrapped")]
    NotBootstrapped(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Obj {
    Tm,
    Switch(SwitchId),
    Host(usize),
}

#[derive(Debug, Clone, Copy)]
struct Port {
    link: usize,
    peer: usize,
    peer_port: u32,
}

#[derive(Debug, Clone, Copy)]
struct Wire {
    a: usize,
    b: usize,
    delay_us: u64,
    up: bool,
}

#[derive(Debug)]
struct Host {
    node: usize,
    fsm: NodeBootstrapFsm,
    start_us: Option<u64>,
    end_us: Option<u64>,
}

/// One link traversal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hop {
    pub at_us: u64,
    pub from: usize,
    pub to: usize,
}

/// A data packet handed to a node's local stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub at_us: u64,
    pub node: usize,
    pub id: u64,
}

#[derive(Debug)]
enum TmIn {
    Fabric { port: u32, msg: Message },
    Controller(Vec<u8>),
}

#[derive(Debug)]
enum Ev {
    Arrive { node: usize, port: u32, bytes: Vec<u8> },
    HostStart(usize),
    HostTimer(usize, TimerId),
    TmArrive(TmIn),
    TmDone(Vec<TmOutput>),
    Ctrl(ControlEvent),
    CtrlFromTm(Vec<u8>),
    CtrlTimer(SwitchId, u64),
    FlowMod { switch: SwitchId, op: FlowOp, xid: Option<u64> },
    Barrier(u64),
    PacketOut { switch: SwitchId, port: u32, bytes: Vec<u8> },
    LinkChange { link: usize, up: bool },
    StatsTick,
}

pub struct World {
    names: Vec<String>,
    link_names: Vec<(String, String)>,
    params: FidParams,
    cfg: SimConfig,
    sim: Simulator<Ev>,
    obj: Vec<Obj>,
    ports: Vec<Vec<Port>>,
    wires: Vec<Wire>,
    nid_of_node: Vec<Option<NodeId>>,
    tm_node: usize,
    tm: TmEngine,
    tm_queue: VecDeque<TmIn>,
    tm_busy: bool,
    tm_silent: bool,
    ctrl: Controller,
    switch_node: Vec<usize>,
    tables: Vec<FlowTable>,
    tx_period: BTreeMap<(SwitchId, u32), u64>,
    switch_spans: Vec<(Option<u64>, Option<u64>)>,
    endpoint_link: HashMap<(Endpoint, Endpoint), usize>,
    link_spans: Vec<(Option<u64>, Option<u64>)>,
    hosts: Vec<Host>,
    host_rng: ChaCha8Rng,
    auto_start: bool,
    formation_us: Option<u64>,
    trace: Option<Vec<Hop>>,
    deliveries: Vec<Delivery>,
    next_data_id: u64,
    counters: Counters,
    audit: Vec<String>,
}

impl World {
    pub fn new(spec: &TopologySpec) -> Result<World, WorldError> {
        spec.validate()?;
        let params = spec.fid_params();
        let cfg = spec.sim_config();
        let n = spec.nodes.len();
        let resolved = spec.resolved_links();

        let mut ports: Vec<Vec<Port>> = vec![Vec::new(); n];
        let mut wires = Vec::with_capacity(resolved.len());
        for (i, l) in resolved.iter().enumerate() {
            let pa = ports[l.a].len() as u32;
            let pb = ports[l.b].len() as u32;
            ports[l.a].push(Port { link: i, peer: l.b, peer_port: pb });
            ports[l.b].push(Port { link: i, peer: l.a, peer_port: pa });
            wires.push(Wire { a: l.a, b: l.b, delay_us: l.delay_us, up: true });
        }

        let mut obj = Vec::with_capacity(n);
        let mut switch_node = Vec::new();
        let mut host_nodes = Vec::new();
        let mut tm_node = 0;
        for (i, node) in spec.nodes.iter().enumerate() {
            obj.push(match node.kind {
                SpecKind::Tm => {
                    tm_node = i;
                    Obj::Tm
                }
                SpecKind::Switch => {
                    switch_node.push(i);
                    Obj::Switch(switch_node.len() - 1)
                }
                SpecKind::Host => {
                    host_nodes.push(i);
                    Obj::Host(host_nodes.len() - 1)
                }
            });
        }

        let ctrl_ports: Vec<Vec<PortInfo>> = switch_node
            .iter()
            .map(|&node| {
                ports[node]
                    .iter()
                    .map(|p| PortInfo {
                        peer: match obj[p.peer] {
                            Obj::Switch(id) => PortPeer::Switch { id, port: p.peer_port },
                            Obj::Tm => PortPeer::Tm,
                            Obj::Host(_) => PortPeer::Host,
                        },
                        capacity_bps: resolved[p.link].capacity_bps,
                    })
                    .collect()
            })
            .collect();

        let mut endpoint_link = HashMap::new();
        let endpoint = |i: usize| match obj[i] {
            Obj::Tm => Some(Endpoint::Tm),
            Obj::Switch(s) => Some(Endpoint::Switch(s)),
            Obj::Host(_) => None,
        };
        for (i, w) in wires.iter().enumerate() {
            if let (Some(a), Some(b)) = (endpoint(w.a), endpoint(w.b)) {
                endpoint_link.insert((a.min(b), a.max(b)), i);
            }
        }

        let base = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut ctrl_rng = base.clone();
        ctrl_rng.set_stream(STREAM_CONTROLLER);
        let mut host_rng = base.clone();
        host_rng.set_stream(STREAM_HOSTS);

        let tm = TmEngine::new(params, base)?;
        let ctrl = Controller::new(ctrl_ports, params.m, cfg.timers, cfg.hop_limit, ctrl_rng);
        let hosts = host_nodes
            .iter()
            .map(|&node| Host {
                node,
                fsm: NodeBootstrapFsm::new(
                    NodeKind::IcnNode,
                    (0..ports[node].len() as u32).collect(),
                    cfg.timers,
                    params.m,
                ),
                start_us: None,
                end_us: None,
            })
            .collect();

        let mut nid_of_node = vec![None; n];
        nid_of_node[tm_node] = Some(NodeId::TM);
        let switches = switch_node.len();
        let mut world = World {
            names: spec.nodes.iter().map(|nd| nd.name.clone()).collect(),
            link_names: spec.links.iter().map(|l| (l.a.clone(), l.b.clone())).collect(),
            params,
            cfg,
            sim: Simulator::new(),
            obj,
            ports,
            wires,
            nid_of_node,
            tm_node,
            tm,
            tm_queue: VecDeque::new(),
            tm_busy: false,
            tm_silent: false,
            ctrl,
            switch_node,
            tables: vec![FlowTable::new(); switches],
            tx_period: BTreeMap::new(),
            switch_spans: vec![(None, None); switches],
            endpoint_link,
            link_spans: vec![(None, None); resolved.len()],
            hosts,
            host_rng,
            auto_start: true,
            formation_us: None,
            trace: None,
            deliveries: Vec::new(),
            next_data_id: 0,
            counters: Counters::default(),
            audit: Vec::new(),
        };

        let seed = (0..switches).find(|&s| {
            world.ports[world.switch_node[s]]
                .iter()
                .any(|p| p.peer == world.tm_node)
        });
        if let Some(seed) = seed {
            let grant = world.tm.seed_switch()?;
            let tmfid = world
                .tm
                .graph()
                .node(grant.nid)
                .and_then(|r| r.tmfid.clone())
                .expect("committed switches have a TMFID");
            let (rule, actions) = world.ctrl.configure_seed(seed, grant.nid, tmfid, &grant.upstream_lid)?;
            world.tables[seed].install(rule);
            world.switch_spans[seed].0 = Some(0);
            world.apply_ctrl(actions);
        }
        if world.cfg.stats_period_us > 0 {
            world.sim.schedule_in(world.cfg.stats_period_us, Ev::StatsTick);
        }
        Ok(world)
    }

    fn index(&self, name: &str) -> Result<usize, WorldError> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| WorldError::UnknownNode(name.to_string()))
    }

    fn host_index(&self, name: &str) -> Result<usize, WorldError> {
        match self.obj[self.index(name)?] {
            Obj::Host(h) => Ok(h),
            _ => Err(WorldError::WrongKind(name.to_string(), "host")),
        }
    }

    pub fn now(&self) -> u64 {
        self.sim.now()
    }

    pub fn params(&self) -> &FidParams {
        &self.params
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn tm(&self) -> &TmEngine {
        &self.tm
    }

    pub fn controller(&self) -> &Controller {
        &self.ctrl
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    /// Messages dropped by the simulated environment, with the reason.
    pub fn audit_log(&self) -> &[String] {
        &self.audit
    }

    pub fn formation_us(&self) -> Option<u64> {
        self.formation_us
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.index(name).ok()
    }

    pub fn node_name(&self, node: usize) -> &str {
        &self.names[node]
    }

    /// NID the node is known under, once it has one.
    pub fn node_nid(&self, node: usize) -> Option<NodeId> {
        self.nid_of_node[node]
    }

    pub fn nid(&self, name: &str) -> Option<NodeId> {
        self.index(name).ok().and_then(|i| self.nid_of_node[i])
    }

    pub fn host_names(&self) -> impl Iterator<Item = &str> {
        self.hosts.iter().map(|h| self.names[h.node].as_str())
    }

    pub fn host_state(&self, name: &str) -> Option<FsmState> {
        self.host_index(name).ok().map(|h| self.hosts[h].fsm.state())
    }

    pub fn host_config(&self, name: &str) -> Option<&NodeConfig> {
        self.host_index(name).ok().map(|h| self.hosts[h].fsm.config())
    }

    pub fn table(&self, name: &str) -> Option<&FlowTable> {
        match self.obj[self.index(name).ok()?] {
            Obj::Switch(s) => Some(&self.tables[s]),
            _ => None,
        }
    }

    /// Starts hosts automatically once the switch fabric is formed (default).
    pub fn set_auto_start(&mut self, on: bool) {
        self.auto_start = on;
    }

    /// A silent TM drops everything it receives.
    pub fn set_tm_silent(&mut self, silent: bool) {
        self.tm_silent = silent;
    }

    pub fn start_host(&mut self, name: &str, at_us: u64) -> Result<(), WorldError> {
        let h = self.host_index(name)?;
        self.sim
            .schedule(at_us, Ev::HostStart(h))
            .map_err(|_| WorldError::UnknownNode(name.to_string()))
    }

    /// Schedules a link failure (`up == false`) or restoration.
    pub fn schedule_link_state(&mut self, at_us: u64, a: &str, b: &str, up: bool) -> Result<(), WorldError> {
        let (ia, ib) = (self.index(a)?, self.index(b)?);
        let link = self
            .wires
            .iter()
            .position(|w| (w.a, w.b) == (ia, ib) || (w.a, w.b) == (ib, ia))
            .ok_or_else(|| WorldError::NoLink(a.to_string(), b.to_string()))?;
        let at = at_us.max(self.sim.now());
        self.sim.schedule(at, Ev::LinkChange { link, up }).expect("not in the past");
        Ok(())
    }

    pub fn install_rule(&mut self, switch: &str, rule: FlowRule) -> Result<bool, WorldError> {
        match self.obj[self.index(switch)?] {
            Obj::Switch(s) => Ok(self.tables[s].install(rule)),
            _ => Err(WorldError::WrongKind(switch.to_string(), "switch")),
        }
    }

    /// Makes `packet` arrive at `node` on `in_port` now.
    pub fn inject(&mut self, node: &str, in_port: u32, packet: &IcnPacket) -> Result<(), WorldError> {
        let node = self.index(node)?;
        self.sim.schedule_in(
            0,
            Ev::Arrive {
                node,
                port: in_port,
                bytes: packet.encode(),
            },
        );
        Ok(())
    }

    /// Sends a data packet from a bootstrapped host over its attachment
    /// link. Returns the packet id reported in [`Delivery`].
    pub fn send_data(&mut self, src: &str, fid: Fid) -> Result<u64, WorldError> {
        let h = self.host_index(src)?;
        let via = self.hosts[h]
            .fsm
            .chosen()
            .map(|c| c.via)
            .filter(|_| self.hosts[h].fsm.state() == FsmState::Done)
            .ok_or_else(|| WorldError::NotBootstrapped(src.to_string()))?;
        let id = self.next_data_id;
        self.next_data_id += 1;
        let mut payload = vec![DATA_MAGIC];
        payload.extend_from_slice(&id.to_be_bytes());
        let packet = self.packet(fid, payload);
        self.send_on(self.hosts[h].node, via, &packet);
        Ok(id)
    }

    /// Starts recording every link traversal.
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<Hop> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn deliveries(&self) -> &[Delivery] {
        &self.deliveries
    }

    pub fn take_deliveries(&mut self) -> Vec<Delivery> {
        std::mem::take(&mut self.deliveries)
    }

    /// Runs with the configured time limit.
    pub fn run(&mut self) -> Result<(), SimError> {
        self.run_until_idle(self.cfg.limit_us)
    }

    pub fn run_until_idle(&mut self, limit_us: u64) -> Result<(), SimError> {
        self.check_formation();
        while let Some(at) = self.sim.peek_time() {
            if at > limit_us {
                return Err(SimError::LimitExceeded {
                    limit_us,
                    pending: self.sim.pending(),
                });
            }
            let (_, ev) = self.sim.pop().expect("peeked");
            self.handle(ev);
            self.check_formation();
        }
        Ok(())
    }

    fn check_formation(&mut self) {
        if self.formation_us.is_some() {
            return;
        }
        let enabled = (0..self.ctrl.switch_count()).all(|s| self.ctrl.is_enabled(s));
        let settled = self
            .ctrl
            .links()
            .all(|(_, st)| matches!(st, LinkState::Up | LinkState::Down));
        if !(enabled && settled) {
            return;
        }
        let now = self.sim.now();
        self.formation_us = Some(now);
        debug!("switch fabric formed at {now} us");
        if self.auto_start {
            for h in 0..self.hosts.len() {
                self.sim.schedule_in(0, Ev::HostStart(h));
            }
        }
    }

    fn packet(&self, fid: Fid, payload: Vec<u8>) -> IcnPacket {
        IcnPacket {
            hop_limit: self.cfg.hop_limit,
            fid,
            payload,
        }
    }

    fn note(&mut self, what: String) {
        debug!("world: {what}");
        self.audit.push(what);
    }

    fn handle(&mut self, ev: Ev) {
        trace!("t={} {:?}", self.sim.now(), ev);
        match ev {
            Ev::Arrive { node, port, bytes } => self.on_arrive(node, port, &bytes),
            Ev::HostStart(h) => {
                self.hosts[h].start_us = Some(self.sim.now());
                match self.hosts[h].fsm.start(&mut self.host_rng) {
                    Ok(actions) => self.apply_host(h, actions),
                    Err(e) => self.note(format!("host {} not started: {e}", self.names[self.hosts[h].node])),
                }
            }
            Ev::HostTimer(h, timer) => {
                let actions = self.hosts[h].fsm.on_timeout(timer);
                self.apply_host(h, actions);
            }
            Ev::TmArrive(input) => self.tm_enqueue(input),
            Ev::TmDone(outputs) => {
                for out in outputs {
                    self.emit_tm(out);
                }
                self.tm_busy = false;
                self.tm_serve();
            }
            Ev::Ctrl(ev) => {
                let r = self.ctrl.on_event(ev);
                self.apply_ctrl_result(r);
            }
            Ev::CtrlFromTm(bytes) => {
                let r = self.ctrl.on_tm_frame(&bytes);
                self.apply_ctrl_result(r);
            }
            Ev::CtrlTimer(s, generation) => {
                let actions = self.ctrl.on_timeout(s, generation);
                self.apply_ctrl(actions);
            }
            Ev::FlowMod { switch, op, xid } => {
                match op {
                    FlowOp::Add(rule) => {
                        self.tables[switch].install(rule);
                    }
                    FlowOp::RemovePort(port) => {
                        self.tables[switch].remove_port(port);
                    }
                }
                if let Some(xid) = xid {
                    self.sim.schedule_in(self.cfg.ctrl_delay_us, Ev::Barrier(xid));
                }
            }
            Ev::Barrier(xid) => {
                let actions = self.ctrl.on_barrier(xid);
                self.apply_ctrl(actions);
            }
            Ev::PacketOut { switch, port, bytes } => match IcnPacket::decode(&bytes, self.params.m) {
                Ok(p) => self.send_on(self.switch_node[switch], port, &p),
                Err(e) => self.note(format!("bad PacketOut: {e}")),
            },
            Ev::LinkChange { link, up } => self.on_link_change(link, up),
            Ev::StatsTick => {
                let others = !self.sim.is_idle();
                let action = self.ctrl.stats_frame(&self.tx_period, self.cfg.stats_period_us);
                self.tx_period.clear();
                self.apply_ctrl(vec![action]);
                if others {
                    self.sim.schedule_in(self.cfg.stats_period_us, Ev::StatsTick);
                }
            }
        }
    }

    fn on_link_change(&mut self, link: usize, up: bool) {
        if self.wires[link].up == up {
            return;
        }
        self.wires[link].up = up;
        let endpoint = |o: Obj| match o {
            Obj::Tm => Some(Endpoint::Tm),
            Obj::Switch(s) => Some(Endpoint::Switch(s)),
            Obj::Host(_) => None,
        };
        let w = self.wires[link];
        if let (Some(a), Some(b)) = (endpoint(self.obj[w.a]), endpoint(self.obj[w.b])) {
            let ev = if up {
                ControlEvent::LinkUp { a, b }
            } else {
                ControlEvent::LinkDown { a, b }
            };
            let r = self.ctrl.on_event(ev);
            self.apply_ctrl_result(r);
        }
    }

    fn send_on(&mut self, node: usize, port: u32, packet: &IcnPacket) {
        let Some(&Port { link, peer, peer_port }) = self.ports[node].get(port as usize) else {
            self.note(format!("{} has no port {port}", self.names[node]));
            return;
        };
        if !self.wires[link].up {
            self.counters.link_down_drops += 1;
            return;
        }
        let bytes = packet.encode();
        if let Obj::Switch(s) = self.obj[node] {
            *self.tx_period.entry((s, port)).or_default() += bytes.len() as u64;
        }
        self.counters.packets_sent += 1;
        let now = self.sim.now();
        if let Some(t) = &mut self.trace {
            t.push(Hop { at_us: now, from: node, to: peer });
        }
        self.sim.schedule_in(
            self.wires[link].delay_us,
            Ev::Arrive {
                node: peer,
                port: peer_port,
                bytes,
            },
        );
    }

    fn forward(&mut self, node: usize, ingress: Option<u32>, ports: Vec<u32>, mut packet: IcnPacket, hop: bool) {
        let ports: Vec<u32> = ports.into_iter().filter(|&p| Some(p) != ingress).collect();
        if ports.is_empty() {
            return;
        }
        if hop && !packet.take_hop() {
            self.counters.hop_limit_drops += 1;
            return;
        }
        for p in ports {
            self.send_on(node, p, &packet);
        }
    }

    fn on_arrive(&mut self, node: usize, port: u32, bytes: &[u8]) {
        let packet = match IcnPacket::decode(bytes, self.params.m) {
            Ok(p) => p,
            Err(e) => return self.note(format!("undecodable packet at {}: {e}", self.names[node])),
        };
        match self.obj[node] {
            Obj::Switch(s) => match switch_forward(&self.tables[s], &packet) {
                ForwardResult::Ports(ps) => self.forward(node, Some(port), ps, packet, true),
                ForwardResult::Miss if packet.fid.is_empty() => {
                    self.counters.packet_ins += 1;
                    self.sim.schedule_in(
                        self.cfg.ctrl_delay_us,
                        Ev::Ctrl(ControlEvent::PacketIn {
                            switch: s,
                            in_port: port,
                            bytes: bytes.to_vec(),
                        }),
                    );
                }
                ForwardResult::Miss => self.counters.table_miss_drops += 1,
            },
            Obj::Tm => {
                if let Some(msg) = self.deliver(node, &packet) {
                    self.tm_enqueue(TmIn::Fabric { port, msg });
                }
                let ps = self.tm_ports_matching(&packet.fid);
                self.forward(node, Some(port), ps, packet, true);
            }
            Obj::Host(h) => {
                if let Some(msg) = self.deliver(node, &packet) {
                    match self.hosts[h].fsm.on_message(&msg, port) {
                        Ok(actions) => self.apply_host(h, actions),
                        Err(e) => debug!("host {} ignored {}: {e}", self.names[node], msg.name()),
                    }
                }
                let ps = self.host_ports_matching(h, &packet.fid);
                self.forward(node, Some(port), ps, packet, true);
            }
        }
    }

    /// Hands a packet to the local stack. Returns the message, if it is one.
    fn deliver(&mut self, node: usize, packet: &IcnPacket) -> Option<Message> {
        let p = &packet.payload;
        if p.len() == 9 && p[0] == DATA_MAGIC {
            let id = u64::from_be_bytes(p[1..9].try_into().expect("8 bytes"));
            self.counters.data_delivered += 1;
            self.deliveries.push(Delivery {
                at_us: self.sim.now(),
                node,
                id,
            });
            return None;
        }
        match Message::decode(p, self.params.m) {
            Ok(msg) => Some(msg),
            Err(e) => {
                self.note(format!("{} dropped a payload: {e}", self.names[node]));
                None
            }
        }
    }

    fn tm_ports_matching(&self, fid: &Fid) -> Vec<u32> {
        let graph = self.tm.graph();
        let mut out = Vec::new();
        for (i, p) in self.ports[self.tm_node].iter().enumerate() {
            let Some(nid) = self.nid_of_node[p.peer] else { continue };
            if let Some(l) = graph.link(NodeId::TM, nid) {
                if l.up && fid.matches(&l.lid).unwrap_or(false) {
                    out.push(i as u32);
                }
            }
        }
        out
    }

    fn host_ports_matching(&self, h: usize, fid: &Fid) -> Vec<u32> {
        let cfg = self.hosts[h].fsm.config();
        let mut out = Vec::new();
        for (i, p) in self.ports[self.hosts[h].node].iter().enumerate() {
            let Some(nid) = self.nid_of_node[p.peer] else { continue };
            if let Some(lid) = cfg.link_lids.get(&nid) {
                if fid.matches(lid).unwrap_or(false) {
                    out.push(i as u32);
                }
            }
        }
        out
    }

    fn apply_host(&mut self, h: usize, actions: Vec<Action>) {
        let node = self.hosts[h].node;
        let m = self.params.m;
        for a in actions {
            match a {
                Action::Broadcast(msg) => {
                    let packet = self.packet(Fid::empty(m), msg.encode(m));
                    for p in 0..self.ports[node].len() as u32 {
                        self.send_on(node, p, &packet);
                    }
                }
                Action::Send { via, fid, msg } => {
                    let packet = self.packet(fid, msg.encode(m));
                    self.send_on(node, via, &packet);
                }
                Action::ArmTimer { timer, after_us } => self.sim.schedule_in(after_us, Ev::HostTimer(h, timer)),
                Action::Completed => {
                    self.hosts[h].end_us = Some(self.sim.now());
                    self.nid_of_node[node] = Some(self.hosts[h].fsm.config().nid);
                }
                Action::Failed => {
                    let nonce = self.hosts[h].fsm.nonce();
                    self.note(format!("host {} failed to bootstrap", self.names[node]));
                    self.tm.abandon(nonce);
                }
            }
        }
    }

    fn tm_enqueue(&mut self, input: TmIn) {
        if self.tm_silent {
            return;
        }
        self.tm_queue.push_back(input);
        if !self.tm_busy {
            self.tm_serve();
        }
    }

    fn tm_serve(&mut self) {
        let Some(input) = self.tm_queue.pop_front() else {
            return;
        };
        let (reply, costly) = match input {
            TmIn::Fabric { port, msg } => {
                let costly = matches!(msg, Message::ResourceRequest { .. });
                let reply = self.tm.on_message(&msg, Origin::Fabric { port });
                if let Some((nid, attach)) = reply.allocated {
                    if attach == NodeId::TM {
                        let peer = self.ports[self.tm_node][port as usize].peer;
                        self.nid_of_node[peer] = Some(nid);
                    }
                }
                (reply, costly)
            }
            TmIn::Controller(bytes) => match Frame::decode(&bytes, self.params.m) {
                Ok(Frame::Protocol(msg)) => {
                    let costly = matches!(msg, Message::ResourceRequest { .. });
                    (self.tm.on_message(&msg, Origin::Controller), costly)
                }
                Ok(Frame::Control(cf)) => {
                    let costly = matches!(
                        cf,
                        crate::fabric::control::ControlFrame::LinkEvent(crate::topology::LinkEvent::Add { .. })
                    );
                    (self.tm.on_control(&cf), costly)
                }
                Err(e) => {
                    self.note(format!("tm dropped a controller frame: {e}"));
                    (TmReply::default(), false)
                }
            },
        };
        let cost = if costly {
            self.cfg.tm_service_us + self.cfg.tm_per_lid_us * reply.lids_drawn as u64
        } else {
            0
        };
        self.tm_busy = true;
        self.sim.schedule_in(cost, Ev::TmDone(reply.outputs));
    }

    fn emit_tm(&mut self, out: TmOutput) {
        match out {
            TmOutput::ToController(bytes) => self.sim.schedule_in(self.cfg.tm_if_delay_us, Ev::CtrlFromTm(bytes)),
            TmOutput::ToFabric { fid, bytes } => {
                let ps = self.tm_ports_matching(&fid);
                let packet = self.packet(fid, bytes);
                self.forward(self.tm_node, None, ps, packet, false);
            }
            TmOutput::ToPort { port, bytes } => {
                let packet = self.packet(Fid::empty(self.params.m), bytes);
                self.send_on(self.tm_node, port, &packet);
            }
        }
    }

    fn apply_ctrl_result(&mut self, r: Result<Vec<CtrlAction>, ControllerError>) {
        match r {
            Ok(actions) => self.apply_ctrl(actions),
            Err(e) => self.note(format!("controller: {e}")),
        }
    }

    fn apply_ctrl(&mut self, actions: Vec<CtrlAction>) {
        for a in actions {
            match a {
                CtrlAction::ToTm(bytes) => self
                    .sim
                    .schedule_in(self.cfg.tm_if_delay_us, Ev::TmArrive(TmIn::Controller(bytes))),
                CtrlAction::FlowMod { switch, op, xid } => {
                    self.sim
                        .schedule_in(self.cfg.ctrl_delay_us, Ev::FlowMod { switch, op, xid })
                }
                CtrlAction::PacketOut { switch, port, bytes } => {
                    self.sim
                        .schedule_in(self.cfg.ctrl_delay_us, Ev::PacketOut { switch, port, bytes })
                }
                CtrlAction::Emit(ev) => self.sim.schedule_in(0, Ev::Ctrl(ev)),
                CtrlAction::ArmTimer {
                    switch,
                    generation,
                    after_us,
                } => self.sim.schedule_in(after_us, Ev::CtrlTimer(switch, generation)),
                CtrlAction::Milestone(m) => self.on_milestone(m),
            }
        }
    }

    fn on_milestone(&mut self, m: Milestone) {
        let now = self.sim.now();
        match m {
            Milestone::AttachStarted(s) => {
                self.switch_spans[s].0.get_or_insert(now);
            }
            Milestone::SwitchEnabled { switch, nid } => {
                self.switch_spans[switch].1 = Some(now);
                self.nid_of_node[self.switch_node[switch]] = Some(nid);
            }
            Milestone::AttachFailed(s) => {
                self.note(format!("switch {} failed to attach", self.names[self.switch_node[s]]));
            }
            Milestone::LinkAddStarted(a, b) => {
                if let Some(&l) = self.endpoint_link.get(&(a, b)) {
                    self.link_spans[l].0.get_or_insert(now);
                }
            }
            Milestone::LinkReady(a, b) => {
                if let Some(&l) = self.endpoint_link.get(&(a, b)) {
                    self.link_spans[l].1.get_or_insert(now);
                }
            }
        }
    }

    fn span_label(&self, node: usize) -> String {
        match self.obj[node] {
            Obj::Tm => format!("tm:{}", self.names[node]),
            Obj::Switch(_) => format!("switch:{}", self.names[node]),
            Obj::Host(_) => format!("host:{}", self.names[node]),
        }
    }

    fn node_span(&self, node: usize) -> (Option<u64>, Option<u64>) {
        match self.obj[node] {
            Obj::Tm => (Some(0), Some(0)),
            Obj::Switch(s) => self.switch_spans[s],
            Obj::Host(h) => (self.hosts[h].start_us, self.hosts[h].end_us),
        }
    }

    /// Bootstrap span of a switch or host.
    pub fn measure_bootstrap(&self, name: &str) -> Result<MeasurementSpan, SimError> {
        let node = self.index(name).map_err(|_| SimError::NeverCompleted(name.to_string()))?;
        let label = self.span_label(node);
        match self.node_span(node) {
            (Some(start_us), Some(end_us)) => Ok(MeasurementSpan { label, start_us, end_us }),
            _ => Err(SimError::NeverCompleted(label)),
        }
    }

    /// Fails with the first node, in spec order, that did not bootstrap.
    pub fn check_complete(&self) -> Result<(), SimError> {
        for node in 0..self.names.len() {
            if self.obj[node] != Obj::Tm {
                self.measure_bootstrap(&self.names[node])?;
            }
        }
        Ok(())
    }

    pub fn report(&self) -> SimReport {
        let mut spans = Vec::new();
        let mut nodes = Vec::new();
        for node in 0..self.names.len() {
            let (state, kind) = match self.obj[node] {
                Obj::Tm => ("DONE".to_string(), "tm"),
                Obj::Switch(s) => {
                    let st = if self.ctrl.is_enabled(s) {
                        "DONE"
                    } else if self.ctrl.has_failed(s) {
                        "FAILED"
                    } else {
                        "PENDING"
                    };
                    (st.to_string(), "switch")
                }
                Obj::Host(h) => (format!("{:?}", self.hosts[h].fsm.state()).to_uppercase(), "host"),
            };
            nodes.push(NodeSummary {
                name: self.names[node].clone(),
                kind,
                nid: self.nid_of_node[node].map(|n| n.0),
                state,
            });
            if self.obj[node] != Obj::Tm {
                if let Ok(span) = self.measure_bootstrap(&self.names[node]) {
                    spans.push(span);
                }
            }
        }
        for (l, (a, b)) in self.link_names.iter().enumerate() {
            if let (Some(start_us), Some(end_us)) = self.link_spans[l] {
                spans.push(MeasurementSpan {
                    label: format!("link:{a}-{b}"),
                    start_us,
                    end_us,
                });
            }
        }
        SimReport {
            spans,
            nodes,
            formation_us: self.formation_us,
            end_us: self.sim.now(),
            events: self.sim.processed(),
            counters: self.counters.clone(),
        }
    }
}
