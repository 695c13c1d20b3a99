// SPDX-License-Identifier: Apache-2.0

//! New-node bootstrap state machine and the neighbor-side handlers.
//!
//! A node starts with temporary identifiers, broadcasts a discovery request
//! on every interface, collects offers for `discovery_wait`, then talks to
//! the TM along the best offered TMFID:
//!
//! ```text
//! INIT -> DISCOVERING -> REQUESTING -> AWAIT_FINAL -> DONE
//!              \______________\_____________\_______-> FAILED
//! ```
//!
//! The machine is purely reactive. It never sleeps or sends by itself; every
//! call returns the [`Action`]s the host environment must carry out.

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::fid::{Fid, LinkId};
use crate::protocol::wire::Message;
use crate::topology::{NodeId, NodeKind};

/// Local interface (port) index of a node.
pub type Interface = u32;

/// Timer settings in simulated microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Timers {
    pub discovery_wait_us: u64,
    pub request_timeout_us: u64,
    pub max_retries: u32,
}

impl Default for Timers {
    fn default() -> Self {
        Timers {
            discovery_wait_us: 100_000,
            request_timeout_us: 2_000_000,
            max_retries: 3,
        }
    }
}

impl Timers {
    pub fn validate(&self) -> Result<(), String> {
        if self.discovery_wait_us == 0 || self.request_timeout_us == 0 || self.max_retries == 0 {
            return Err("timer values and max_retries must be positive".into());
        }
        Ok(())
    }
}

/// A node's identifiers. Until bootstrap completes they are the temporary
/// defaults: NID 0, no iLID, an empty TMFID.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeConfig {
    pub nid: NodeId,
    pub ilid: Option<LinkId>,
    /// LID of the link from this node to each neighbor.
    pub link_lids: BTreeMap<NodeId, LinkId>,
    pub tmfid: Fid,
}

impl NodeConfig {
    pub fn temporary(m: usize) -> Self {
        NodeConfig {
            nid: NodeId::UNASSIGNED,
            ilid: None,
            link_lids: BTreeMap::new(),
            tmfid: Fid::empty(m),
        }
    }

    pub fn is_bootstrapped(&self) -> bool {
        self.nid != NodeId::UNASSIGNED
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FsmState {
    Init,
    Discovering,
    Requesting,
    AwaitFinal,
    Done,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimerKind {
    DiscoveryWait,
    RequestTimeout,
}

/// Handle of an armed timer. Re-arming bumps the generation, so a stale
/// expiry is recognised and ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimerId {
    pub kind: TimerKind,
    pub generation: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    /// Send on every interface with an all-zero FID.
    Broadcast(Message),
    /// Send on one interface. An empty `fid` reaches only the link peer.
    Send { via: Interface, fid: Fid, msg: Message },
    ArmTimer { timer: TimerId, after_us: u64 },
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FsmError {
    #[error("message or call not valid in state {0:?}")]
    WrongState(FsmState),
    #[error("nonce does not match the running handshake")]
    NonceMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollectedOffer {
    pub via: Interface,
    pub responder: NodeId,
    pub tmfid: Fid,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Tentative {
    nid: NodeId,
    lid: LinkId,
    ilid: Option<LinkId>,
}

#[derive(Debug, Clone)]
pub struct NodeBootstrapFsm {
    kind: NodeKind,
    timers: Timers,
    interfaces: Vec<Interface>,
    state: FsmState,
    nonce: u64,
    offers: Vec<CollectedOffer>,
    chosen: Option<CollectedOffer>,
    tentative: Option<Tentative>,
    accepted: bool,
    tm_update: Option<(LinkId, Fid)>,
    retries_left: u32,
    generation: u64,
    config: NodeConfig,
}

impl NodeBootstrapFsm {
    pub fn new(kind: NodeKind, interfaces: Vec<Interface>, timers: Timers, m: usize) -> Self {
        NodeBootstrapFsm {
            kind,
            timers,
            interfaces,
            state: FsmState::Init,
            nonce: 0,
            offers: Vec::new(),
            chosen: None,
            tentative: None,
            accepted: false,
            tm_update: None,
            retries_left: timers.max_retries,
            generation: 0,
            config: NodeConfig::temporary(m),
        }
    }

    pub fn state(&self) -> FsmState {
        self.state
    }

    pub fn config(&self) -> &NodeConfig {
        &self.config
    }

    pub fn nonce(&self) -> u64 {
        self.nonce
    }

    pub fn interfaces(&self) -> &[Interface] {
        &self.interfaces
    }

    pub fn offers(&self) -> &[CollectedOffer] {
        &self.offers
    }

    /// The offer the request was routed by, once chosen.
    pub fn chosen(&self) -> Option<&CollectedOffer> {
        self.chosen.as_ref()
    }

    fn arm(&mut self, kind: TimerKind) -> Action {
        self.generation += 1;
        let after_us = match kind {
            TimerKind::DiscoveryWait => self.timers.discovery_wait_us,
            TimerKind::RequestTimeout => self.timers.request_timeout_us,
        };
        Action::ArmTimer {
            timer: TimerId {
                kind,
                generation: self.generation,
            },
            after_us,
        }
    }

    fn enter(&mut self, state: FsmState) {
        self.state = state;
        self.retries_left = self.timers.max_retries;
    }

    pub fn start<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Vec<Action>, FsmError> {
        if self.state != FsmState::Init {
            return Err(FsmError::WrongState(self.state));
        }
        self.nonce = rng.random();
        self.enter(FsmState::Discovering);
        Ok(vec![
            Action::Broadcast(Message::DiscoveryRequest { nonce: self.nonce }),
            self.arm(TimerKind::DiscoveryWait),
        ])
    }

    /// Best offer: fewest TMFID bits, then lowest responder NID, then lowest
    /// interface.
    fn best_offer(&self) -> Option<CollectedOffer> {
        self.offers
            .iter()
            .min_by_key(|o| (o.tmfid.bits().count_ones(), o.responder, o.via))
            .cloned()
    }

    fn request(&self) -> Action {
        let chosen = self.chosen.as_ref().expect("request sent after choosing an offer");
        Action::Send {
            via: chosen.via,
            fid: chosen.tmfid.clone(),
            msg: Message::ResourceRequest {
                nonce: self.nonce,
                kind: self.kind,
                attach: chosen.responder,
            },
        }
    }

    fn accept(&self) -> Action {
        let chosen = self.chosen.as_ref().expect("accept sent after choosing an offer");
        let t = self.tentative.as_ref().expect("accept sent after an offer");
        Action::Send {
            via: chosen.via,
            fid: chosen.tmfid.clone(),
            msg: Message::OfferAccepted {
                nonce: self.nonce,
                nid: t.nid,
            },
        }
    }

    pub fn on_message(&mut self, msg: &Message, via: Interface) -> Result<Vec<Action>, FsmError> {
        match (self.state, msg) {
            (FsmState::Discovering, Message::DiscoveryOffer { nonce, responder, tmfid }) => {
                if *nonce != self.nonce {
                    return Err(FsmError::NonceMismatch);
                }
                self.offers.push(CollectedOffer {
                    via,
                    responder: *responder,
                    tmfid: tmfid.clone(),
                });
                Ok(Vec::new())
            }
            (FsmState::Requesting, Message::ResourceOffer { nonce, nid, lid, ilid }) => {
                if *nonce != self.nonce {
                    return Err(FsmError::NonceMismatch);
                }
                self.tentative = Some(Tentative {
                    nid: *nid,
                    lid: lid.clone(),
                    ilid: ilid.clone(),
                });
                self.enter(FsmState::AwaitFinal);
                Ok(vec![self.accept(), self.arm(TimerKind::RequestTimeout)])
            }
            (FsmState::AwaitFinal, Message::ResourceAccepted { nonce, nid }) => {
                let t = self.tentative.as_ref().expect("offer adopted before AWAIT_FINAL");
                if *nonce != self.nonce || *nid != t.nid {
                    return Err(FsmError::NonceMismatch);
                }
                self.accepted = true;
                Ok(self.try_finish())
            }
            (FsmState::AwaitFinal, Message::Update { nid, lid, tmfid: Some(tmfid) }) => {
                let chosen = self.chosen.as_ref().expect("offer chosen before AWAIT_FINAL");
                if *nid != chosen.responder {
                    return Err(FsmError::WrongState(self.state));
                }
                self.tm_update = Some((lid.clone(), tmfid.clone()));
                Ok(self.try_finish())
            }
            (FsmState::Done, Message::Update { .. }) => {
                neighbor_on_update(msg, &mut self.config);
                Ok(Vec::new())
            }
            (FsmState::Done, Message::DiscoveryRequest { nonce }) => {
                let offer = responder_on_discovery(*nonce, &self.config)
                    .expect("a finished node is bootstrapped");
                Ok(vec![Action::Send {
                    via,
                    fid: Fid::empty(self.config.tmfid.width()),
                    msg: offer,
                }])
            }
            (state, _) => Err(FsmError::WrongState(state)),
        }
    }

    /// Commits once both the acceptance and the TM's update have arrived.
    fn try_finish(&mut self) -> Vec<Action> {
        let Some((upstream, tmfid)) = self.tm_update.clone() else {
            return Vec::new();
        };
        if !self.accepted {
            return Vec::new();
        }
        let t = self.tentative.clone().expect("offer adopted before commit");
        let attach = self.chosen.as_ref().expect("offer chosen before commit").responder;
        self.config.nid = t.nid;
        self.config.ilid = t.ilid;
        self.config.link_lids.insert(attach, upstream);
        self.config.tmfid = tmfid;
        self.enter(FsmState::Done);
        self.generation += 1;

        let width = self.config.tmfid.width();
        let mut ifaces: Vec<Interface> = self.offers.iter().map(|o| o.via).collect();
        ifaces.sort_unstable();
        ifaces.dedup();
        let mut out: Vec<Action> = ifaces
            .into_iter()
            .map(|via| Action::Send {
                via,
                fid: Fid::empty(width),
                msg: Message::Update {
                    nid: t.nid,
                    lid: t.lid.clone(),
                    tmfid: None,
                },
            })
            .collect();
        out.push(Action::Completed);
        out
    }

    pub fn on_timeout(&mut self, timer: TimerId) -> Vec<Action> {
        if timer.generation != self.generation {
            return Vec::new();
        }
        match (self.state, timer.kind) {
            (FsmState::Discovering, TimerKind::DiscoveryWait) => {
                if let Some(best) = self.best_offer() {
                    self.chosen = Some(best);
                    self.enter(FsmState::Requesting);
                    return vec![self.request(), self.arm(TimerKind::RequestTimeout)];
                }
                if self.spend_retry() {
                    return vec![Action::Failed];
                }
                vec![
                    Action::Broadcast(Message::DiscoveryRequest { nonce: self.nonce }),
                    self.arm(TimerKind::DiscoveryWait),
                ]
            }
            (FsmState::Requesting, TimerKind::RequestTimeout) => {
                if self.spend_retry() {
                    return vec![Action::Failed];
                }
                vec![self.request(), self.arm(TimerKind::RequestTimeout)]
            }
            (FsmState::AwaitFinal, TimerKind::RequestTimeout) => {
                if self.spend_retry() {
                    return vec![Action::Failed];
                }
                vec![self.accept(), self.arm(TimerKind::RequestTimeout)]
            }
            _ => Vec::new(),
        }
    }

    /// Uses up one retry; true when none are left and the machine failed.
    fn spend_retry(&mut self) -> bool {
        self.retries_left = self.retries_left.saturating_sub(1);
        if self.retries_left == 0 {
            self.state = FsmState::Failed;
            true
        } else {
            false
        }
    }

    /// NID offered by the TM, if the handshake got that far.
    pub fn offered_nid(&self) -> Option<NodeId> {
        self.tentative.as_ref().map(|t| t.nid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("responder is not bootstrapped")]
pub struct NotBootstrapped;

/// Answer of an already bootstrapped node to a discovery request.
pub fn responder_on_discovery(nonce: u64, config: &NodeConfig) -> Result<Message, NotBootstrapped> {
    if !config.is_bootstrapped() {
        return Err(NotBootstrapped);
    }
    Ok(Message::DiscoveryOffer {
        nonce,
        responder: config.nid,
        tmfid: config.tmfid.clone(),
    })
}

/// Records a neighbor's link announcement. An update that carries a TMFID
/// comes from the TM and replaces the receiver's own TMFID. Anything other
/// than an `Update` is ignored.
pub fn neighbor_on_update(update: &Message, config: &mut NodeConfig) {
    if let Message::Update { nid, lid, tmfid } = update {
        config.link_lids.insert(*nid, lid.clone());
        if let Some(f) = tmfid {
            config.tmfid = f.clone();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fid::BitVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const M: usize = 64;

    fn lid(bits: &[usize]) -> LinkId {
        LinkId::from_bits(BitVector::from_positions(M, bits.iter().copied()))
    }

    fn fid(bits: &[usize]) -> Fid {
        Fid::from_bits(BitVector::from_positions(M, bits.iter().copied()))
    }

    fn fsm() -> NodeBootstrapFsm {
        NodeBootstrapFsm::new(NodeKind::IcnNode, vec![0, 1], Timers::default(), M)
    }

    fn timer_of(actions: &[Action]) -> TimerId {
        actions
            .iter()
            .find_map(|a| match a {
                Action::ArmTimer { timer, .. } => Some(*timer),
                _ => None,
            })
            .expect("a timer was armed")
    }

    fn offer(f: &NodeBootstrapFsm, responder: u64, tmfid: Fid) -> Message {
        Message::DiscoveryOffer {
            nonce: f.nonce(),
            responder: NodeId(responder),
            tmfid,
        }
    }

    /// Runs discovery with one offer on interface 0 and returns the armed
    /// request timer.
    fn to_requesting(f: &mut NodeBootstrapFsm) -> TimerId {
        let start = f.start(&mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        f.on_message(&offer(f, 5, fid(&[1, 2])), 0).unwrap();
        timer_of(&f.on_timeout(timer_of(&start)))
    }

    fn resource_offer(f: &NodeBootstrapFsm) -> Message {
        Message::ResourceOffer {
            nonce: f.nonce(),
            nid: NodeId(9),
            lid: lid(&[3, 4]),
            ilid: Some(lid(&[5, 6])),
        }
    }

    fn final_messages(f: &NodeBootstrapFsm) -> [Message; 2] {
        [
            Message::Update {
                nid: NodeId(5),
                lid: lid(&[7, 8]),
                tmfid: Some(fid(&[1, 2, 7, 8])),
            },
            Message::ResourceAccepted {
                nonce: f.nonce(),
                nid: NodeId(9),
            },
        ]
    }

    #[test]
    fn start_broadcasts_and_arms() {
        let mut f = fsm();
        let out = f.start(&mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(out.len(), 2);
        assert!(matches!(out[0], Action::Broadcast(Message::DiscoveryRequest { .. })));
        assert!(matches!(
            out[1],
            Action::ArmTimer { timer: TimerId { kind: TimerKind::DiscoveryWait, .. }, after_us: 100_000 }
        ));
        assert_eq!(f.state(), FsmState::Discovering);
        assert_eq!(
            f.start(&mut ChaCha8Rng::seed_from_u64(1)),
            Err(FsmError::WrongState(FsmState::Discovering))
        );
    }

    #[test]
    fn different_seeds_give_different_nonces() {
        let mut a = fsm();
        let mut b = fsm();
        a.start(&mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        b.start(&mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_ne!(a.nonce(), b.nonce());
    }

    #[test]
    fn single_offer_routes_request() {
        let mut f = fsm();
        let start = f.start(&mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        f.on_message(&offer(&f, 5, fid(&[1, 2])), 1).unwrap();
        let out = f.on_timeout(timer_of(&start));
        assert_eq!(
            out[0],
            Action::Send {
                via: 1,
                fid: fid(&[1, 2]),
                msg: Message::ResourceRequest {
                    nonce: f.nonce(),
                    kind: NodeKind::IcnNode,
                    attach: NodeId(5)
                }
            }
        );
        assert_eq!(f.state(), FsmState::Requesting);
    }

    #[test]
    fn fewest_bits_offer_wins() {
        let mut f = fsm();
        let start = f.start(&mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let ten: Vec<usize> = (0..10).collect();
        f.on_message(&offer(&f, 3, fid(&ten)), 0).unwrap();
        f.on_message(&offer(&f, 8, fid(&[20, 21, 22, 23, 24])), 1).unwrap();
        let out = f.on_timeout(timer_of(&start));
        let Action::Send { via, fid: routed, .. } = &out[0] else {
            panic!("expected a request")
        };
        assert_eq!(*via, 1);
        assert_eq!(routed.bits().count_ones(), 5);
    }

    #[test]
    fn equal_bits_prefer_lower_responder() {
        let mut f = fsm();
        let start = f.start(&mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        f.on_message(&offer(&f, 8, fid(&[1])), 0).unwrap();
        f.on_message(&offer(&f, 4, fid(&[2])), 1).unwrap();
        f.on_timeout(timer_of(&start));
        assert_eq!(f.chosen().unwrap().responder, NodeId(4));
    }

    #[test]
    fn alien_nonce_is_ignored() {
        let mut f = fsm();
        to_requesting(&mut f);
        let alien = Message::ResourceOffer {
            nonce: f.nonce().wrapping_add(1),
            nid: NodeId(9),
            lid: lid(&[3]),
            ilid: None,
        };
        assert_eq!(f.on_message(&alien, 0), Err(FsmError::NonceMismatch));
        assert_eq!(f.state(), FsmState::Requesting);
    }

    #[test]
    fn full_handshake() {
        let mut f = fsm();
        to_requesting(&mut f);
        let out = f.on_message(&resource_offer(&f), 0).unwrap();
        assert!(matches!(&out[0], Action::Send { msg: Message::OfferAccepted { nid: NodeId(9), .. }, .. }));
        assert_eq!(f.state(), FsmState::AwaitFinal);
        assert!(!f.config().is_bootstrapped());
        let [update, accepted] = final_messages(&f);
        assert!(f.on_message(&update, 0).unwrap().is_empty());
        let out = f.on_message(&accepted, 0).unwrap();
        assert_eq!(f.state(), FsmState::Done);
        assert_eq!(out.last(), Some(&Action::Completed));
        assert!(matches!(
            &out[0],
            Action::Send { via: 0, msg: Message::Update { nid: NodeId(9), tmfid: None, .. }, .. }
        ));
        let cfg = f.config();
        assert_eq!(cfg.nid, NodeId(9));
        assert_eq!(cfg.ilid, Some(lid(&[5, 6])));
        assert_eq!(cfg.link_lids.get(&NodeId(5)), Some(&lid(&[7, 8])));
        assert_eq!(cfg.tmfid, fid(&[1, 2, 7, 8]));
    }

    #[test]
    fn acceptance_for_other_nid_is_rejected() {
        let mut f = fsm();
        to_requesting(&mut f);
        f.on_message(&resource_offer(&f), 0).unwrap();
        let wrong = Message::ResourceAccepted {
            nonce: f.nonce(),
            nid: NodeId(10),
        };
        assert_eq!(f.on_message(&wrong, 0), Err(FsmError::NonceMismatch));
        assert_eq!(f.state(), FsmState::AwaitFinal);
    }

    #[test]
    fn silent_tm_fails_after_three_timeouts() {
        let mut f = fsm();
        let mut t = to_requesting(&mut f);
        for round in 0..3 {
            let out = f.on_timeout(t);
            if round < 2 {
                assert!(matches!(out[0], Action::Send { msg: Message::ResourceRequest { .. }, .. }));
                t = timer_of(&out);
            } else {
                assert_eq!(out, vec![Action::Failed]);
            }
        }
        assert_eq!(f.state(), FsmState::Failed);
    }

    #[test]
    fn empty_discovery_rebroadcasts_then_fails() {
        let mut f = fsm();
        let mut t = timer_of(&f.start(&mut ChaCha8Rng::seed_from_u64(1)).unwrap());
        let out = f.on_timeout(t);
        assert!(matches!(out[0], Action::Broadcast(_)));
        t = timer_of(&out);
        t = timer_of(&f.on_timeout(t));
        assert_eq!(f.on_timeout(t), vec![Action::Failed]);
    }

    #[test]
    fn stale_and_late_timers_do_nothing() {
        let mut f = fsm();
        let first = timer_of(&f.start(&mut ChaCha8Rng::seed_from_u64(1)).unwrap());
        f.on_message(&offer(&f, 5, fid(&[1])), 0).unwrap();
        let request_timer = timer_of(&f.on_timeout(first));
        assert!(f.on_timeout(first).is_empty());
        f.on_message(&resource_offer(&f), 0).unwrap();
        for m in final_messages(&f) {
            f.on_message(&m, 0).unwrap();
        }
        assert_eq!(f.state(), FsmState::Done);
        assert!(f.on_timeout(request_timer).is_empty());
        assert!(f
            .on_timeout(TimerId { kind: TimerKind::RequestTimeout, generation: 999 })
            .is_empty());
    }

    #[test]
    fn lost_offer_then_retry_commits_once() {
        let mut f = fsm();
        let t = to_requesting(&mut f);
        // The first offer is lost; the retry carries the same nonce.
        let out = f.on_timeout(t);
        assert!(matches!(
            &out[0],
            Action::Send { msg: Message::ResourceRequest { nonce, .. }, .. } if *nonce == f.nonce()
        ));
        f.on_message(&resource_offer(&f), 0).unwrap();
        // A duplicate offer triggered by the retry is not re-adopted.
        assert!(f.on_message(&resource_offer(&f), 0).is_err());
        let mut completions = 0;
        for m in final_messages(&f).iter().chain(final_messages(&f).iter()) {
            if let Ok(out) = f.on_message(m, 0) {
                completions += out.iter().filter(|a| **a == Action::Completed).count();
            }
        }
        assert_eq!(completions, 1);
        assert_eq!(f.config().nid, NodeId(9));
    }

    #[test]
    fn responder_examples() {
        let mut cfg = NodeConfig::temporary(M);
        assert_eq!(responder_on_discovery(4, &cfg), Err(NotBootstrapped));
        cfg.nid = NodeId(6);
        cfg.tmfid = fid(&[1, 2]);
        assert_eq!(
            responder_on_discovery(4, &cfg).unwrap(),
            Message::DiscoveryOffer { nonce: 4, responder: NodeId(6), tmfid: fid(&[1, 2]) }
        );
        let mut tm = NodeConfig::temporary(M);
        tm.nid = NodeId::TM;
        let Message::DiscoveryOffer { tmfid, .. } = responder_on_discovery(1, &tm).unwrap() else {
            unreachable!()
        };
        assert!(tmfid.is_empty());
    }

    #[test]
    fn neighbor_updates() {
        let mut cfg = NodeConfig::temporary(M);
        cfg.nid = NodeId(3);
        let up = Message::Update { nid: NodeId(7), lid: lid(&[1, 9]), tmfid: None };
        neighbor_on_update(&up, &mut cfg);
        let once = cfg.clone();
        neighbor_on_update(&up, &mut cfg);
        assert_eq!(cfg, once);
        assert_eq!(cfg.link_lids.get(&NodeId(7)), Some(&lid(&[1, 9])));
        assert!(cfg.tmfid.is_empty());
        let repair = Message::Update { nid: NodeId(4), lid: lid(&[2]), tmfid: Some(fid(&[2, 30])) };
        neighbor_on_update(&repair, &mut cfg);
        assert_eq!(cfg.tmfid, fid(&[2, 30]));
    }

    #[test]
    fn done_node_answers_discovery() {
        let mut f = fsm();
        to_requesting(&mut f);
        f.on_message(&resource_offer(&f), 0).unwrap();
        for m in final_messages(&f) {
            f.on_message(&m, 0).unwrap();
        }
        let out = f.on_message(&Message::DiscoveryRequest { nonce: 77 }, 1).unwrap();
        assert!(matches!(
            &out[0],
            Action::Send { via: 1, msg: Message::DiscoveryOffer { nonce: 77, responder: NodeId(9), .. }, .. }
        ));
    }
}
