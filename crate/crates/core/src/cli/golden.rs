// SPDX-License-Identifier: Apache-2.0

//! Fixed sample frames printed by `icnsim dump-protocol`.
//!
//! All vectors use m = 256. The identifiers are chosen so the bytes are easy
//! to read: `LID_A` sets bits 0..=4, `LID_B` bits 8, 16, 24, 32 and 40, and
//! the iLID bits 251..=255. Bit 0 is the most significant bit of byte 0.

use crate::fabric::control::{ControlFrame, RuleInstall, RuleOp};
use crate::fid::{BitVector, Fid, LinkId};
use crate::protocol::wire::Message;
use crate::topology::{LinkEvent, LinkStat, LinkStatsReport, NodeId, NodeKind};

pub const WIDTH: usize = 256;
pub const NONCE: u64 = 0x0102_0304_0506_0708;

pub fn lid_a() -> LinkId {
    LinkId::from_bits(BitVector::from_positions(WIDTH, 0..5))
}

pub fn lid_b() -> LinkId {
    LinkId::from_bits(BitVector::from_positions(WIDTH, [8, 16, 24, 32, 40]))
}

pub fn ilid() -> LinkId {
    LinkId::from_bits(BitVector::from_positions(WIDTH, 251..256))
}

pub fn tmfid() -> Fid {
    let mut f = Fid::empty(WIDTH);
    f.insert(&lid_a()).expect("same width");
    f.insert(&lid_b()).expect("same width");
    f
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sample {
    Message(Message),
    Control(ControlFrame),
}

impl Sample {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            Sample::Message(m) => m.encode(WIDTH),
            Sample::Control(c) => c.encode(),
        }
    }
}

/// Named samples, one per frame type and variant worth pinning down.
pub fn samples() -> Vec<(&'static str, Sample)> {
    use Sample::{Control as C, Message as M};
    vec![
        ("discovery_request", M(Message::DiscoveryRequest { nonce: NONCE })),
        (
            "discovery_offer",
            M(Message::DiscoveryOffer { nonce: NONCE, responder: NodeId(2), tmfid: tmfid() }),
        ),
        (
            "resource_request",
            M(Message::ResourceRequest { nonce: NONCE, kind: NodeKind::IcnNode, attach: NodeId(2) }),
        ),
        (
            "resource_offer",
            M(Message::ResourceOffer { nonce: NONCE, nid: NodeId(7), lid: lid_a(), ilid: Some(ilid()) }),
        ),
        (
            "resource_offer_switch",
            M(Message::ResourceOffer { nonce: NONCE, nid: NodeId(7), lid: lid_a(), ilid: None }),
        ),
        ("offer_accepted", M(Message::OfferAccepted { nonce: NONCE, nid: NodeId(7) })),
        ("resource_accepted", M(Message::ResourceAccepted { nonce: NONCE, nid: NodeId(7) })),
        ("update", M(Message::Update { nid: NodeId(2), lid: lid_b(), tmfid: Some(tmfid()) })),
        ("update_link_local", M(Message::Update { nid: NodeId(7), lid: lid_a(), tmfid: None })),
        ("link_event_add", C(ControlFrame::LinkEvent(LinkEvent::Add { a: NodeId(2), b: NodeId(3) }))),
        ("link_event_remove", C(ControlFrame::LinkEvent(LinkEvent::Remove { a: NodeId(2), b: NodeId(3) }))),
        (
            "link_event_update",
            C(ControlFrame::LinkEvent(LinkEvent::Update { a: NodeId(2), b: NodeId(3), load: 0.25 })),
        ),
        (
            "link_stats",
            C(ControlFrame::LinkStats(LinkStatsReport {
                entries: vec![LinkStat { lid: lid_a(), tx_bytes: 1500, utilization: 0.5 }],
            })),
        ),
        (
            "rule_install",
            C(ControlFrame::RuleInstall(RuleInstall {
                op: RuleOp::Install,
                switch: NodeId(2),
                next_hop: NodeId(7),
                nonce: NONCE,
                lid: lid_a(),
            })),
        ),
        (
            "rule_installed_ack",
            C(ControlFrame::RuleInstall(RuleInstall {
                op: RuleOp::InstalledAck,
                switch: NodeId(2),
                next_hop: NodeId(7),
                nonce: NONCE,
                lid: lid_a(),
            })),
        ),
    ]
}

/// `name hex` lines, as printed by the CLI.
pub fn dump() -> String {
    samples()
        .into_iter()
        .map(|(name, s)| format!("{name} {}\n", hex::encode(s.encode())))
        .collect()
}
