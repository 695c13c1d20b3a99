// SPDX-License-Identifier: Apache-2.0

//! Frames of the controller-TM interface that are not bootstrap messages.
//!
//! They share the header of [`crate::protocol::wire`]:
//!
//! | type | frame           | payload                                                    |
//! |------|-----------------|------------------------------------------------------------|
//! | 0x10 | LinkEvent       | op u8, a u64, b u64, load u32 (parts per million)          |
//! | 0x11 | LinkStatsReport | count u16, then per entry: lid, tx_bytes u64, util f64     |
//! | 0x12 | RuleInstall     | op u8, switch u64, next_hop u64, nonce u64, lid            |
//!
//! All integers are big-endian; `util` is the IEEE-754 bit pattern.

use crate::fid::LinkId;
use crate::protocol::wire::{frame, put_u64, Header, Message, Reader, WireError};
use crate::topology::{LinkEvent, LinkStat, LinkStatsReport, NodeId};

pub const TYPE_LINK_EVENT: u8 = 0x10;
pub const TYPE_LINK_STATS: u8 = 0x11;
pub const TYPE_RULE_INSTALL: u8 = 0x12;

const LINK_ADD: u8 = 1;
const LINK_REMOVE: u8 = 2;
const LINK_UPDATE: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleOp {
    Install,
    Remove,
    /// Sent by the controller once the switch confirmed the install.
    InstalledAck,
}

impl RuleOp {
    fn code(self) -> u8 {
        match self {
            RuleOp::Install => 1,
            RuleOp::Remove => 2,
            RuleOp::InstalledAck => 3,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            1 => Some(RuleOp::Install),
            2 => Some(RuleOp::Remove),
            3 => Some(RuleOp::InstalledAck),
            _ => None,
        }
    }
}

/// Directive that `switch` forwards `lid` towards `next_hop`. `nonce` ties a
/// rule to a pending host handshake and is zero otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RuleInstall {
    pub op: RuleOp,
    pub switch: NodeId,
    pub next_hop: NodeId,
    pub nonce: u64,
    pub lid: LinkId,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControlFrame {
    LinkEvent(LinkEvent),
    LinkStats(LinkStatsReport),
    RuleInstall(RuleInstall),
}

/// Converts a load to parts per million, saturating to `[0, 1]`.
pub fn load_to_ppm(load: f64) -> u32 {
    (load.clamp(0.0, 1.0) * 1e6).round() as u32
}

impl ControlFrame {
    pub fn type_code(&self) -> u8 {
        match self {
            ControlFrame::LinkEvent(_) => TYPE_LINK_EVENT,
            ControlFrame::LinkStats(_) => TYPE_LINK_STATS,
            ControlFrame::RuleInstall(_) => TYPE_RULE_INSTALL,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut p = Vec::new();
        match self {
            ControlFrame::LinkEvent(ev) => {
                let (op, a, b, load) = match *ev {
                    LinkEvent::Add { a, b } => (LINK_ADD, a, b, 0),
                    LinkEvent::Remove { a, b } => (LINK_REMOVE, a, b, 0),
                    LinkEvent::Update { a, b, load } => (LINK_UPDATE, a, b, load_to_ppm(load)),
                };
                p.push(op);
                put_u64(&mut p, a.0);
                put_u64(&mut p, b.0);
                p.extend_from_slice(&load.to_be_bytes());
            }
            ControlFrame::LinkStats(report) => {
                let count = u16::try_from(report.entries.len()).expect("at most 65535 entries");
                p.extend_from_slice(&count.to_be_bytes());
                for e in &report.entries {
                    p.extend_from_slice(e.lid.bits().as_bytes());
                    put_u64(&mut p, e.tx_bytes);
                    p.extend_from_slice(&e.utilization.to_bits().to_be_bytes());
                }
            }
            ControlFrame::RuleInstall(r) => {
                p.push(r.op.code());
                put_u64(&mut p, r.switch.0);
                put_u64(&mut p, r.next_hop.0);
                put_u64(&mut p, r.nonce);
                p.extend_from_slice(r.lid.bits().as_bytes());
            }
        }
        frame(self.type_code(), &p)
    }

    pub fn decode(bytes: &[u8], m: usize) -> Result<ControlFrame, WireError> {
        let header = Header::parse(bytes)?;
        let v = m / 8;
        let expected = match header.ty {
            TYPE_LINK_EVENT => Some(21),
            TYPE_RULE_INSTALL => Some(25 + v),
            TYPE_LINK_STATS => None,
            other => return Err(WireError::UnknownType(other)),
        };
        let body = header.body(bytes, expected)?;
        let mut r = Reader::new(body);
        let frame = match header.ty {
            TYPE_LINK_EVENT => {
                let op = r.u8()?;
                let a = NodeId(r.u64()?);
                let b = NodeId(r.u64()?);
                let ppm = r.u32()?;
                let ev = match op {
                    LINK_ADD if ppm == 0 => LinkEvent::Add { a, b },
                    LINK_REMOVE if ppm == 0 => LinkEvent::Remove { a, b },
                    LINK_UPDATE if ppm <= 1_000_000 => LinkEvent::Update {
                        a,
                        b,
                        load: f64::from(ppm) / 1e6,
                    },
                    LINK_ADD | LINK_REMOVE | LINK_UPDATE => return Err(WireError::InvalidField("load")),
                    _ => return Err(WireError::InvalidField("link op")),
                };
                ControlFrame::LinkEvent(ev)
            }
            TYPE_LINK_STATS => {
                let count = r.u16()? as usize;
                let expected = 2 + count * (v + 16);
                if body.len() != expected {
                    return Err(if body.len() < expected {
                        WireError::TruncatedPayload
                    } else {
                        WireError::LengthMismatch {
                            declared: body.len(),
                            expected,
                        }
                    });
                }
                let mut entries = Vec::with_capacity(count);
                for _ in 0..count {
                    let lid = LinkId::from_bits(r.bits(m)?);
                    let tx_bytes = r.u64()?;
                    let utilization = f64::from_bits(r.u64()?);
                    if !(0.0..=1.0).contains(&utilization) {
                        return Err(WireError::InvalidField("utilization"));
                    }
                    entries.push(LinkStat {
                        lid,
                        tx_bytes,
                        utilization,
                    });
                }
                ControlFrame::LinkStats(LinkStatsReport { entries })
            }
            _ => {
                let op = RuleOp::from_code(r.u8()?).ok_or(WireError::InvalidField("rule op"))?;
                ControlFrame::RuleInstall(RuleInstall {
                    op,
                    switch: NodeId(r.u64()?),
                    next_hop: NodeId(r.u64()?),
                    nonce: r.u64()?,
                    lid: LinkId::from_bits(r.bits(m)?),
                })
            }
        };
        debug_assert_eq!(r.remaining(), 0);
        Ok(frame)
    }
}

/// Anything carried over the controller-TM interface.
#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    Protocol(Message),
    Control(ControlFrame),
}

impl Frame {
    pub fn encode(&self, m: usize) -> Vec<u8> {
        match self {
            Frame::Protocol(msg) => msg.encode(m),
            Frame::Control(c) => c.encode(),
        }
    }

    pub fn decode(bytes: &[u8], m: usize) -> Result<Frame, WireError> {
        let header = Header::parse(bytes)?;
        if header.ty >= TYPE_LINK_EVENT {
            ControlFrame::decode(bytes, m).map(Frame::Control)
        } else {
            Message::decode(bytes, m).map(Frame::Protocol)
        }
    }
}
