// SPDX-License-Identifier: Apache-2.0

//! Emulated SDN data plane and the controller's ICN application.
//!
//! Switches hold arbitrary-bitmask flow tables. An ICN rule uses one LID as
//! both mask and value, so a packet leaves on every port whose LID is
//! contained in its FID.

pub mod control;
pub mod controller;

use crate::fid::{BitVector, Fid, LinkId};
use crate::protocol::wire::WireError;

/// Priority given to every ICN forwarding rule.
pub const ICN_PRIORITY: u16 = 100;
/// Hop limit stamped on packets by default. Zero disables the limit.
pub const DEFAULT_HOP_LIMIT: u8 = 64;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FlowRule {
    pub mask: BitVector,
    pub value: BitVector,
    pub out_port: u32,
    pub priority: u16,
}

impl FlowRule {
    /// Rule forwarding packets whose FID contains `lid` out of `port`.
    pub fn icn(lid: &LinkId, port: u32) -> Self {
        FlowRule {
            mask: lid.bits().clone(),
            value: lid.bits().clone(),
            out_port: port,
            priority: ICN_PRIORITY,
        }
    }

    pub fn matches(&self, fid: &Fid) -> bool {
        fid.bits()
            .and(&self.mask)
            .is_ok_and(|masked| masked == self.value)
    }

    fn sort_key(&self) -> (std::cmp::Reverse<u16>, &[u8], &[u8], u32) {
        (
            std::cmp::Reverse(self.priority),
            self.mask.as_bytes(),
            self.value.as_bytes(),
            self.out_port,
        )
    }
}

/// Flow table kept in a canonical order (priority descending, then mask,
/// value and port), so two tables with the same rules compare equal.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlowTable {
    rules: Vec<FlowRule>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ForwardResult {
    /// Sorted, de-duplicated output ports of every matching rule.
    Ports(Vec<u32>),
    /// No rule matched; the table-miss action applies.
    Miss,
}

impl FlowTable {
    pub fn new() -> Self {
        FlowTable::default()
    }

    pub fn rules(&self) -> &[FlowRule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Adds a rule; returns false if an identical one is present.
    pub fn install(&mut self, rule: FlowRule) -> bool {
        match self.rules.binary_search_by(|r| r.sort_key().cmp(&rule.sort_key())) {
            Ok(_) => false,
            Err(pos) => {
                self.rules.insert(pos, rule);
                true
            }
        }
    }

    pub fn remove(&mut self, rule: &FlowRule) -> bool {
        match self.rules.binary_search_by(|r| r.sort_key().cmp(&rule.sort_key())) {
            Ok(pos) => {
                self.rules.remove(pos);
                true
            }
            Err(_) => false,
        }
    }

    /// Removes every rule sending out of `port`, returning them.
    pub fn remove_port(&mut self, port: u32) -> Vec<FlowRule> {
        let (gone, kept) = std::mem::take(&mut self.rules)
            .into_iter()
            .partition(|r| r.out_port == port);
        self.rules = kept;
        gone
    }

    pub fn has_lid(&self, lid: &LinkId) -> bool {
        self.rules.iter().any(|r| &r.mask == lid.bits())
    }
}

pub fn switch_forward(table: &FlowTable, packet: &IcnPacket) -> ForwardResult {
    let mut ports: Vec<u32> = table
        .rules
        .iter()
        .filter(|r| r.matches(&packet.fid))
        .map(|r| r.out_port)
        .collect();
    if ports.is_empty() {
        return ForwardResult::Miss;
    }
    ports.sort_unstable();
    ports.dedup();
    ForwardResult::Ports(ports)
}

/// Data-plane packet: `[hop limit][FID, m/8 bytes][payload]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IcnPacket {
    pub hop_limit: u8,
    pub fid: Fid,
    pub payload: Vec<u8>,
}

impl IcnPacket {
    pub fn new(fid: Fid, payload: Vec<u8>) -> Self {
        IcnPacket {
            hop_limit: DEFAULT_HOP_LIMIT,
            fid,
            payload,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(1 + self.fid.bits().as_bytes().len() + self.payload.len());
        out.push(self.hop_limit);
        out.extend_from_slice(self.fid.bits().as_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(bytes: &[u8], m: usize) -> Result<IcnPacket, WireError> {
        let v = m / 8;
        if bytes.len() < 1 + v {
            return Err(WireError::TruncatedPayload);
        }
        Ok(IcnPacket {
            hop_limit: bytes[0],
            fid: Fid::from_bits(BitVector::from_bytes(&bytes[1..1 + v])),
            payload: bytes[1 + v..].to_vec(),
        })
    }

    /// Consumes one hop before the packet is sent on. Returns false when the
    /// limit is used up and the packet must be dropped.
    pub fn take_hop(&mut self) -> bool {
        match self.hop_limit {
            0 => true,
            1 => false,
            _ => {
                self.hop_limit -= 1;
                true
            }
        }
    }
}
