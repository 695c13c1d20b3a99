// SPDX-License-Identifier: Apache-2.0

//! Binary codec for the bootstrap messages.
//!
//! Every frame starts with a four byte header:
//!
//! ```text
//! [0x01 version][type][payload length, u16 big-endian]
//! ```
//!
//! followed by the payload. NIDs and nonces are 8 bytes big-endian, LIDs and
//! FIDs are `m / 8` bytes in the MSB-first bit order of [`crate::fid`]. The
//! same header is shared by the control frames of [`crate::fabric::control`].

use thiserror::Error;

use crate::fid::{BitVector, Fid, LinkId};
use crate::topology::{NodeId, NodeKind};

pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 4;

pub const TYPE_DISCOVERY_REQUEST: u8 = 0x01;
pub const TYPE_DISCOVERY_OFFER: u8 = 0x02;
pub const TYPE_RESOURCE_REQUEST: u8 = 0x03;
pub const TYPE_RESOURCE_OFFER: u8 = 0x04;
pub const TYPE_OFFER_ACCEPTED: u8 = 0x05;
pub const TYPE_RESOURCE_ACCEPTED: u8 = 0x06;
pub const TYPE_UPDATE: u8 = 0x07;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("unsupported version {0:#04x}")]
    BadVersion(u8),
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("truncated payload")]
    TruncatedPayload,
    #[error("payload length {declared} does not match layout length {expected}")]
    LengthMismatch { declared: usize, expected: usize },
    #[error("invalid field {0}")]
    InvalidField(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Message {
    DiscoveryRequest {
        nonce: u64,
    },
    DiscoveryOffer {
        nonce: u64,
        responder: NodeId,
        tmfid: Fid,
    },
    ResourceRequest {
        nonce: u64,
        kind: NodeKind,
        attach: NodeId,
    },
    /// The triple offered by the TM. Switches get no iLID; it travels as
    /// an all-zero vector.
    ResourceOffer {
        nonce: u64,
        nid: NodeId,
        lid: LinkId,
        ilid: Option<LinkId>,
    },
    OfferAccepted {
        nonce: u64,
        nid: NodeId,
    },
    ResourceAccepted {
        nonce: u64,
        nid: NodeId,
    },
    /// Announces the link towards `nid`. A TMFID is present only when the
    /// TM sends the update; an absent one is encoded as all zeros.
    Update {
        nid: NodeId,
        lid: LinkId,
        tmfid: Option<Fid>,
    },
}

impl Message {
    pub fn type_code(&self) -> u8 {
        match self {
            Message::DiscoveryRequest { .. } => TYPE_DISCOVERY_REQUEST,
            Message::DiscoveryOffer { .. } => TYPE_DISCOVERY_OFFER,
            Message::ResourceRequest { .. } => TYPE_RESOURCE_REQUEST,
            Message::ResourceOffer { .. } => TYPE_RESOURCE_OFFER,
            Message::OfferAccepted { .. } => TYPE_OFFER_ACCEPTED,
            Message::ResourceAccepted { .. } => TYPE_RESOURCE_ACCEPTED,
            Message::Update { .. } => TYPE_UPDATE,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Message::DiscoveryRequest { .. } => "DiscoveryRequest",
            Message::DiscoveryOffer { .. } => "DiscoveryOffer",
            Message::ResourceRequest { .. } => "ResourceRequest",
            Message::ResourceOffer { .. } => "ResourceOffer",
            Message::OfferAccepted { .. } => "OfferAccepted",
            Message::ResourceAccepted { .. } => "ResourceAccepted",
            Message::Update { .. } => "Update",
        }
    }

    pub fn nonce(&self) -> Option<u64> {
        match *self {
            Message::DiscoveryRequest { nonce }
            | Message::DiscoveryOffer { nonce, .. }
            | Message::ResourceRequest { nonce, .. }
            | Message::ResourceOffer { nonce, .. }
            | Message::OfferAccepted { nonce, .. }
            | Message::ResourceAccepted { nonce, .. } => Some(nonce),
            Message::Update { .. } => None,
        }
    }

    /// Payload length of a message type for filter width `m`.
    pub fn payload_len(type_code: u8, m: usize) -> Option<usize> {
        let v = m / 8;
        Some(match type_code {
            TYPE_DISCOVERY_REQUEST => 8,
            TYPE_DISCOVERY_OFFER => 16 + v,
            TYPE_RESOURCE_REQUEST => 17,
            TYPE_RESOURCE_OFFER => 16 + 2 * v,
            TYPE_OFFER_ACCEPTED | TYPE_RESOURCE_ACCEPTED => 16,
            TYPE_UPDATE => 8 + 2 * v,
            _ => return None,
        })
    }

    /// Encodes the message. The filter width is taken from the identifiers
    /// it carries; `m` is only needed for absent optional fields.
    pub fn encode(&self, m: usize) -> Vec<u8> {
        let mut p = Vec::with_capacity(Self::payload_len(self.type_code(), m).unwrap_or(0));
        match self {
            Message::DiscoveryRequest { nonce } => put_u64(&mut p, *nonce),
            Message::DiscoveryOffer {
                nonce,
                responder,
                tmfid,
            } => {
                put_u64(&mut p, *nonce);
                put_u64(&mut p, responder.0);
                p.extend_from_slice(tmfid.bits().as_bytes());
            }
            Message::ResourceRequest {
                nonce,
                kind,
                attach,
            } => {
                put_u64(&mut p, *nonce);
                p.push(kind.code());
                put_u64(&mut p, attach.0);
            }
            Message::ResourceOffer {
                nonce,
                nid,
                lid,
                ilid,
            } => {
                put_u64(&mut p, *nonce);
                put_u64(&mut p, nid.0);
                p.extend_from_slice(lid.bits().as_bytes());
                match ilid {
                    Some(l) => p.extend_from_slice(l.bits().as_bytes()),
                    None => p.resize(p.len() + m / 8, 0),
                }
            }
            Message::OfferAccepted { nonce, nid } | Message::ResourceAccepted { nonce, nid } => {
                put_u64(&mut p, *nonce);
                put_u64(&mut p, nid.0);
            }
            Message::Update { nid, lid, tmfid } => {
                put_u64(&mut p, nid.0);
                p.extend_from_slice(lid.bits().as_bytes());
                match tmfid {
                    Some(f) => p.extend_from_slice(f.bits().as_bytes()),
                    None => p.resize(p.len() + m / 8, 0),
                }
            }
        }
        frame(self.type_code(), &p)
    }

    pub fn decode(bytes: &[u8], m: usize) -> Result<Message, WireError> {
        let header = Header::parse(bytes)?;
        let expected = Self::payload_len(header.ty, m).ok_or(WireError::UnknownType(header.ty))?;
        let body = header.body(bytes, Some(expected))?;
        let mut r = Reader::new(body);
        let msg = match header.ty {
            TYPE_DISCOVERY_REQUEST => Message::DiscoveryRequest { nonce: r.u64()? },
            TYPE_DISCOVERY_OFFER => Message::DiscoveryOffer {
                nonce: r.u64()?,
                responder: NodeId(r.u64()?),
                tmfid: Fid::from_bits(r.bits(m)?),
            },
            TYPE_RESOURCE_REQUEST => Message::ResourceRequest {
                nonce: r.u64()?,
                kind: NodeKind::from_code(r.u8()?).ok_or(WireError::InvalidField("requester kind"))?,
                attach: NodeId(r.u64()?),
            },
            TYPE_RESOURCE_OFFER => Message::ResourceOffer {
                nonce: r.u64()?,
                nid: NodeId(r.u64()?),
                lid: LinkId::from_bits(r.bits(m)?),
                ilid: r.optional_bits(m)?.map(LinkId::from_bits),
            },
            TYPE_OFFER_ACCEPTED => Message::OfferAccepted {
                nonce: r.u64()?,
                nid: NodeId(r.u64()?),
            },
            TYPE_RESOURCE_ACCEPTED => Message::ResourceAccepted {
                nonce: r.u64()?,
                nid: NodeId(r.u64()?),
            },
            TYPE_UPDATE => Message::Update {
                nid: NodeId(r.u64()?),
                lid: LinkId::from_bits(r.bits(m)?),
                tmfid: r.optional_bits(m)?.map(Fid::from_bits),
            },
            other => return Err(WireError::UnknownType(other)),
        };
        Ok(msg)
    }
}

/// Parsed frame header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub ty: u8,
    pub len: usize,
}

impl Header {
    pub fn parse(bytes: &[u8]) -> Result<Header, WireError> {
        if bytes.len() < HEADER_LEN {
            return Err(WireError::TruncatedPayload);
        }
        if bytes[0] != VERSION {
            return Err(WireError::BadVersion(bytes[0]));
        }
        Ok(Header {
            ty: bytes[1],
            len: u16::from_be_bytes([bytes[2], bytes[3]]) as usize,
        })
    }

    /// Returns the payload after checking the declared length against the
    /// layout length (when fixed) and against the bytes actually present.
    pub fn body<'a>(&self, bytes: &'a [u8], expected: Option<usize>) -> Result<&'a [u8], WireError> {
        if let Some(expected) = expected {
            if self.len != expected {
                return Err(WireError::LengthMismatch {
                    declared: self.len,
                    expected,
                });
            }
        }
        let body = &bytes[HEADER_LEN..];
        if body.len() < self.len {
            return Err(WireError::TruncatedPayload);
        }
        if body.len() > self.len {
            return Err(WireError::LengthMismatch {
                declared: self.len,
                expected: body.len(),
            });
        }
        Ok(body)
    }
}

/// Prefixes `payload` with a header of type `ty`.
///
/// Panics if the payload exceeds `u16::MAX` bytes.
pub fn frame(ty: u8, payload: &[u8]) -> Vec<u8> {
    let len = u16::try_from(payload.len()).expect("payload fits a u16 length");
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.push(VERSION);
    out.push(ty);
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(payload);
    out
}

pub(crate) fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_be_bytes());
}

/// Bounds-checked big-endian reader over a payload.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        let end = self.pos.checked_add(n).ok_or(WireError::TruncatedPayload)?;
        let s = self.buf.get(self.pos..end).ok_or(WireError::TruncatedPayload)?;
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16, WireError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, WireError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes(b.try_into().expect("4 bytes")))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, WireError> {
        let b = self.take(8)?;
        Ok(u64::from_be_bytes(b.try_into().expect("8 bytes")))
    }

    pub(crate) fn bits(&mut self, m: usize) -> Result<BitVector, WireError> {
        Ok(BitVector::from_bytes(self.take(m / 8)?))
    }

    pub(crate) fn optional_bits(&mut self, m: usize) -> Result<Option<BitVector>, WireError> {
        let v = self.bits(m)?;
        Ok(if v.is_zero() { None } else { Some(v) })
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const M: usize = 256;

    fn lid(positions: &[usize]) -> LinkId {
        LinkId::from_bits(BitVector::from_positions(M, positions.iter().copied()))
    }

    fn samples() -> Vec<Message> {
        let a = lid(&[0, 9, 77, 128, 255]);
        let b = lid(&[1, 2, 3, 4, 5]);
        let mut f = Fid::empty(M);
        f.insert(&a).unwrap();
        f.insert(&b).unwrap();
        vec![
            Message::DiscoveryRequest { nonce: 1 },
            Message::DiscoveryOffer {
                nonce: u64::MAX,
                responder: NodeId(7),
                tmfid: f.clone(),
            },
            Message::DiscoveryOffer {
                nonce: 3,
                responder: NodeId::TM,
                tmfid: Fid::empty(M),
            },
            Message::ResourceRequest {
                nonce: 4,
                kind: NodeKind::SdnSwitch,
                attach: NodeId(2),
            },
            Message::ResourceOffer {
                nonce: 5,
                nid: NodeId(9),
                lid: a.clone(),
                ilid: Some(b.clone()),
            },
            Message::ResourceOffer {
                nonce: 5,
                nid: NodeId(9),
                lid: a.clone(),
                ilid: None,
            },
            Message::OfferAccepted { nonce: 6, nid: NodeId(9) },
            Message::ResourceAccepted { nonce: 6, nid: NodeId(9) },
            Message::Update {
                nid: NodeId(3),
                lid: b.clone(),
                tmfid: Some(f),
            },
            Message::Update {
                nid: NodeId(3),
                lid: b,
                tmfid: None,
            },
        ]
    }

    #[test]
    fn discovery_request_layout() {
        let bytes = Message::DiscoveryRequest { nonce: 1 }.encode(M);
        assert_eq!(hex::encode(&bytes), "010100080000000000000001");
        assert_eq!(bytes.len(), 12);
    }

    #[test]
    fn payload_lengths_at_default_width() {
        assert_eq!(Message::payload_len(TYPE_RESOURCE_OFFER, M), Some(80));
        assert_eq!(Message::payload_len(TYPE_DISCOVERY_OFFER, M), Some(48));
        assert_eq!(Message::payload_len(TYPE_RESOURCE_REQUEST, M), Some(17));
        assert_eq!(Message::payload_len(TYPE_UPDATE, M), Some(72));
        assert_eq!(Message::payload_len(0x08, M), None);
        for msg in samples() {
            let bytes = msg.encode(M);
            let declared = u16::from_be_bytes([bytes[2], bytes[3]]) as usize;
            assert_eq!(declared, bytes.len() - HEADER_LEN);
            assert_eq!(Some(declared), Message::payload_len(msg.type_code(), M));
        }
    }

    #[test]
    fn round_trip() {
        for msg in samples() {
            assert_eq!(Message::decode(&msg.encode(M), M).unwrap(), msg);
        }
    }

    #[test]
    fn decode_errors() {
        let good = Message::DiscoveryRequest { nonce: 1 }.encode(M);
        let mut bad = good.clone();
        bad[0] = 0x02;
        assert_eq!(Message::decode(&bad, M), Err(WireError::BadVersion(2)));
        let mut bad = good.clone();
        bad[1] = 0x08;
        assert_eq!(Message::decode(&bad, M), Err(WireError::UnknownType(8)));
        assert_eq!(Message::decode(&good[..3], M), Err(WireError::TruncatedPayload));
        assert_eq!(Message::decode(&good[..11], M), Err(WireError::TruncatedPayload));
        let mut long = good.clone();
        long.push(0);
        assert!(matches!(Message::decode(&long, M), Err(WireError::LengthMismatch { .. })));
        let mut wrong_len = good;
        wrong_len[3] = 9;
        wrong_len.push(0);
        assert_eq!(
            Message::decode(&wrong_len, M),
            Err(WireError::LengthMismatch { declared: 9, expected: 8 })
        );
        let mut kind = Message::ResourceRequest {
            nonce: 1,
            kind: NodeKind::IcnNode,
            attach: NodeId(2),
        }
        .encode(M);
        kind[12] = 9;
        assert_eq!(Message::decode(&kind, M), Err(WireError::InvalidField("requester kind")));
    }

    #[test]
    fn other_widths() {
        let msg = Message::Update {
            nid: NodeId(2),
            lid: LinkId::from_bits(BitVector::from_bytes(&[0b0000_0011])),
            tmfid: None,
        };
        let bytes = msg.encode(8);
        assert_eq!(hex::encode(&bytes), "0107000a00000000000000020300");
        assert_eq!(Message::decode(&bytes, 8).unwrap(), msg);
    }
}
