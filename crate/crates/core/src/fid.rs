// SPDX-License-Identifier: Apache-2.0

//! Fixed-width Bloom-filter identifiers.
//!
//! Every directed link in an ICN deployment is named by a [`LinkId`]: an
//! `m`-bit vector with exactly `k` bits set. A forwarding identifier
//! ([`Fid`]) is the bitwise OR of the LIDs of all links on a source-routed
//! path, and a node forwards a packet over one of its links whenever
//! `fid & lid == lid`. Membership tests never produce false negatives but do
//! produce false positives, whose rate is estimated by [`theoretical_fpr`].
//!
//! Bit `i` of a vector is stored in byte `i / 8` at bit position
//! `7 - i % 8` (MSB first). The byte form is exactly `m / 8` bytes long and is
//! what the wire codecs carry.

use std::collections::HashSet;
use std::fmt;

use rand::Rng;
use thiserror::Error;

/// Default filter width in bits.
pub const DEFAULT_WIDTH: usize = 256;
/// Default number of set bits per LID.
pub const DEFAULT_BITS_PER_LID: usize = 5;
/// Default number of candidate draws before giving up on a fresh LID.
pub const DEFAULT_MAX_GEN_RETRIES: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FidError {
    #[error("width mismatch: {left} bits vs {right} bits")]
    WidthMismatch { left: usize, right: usize },
    #[error("link identifier space exhausted")]
    Exhausted,
    #[error("invalid filter parameters: {0}")]
    InvalidParams(String),
}

/// Filter parameters shared by every identifier of one deployment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FidParams {
    /// Bit width `m`; a positive multiple of 8.
    pub m: usize,
    /// Set bits per LID `k`, with `0 < k < m`.
    pub k: usize,
    pub max_gen_retries: u32,
}

impl Default for FidParams {
    fn default() -> Self {
        FidParams {
            m: DEFAULT_WIDTH,
            k: DEFAULT_BITS_PER_LID,
            max_gen_retries: DEFAULT_MAX_GEN_RETRIES,
        }
    }
}

impl FidParams {
    pub fn new(m: usize, k: usize) -> Result<Self, FidError> {
        let params = FidParams {
            m,
            k,
            max_gen_retries: DEFAULT_MAX_GEN_RETRIES,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), FidError> {
        if self.m == 0 || self.m % 8 != 0 {
            return Err(FidError::InvalidParams(format!(
                "m = {} must be a positive multiple of 8",
                self.m
            )));
        }
        if self.k == 0 || self.k >= self.m {
            return Err(FidError::InvalidParams(format!(
                "k = {} must satisfy 0 < k < m = {}",
                self.k, self.m
            )));
        }
        if self.max_gen_retries == 0 {
            return Err(FidError::InvalidParams("max_gen_retries must be positive".into()));
        }
        Ok(())
    }

    /// Serialized size of one identifier in bytes.
    pub fn byte_len(&self) -> usize {
        self.m / 8
    }

    /// Number of distinct LIDs, `C(m, k)`, saturating at `u128::MAX`.
    pub fn lid_space(&self) -> u128 {
        binomial(self.m as u128, self.k as u128)
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step.
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// A fixed-width bit string, MSB-first within each byte.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitVector {
    bytes: Box<[u8]>,
}

impl BitVector {
    /// All-zero vector of `width` bits. `width` must be a multiple of 8.
    pub fn zeros(width: usize) -> Self {
        assert!(width % 8 == 0, "bit width {width} is not a multiple of 8");
        BitVector {
            bytes: vec![0u8; width / 8].into_boxed_slice(),
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Self {
        BitVector {
            bytes: bytes.to_vec().into_boxed_slice(),
        }
    }

    /// Vector of `width` bits with the given positions set.
    pub fn from_positions(width: usize, positions: impl IntoIterator<Item = usize>) -> Self {
        let mut v = Self::zeros(width);
        for i in positions {
            v.set(i);
        }
        v
    }

    pub fn width(&self) -> usize {
        self.bytes.len() * 8
    }

    pub fn get(&self, i: usize) -> bool {
        self.bytes[i / 8] & (0x80 >> (i % 8)) != 0
    }

    pub fn set(&mut self, i: usize) {
        self.bytes[i / 8] |= 0x80 >> (i % 8);
    }

    pub fn count_ones(&self) -> u32 {
        self.bytes.iter().map(|b| b.count_ones()).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.bytes.iter().all(|&b| b == 0)
    }

    /// Positions of all set bits in ascending order.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.width()).filter(move |&i| self.get(i))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    fn check_width(&self, other: &BitVector) -> Result<(), FidError> {
        if self.bytes.len() != other.bytes.len() {
            return Err(FidError::WidthMismatch {
                left: self.width(),
                right: other.width(),
            });
        }
        Ok(())
    }

    pub fn or_assign(&mut self, other: &BitVector) -> Result<(), FidError> {
        self.check_width(other)?;
        for (a, b) in self.bytes.iter_mut().zip(other.bytes.iter()) {
            *a |= *b;
        }
        Ok(())
    }

    pub fn and(&self, other: &BitVector) -> Result<BitVector, FidError> {
        self.check_width(other)?;
        let bytes = self
            .bytes
            .iter()
            .zip(other.bytes.iter())
            .map(|(a, b)| a & b)
            .collect();
        Ok(BitVector { bytes })
    }

    /// `(self AND other) == other`.
    pub fn covers(&self, other: &BitVector) -> Result<bool, FidError> {
        self.check_width(other)?;
        Ok(self
            .bytes
            .iter()
            .zip(other.bytes.iter())
            .all(|(a, b)| a & b == *b))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.bytes)
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector({})", self.to_hex())
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Identifier of one directed point-to-point link (or a node-internal iLID).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinkId(BitVector);

impl LinkId {
    /// Wraps raw bits without checking the popcount; decoded identifiers come
    /// through here.
    pub fn from_bits(bits: BitVector) -> Self {
        LinkId(bits)
    }

    pub fn bits(&self) -> &BitVector {
        &self.0
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    /// True when the LID has the width and popcount required by `params`.
    pub fn is_well_formed(&self, params: &FidParams) -> bool {
        self.0.width() == params.m && self.0.count_ones() as usize == params.k
    }
}

impl fmt::Debug for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LinkId({})", self.0.to_hex())
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.to_hex())
    }
}

/// Forwarding identifier: the OR of the LIDs along a path.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fid(BitVector);

impl Fid {
    pub fn empty(width: usize) -> Self {
        Fid(BitVector::zeros(width))
    }

    pub fn from_bits(bits: BitVector) -> Self {
        Fid(bits)
    }

    pub fn bits(&self) -> &BitVector {
        &self.0
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_zero()
    }

    pub fn insert(&mut self, lid: &LinkId) -> Result<(), FidError> {
        self.0.or_assign(&lid.0)
    }

    pub fn union(&mut self, other: &Fid) -> Result<(), FidError> {
        self.0.or_assign(&other.0)
    }

    /// Bloom membership test, see [`fid_matches`].
    pub fn matches(&self, lid: &LinkId) -> Result<bool, FidError> {
        self.0.covers(&lid.0)
    }
}

impl fmt::Debug for Fid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fid({})", self.0.to_hex())
    }
}

impl fmt::Display for Fid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.to_hex())
    }
}

/// The set of LIDs (and iLIDs) currently allocated in a deployment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LidRegistry {
    live: HashSet<LinkId>,
}

impl LidRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, lid: &LinkId) -> bool {
        self.live.contains(lid)
    }

    /// Returns false if the LID was already registered.
    pub fn insert(&mut self, lid: LinkId) -> bool {
        self.live.insert(lid)
    }

    pub fn remove(&mut self, lid: &LinkId) -> bool {
        self.live.remove(lid)
    }

    pub fn len(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &LinkId> {
        self.live.iter()
    }
}

/// Draws a fresh LID with exactly `k` of `m` bits set, uniformly among the
/// `k`-subsets, and records it in `registry`.
///
/// Collisions with registered LIDs are retried up to
/// `params.max_gen_retries` times before reporting [`FidError::Exhausted`].
pub fn new_lid<R: Rng + ?Sized>(
    rng: &mut R,
    registry: &mut LidRegistry,
    params: &FidParams,
) -> Result<LinkId, FidError> {
    params.validate()?;
    if registry.len() as u128 >= params.lid_space() {
        return Err(FidError::Exhausted);
    }
    for _ in 0..params.max_gen_retries {
        let positions = rand::seq::index::sample(rng, params.m, params.k);
        let lid = LinkId(BitVector::from_positions(params.m, positions.iter()));
        if registry.insert(lid.clone()) {
            return Ok(lid);
        }
    }
    Err(FidError::Exhausted)
}

/// Bitwise OR of `lids`; the empty path yields the all-zero FID of `width`
/// bits.
pub fn fid_or<'a, I>(width: usize, lids: I) -> Result<Fid, FidError>
where
    I: IntoIterator<Item = &'a LinkId>,
{
    let mut fid = Fid::empty(width);
    for lid in lids {
        fid.insert(lid)?;
    }
    Ok(fid)
}

/// `(fid AND lid) == lid`.
pub fn fid_matches(fid: &Fid, lid: &LinkId) -> Result<bool, FidError> {
    fid.matches(lid)
}

/// Standard Bloom-filter false-positive estimate for an `m`-bit filter that
/// holds `n` identifiers of `k` bits each: `(1 - (1 - 1/m)^(k n))^k`.
pub fn theoretical_fpr(m: usize, k: usize, n: usize) -> f64 {
    let m = m as f64;
    let exponent = (k * n) as f64;
    (1.0 - (1.0 - 1.0 / m).powf(exponent)).powi(k as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v8(byte: u8) -> BitVector {
        BitVector::from_bytes(&[byte])
    }

    fn lid8(byte: u8) -> LinkId {
        LinkId::from_bits(v8(byte))
    }

    #[test]
    fn msb_first_layout() {
        let v = BitVector::from_positions(16, [0, 9, 15]);
        assert_eq!(v.as_bytes(), &[0b1000_0000, 0b0100_0001]);
        assert!(v.get(0) && v.get(9) && v.get(15) && !v.get(1));
        assert_eq!(v.ones().collect::<Vec<_>>(), vec![0, 9, 15]);
    }

    #[test]
    fn params_validation() {
        assert!(FidParams::new(256, 5).is_ok());
        assert!(FidParams::new(12, 2).is_err());
        assert!(FidParams::new(8, 0).is_err());
        assert!(FidParams::new(8, 8).is_err());
        assert_eq!(FidParams::new(8, 2).unwrap().lid_space(), 28);
        assert_eq!(FidParams::new(256, 5).unwrap().lid_space(), 8_809_549_056);
    }

    #[test]
    fn new_lid_small_space() {
        let params = FidParams::new(8, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut reg = LidRegistry::new();
        let lid = new_lid(&mut rng, &mut reg, &params).unwrap();
        assert_eq!(lid.bits().count_ones(), 2);
        assert!(reg.contains(&lid));
    }

    #[test]
    fn new_lid_exhausted_when_all_patterns_taken() {
        let params = FidParams::new(8, 2).unwrap();
        let mut reg = LidRegistry::new();
        for a in 0..8 {
            for b in (a + 1)..8 {
                reg.insert(LinkId::from_bits(BitVector::from_positions(8, [a, b])));
            }
        }
        assert_eq!(reg.len(), 28);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(new_lid(&mut rng, &mut reg, &params), Err(FidError::Exhausted));
    }

    #[test]
    fn new_lid_ten_thousand_distinct() {
        let params = FidParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut reg = LidRegistry::new();
        let mut seen = HashSet::new();
        for _ in 0..10_000 {
            let lid = new_lid(&mut rng, &mut reg, &params).unwrap();
            assert_eq!(lid.bits().count_ones(), 5);
            seen.insert(lid);
        }
        assert_eq!(seen.len(), 10_000);
        assert_eq!(reg.len(), 10_000);
    }

    #[test]
    fn new_lid_is_seed_deterministic() {
        let params = FidParams::default();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut reg = LidRegistry::new();
            (0..16)
                .map(|_| new_lid(&mut rng, &mut reg, &params).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
        assert_ne!(draw(3), draw(4));
    }

    #[test]
    fn or_examples() {
        assert_eq!(fid_or(8, []).unwrap().bits().as_bytes(), &[0]);
        let f = fid_or(8, &[lid8(0b0000_0011), lid8(0b0000_1100)]).unwrap();
        assert_eq!(f.bits().as_bytes(), &[0b0000_1111]);
        let l = lid8(0b0100_0100);
        assert_eq!(fid_or(8, [&l]).unwrap().bits(), l.bits());
    }

    #[test]
    fn or_width_mismatch() {
        let a = lid8(1);
        let b = LinkId::from_bits(BitVector::zeros(16));
        assert_eq!(
            fid_or(8, [&a, &b]),
            Err(FidError::WidthMismatch { left: 8, right: 16 })
        );
    }

    #[test]
    fn match_examples() {
        let f = Fid::from_bits(v8(0b0000_1111));
        assert!(fid_matches(&f, &lid8(0b0000_0011)).unwrap());
        assert!(!fid_matches(&f, &lid8(0b0011_0000)).unwrap());
        // 0b0110 was never OR-ed in but is covered: a false positive.
        assert!(fid_matches(&f, &lid8(0b0000_0110)).unwrap());
        assert!(fid_matches(&f, &LinkId::from_bits(f.bits().clone())).unwrap());
    }

    #[test]
    fn match_width_mismatch() {
        let f = Fid::empty(16);
        assert!(matches!(
            fid_matches(&f, &lid8(1)),
            Err(FidError::WidthMismatch { .. })
        ));
    }

    #[test]
    fn fpr_examples() {
        assert_eq!(theoretical_fpr(256, 5, 0), 0.0);
        let p = theoretical_fpr(256, 5, 20);
        assert!(p > 0.0 && p < 1.0);
        // (1 - (7/8)^8)^2 evaluated by hand: 0.430849...
        let q = theoretical_fpr(8, 2, 4);
        assert!((q - 0.430_849).abs() < 1e-6, "{q}");
    }
}
