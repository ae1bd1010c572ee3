//! Fixed-width bit strings and the hash, nonce and clock primitives the
//! protocol is built from.
//!
//! Bit strings are packed most-significant-bit first and serialize to
//! big-endian bytes. When the width is not a multiple of eight the unused
//! low-order bits of the final byte are kept at zero, so byte equality and
//! value equality coincide.

use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha1::{Digest, Sha1};
use thiserror::Error;

/// Width of identities, keys, auth parameters, nonces and hash outputs.
pub const DIGEST_BITS: usize = 160;
/// Width of `t_N` / `t_H`.
pub const TIMESTAMP_BITS: usize = 32;
/// Width of the intermediate node's short identity.
pub const INTERMEDIATE_ID_BITS: usize = 16;
/// Width of `m_2` and of the hub's lookup operand (160 + 32).
pub const WIDE_BITS: usize = DIGEST_BITS + TIMESTAMP_BITS;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BitError {
    #[error("bit width mismatch: {left} vs {right}")]
    WidthMismatch { left: usize, right: usize },
    #[error("split point {at} out of range for width {width}")]
    SplitOutOfRange { at: usize, width: usize },
    #[error("expected {expected} bytes for a {width}-bit string, got {got}")]
    ByteLength {
        width: usize,
        expected: usize,
        got: usize,
    },
    #[error("invalid hex: {0}")]
    Hex(String),
}

/// An immutable-width string of bits.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString {
    width: usize,
    bytes: Vec<u8>,
}

fn byte_len(width: usize) -> usize {
    width.div_ceil(8)
}

impl BitString {
    /// All-zero string of `width` bits.
    pub fn zeros(width: usize) -> Self {
        BitString {
            width,
            bytes: vec![0; byte_len(width)],
        }
    }

    pub fn empty() -> Self {
        Self::zeros(0)
    }

    /// Builds a string of exactly `width` bits from its big-endian bytes.
    pub fn from_bytes(width: usize, bytes: &[u8]) -> Result<Self, BitError> {
        let expected = byte_len(width);
        if bytes.len() != expected {
            return Err(BitError::ByteLength {
                width,
                expected,
                got: bytes.len(),
            });
        }
        let mut s = BitString {
            width,
            bytes: bytes.to_vec(),
        };
        s.clear_tail();
        Ok(s)
    }

    /// A byte-aligned string covering all of `bytes`.
    pub fn from_byte_slice(bytes: &[u8]) -> Self {
        BitString {
            width: bytes.len() * 8,
            bytes: bytes.to_vec(),
        }
    }

    pub fn from_hex(width: usize, text: &str) -> Result<Self, BitError> {
        let bytes = hex::decode(text.trim()).map_err(|e| BitError::Hex(e.to_string()))?;
        Self::from_bytes(width, &bytes)
    }

    pub fn from_u32(value: u32) -> Self {
        Self::from_byte_slice(&value.to_be_bytes())
    }

    pub fn from_u16(value: u16) -> Self {
        Self::from_byte_slice(&value.to_be_bytes())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.bytes)
    }

    pub fn is_zero(&self) -> bool {
        self.bytes.iter().all(|b| *b == 0)
    }

    /// Bit at `index`, counting from the most significant bit.
    pub fn bit(&self, index: usize) -> bool {
        assert!(
            index < self.width,
            "bit index {index} >= width {}",
            self.width
        );
        self.bytes[index / 8] & (0x80 >> (index % 8)) != 0
    }

    fn set_bit(&mut self, index: usize, value: bool) {
        let mask = 0x80 >> (index % 8);
        if value {
            self.bytes[index / 8] |= mask;
        } else {
            self.bytes[index / 8] &= !mask;
        }
    }

    /// Returns a copy with bit `index` inverted.
    pub fn flip_bit(&self, index: usize) -> Self {
        let mut out = self.clone();
        out.set_bit(index, !self.bit(index));
        out
    }

    fn clear_tail(&mut self) {
        let rem = self.width % 8;
        if rem != 0 {
            if let Some(last) = self.bytes.last_mut() {
                *last &= 0xffu8 << (8 - rem);
            }
        }
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString<{}>({})", self.width, self.to_hex())
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Bitwise exclusive-or of two equal-width strings.
pub fn xor(a: &BitString, b: &BitString) -> Result<BitString, BitError> {
    if a.width != b.width {
        return Err(BitError::WidthMismatch {
            left: a.width,
            right: b.width,
        });
    }
    Ok(BitString {
        width: a.width,
        bytes: a.bytes.iter().zip(&b.bytes).map(|(x, y)| x ^ y).collect(),
    })
}

/// `a ∥ b`, with `a` in the most significant bits.
pub fn concat(a: &BitString, b: &BitString) -> BitString {
    if a.width.is_multiple_of(8) {
        let mut bytes = Vec::with_capacity(a.bytes.len() + b.bytes.len());
        bytes.extend_from_slice(&a.bytes);
        bytes.extend_from_slice(&b.bytes);
        return BitString {
            width: a.width + b.width,
            bytes,
        };
    }
    let mut out = BitString::zeros(a.width + b.width);
    for i in 0..a.width {
        out.set_bit(i, a.bit(i));
    }
    for i in 0..b.width {
        out.set_bit(a.width + i, b.bit(i));
    }
    out
}

/// Concatenates every part in order.
pub fn concat_all<'a>(parts: impl IntoIterator<Item = &'a BitString>) -> BitString {
    parts
        .into_iter()
        .fold(BitString::empty(), |acc, p| concat(&acc, p))
}

/// Inverse of [`concat`]: the high `at` bits and the remaining low bits.
pub fn split(s: &BitString, at: usize) -> Result<(BitString, BitString), BitError> {
    if at == 0 || at >= s.width {
        return Err(BitError::SplitOutOfRange { at, width: s.width });
    }
    if at.is_multiple_of(8) {
        let (hi, lo) = s.bytes.split_at(at / 8);
        return Ok((
            BitString {
                width: at,
                bytes: hi.to_vec(),
            },
            BitString {
                width: s.width - at,
                bytes: lo.to_vec(),
            },
        ));
    }
    let mut hi = BitString::zeros(at);
    let mut lo = BitString::zeros(s.width - at);
    for i in 0..at {
        hi.set_bit(i, s.bit(i));
    }
    for i in at..s.width {
        lo.set_bit(i - at, s.bit(i));
    }
    Ok((hi, lo))
}

/// SHA-1 over the byte serialization of `msg`.
pub fn hash(msg: &BitString) -> BitString {
    let digest = Sha1::digest(msg.as_bytes());
    BitString::from_byte_slice(digest.as_slice())
}

/// Counts primitive invocations for one role in one session.
///
/// Every protocol-side XOR and hash goes through a meter, so the cost model
/// reflects what actually ran rather than a static tally.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpMeter {
    pub hashes: u64,
    pub xors: u64,
}

impl OpMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn xor(&mut self, a: &BitString, b: &BitString) -> Result<BitString, BitError> {
        self.xors += 1;
        xor(a, b)
    }

    pub fn hash(&mut self, msg: &BitString) -> BitString {
        self.hashes += 1;
        hash(msg)
    }
}

/// 32-bit simulated time, arithmetic modulo 2^32.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Timestamp(pub u32);

impl Timestamp {
    /// `|a − b|` on the 2^32 circle: the shorter of the two directions.
    pub fn distance(self, other: Timestamp) -> u32 {
        let d = self.0.wrapping_sub(other.0);
        d.min(other.0.wrapping_sub(self.0))
    }

    pub fn wrapping_add(self, units: u32) -> Timestamp {
        Timestamp(self.0.wrapping_add(units))
    }

    pub fn to_bits(self) -> BitString {
        BitString::from_u32(self.0)
    }

    pub fn from_bits(bits: &BitString) -> Result<Timestamp, BitError> {
        let raw: [u8; 4] = bits
            .as_bytes()
            .try_into()
            .map_err(|_| BitError::ByteLength {
                width: TIMESTAMP_BITS,
                expected: 4,
                got: bits.as_bytes().len(),
            })?;
        Ok(Timestamp(u32::from_be_bytes(raw)))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Simulated clock. Starts at 0 and never runs backwards.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Clock {
    ticks: u64,
}

impl Clock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn starting_at(ticks: u64) -> Self {
        Clock { ticks }
    }

    pub fn now(&self) -> Timestamp {
        Timestamp(self.ticks as u32)
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn advance(&mut self, units: u64) {
        self.ticks += units;
    }

    /// Moves forward to `ticks`; earlier targets leave the clock untouched.
    pub fn advance_to(&mut self, ticks: u64) {
        self.ticks = self.ticks.max(ticks);
    }
}

/// A single-use 160-bit random value.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Nonce(pub BitString);

impl Nonce {
    pub fn bits(&self) -> &BitString {
        &self.0
    }
}

/// Seeded deterministic nonce generator.
#[derive(Debug, Clone)]
pub struct NonceSource {
    rng: ChaCha20Rng,
}

impl NonceSource {
    pub fn from_seed(seed: u64) -> Self {
        NonceSource {
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream `stream` under the same seed.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        NonceSource { rng }
    }

    pub fn next_nonce(&mut self) -> Nonce {
        Nonce(self.next_bits(DIGEST_BITS))
    }

    /// Uniform random string of `width` bits.
    pub fn next_bits(&mut self, width: usize) -> BitString {
        let mut buf = vec![0u8; byte_len(width)];
        self.rng.fill_bytes(&mut buf);
        let mut s = BitString { width, bytes: buf };
        s.clear_tail();
        s
    }
}
