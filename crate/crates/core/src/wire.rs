//! Bit-exact codecs for the four handshake frames.
//!
//! Fields are packed in tuple order, most significant bit first, with no
//! tag or length prefix. The frame kind is implied by the hop it travels on.
//!
//! | frame    | layout                                  | bits |
//! |----------|-----------------------------------------|------|
//! | Message1 | m1(160) m2(192) tN(32)                  | 384  |
//! | Message2 | m1(160) m2(192) tN(32) idIN(16)         | 400  |
//! | Message3 | m3(160) m4(160) tH(32) idIN(16)         | 368  |
//! | Message4 | m3(160) m4(160) tH(32)                  | 352  |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::primitives::{
    BitString, Timestamp, DIGEST_BITS, INTERMEDIATE_ID_BITS, TIMESTAMP_BITS, WIDE_BITS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FrameKind {
    Message1,
    Message2,
    Message3,
    Message4,
}

impl FrameKind {
    pub const ALL: [FrameKind; 4] = [
        FrameKind::Message1,
        FrameKind::Message2,
        FrameKind::Message3,
        FrameKind::Message4,
    ];

    pub const fn bits(self) -> usize {
        match self {
            FrameKind::Message1 => DIGEST_BITS + WIDE_BITS + TIMESTAMP_BITS,
            FrameKind::Message2 => DIGEST_BITS + WIDE_BITS + TIMESTAMP_BITS + INTERMEDIATE_ID_BITS,
            FrameKind::Message3 => 2 * DIGEST_BITS + TIMESTAMP_BITS + INTERMEDIATE_ID_BITS,
            FrameKind::Message4 => 2 * DIGEST_BITS + TIMESTAMP_BITS,
        }
    }

    pub const fn byte_len(self) -> usize {
        self.bits() / 8
    }
}

impl fmt::Display for FrameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            FrameKind::Message1 => "Message1",
            FrameKind::Message2 => "Message2",
            FrameKind::Message3 => "Message3",
            FrameKind::Message4 => "Message4",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("{kind} must be {} bytes, got {got}", kind.byte_len())]
    WrongLength { kind: FrameKind, got: usize },
}

/// The four links of the two-hop topology, in protocol order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Hop {
    #[serde(rename = "SN->IN")]
    SnToIn,
    #[serde(rename = "IN->HN")]
    InToHn,
    #[serde(rename = "HN->IN")]
    HnToIn,
    #[serde(rename = "IN->SN")]
    InToSn,
}

impl Hop {
    pub const ALL: [Hop; 4] = [Hop::SnToIn, Hop::InToHn, Hop::HnToIn, Hop::InToSn];

    pub fn frame_kind(self) -> FrameKind {
        match self {
            Hop::SnToIn => FrameKind::Message1,
            Hop::InToHn => FrameKind::Message2,
            Hop::HnToIn => FrameKind::Message3,
            Hop::InToSn => FrameKind::Message4,
        }
    }

    /// 0-based position in the handshake.
    pub fn index(self) -> usize {
        match self {
            Hop::SnToIn => 0,
            Hop::InToHn => 1,
            Hop::HnToIn => 2,
            Hop::InToSn => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Hop::SnToIn => "SN->IN",
            Hop::InToHn => "IN->HN",
            Hop::HnToIn => "HN->IN",
            Hop::InToSn => "IN->SN",
        }
    }
}

impl fmt::Display for Hop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Hop {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Hop::ALL
            .into_iter()
            .find(|h| h.as_str() == s.trim())
            .ok_or_else(|| format!("unknown hop {s:?}"))
    }
}

/// SN → IN: `<m1, m2, tN>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message1 {
    pub m1: BitString,
    pub m2: BitString,
    pub t_n: Timestamp,
}

/// IN → HN: `<m1, m2, tN, idIN>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message2 {
    pub m1: BitString,
    pub m2: BitString,
    pub t_n: Timestamp,
    pub id_in: BitString,
}

/// HN → IN: `<m3, m4, tH, idIN>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message3 {
    pub m3: BitString,
    pub m4: BitString,
    pub t_h: Timestamp,
    pub id_in: BitString,
}

/// IN → SN: `<m3, m4, tH>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message4 {
    pub m3: BitString,
    pub m4: BitString,
    pub t_h: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    Message1(Message1),
    Message2(Message2),
    Message3(Message3),
    Message4(Message4),
}

impl Frame {
    pub fn kind(&self) -> FrameKind {
        match self {
            Frame::Message1(_) => FrameKind::Message1,
            Frame::Message2(_) => FrameKind::Message2,
            Frame::Message3(_) => FrameKind::Message3,
            Frame::Message4(_) => FrameKind::Message4,
        }
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn with_capacity(kind: FrameKind) -> Self {
        Writer(Vec::with_capacity(kind.byte_len()))
    }

    fn field(mut self, bits: &BitString, width: usize) -> Self {
        debug_assert_eq!(bits.width(), width, "field width");
        self.0.extend_from_slice(bits.as_bytes());
        self
    }

    fn stamp(mut self, t: Timestamp) -> Self {
        self.0.extend_from_slice(&t.0.to_be_bytes());
        self
    }
}

struct Reader<'a>(&'a [u8]);

impl Reader<'_> {
    fn field(&mut self, width: usize) -> BitString {
        let (head, rest) = self.0.split_at(width / 8);
        self.0 = rest;
        BitString::from_byte_slice(head)
    }

    fn stamp(&mut self) -> Timestamp {
        let (head, rest) = self.0.split_at(4);
        self.0 = rest;
        Timestamp(u32::from_be_bytes(head.try_into().expect("4 bytes")))
    }
}

fn check_len(kind: FrameKind, bytes: &[u8]) -> Result<Reader<'_>, DecodeError> {
    if bytes.len() != kind.byte_len() {
        return Err(DecodeError::WrongLength {
            kind,
            got: bytes.len(),
        });
    }
    Ok(Reader(bytes))
}

impl Message1 {
    pub fn encode(&self) -> Vec<u8> {
        Writer::with_capacity(FrameKind::Message1)
            .field(&self.m1, DIGEST_BITS)
            .field(&self.m2, WIDE_BITS)
            .stamp(self.t_n)
            .0
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = check_len(FrameKind::Message1, bytes)?;
        Ok(Message1 {
            m1: r.field(DIGEST_BITS),
            m2: r.field(WIDE_BITS),
            t_n: r.stamp(),
        })
    }
}

impl Message2 {
    pub fn encode(&self) -> Vec<u8> {
        Writer::with_capacity(FrameKind::Message2)
            .field(&self.m1, DIGEST_BITS)
            .field(&self.m2, WIDE_BITS)
            .stamp(self.t_n)
            .field(&self.id_in, INTERMEDIATE_ID_BITS)
            .0
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = check_len(FrameKind::Message2, bytes)?;
        Ok(Message2 {
            m1: r.field(DIGEST_BITS),
            m2: r.field(WIDE_BITS),
            t_n: r.stamp(),
            id_in: r.field(INTERMEDIATE_ID_BITS),
        })
    }
}

impl Message3 {
    pub fn encode(&self) -> Vec<u8> {
        Writer::with_capacity(FrameKind::Message3)
            .field(&self.m3, DIGEST_BITS)
            .field(&self.m4, DIGEST_BITS)
            .stamp(self.t_h)
            .field(&self.id_in, INTERMEDIATE_ID_BITS)
            .0
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = check_len(FrameKind::Message3, bytes)?;
        Ok(Message3 {
            m3: r.field(DIGEST_BITS),
            m4: r.field(DIGEST_BITS),
            t_h: r.stamp(),
            id_in: r.field(INTERMEDIATE_ID_BITS),
        })
    }
}

impl Message4 {
    pub fn encode(&self) -> Vec<u8> {
        Writer::with_capacity(FrameKind::Message4)
            .field(&self.m3, DIGEST_BITS)
            .field(&self.m4, DIGEST_BITS)
            .stamp(self.t_h)
            .0
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = check_len(FrameKind::Message4, bytes)?;
        Ok(Message4 {
            m3: r.field(DIGEST_BITS),
            m4: r.field(DIGEST_BITS),
            t_h: r.stamp(),
        })
    }
}

pub fn encode(frame: &Frame) -> Vec<u8> {
    match frame {
        Frame::Message1(m) => m.encode(),
        Frame::Message2(m) => m.encode(),
        Frame::Message3(m) => m.encode(),
        Frame::Message4(m) => m.encode(),
    }
}

pub fn decode(kind: FrameKind, bytes: &[u8]) -> Result<Frame, DecodeError> {
    Ok(match kind {
        FrameKind::Message1 => Frame::Message1(Message1::decode(bytes)?),
        FrameKind::Message2 => Frame::Message2(Message2::decode(bytes)?),
        FrameKind::Message3 => Frame::Message3(Message3::decode(bytes)?),
        FrameKind::Message4 => Frame::Message4(Message4::decode(bytes)?),
    })
}

/// One line of a transcript file: `direction,sim_time,hex`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptLine {
    pub hop: Hop,
    pub sim_time: u64,
    pub bytes: Vec<u8>,
}

impl fmt::Display for TranscriptLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{}",
            self.hop,
            self.sim_time,
            hex::encode(&self.bytes)
        )
    }
}

impl FromStr for TranscriptLine {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let mut parts = line.trim().splitn(3, ',');
        let (Some(hop), Some(time), Some(payload)) = (parts.next(), parts.next(), parts.next())
        else {
            return Err(format!("expected 3 comma-separated fields in {line:?}"));
        };
        Ok(TranscriptLine {
            hop: hop.parse()?,
            sim_time: time.trim().parse().map_err(|e| format!("bad time: {e}"))?,
            bytes: hex::decode(payload.trim()).map_err(|e| format!("bad hex: {e}"))?,
        })
    }
}
