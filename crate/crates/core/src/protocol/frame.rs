//! Frame layer: `FIFP` magic, version, message type, robot id, payload length,
//! payload, CRC-32 over everything after the magic.

use bytes::{Buf, Bytes, BytesMut};
use thiserror::Error;

use super::codec::EncodeError;

pub const MAGIC: [u8; 4] = *b"FIFP";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 12;
pub const CRC_LEN: usize = 4;
pub const MAX_PAYLOAD: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageType {
    ExecuteSkill = 0x01,
    PreemptSkill = 0x02,
    SkillStatus = 0x03,
    RobotState = 0x04,
    SensorMsg = 0x05,
    SubscribeState = 0x06,
    SafetyReconfig = 0x07,
    InjectWrench = 0x08,
    AckError = 0x09,
}

impl MessageType {
    pub const ALL: [MessageType; 9] = [
        MessageType::ExecuteSkill,
        MessageType::PreemptSkill,
        MessageType::SkillStatus,
        MessageType::RobotState,
        MessageType::SensorMsg,
        MessageType::SubscribeState,
        MessageType::SafetyReconfig,
        MessageType::InjectWrench,
        MessageType::AckError,
    ];

    pub fn from_u8(v: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|t| *t as u8 == v)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    /// Raw type byte; may be unknown to this build.
    pub msg_type: u8,
    pub robot_id: u16,
    pub payload: Bytes,
}

impl Frame {
    pub fn kind(&self) -> Option<MessageType> {
        MessageType::from_u8(self.msg_type)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("bad magic, skipped {skipped} bytes")]
    BadMagic { skipped: usize },
    #[error("crc mismatch: frame says {expected:#010x}, computed {actual:#010x}")]
    BadCrc { expected: u32, actual: u32 },
    #[error("payload length {0} exceeds limit")]
    Oversize(usize),
    #[error("truncated frame ({0} bytes pending)")]
    Truncated(usize),
    #[error("unsupported version {0}")]
    BadVersion(u8),
}

fn frame_crc(header_tail: &[u8], payload: &[u8]) -> u32 {
    let mut h = crc32fast::Hasher::new();
    h.update(header_tail);
    h.update(payload);
    h.finalize()
}

pub fn encode_frame(msg_type: u8, robot_id: u16, payload: &[u8]) -> Result<Vec<u8>, EncodeError> {
    if payload.len() > MAX_PAYLOAD {
        return Err(EncodeError::Oversize(payload.len()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + CRC_LEN);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(msg_type);
    out.extend_from_slice(&robot_id.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
    let crc = frame_crc(&out[4..HEADER_LEN], payload);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

enum Scan {
    Frame(Frame, usize),
    NeedMore,
    Error(FrameError, usize),
}

fn scan(buf: &[u8]) -> Scan {
    if !buf.starts_with(&MAGIC) {
        let skipped = match buf.windows(4).position(|w| w == MAGIC) {
            Some(i) => i,
            None => {
                // Keep a tail that could still be the start of a magic.
                let keep = (1..=3.min(buf.len()))
                    .rev()
                    .find(|&k| MAGIC.starts_with(&buf[buf.len() - k..]))
                    .unwrap_or(0);
                buf.len() - keep
            }
        };
        if skipped == 0 {
            return Scan::NeedMore;
        }
        return Scan::Error(FrameError::BadMagic { skipped }, skipped);
    }
    if buf.len() < HEADER_LEN {
        return Scan::NeedMore;
    }
    if buf[4] != VERSION {
        return Scan::Error(FrameError::BadVersion(buf[4]), 1);
    }
    let len = u32::from_le_bytes([buf[8], buf[9], buf[10], buf[11]]) as usize;
    if len > MAX_PAYLOAD {
        return Scan::Error(FrameError::Oversize(len), 1);
    }
    let total = HEADER_LEN + len + CRC_LEN;
    if buf.len() < total {
        return Scan::NeedMore;
    }
    let payload = &buf[HEADER_LEN..HEADER_LEN + len];
    let tail = &buf[HEADER_LEN + len..total];
    let expected = u32::from_le_bytes([tail[0], tail[1], tail[2], tail[3]]);
    let actual = frame_crc(&buf[4..HEADER_LEN], payload);
    if expected != actual {
        return Scan::Error(FrameError::BadCrc { expected, actual }, 1);
    }
    Scan::Frame(
        Frame {
            msg_type: buf[5],
            robot_id: u16::from_le_bytes([buf[6], buf[7]]),
            payload: Bytes::copy_from_slice(payload),
        },
        total,
    )
}

/// Decodes one frame from the front of `buf`. Returns the frame and the number
/// of bytes it occupied.
pub fn decode_frame(buf: &[u8]) -> Result<(Frame, usize), FrameError> {
    match scan(buf) {
        Scan::Frame(f, n) => Ok((f, n)),
        Scan::NeedMore => Err(FrameError::Truncated(buf.len())),
        Scan::Error(e, _) => Err(e),
    }
}

/// Incremental decoder for a byte stream. After an error it drops the
/// offending bytes and rescans for the next magic.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: BytesMut,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, data: &[u8]) {
        self.buf.extend_from_slice(data);
    }

    pub fn buffer_mut(&mut self) -> &mut BytesMut {
        &mut self.buf
    }

    pub fn pending(&self) -> usize {
        self.buf.len()
    }

    /// Next frame or error, `None` when more bytes are needed.
    pub fn next_frame(&mut self) -> Option<Result<Frame, FrameError>> {
        match scan(&self.buf) {
            Scan::NeedMore => None,
            Scan::Frame(f, n) => {
                self.buf.advance(n);
                Some(Ok(f))
            }
            Scan::Error(e, n) => {
                self.buf.advance(n);
                Some(Err(e))
            }
        }
    }

    /// End of stream: reports leftover bytes as a truncated frame.
    pub fn finish(&mut self) -> Option<FrameError> {
        let n = self.buf.len();
        self.buf.clear();
        (n > 0).then_some(FrameError::Truncated(n))
    }
}
