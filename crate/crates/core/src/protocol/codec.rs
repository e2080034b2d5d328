//! Little-endian primitive readers and writers shared by the payload codecs.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::kinematics::Pose;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("unknown {kind} variant tag {tag}")]
    UnknownVariant { kind: &'static str, tag: u16 },
    #[error("malformed block: {0}")]
    MalformedBlock(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("refusing to encode non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("payload of {0} bytes exceeds the frame limit")]
    Oversize(usize),
}

pub(crate) fn malformed(msg: impl Into<String>) -> DecodeError {
    DecodeError::MalformedBlock(msg.into())
}

#[derive(Default)]
pub(crate) struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, vs: impl IntoIterator<Item = f64>) {
        for v in vs {
            self.f64(v);
        }
    }

    /// Length-prefixed array of reals.
    pub fn array(&mut self, vs: &[f64]) {
        self.u32(vs.len() as u32);
        self.f64s(vs.iter().copied());
    }

    pub fn string(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn pose(&mut self, p: &Pose) {
        self.array(p.position.as_slice());
        self.array(&p.quaternion_wxyz());
    }

    /// Tag, then a u32 length back-patched after `body` runs.
    pub fn block(&mut self, tag: u16, body: impl FnOnce(&mut Writer)) {
        self.u16(tag);
        let at = self.buf.len();
        self.u32(0);
        body(self);
        let len = (self.buf.len() - at - 4) as u32;
        self.buf[at..at + 4].copy_from_slice(&len.to_le_bytes());
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.remaining() == 0
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.remaining() < n {
            return Err(malformed(format!(
                "need {n} bytes at offset {}, have {}",
                self.pos,
                self.remaining()
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn fixed<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.bytes(N)?);
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.fixed::<1>()?[0])
    }

    pub fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_le_bytes(self.fixed()?))
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.fixed()?))
    }

    pub fn f64(&mut self) -> Result<f64, DecodeError> {
        Ok(f64::from_le_bytes(self.fixed()?))
    }

    pub fn f64s<const N: usize>(&mut self) -> Result<[f64; N], DecodeError> {
        let mut out = [0.0; N];
        for v in &mut out {
            *v = self.f64()?;
        }
        Ok(out)
    }

    pub fn array(&mut self) -> Result<Vec<f64>, DecodeError> {
        let n = self.u32()? as usize;
        if n > self.remaining() / 8 {
            return Err(malformed(format!("array of {n} reals overruns the block")));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    /// Array that must hold exactly `N` reals.
    pub fn array_n<const N: usize>(&mut self, what: &str) -> Result<[f64; N], DecodeError> {
        let n = self.u32()? as usize;
        if n != N {
            return Err(malformed(format!("{what}: expected {N} reals, got {n}")));
        }
        self.f64s::<N>()
    }

    pub fn string(&mut self) -> Result<String, DecodeError> {
        let n = self.u32()? as usize;
        let raw = self.bytes(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| malformed("string is not UTF-8"))
    }

    pub fn pose(&mut self) -> Result<Pose, DecodeError> {
        let p = self.array_n::<3>("position")?;
        let q = self.array_n::<4>("quaternion")?;
        pose_from_parts(p, q).ok_or_else(|| malformed("invalid pose"))
    }

    /// Reads a tag and a length-delimited body.
    pub fn block(&mut self) -> Result<(u16, Reader<'a>), DecodeError> {
        let tag = self.u16()?;
        let len = self.u32()? as usize;
        let body = self.bytes(len)?;
        Ok((tag, Reader::new(body)))
    }
}

/// Pose from wire components. Unit quaternions in the `w >= 0` hemisphere are
/// kept bit-exact; anything else is normalized.
pub(crate) fn pose_from_parts(p: [f64; 3], wxyz: [f64; 4]) -> Option<Pose> {
    if !p.iter().chain(wxyz.iter()).all(|v| v.is_finite()) {
        return None;
    }
    let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
    if (q.norm() - 1.0).abs() <= 1e-9 && q.w >= 0.0 {
        return Some(Pose {
            position: Vector3::from(p),
            orientation: UnitQuaternion::new_unchecked(q),
        });
    }
    Pose::from_wxyz(p, wxyz)
}
