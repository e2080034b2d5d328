//! Binary tick log: a 12-byte `FILG` header followed by packed 360-byte
//! records, plus parsing and CSV helpers used by `logdump`.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crossbeam::channel::{unbounded, Receiver, Sender};
use thiserror::Error;

use crate::kinematics::{JointVector, Pose, Wrench};
use crate::protocol::state::{read_state_body, STATE_BYTES};
use crate::sim::{RobotState, SkillPhase};

pub const LOG_MAGIC: [u8; 4] = *b"FILG";
pub const LOG_VERSION: u16 = 1;
pub const LOG_HEADER_BYTES: usize = 12;
pub const RECORD_BYTES: usize = STATE_BYTES;

pub type RecordBytes = [u8; RECORD_BYTES];

/// Unbounded so that the loop never blocks or drops a record.
pub fn log_channel() -> (Sender<RecordBytes>, Receiver<RecordBytes>) {
    unbounded()
}

pub fn log_header(robot_id: u16) -> [u8; LOG_HEADER_BYTES] {
    let mut h = [0u8; LOG_HEADER_BYTES];
    h[..4].copy_from_slice(&LOG_MAGIC);
    h[4..6].copy_from_slice(&LOG_VERSION.to_le_bytes());
    h[6..8].copy_from_slice(&(RECORD_BYTES as u16).to_le_bytes());
    h[8..10].copy_from_slice(&robot_id.to_le_bytes());
    h
}

/// Streams records to a file as they are drained from the loop's channel.
pub struct LogWriter<W: Write> {
    out: BufWriter<W>,
    count: u64,
}

impl LogWriter<File> {
    pub fn create(path: impl AsRef<Path>, robot_id: u16) -> io::Result<Self> {
        Self::new(File::create(path)?, robot_id)
    }
}

impl<W: Write> LogWriter<W> {
    pub fn new(inner: W, robot_id: u16) -> io::Result<Self> {
        let mut out = BufWriter::new(inner);
        out.write_all(&log_header(robot_id))?;
        Ok(LogWriter { out, count: 0 })
    }

    pub fn append(&mut self, rec: &RecordBytes) -> io::Result<()> {
        self.out.write_all(rec)?;
        self.count += 1;
        Ok(())
    }

    /// Writes everything currently pending in `rx`.
    pub fn drain(&mut self, rx: &Receiver<RecordBytes>) -> io::Result<u64> {
        let mut n = 0;
        while let Ok(rec) = rx.try_recv() {
            self.append(&rec)?;
            n += 1;
        }
        Ok(n)
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }

    pub fn finish(mut self) -> io::Result<u64> {
        self.out.flush()?;
        Ok(self.count)
    }

    /// Flushes and hands back the underlying writer.
    pub fn into_inner(self) -> io::Result<W> {
        self.out.into_inner().map_err(|e| e.into_error())
    }
}

/// Writes a header plus every record pending in `rx` to `path`; returns the
/// record count.
pub fn flush_log(
    rx: &Receiver<RecordBytes>,
    path: impl AsRef<Path>,
    robot_id: u16,
) -> io::Result<u64> {
    let mut w = LogWriter::create(path, robot_id)?;
    w.drain(rx)?;
    w.finish()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LogHeader {
    pub version: u16,
    pub record_size: u16,
    pub robot_id: u16,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogFile {
    pub header: LogHeader,
    pub records: Vec<RobotState>,
    /// Bytes after the last whole record.
    pub trailing_bytes: usize,
}

impl LogFile {
    pub fn is_truncated(&self) -> bool {
        self.trailing_bytes > 0
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("not a log file (bad magic)")]
    BadMagic,
    #[error("unsupported log version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported record size {0}")]
    RecordSize(u16),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Parses a log image. A partial last record is reported in
/// `trailing_bytes` rather than failing.
pub fn parse_log(bytes: &[u8]) -> Result<LogFile, LogError> {
    if bytes.len() < LOG_HEADER_BYTES || bytes[..4] != LOG_MAGIC {
        return Err(LogError::BadMagic);
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let header = LogHeader {
        version: u16_at(4),
        record_size: u16_at(6),
        robot_id: u16_at(8),
    };
    if header.version != LOG_VERSION {
        return Err(LogError::UnsupportedVersion(header.version));
    }
    if header.record_size as usize != RECORD_BYTES {
        return Err(LogError::RecordSize(header.record_size));
    }
    let body = &bytes[LOG_HEADER_BYTES..];
    let chunks = body.chunks_exact(RECORD_BYTES);
    let trailing_bytes = chunks.remainder().len();
    let records = chunks
        .map(|c| read_state_body(c.try_into().unwrap()))
        .collect();
    Ok(LogFile {
        header,
        records,
        trailing_bytes,
    })
}

pub fn read_log(path: impl AsRef<Path>) -> Result<LogFile, LogError> {
    parse_log(&std::fs::read(path)?)
}

pub fn csv_header() -> String {
    let mut cols = vec!["tick".to_string(), "wall_ns".to_string()];
    for group in ["q", "dq", "tau_cmd", "tau_ext"] {
        cols.extend((0..7).map(|i| format!("{group}{i}")));
    }
    for c in [
        "x",
        "y",
        "z",
        "qw",
        "qx",
        "qy",
        "qz",
        "fx",
        "fy",
        "fz",
        "tx",
        "ty",
        "tz",
        "gripper_width",
        "skill_id",
        "phase",
    ] {
        cols.push(c.to_string());
    }
    cols.join(",")
}

/// One CSV row. Reals use the shortest representation that parses back to
/// the same bits.
pub fn record_to_csv(r: &RobotState) -> String {
    let mut out = format!("{},{}", r.tick, r.wall_ns);
    let mut push = |v: f64| {
        out.push(',');
        out.push_str(&format!("{v:?}"));
    };
    for v in [&r.q, &r.dq, &r.tau_commanded, &r.tau_external] {
        v.iter().for_each(|x| push(*x));
    }
    r.ee_pose.position.iter().for_each(|x| push(*x));
    r.ee_pose.quaternion_wxyz().into_iter().for_each(&mut push);
    r.ee_wrench_external
        .to_array()
        .into_iter()
        .for_each(&mut push);
    push(r.gripper_width);
    out.push_str(&format!(
        ",{},{}",
        r.active_skill_id.unwrap_or(0),
        r.skill_phase.to_u8()
    ));
    out
}

/// Inverse of [`record_to_csv`].
pub fn parse_csv_row(line: &str) -> Result<RobotState, String> {
    let fields: Vec<&str> = line.trim_end().split(',').collect();
    if fields.len() != 46 {
        return Err(format!("expected 46 columns, got {}", fields.len()));
    }
    let int = |i: usize| {
        fields[i]
            .parse::<u64>()
            .map_err(|e| format!("column {i}: {e}"))
    };
    let real = |i: usize| {
        fields[i]
            .parse::<f64>()
            .map_err(|e| format!("column {i}: {e}"))
    };
    let joints = |start: usize| -> Result<JointVector, String> {
        let mut v = JointVector::zeros();
        for k in 0..7 {
            v[k] = real(start + k)?;
        }
        Ok(v)
    };
    let mut w = [0.0; 6];
    for (k, v) in w.iter_mut().enumerate() {
        *v = real(37 + k)?;
    }
    let id = int(44)? as u32;
    let phase = int(45)? as u8;
    let position = [real(30)?, real(31)?, real(32)?];
    let quat = [real(33)?, real(34)?, real(35)?, real(36)?];
    let mut pose = Pose::identity();
    pose.position = position.into();
    pose.orientation = nalgebra::UnitQuaternion::new_unchecked(nalgebra::Quaternion::new(
        quat[0], quat[1], quat[2], quat[3],
    ));
    Ok(RobotState {
        tick: int(0)?,
        wall_ns: int(1)?,
        q: joints(2)?,
        dq: joints(9)?,
        tau_commanded: joints(16)?,
        tau_external: joints(23)?,
        ee_pose: pose,
        ee_wrench_external: Wrench::from_array(w),
        gripper_width: real(43)?,
        gripper_moving: false,
        active_skill_id: (id != 0).then_some(id),
        skill_phase: SkillPhase::from_u8(phase).ok_or_else(|| format!("phase {phase}"))?,
    })
}
