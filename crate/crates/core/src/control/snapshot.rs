//! Sequence-locked state snapshot: one writer, any number of readers, readers
//! never block the writer.

use std::hint::spin_loop;
use std::sync::atomic::{fence, AtomicU64, Ordering};

use thiserror::Error;

use crate::protocol::state::{read_state_body, write_state_body, STATE_BYTES};
use crate::sim::RobotState;

const WORDS: usize = STATE_BYTES / 8;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("control loop has not published a state yet")]
pub struct NotStarted;

/// Odd sequence numbers mark a write in progress; 0 means nothing published.
#[derive(Debug)]
pub struct SnapshotCell {
    seq: AtomicU64,
    words: [AtomicU64; WORDS],
}

impl Default for SnapshotCell {
    fn default() -> Self {
        Self::new()
    }
}

impl SnapshotCell {
    pub fn new() -> Self {
        SnapshotCell {
            seq: AtomicU64::new(0),
            words: std::array::from_fn(|_| AtomicU64::new(0)),
        }
    }

    /// Only the control loop may call this.
    pub fn publish(&self, s: &RobotState) {
        let mut body = [0u8; STATE_BYTES];
        write_state_body(s, true, &mut body);
        let seq = self.seq.load(Ordering::Relaxed);
        self.seq.store(seq + 1, Ordering::Relaxed);
        fence(Ordering::Release);
        for (w, chunk) in self.words.iter().zip(body.chunks_exact(8)) {
            w.store(
                u64::from_le_bytes(chunk.try_into().unwrap()),
                Ordering::Relaxed,
            );
        }
        self.seq.store(seq + 2, Ordering::Release);
    }

    pub fn sequence(&self) -> u64 {
        self.seq.load(Ordering::Acquire)
    }

    /// Latest complete state with its sequence number and the number of torn
    /// attempts that were retried.
    pub fn read_detailed(&self) -> Result<(RobotState, u64, u32), NotStarted> {
        let mut retries = 0;
        loop {
            let s1 = self.seq.load(Ordering::Acquire);
            if s1 == 0 {
                return Err(NotStarted);
            }
            if s1 % 2 == 1 {
                retries += 1;
                spin_loop();
                continue;
            }
            let mut body = [0u8; STATE_BYTES];
            for (w, chunk) in self.words.iter().zip(body.chunks_exact_mut(8)) {
                chunk.copy_from_slice(&w.load(Ordering::Relaxed).to_le_bytes());
            }
            fence(Ordering::Acquire);
            if self.seq.load(Ordering::Relaxed) == s1 {
                return Ok((read_state_body(&body), s1, retries));
            }
            retries += 1;
        }
    }

    pub fn read(&self) -> Result<RobotState, NotStarted> {
        self.read_detailed().map(|(s, _, _)| s)
    }
}
