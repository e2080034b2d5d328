//! The 1 kHz control loop and the channels around it: the command mailbox,
//! the state snapshot and the binary log.

pub mod log;
mod mailbox;
pub mod pacing;
mod runloop;
mod snapshot;

use serde::{Deserialize, Serialize};

use crate::sim::RobotState;
use crate::skill::TerminationCause;

pub use mailbox::{Command, Mailbox, MailboxFull, SubmitError, DRAIN_CAP, MAILBOX_CAPACITY};
pub use runloop::{ControlLoop, LoopOptions, TickReport};
pub use snapshot::{NotStarted, SnapshotCell};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StatusPhase {
    Queued,
    Running,
    Succeeded,
    Preempted,
    Aborted,
}

impl StatusPhase {
    pub fn to_u8(self) -> u8 {
        match self {
            StatusPhase::Queued => 0,
            StatusPhase::Running => 1,
            StatusPhase::Succeeded => 2,
            StatusPhase::Preempted => 3,
            StatusPhase::Aborted => 4,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => StatusPhase::Queued,
            1 => StatusPhase::Running,
            2 => StatusPhase::Succeeded,
            3 => StatusPhase::Preempted,
            4 => StatusPhase::Aborted,
            _ => return None,
        })
    }

    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            StatusPhase::Succeeded | StatusPhase::Preempted | StatusPhase::Aborted
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StatusPhase::Queued => "queued",
            StatusPhase::Running => "running",
            StatusPhase::Succeeded => "succeeded",
            StatusPhase::Preempted => "preempted",
            StatusPhase::Aborted => "aborted",
        }
    }
}

/// Progress report for one skill. Terminal reports carry the cause and the
/// state at termination.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkillStatus {
    pub skill_id: u32,
    pub phase: StatusPhase,
    pub cause: Option<TerminationCause>,
    pub state: RobotState,
}
