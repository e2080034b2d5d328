use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;

use crossbeam::queue::ArrayQueue;
use thiserror::Error;

use crate::kinematics::{ArmModel, Wrench};
use crate::safety::SafetyConfig;
use crate::skill::{validate_skill_for_model, SensorUpdate, SkillSpec, Violation};

pub const MAILBOX_CAPACITY: usize = 256;
/// Messages handled per tick at most.
pub const DRAIN_CAP: usize = 32;
/// One active plus one queued skill.
const MAX_IN_FLIGHT: u32 = 2;

#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    Submit {
        skill_id: u32,
        spec: SkillSpec,
    },
    /// `None` preempts the active skill.
    Preempt {
        skill_id: Option<u32>,
    },
    Sensor(SensorUpdate),
    InjectWrench {
        wrench: Wrench,
        ticks: u64,
    },
    SafetyReconfig(SafetyConfig),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("mailbox full")]
pub struct MailboxFull;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SubmitError {
    #[error("robot busy: one skill active and one queued")]
    Busy,
    #[error("invalid skill: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("mailbox full")]
    MailboxFull,
}

/// Bounded lock-free queue from the server side into the control loop.
#[derive(Debug)]
pub struct Mailbox {
    queue: ArrayQueue<Command>,
    in_flight: AtomicU32,
    next_id: AtomicU32,
    model: Arc<ArmModel>,
}

impl Mailbox {
    pub fn new(model: Arc<ArmModel>) -> Self {
        Mailbox {
            queue: ArrayQueue::new(MAILBOX_CAPACITY),
            in_flight: AtomicU32::new(0),
            next_id: AtomicU32::new(1),
            model,
        }
    }

    /// Validates, admits and enqueues a skill. Ids start at 1.
    pub fn submit_skill(&self, spec: SkillSpec) -> Result<u32, SubmitError> {
        let violations = validate_skill_for_model(&spec, &self.model);
        if !violations.is_empty() {
            return Err(SubmitError::Invalid(violations));
        }
        self.in_flight
            .fetch_update(Ordering::AcqRel, Ordering::Acquire, |n| {
                (n < MAX_IN_FLIGHT).then_some(n + 1)
            })
            .map_err(|_| SubmitError::Busy)?;
        let skill_id = self.next_id.fetch_add(1, Ordering::Relaxed);
        if self.queue.push(Command::Submit { skill_id, spec }).is_err() {
            self.release();
            return Err(SubmitError::MailboxFull);
        }
        Ok(skill_id)
    }

    /// Enqueues a non-skill command.
    pub fn post(&self, cmd: Command) -> Result<(), MailboxFull> {
        debug_assert!(!matches!(cmd, Command::Submit { .. }));
        self.queue.push(cmd).map_err(|_| MailboxFull)
    }

    pub(crate) fn pop(&self) -> Option<Command> {
        self.queue.pop()
    }

    /// A skill left the active/queued set.
    pub(crate) fn release(&self) {
        let _ = self
            .in_flight
            .fetch_update(Ordering::AcqRel, Ordering::Acquire, |n| n.checked_sub(1));
    }

    pub fn in_flight(&self) -> u32 {
        self.in_flight.load(Ordering::Acquire)
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn model(&self) -> &Arc<ArmModel> {
        &self.model
    }
}
