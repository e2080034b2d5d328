//! Typed payloads for every message type.

use nalgebra::Vector3;
use thiserror::Error;

use crate::control::{SkillStatus, StatusPhase};
use crate::kinematics::{JointVector, Wrench};
use crate::safety::{Aabb, SafetyConfig};
use crate::sim::RobotState;
use crate::skill::{SensorPayload, SensorUpdate, SkillSpec, TerminationCause};

use super::codec::{malformed, DecodeError, EncodeError, Reader, Writer};
use super::frame::{encode_frame, Frame, MessageType};
use super::skill::{read_skill_spec, write_skill_spec};
use super::state::{encode_robot_state, STATE_BYTES};

/// Error codes carried by an Error reply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum ErrorCode {
    UnknownType = 1,
    BadCrc = 2,
    Malformed = 3,
    Invalid = 4,
    Busy = 5,
    UnknownRobot = 6,
    MailboxFull = 7,
    Oversize = 8,
}

impl ErrorCode {
    pub fn from_u16(v: u16) -> Option<Self> {
        use ErrorCode::*;
        [
            UnknownType,
            BadCrc,
            Malformed,
            Invalid,
            Busy,
            UnknownRobot,
            MailboxFull,
            Oversize,
        ]
        .into_iter()
        .find(|c| *c as u16 == v)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::UnknownType => "UNKNOWN_TYPE",
            ErrorCode::BadCrc => "BAD_CRC",
            ErrorCode::Malformed => "MALFORMED",
            ErrorCode::Invalid => "INVALID",
            ErrorCode::Busy => "BUSY",
            ErrorCode::UnknownRobot => "UNKNOWN_ROBOT",
            ErrorCode::MailboxFull => "MAILBOX_FULL",
            ErrorCode::Oversize => "OVERSIZE",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubscribeMode {
    Once,
    Subscribe,
    Unsubscribe,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    ExecuteSkill {
        correlation: u32,
        spec: SkillSpec,
    },
    /// `skill_id: None` preempts whatever is active.
    PreemptSkill {
        skill_id: Option<u32>,
        correlation: Option<u32>,
    },
    SkillStatus(SkillStatus),
    RobotState(RobotState),
    Sensor(SensorUpdate),
    SubscribeState {
        mode: SubscribeMode,
        rate_hz: u16,
    },
    SafetyReconfig {
        correlation: u32,
        config: SafetyConfig,
    },
    InjectWrench {
        correlation: u32,
        wrench: Wrench,
        duration: f64,
    },
    Ack {
        correlation: u32,
        value: u32,
    },
    Error {
        correlation: u32,
        code: ErrorCode,
        message: String,
    },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MessageError {
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

fn cause_byte(c: Option<TerminationCause>) -> u8 {
    c.map_or(0xff, TerminationCause::to_u8)
}

fn write_box(w: &mut Writer, b: &Aabb) {
    w.f64s(b.center.iter().copied());
    w.f64s(b.half_extents.iter().copied());
}

fn read_box(r: &mut Reader) -> Result<Aabb, DecodeError> {
    let c = r.f64s::<3>()?;
    let h = r.f64s::<3>()?;
    Ok(Aabb::new(c, h))
}

fn encode_safety_config(w: &mut Writer, cfg: &SafetyConfig) {
    w.u8(u8::from(cfg.enabled));
    w.f64s(cfg.ee_half_extents.iter().copied());
    match &cfg.workspace {
        Some(b) => {
            w.u8(1);
            write_box(w, b);
        }
        None => w.u8(0),
    }
    w.u32(cfg.walls.len() as u32);
    for b in &cfg.walls {
        write_box(w, b);
    }
}

fn decode_safety_config(r: &mut Reader) -> Result<SafetyConfig, DecodeError> {
    let enabled = r.u8()? != 0;
    let ee_half_extents = Vector3::from(r.f64s::<3>()?);
    let workspace = match r.u8()? {
        0 => None,
        1 => Some(read_box(r)?),
        v => return Err(malformed(format!("workspace flag {v}"))),
    };
    let n = r.u32()? as usize;
    if n > r.remaining() / 48 {
        return Err(malformed(format!("wall list claims {n} boxes")));
    }
    let walls = (0..n).map(|_| read_box(r)).collect::<Result<Vec<_>, _>>()?;
    Ok(SafetyConfig {
        enabled,
        walls,
        workspace,
        ee_half_extents,
    })
}

fn sensor_tag(p: &SensorPayload) -> u16 {
    match p {
        SensorPayload::JointSetpoint(_) => 1,
        SensorPayload::PoseSetpoint(_) => 2,
        SensorPayload::GoalOverrideJoint(_) => 3,
        SensorPayload::GoalOverridePose(_) => 4,
    }
}

impl Message {
    pub fn msg_type(&self) -> MessageType {
        match self {
            Message::ExecuteSkill { .. } => MessageType::ExecuteSkill,
            Message::PreemptSkill { .. } => MessageType::PreemptSkill,
            Message::SkillStatus(_) => MessageType::SkillStatus,
            Message::RobotState(_) => MessageType::RobotState,
            Message::Sensor(_) => MessageType::SensorMsg,
            Message::SubscribeState { .. } => MessageType::SubscribeState,
            Message::SafetyReconfig { .. } => MessageType::SafetyReconfig,
            Message::InjectWrench { .. } => MessageType::InjectWrench,
            Message::Ack { .. } | Message::Error { .. } => MessageType::AckError,
        }
    }

    pub fn encode_payload(&self) -> Result<Vec<u8>, EncodeError> {
        let mut w = Writer::new();
        match self {
            Message::ExecuteSkill { correlation, spec } => {
                w.u32(*correlation);
                write_skill_spec(&mut w, spec);
            }
            Message::PreemptSkill {
                skill_id,
                correlation,
            } => match (skill_id, correlation) {
                (id, Some(c)) => {
                    w.u32(id.unwrap_or(0));
                    w.u32(*c);
                }
                (Some(id), None) => w.u32(*id),
                (None, None) => {}
            },
            Message::SkillStatus(s) => {
                w.u32(s.skill_id);
                w.u8(s.phase.to_u8());
                w.u8(cause_byte(s.cause));
                w.buf.extend_from_slice(&encode_robot_state(&s.state)?);
            }
            Message::RobotState(s) => w.buf.extend_from_slice(&encode_robot_state(s)?),
            Message::Sensor(u) => {
                w.string(&u.topic);
                w.f64(u.timestamp);
                w.u16(sensor_tag(&u.payload));
                match &u.payload {
                    SensorPayload::JointSetpoint(q) | SensorPayload::GoalOverrideJoint(q) => {
                        w.f64s(q.iter().copied())
                    }
                    SensorPayload::PoseSetpoint(p) | SensorPayload::GoalOverridePose(p) => {
                        w.f64s(p.position.iter().copied());
                        w.f64s(p.quaternion_wxyz());
                    }
                }
            }
            Message::SubscribeState { mode, rate_hz } => {
                w.u8(match mode {
                    SubscribeMode::Once => 0,
                    SubscribeMode::Subscribe => 1,
                    SubscribeMode::Unsubscribe => 2,
                });
                w.u16(*rate_hz);
            }
            Message::SafetyReconfig {
                correlation,
                config,
            } => {
                w.u32(*correlation);
                encode_safety_config(&mut w, config);
            }
            Message::InjectWrench {
                correlation,
                wrench,
                duration,
            } => {
                if !wrench.is_finite() || !duration.is_finite() {
                    return Err(EncodeError::NonFinite("wrench"));
                }
                w.u32(*correlation);
                w.f64s(wrench.to_array());
                w.f64(*duration);
            }
            Message::Ack { correlation, value } => {
                w.u8(0);
                w.u32(*correlation);
                w.u32(*value);
            }
            Message::Error {
                correlation,
                code,
                message,
            } => {
                w.u8(1);
                w.u32(*correlation);
                w.u16(*code as u16);
                w.string(message);
            }
        }
        Ok(w.buf)
    }

    pub fn to_frame(&self, robot_id: u16) -> Result<Vec<u8>, EncodeError> {
        encode_frame(self.msg_type() as u8, robot_id, &self.encode_payload()?)
    }

    pub fn decode(msg_type: u8, payload: &[u8]) -> Result<Message, MessageError> {
        let kind = MessageType::from_u8(msg_type).ok_or(MessageError::UnknownType(msg_type))?;
        let mut r = Reader::new(payload);
        let msg = match kind {
            MessageType::ExecuteSkill => {
                let correlation = r.u32()?;
                let spec = read_skill_spec(&mut r)?;
                while !r.is_empty() {
                    r.block()?;
                }
                Message::ExecuteSkill { correlation, spec }
            }
            MessageType::PreemptSkill => {
                let (skill_id, correlation) = match payload.len() {
                    0 => (None, None),
                    4 => (Some(r.u32()?), None),
                    8 => (Some(r.u32()?), Some(r.u32()?)),
                    n => return Err(malformed(format!("preempt payload of {n} bytes")).into()),
                };
                Message::PreemptSkill {
                    skill_id: skill_id.filter(|id| *id != 0),
                    correlation,
                }
            }
            MessageType::SkillStatus => {
                let skill_id = r.u32()?;
                let phase = r.u8()?;
                let phase = StatusPhase::from_u8(phase)
                    .ok_or_else(|| malformed(format!("status phase {phase}")))?;
                let cause = match r.u8()? {
                    0xff => None,
                    c => Some(
                        TerminationCause::from_u8(c)
                            .ok_or_else(|| malformed(format!("termination cause {c}")))?,
                    ),
                };
                let state = super::state::decode_robot_state(r.bytes(STATE_BYTES)?)?;
                Message::SkillStatus(SkillStatus {
                    skill_id,
                    phase,
                    cause,
                    state,
                })
            }
            MessageType::RobotState => {
                Message::RobotState(super::state::decode_robot_state(r.bytes(STATE_BYTES)?)?)
            }
            MessageType::SensorMsg => {
                let topic = r.string()?;
                let timestamp = r.f64()?;
                let tag = r.u16()?;
                let v = r.f64s::<7>()?;
                let pose = || {
                    super::codec::pose_from_parts([v[0], v[1], v[2]], [v[3], v[4], v[5], v[6]])
                        .ok_or_else(|| malformed("invalid pose setpoint"))
                };
                let payload = match tag {
                    1 => SensorPayload::JointSetpoint(JointVector::from(v)),
                    2 => SensorPayload::PoseSetpoint(pose()?),
                    3 => SensorPayload::GoalOverrideJoint(JointVector::from(v)),
                    4 => SensorPayload::GoalOverridePose(pose()?),
                    tag => {
                        return Err(DecodeError::UnknownVariant {
                            kind: "sensor payload",
                            tag,
                        }
                        .into())
                    }
                };
                Message::Sensor(SensorUpdate {
                    topic,
                    timestamp,
                    payload,
                })
            }
            MessageType::SubscribeState => {
                let mode = match r.u8()? {
                    0 => SubscribeMode::Once,
                    1 => SubscribeMode::Subscribe,
                    2 => SubscribeMode::Unsubscribe,
                    v => return Err(malformed(format!("subscribe mode {v}")).into()),
                };
                Message::SubscribeState {
                    mode,
                    rate_hz: r.u16()?,
                }
            }
            MessageType::SafetyReconfig => Message::SafetyReconfig {
                correlation: r.u32()?,
                config: decode_safety_config(&mut r)?,
            },
            MessageType::InjectWrench => Message::InjectWrench {
                correlation: r.u32()?,
                wrench: Wrench::from_array(r.f64s::<6>()?),
                duration: r.f64()?,
            },
            MessageType::AckError => match r.u8()? {
                0 => Message::Ack {
                    correlation: r.u32()?,
                    value: r.u32()?,
                },
                1 => {
                    let correlation = r.u32()?;
                    let raw = r.u16()?;
                    let code = ErrorCode::from_u16(raw).ok_or(DecodeError::UnknownVariant {
                        kind: "error code",
                        tag: raw,
                    })?;
                    Message::Error {
                        correlation,
                        code,
                        message: r.string()?,
                    }
                }
                v => return Err(malformed(format!("ack status {v}")).into()),
            },
        };
        Ok(msg)
    }

    pub fn from_frame(frame: &Frame) -> Result<Message, MessageError> {
        Message::decode(frame.msg_type, &frame.payload)
    }
}
