//! Fixed 360-byte robot state body, shared by state messages, log records and
//! the snapshot buffer.
//!
//! | offset | field |
//! |---|---|
//! | 0 | tick u64 |
//! | 8 | wall_ns u64 |
//! | 16 / 72 / 128 / 184 | q, dq, tau_cmd, tau_ext (7 f64 each) |
//! | 240 | ee position (3 f64) |
//! | 264 | ee quaternion w, x, y, z |
//! | 296 | external wrench fx..tz |
//! | 344 | gripper width |
//! | 352 | skill id u32 (0 = none) |
//! | 356 | phase u8 |
//! | 357 | gripper moving u8 (state messages only, 0 in logs) |
//! | 358 | padding |

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::kinematics::{JointVector, Pose, Wrench};
use crate::sim::{RobotState, SkillPhase};

use super::codec::{malformed, pose_from_parts, DecodeError, EncodeError};

pub const STATE_BYTES: usize = 360;

fn put(out: &mut [u8], at: &mut usize, v: f64) {
    out[*at..*at + 8].copy_from_slice(&v.to_le_bytes());
    *at += 8;
}

fn get(b: &[u8], at: &mut usize) -> f64 {
    let v = f64::from_le_bytes(b[*at..*at + 8].try_into().unwrap());
    *at += 8;
    v
}

fn get7(b: &[u8], at: &mut usize) -> JointVector {
    JointVector::from_fn(|_, _| get(b, at))
}

/// Writes the body without any checks. `with_moving` controls byte 357.
pub fn write_state_body(s: &RobotState, with_moving: bool, out: &mut [u8; STATE_BYTES]) {
    out[0..8].copy_from_slice(&s.tick.to_le_bytes());
    out[8..16].copy_from_slice(&s.wall_ns.to_le_bytes());
    let mut at = 16;
    for v in [&s.q, &s.dq, &s.tau_commanded, &s.tau_external] {
        for x in v.iter() {
            put(out, &mut at, *x);
        }
    }
    for x in s.ee_pose.position.iter() {
        put(out, &mut at, *x);
    }
    for x in s.ee_pose.quaternion_wxyz() {
        put(out, &mut at, x);
    }
    for x in s.ee_wrench_external.to_array() {
        put(out, &mut at, x);
    }
    put(out, &mut at, s.gripper_width);
    debug_assert_eq!(at, 352);
    out[352..356].copy_from_slice(&s.active_skill_id.unwrap_or(0).to_le_bytes());
    out[356] = s.skill_phase.to_u8();
    out[357] = u8::from(with_moving && s.gripper_moving);
    out[358] = 0;
    out[359] = 0;
}

pub fn state_body(s: &RobotState, with_moving: bool) -> [u8; STATE_BYTES] {
    let mut out = [0u8; STATE_BYTES];
    write_state_body(s, with_moving, &mut out);
    out
}

/// Inverse of [`write_state_body`] without validation. The quaternion is
/// taken as stored; an unknown phase byte reads as idle.
pub fn read_state_body(b: &[u8; STATE_BYTES]) -> RobotState {
    let mut at = 16;
    let q = get7(b, &mut at);
    let dq = get7(b, &mut at);
    let tau_commanded = get7(b, &mut at);
    let tau_external = get7(b, &mut at);
    let position = Vector3::new(get(b, &mut at), get(b, &mut at), get(b, &mut at));
    let quat = Quaternion::new(
        get(b, &mut at),
        get(b, &mut at),
        get(b, &mut at),
        get(b, &mut at),
    );
    let mut w = [0.0; 6];
    for v in &mut w {
        *v = get(b, &mut at);
    }
    let gripper_width = get(b, &mut at);
    let id = u32::from_le_bytes(b[352..356].try_into().unwrap());
    RobotState {
        tick: u64::from_le_bytes(b[0..8].try_into().unwrap()),
        wall_ns: u64::from_le_bytes(b[8..16].try_into().unwrap()),
        q,
        dq,
        tau_commanded,
        tau_external,
        ee_pose: Pose {
            position,
            orientation: UnitQuaternion::new_unchecked(quat),
        },
        ee_wrench_external: Wrench::from_array(w),
        gripper_width,
        gripper_moving: b[357] != 0,
        active_skill_id: (id != 0).then_some(id),
        skill_phase: SkillPhase::from_u8(b[356]).unwrap_or_default(),
    }
}

pub fn state_is_finite(s: &RobotState) -> bool {
    [s.q, s.dq, s.tau_commanded, s.tau_external]
        .iter()
        .all(|v| v.iter().all(|x| x.is_finite()))
        && s.ee_pose.is_finite()
        && s.ee_wrench_external.is_finite()
        && s.gripper_width.is_finite()
}

/// State message body; refuses NaN and infinities.
pub fn encode_robot_state(s: &RobotState) -> Result<Vec<u8>, EncodeError> {
    if !state_is_finite(s) {
        return Err(EncodeError::NonFinite("robot state"));
    }
    Ok(state_body(s, true).to_vec())
}

pub fn decode_robot_state(bytes: &[u8]) -> Result<RobotState, DecodeError> {
    let b: &[u8; STATE_BYTES] = bytes
        .get(..STATE_BYTES)
        .and_then(|s| s.try_into().ok())
        .ok_or_else(|| {
            malformed(format!(
                "robot state needs {STATE_BYTES} bytes, got {}",
                bytes.len()
            ))
        })?;
    if SkillPhase::from_u8(b[356]).is_none() {
        return Err(malformed(format!("unknown phase {}", b[356])));
    }
    let mut s = read_state_body(b);
    s.ee_pose = pose_from_parts(s.ee_pose.position.into(), s.ee_pose.quaternion_wxyz())
        .ok_or_else(|| malformed("invalid end-effector pose"))?;
    Ok(s)
}
