//! Quintic minimum-jerk time scaling and the joint / pose generators built on it.

use crate::kinematics::{slerp, JointVector, Pose};

use super::SkillError;

/// Time scaling `s(t)` with its first and second derivatives.
///
/// `s = 10τ³ − 15τ⁴ + 6τ⁵` with `τ = min(t/T, 1)`; velocity and acceleration
/// vanish at both ends and stay zero after `T`.
pub fn minjerk_scalar(t: f64, duration: f64) -> Result<(f64, f64, f64), SkillError> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(SkillError::InvalidDuration);
    }
    let tau = (t / duration).clamp(0.0, 1.0);
    if tau >= 1.0 {
        return Ok((1.0, 0.0, 0.0));
    }
    let t2 = tau * tau;
    let t3 = t2 * tau;
    let s = t3 * (10.0 + tau * (-15.0 + 6.0 * tau));
    let ds = 30.0 * t2 * (1.0 - tau) * (1.0 - tau) / duration;
    let dds = 60.0 * tau * (1.0 + tau * (-3.0 + 2.0 * tau)) / (duration * duration);
    Ok((s, ds, dds))
}

/// Desired joint position and velocity at time `t` along a straight
/// joint-space min-jerk segment.
pub fn traj_minjerk_joint(
    start: &JointVector,
    goal: &JointVector,
    duration: f64,
    t: f64,
) -> Result<(JointVector, JointVector), SkillError> {
    let (s, ds, _) = minjerk_scalar(t, duration)?;
    let delta = goal - start;
    if s >= 1.0 {
        return Ok((*goal, JointVector::zeros()));
    }
    Ok((start + delta * s, delta * ds))
}

/// Position blended linearly by `s(t)`, orientation slerped by `s(t)`.
pub fn traj_minjerk_pose(
    start: &Pose,
    goal: &Pose,
    duration: f64,
    t: f64,
) -> Result<Pose, SkillError> {
    let (s, _, _) = minjerk_scalar(t, duration)?;
    if s >= 1.0 {
        return Ok(*goal);
    }
    Ok(Pose::new(
        start.position + (goal.position - start.position) * s,
        slerp(&start.orientation, &goal.orientation, s),
    ))
}

/// Velocity scale `ds/dt` at time `t`; used to feed forward a Cartesian twist.
pub(crate) fn minjerk_rate(t: f64, duration: f64) -> f64 {
    minjerk_scalar(t, duration).map(|v| v.1).unwrap_or(0.0)
}
