//! Feedback laws mapping robot state and a setpoint to joint torques.

use crate::kinematics::{pose_error, Jacobian, JointVector, Pose, Twist, Vector6, Wrench};
use crate::sim::RobotState;

/// Spring-damper in task space: `F = K∘e − D∘(J·dq)`, `τ = Jᵀ·F`.
pub fn cartesian_impedance(
    state: &RobotState,
    pose_d: &Pose,
    stiffness: &Vector6,
    damping: &Vector6,
    j: &Jacobian,
) -> JointVector {
    impedance_torque(state, pose_d, &Twist::zero(), stiffness, damping, j)
}

/// Impedance law with a feed-forward twist: `F = K∘e + D∘(twist_d − J·dq)`.
pub fn impedance_torque(
    state: &RobotState,
    pose_d: &Pose,
    twist_d: &Twist,
    stiffness: &Vector6,
    damping: &Vector6,
    j: &Jacobian,
) -> JointVector {
    let e = pose_error(&state.ee_pose, pose_d);
    let vel_err = twist_d.to_vector() - j * state.dq;
    let f = stiffness.component_mul(&e) + damping.component_mul(&vel_err);
    j.transpose() * f
}

/// `τ = kp∘(q_d − q) + kd∘(dq_d − dq)`.
pub fn joint_pd(
    state: &RobotState,
    q_d: &JointVector,
    dq_d: &JointVector,
    kp: &JointVector,
    kd: &JointVector,
) -> JointVector {
    kp.component_mul(&(q_d - state.q)) + kd.component_mul(&(dq_d - state.dq))
}

/// `τ = Jᵀ·w`.
pub fn force_to_torque(w: &Wrench, j: &Jacobian) -> JointVector {
    j.transpose() * w.to_vector()
}
