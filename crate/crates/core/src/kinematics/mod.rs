//! Forward kinematics, geometric Jacobian and pose arithmetic for a 7-DOF
//! revolute chain described by modified Denavit–Hartenberg parameters.
//!
//! Link `i` maps frame `i-1` to frame `i` as
//! `RotX(alpha) · TransX(a) · RotZ(q + theta_offset) · TransZ(d)`.
//! Everything here is pure; an [`ArmModel`] can be shared across threads.

mod model;
mod types;

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};

pub use model::{ArmModel, DhRow};
pub use types::{
    canonical, joint_vector_is_finite, slerp, Jacobian, JointVector, Pose, Twist, Vector6, Wrench,
};

fn link_transform(row: &DhRow, q: f64) -> Isometry3<f64> {
    let twist = Isometry3::from_parts(
        Translation3::new(row.a, 0.0, 0.0),
        UnitQuaternion::from_axis_angle(&Vector3::x_axis(), row.alpha),
    );
    let turn = Isometry3::from_parts(
        Translation3::new(0.0, 0.0, row.d),
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), q + row.theta_offset),
    );
    twist * turn
}

/// Joint frames (base frame) for `q`, followed by the end-effector frame.
fn chain(model: &ArmModel, q: &JointVector) -> ([Isometry3<f64>; 7], Isometry3<f64>) {
    let mut frames = [Isometry3::identity(); 7];
    let mut t = Isometry3::identity();
    for (i, row) in model.joints.iter().enumerate() {
        t *= link_transform(row, q[i]);
        frames[i] = t;
    }
    let ee = t * model.ee_offset.to_isometry();
    (frames, ee)
}

pub fn forward_kinematics(model: &ArmModel, q: &JointVector) -> Pose {
    Pose::from_isometry(&chain(model, q).1)
}

pub fn jacobian(model: &ArmModel, q: &JointVector) -> Jacobian {
    forward_kinematics_with_jacobian(model, q).1
}

/// Pose and Jacobian from a single pass over the chain.
pub fn forward_kinematics_with_jacobian(model: &ArmModel, q: &JointVector) -> (Pose, Jacobian) {
    let (frames, ee) = chain(model, q);
    let p_ee = ee.translation.vector;
    let mut j = Jacobian::zeros();
    for (i, frame) in frames.iter().enumerate() {
        let z = frame.rotation * Vector3::z();
        let p = frame.translation.vector;
        let lin = z.cross(&(p_ee - p));
        j.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
        j.fixed_view_mut::<3, 1>(3, i).copy_from(&z);
    }
    (Pose::from_isometry(&ee), j)
}

/// Six-vector error `desired − current`: position difference, then the
/// rotation vector (axis·angle, angle in `[0, π]`) of `desired ∘ current⁻¹`.
pub fn pose_error(current: &Pose, desired: &Pose) -> Vector6 {
    let dp = desired.position - current.position;
    let rel = canonical(desired.orientation * current.orientation.inverse());
    let rot = rotation_vector(&rel);
    Vector6::new(dp.x, dp.y, dp.z, rot.x, rot.y, rot.z)
}

/// Rotation vector of a canonical (`w >= 0`) unit quaternion.
fn rotation_vector(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let w = q.w;
    let v = q.imag();
    let n = v.norm();
    if n == 0.0 {
        return Vector3::zeros();
    }
    let angle = 2.0 * n.atan2(w);
    let mut axis = v / n;
    if w < 1e-12 {
        // Half-turn: both axis signs are valid, keep the one pointing to +x first.
        let lead = axis.iter().copied().find(|c| *c != 0.0).unwrap_or(1.0);
        if lead < 0.0 {
            axis = -axis;
        }
    }
    axis * angle
}

/// Rotation angle (rad, `[0, π]`) between two orientations.
pub fn rotation_angle(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    let rel = canonical(b * a.inverse());
    2.0 * rel.imag().norm().atan2(rel.w)
}

/// Which limit classes a command had to be clamped against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LimitFlags {
    pub position: bool,
    pub velocity: bool,
    pub torque: bool,
}

impl LimitFlags {
    pub fn any(&self) -> bool {
        self.position || self.velocity || self.torque
    }

    pub fn merge(self, other: LimitFlags) -> LimitFlags {
        LimitFlags {
            position: self.position || other.position,
            velocity: self.velocity || other.velocity,
            torque: self.torque || other.torque,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClampedCommand {
    pub q: JointVector,
    pub dq: JointVector,
    pub tau: JointVector,
}

/// Clamps each component into its limit interval and reports what moved.
pub fn clamp_joint_command(
    model: &ArmModel,
    q: &JointVector,
    dq: &JointVector,
    tau: &JointVector,
) -> (ClampedCommand, LimitFlags) {
    let mut flags = LimitFlags::default();
    let mut out = ClampedCommand {
        q: *q,
        dq: *dq,
        tau: *tau,
    };
    for i in 0..7 {
        let qc = q[i].clamp(model.q_min[i], model.q_max[i]);
        if qc != q[i] {
            flags.position = true;
            out.q[i] = qc;
        }
        let dqc = dq[i].clamp(-model.dq_max[i], model.dq_max[i]);
        if dqc != dq[i] {
            flags.velocity = true;
            out.dq[i] = dqc;
        }
        let tc = tau[i].clamp(-model.tau_max[i], model.tau_max[i]);
        if tc != tau[i] {
            flags.torque = true;
            out.tau[i] = tc;
        }
    }
    (out, flags)
}

/// Damped least-squares pseudo-inverse `Jᵀ (J Jᵀ + λ² I)⁻¹`.
pub fn damped_pseudo_inverse(j: &Jacobian, lambda: f64) -> nalgebra::SMatrix<f64, 7, 6> {
    let jjt = j * j.transpose() + nalgebra::Matrix6::identity() * (lambda * lambda);
    let inv = jjt.try_inverse().unwrap_or_else(nalgebra::Matrix6::zeros);
    j.transpose() * inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn zero_geometry_chain_sits_at_origin() {
        let m = ArmModel::zero_geometry();
        let q = JointVector::from_column_slice(&[0.3, -1.0, 2.0, 0.5, -0.2, 1.1, 0.9]);
        let p = forward_kinematics(&m, &q);
        assert_eq!(p.position, Vector3::zeros());
        let j = jacobian(&m, &q);
        assert!(j.fixed_view::<3, 7>(0, 0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn joint_one_is_periodic() {
        let m = ArmModel::panda();
        let q = m.q_home;
        let mut q2 = q;
        q2[0] += 2.0 * PI;
        let a = forward_kinematics(&m, &q);
        let b = forward_kinematics(&m, &q2);
        assert_relative_eq!(a.position, b.position, epsilon = 1e-12);
        assert!(rotation_angle(&a.orientation, &b.orientation) < 1e-9);
        assert!(a.orientation.w >= 0.0 && b.orientation.w >= 0.0);
    }

    #[test]
    fn angular_columns_are_unit() {
        let m = ArmModel::panda();
        let j = jacobian(&m, &m.q_home);
        for c in 0..7 {
            let n = j.fixed_view::<3, 1>(3, c).norm();
            assert_relative_eq!(n, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn pose_error_cases() {
        let a = Pose::identity();
        assert_eq!(pose_error(&a, &a), Vector6::zeros());

        let b = Pose::new(Vector3::new(0.1, 0.0, 0.0), UnitQuaternion::identity());
        assert_relative_eq!(
            pose_error(&a, &b),
            Vector6::new(0.1, 0.0, 0.0, 0.0, 0.0, 0.0),
            epsilon = 1e-15
        );

        let c = Pose::new(
            Vector3::zeros(),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2),
        );
        assert_relative_eq!(
            pose_error(&a, &c),
            Vector6::new(0.0, 0.0, 0.0, 0.0, 0.0, FRAC_PI_2),
            epsilon = 1e-12
        );
    }

    #[test]
    fn pose_error_half_turn_prefers_positive_axis() {
        let a = Pose::identity();
        let b = Pose::new(
            Vector3::zeros(),
            UnitQuaternion::from_axis_angle(&-Vector3::x_axis(), PI),
        );
        let e = pose_error(&a, &b);
        assert_relative_eq!(e[3], PI, epsilon = 1e-9);
        assert!(e[4].abs() < 1e-9 && e[5].abs() < 1e-9);
    }

    #[test]
    fn clamp_cases() {
        let m = ArmModel::panda();
        let q = m.q_home;
        let z = JointVector::zeros();
        let (out, flags) = clamp_joint_command(&m, &q, &z, &z);
        assert_eq!(out.q, q);
        assert!(!flags.any());

        let mut tau = z;
        tau[0] = 200.0;
        let (out, flags) = clamp_joint_command(&m, &q, &z, &tau);
        assert_eq!(out.tau[0], 87.0);
        assert!(flags.torque && !flags.position && !flags.velocity);

        let mut low = q;
        low[1] = m.q_min[1] - 0.5;
        let (out, flags) = clamp_joint_command(&m, &low, &z, &z);
        assert_eq!(out.q[1], m.q_min[1]);
        assert!(flags.position && !flags.torque);
    }

    #[test]
    fn slerp_halfway_about_z() {
        let from = UnitQuaternion::identity();
        let to = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2);
        let mid = slerp(&from, &to, 0.5);
        let expected = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2 / 2.0);
        assert!(rotation_angle(&mid, &expected) < 1e-12);
    }
}
