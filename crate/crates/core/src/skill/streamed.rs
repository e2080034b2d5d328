//! Generators that follow setpoints streamed in from sensor topics. The
//! output ramps toward the latest setpoint at a bounded rate, so a stale or
//! jumpy stream never commands a discontinuity.

use nalgebra::Vector3;

use crate::kinematics::{pose_error, rotation_angle, slerp, JointVector, Pose, Twist};

use super::{SensorPayload, SkillError};

/// Cartesian rate caps for streamed pose setpoints.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CartesianRateLimit {
    /// m/s
    pub linear: f64,
    /// rad/s
    pub angular: f64,
}

impl Default for CartesianRateLimit {
    fn default() -> Self {
        CartesianRateLimit {
            linear: 1.7,
            angular: 2.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamedJoint {
    output: JointVector,
    target: JointVector,
    rate: JointVector,
}

impl StreamedJoint {
    pub fn new(start: JointVector, target: JointVector, rate: JointVector) -> Self {
        StreamedJoint {
            output: start,
            target,
            rate,
        }
    }

    pub fn target(&self) -> JointVector {
        self.target
    }

    pub fn output(&self) -> JointVector {
        self.output
    }

    pub fn update(&mut self, payload: &SensorPayload) -> Result<(), SkillError> {
        match payload {
            SensorPayload::JointSetpoint(q) | SensorPayload::GoalOverrideJoint(q) => {
                if q.iter().any(|v| !v.is_finite()) {
                    return Err(SkillError::NonFinite);
                }
                self.target = *q;
                Ok(())
            }
            _ => Err(SkillError::TypeMismatch),
        }
    }

    /// Moves the output one tick toward the target; returns position and velocity.
    pub fn advance(&mut self, dt: f64) -> (JointVector, JointVector) {
        let mut dq = JointVector::zeros();
        for i in 0..7 {
            let max_step = self.rate[i] * dt;
            let diff = self.target[i] - self.output[i];
            if diff.abs() <= max_step {
                dq[i] = diff / dt;
                self.output[i] = self.target[i];
            } else {
                let step = max_step.copysign(diff);
                dq[i] = step / dt;
                self.output[i] += step;
            }
        }
        (self.output, dq)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamedPose {
    output: Pose,
    target: Pose,
    limit: CartesianRateLimit,
}

impl StreamedPose {
    pub fn new(start: Pose, target: Pose, limit: CartesianRateLimit) -> Self {
        StreamedPose {
            output: start,
            target,
            limit,
        }
    }

    pub fn target(&self) -> Pose {
        self.target
    }

    pub fn output(&self) -> Pose {
        self.output
    }

    pub fn update(&mut self, payload: &SensorPayload) -> Result<(), SkillError> {
        match payload {
            SensorPayload::PoseSetpoint(p) | SensorPayload::GoalOverridePose(p) => {
                if !p.is_finite() {
                    return Err(SkillError::NonFinite);
                }
                self.target = *p;
                Ok(())
            }
            _ => Err(SkillError::TypeMismatch),
        }
    }

    /// Moves the output one tick toward the target; returns pose and the twist
    /// that produced the move.
    pub fn advance(&mut self, dt: f64) -> (Pose, Twist) {
        let prev = self.output;
        let dp = self.target.position - prev.position;
        let dist = dp.norm();
        let max_lin = self.limit.linear * dt;
        let position = if dist <= max_lin {
            self.target.position
        } else {
            prev.position + dp * (max_lin / dist)
        };
        let angle = rotation_angle(&prev.orientation, &self.target.orientation);
        let max_ang = self.limit.angular * dt;
        let orientation = if angle <= max_ang {
            self.target.orientation
        } else {
            slerp(&prev.orientation, &self.target.orientation, max_ang / angle)
        };
        self.output = Pose::new(position, orientation);
        let e = pose_error(&prev, &self.output);
        let twist = Twist {
            linear: Vector3::new(e[0], e[1], e[2]) / dt,
            angular: Vector3::new(e[3], e[4], e[5]) / dt,
        };
        (self.output, twist)
    }
}
