//! Skills: a skill type plus a trajectory generator, a feedback controller, a
//! termination handler and a list of sensor topics. The pieces compose freely
//! within the compatibility rules enforced by [`validate_skill`].

pub mod controllers;
pub mod dmp;
pub mod minjerk;
pub mod presets;
mod runtime;
pub mod streamed;
pub mod termination;
mod validate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{JointVector, Pose, Vector6, Wrench};
use crate::sim::GripperCommand;

pub use dmp::{dmp_fit, DmpParams, DmpRuntime, JointDmpSpec};
pub use minjerk::{minjerk_scalar, traj_minjerk_joint, traj_minjerk_pose};
pub use runtime::{control_mode_for, ActiveSkill};
pub use termination::{should_terminate, GoalContext, TerminationCause};
pub use validate::{validate_skill, validate_skill_for_model, Violation};

/// Default implicit cap on every skill's duration, seconds.
pub const DEFAULT_MAX_DURATION: f64 = 60.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SkillType {
    JointPositionSkill,
    CartesianPoseSkill,
    ImpedancePoseSkill,
    ForceSkill,
    GripperSkill,
    TorqueSkill,
}

impl SkillType {
    pub const ALL: [SkillType; 6] = [
        SkillType::JointPositionSkill,
        SkillType::CartesianPoseSkill,
        SkillType::ImpedancePoseSkill,
        SkillType::ForceSkill,
        SkillType::GripperSkill,
        SkillType::TorqueSkill,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TrajGenSpec {
    MinJerkJoint { goal: JointVector, duration: f64 },
    MinJerkPose { goal: Pose, duration: f64 },
    JointDmp(JointDmpSpec),
    StreamedJointSetpoint { initial: JointVector },
    StreamedPoseSetpoint { initial: Pose },
    Hold,
    GripperMove(GripperCommand),
    ConstantWrench { wrench: Wrench, duration: f64 },
}

/// What a generator emits each tick.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeneratorOutput {
    Joint,
    Pose,
    /// [`TrajGenSpec::Hold`] can feed either joint or pose consumers.
    JointOrPose,
    Gripper,
    Wrench,
}

impl TrajGenSpec {
    pub fn output(&self) -> GeneratorOutput {
        match self {
            TrajGenSpec::MinJerkJoint { .. }
            | TrajGenSpec::JointDmp(_)
            | TrajGenSpec::StreamedJointSetpoint { .. } => GeneratorOutput::Joint,
            TrajGenSpec::MinJerkPose { .. } | TrajGenSpec::StreamedPoseSetpoint { .. } => {
                GeneratorOutput::Pose
            }
            TrajGenSpec::Hold => GeneratorOutput::JointOrPose,
            TrajGenSpec::GripperMove(_) => GeneratorOutput::Gripper,
            TrajGenSpec::ConstantWrench { .. } => GeneratorOutput::Wrench,
        }
    }

    pub fn produces_joint(&self) -> bool {
        matches!(
            self.output(),
            GeneratorOutput::Joint | GeneratorOutput::JointOrPose
        )
    }

    pub fn produces_pose(&self) -> bool {
        matches!(
            self.output(),
            GeneratorOutput::Pose | GeneratorOutput::JointOrPose
        )
    }

    pub fn is_streamed(&self) -> bool {
        matches!(
            self,
            TrajGenSpec::StreamedJointSetpoint { .. } | TrajGenSpec::StreamedPoseSetpoint { .. }
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FeedbackSpec {
    InternalJointPd {
        kp: JointVector,
        kd: JointVector,
    },
    CartesianImpedance {
        stiffness: Vector6,
        damping: Vector6,
    },
    Passthrough,
    ForceToTorque,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TermSpec {
    Time {
        duration: f64,
    },
    JointGoal {
        tolerance: f64,
    },
    PoseGoal {
        pos_tol: f64,
        ori_tol: f64,
    },
    /// Fires when any external wrench component exceeds its threshold.
    Contact {
        force_threshold: [f64; 6],
    },
    AnyOf(Vec<TermSpec>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkillSpec {
    pub skill_type: SkillType,
    pub traj_gen: TrajGenSpec,
    pub feedback: FeedbackSpec,
    pub termination: TermSpec,
    pub sensor_topics: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SensorPayload {
    JointSetpoint(JointVector),
    PoseSetpoint(Pose),
    GoalOverrideJoint(JointVector),
    GoalOverridePose(Pose),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorUpdate {
    pub topic: String,
    /// Sender clock, seconds.
    pub timestamp: f64,
    pub payload: SensorPayload,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SkillError {
    #[error("sensor payload does not match the active generator")]
    TypeMismatch,
    #[error("trajectory duration must be positive and finite")]
    InvalidDuration,
    #[error("generator or controller produced non-finite output")]
    NonFinite,
    #[error("skill is not executable: {0}")]
    Incompatible(String),
}
