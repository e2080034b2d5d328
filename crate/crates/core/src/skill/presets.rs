//! Ready-made skill specs for the common client calls (`go_to_joints`,
//! `go_to_pose`, gripper moves, DMP playback, force application, streaming).
//! Both the client library and the tests build skills through these.

use crate::kinematics::{ArmModel, JointVector, Pose, Vector6, Wrench};
use crate::sim::{GripperCommand, JointGains, GRIPPER_MAX_WIDTH};

use super::dmp::JointDmpSpec;
use super::{FeedbackSpec, SkillSpec, SkillType, TermSpec, TrajGenSpec};

/// Default gains, tolerances and timings used by the constructors.
#[derive(Clone, Debug, PartialEq)]
pub struct SkillDefaults {
    pub joint_gains: JointGains,
    pub stiffness: Vector6,
    pub damping: Vector6,
    pub duration: f64,
    pub joint_tolerance: f64,
    pub position_tolerance: f64,
    pub orientation_tolerance: f64,
    /// Added to the nominal duration to form the time cap of goal skills.
    pub settle_margin: f64,
    pub gripper_speed: f64,
}

impl SkillDefaults {
    pub fn for_model(model: &ArmModel) -> Self {
        let stiffness = Vector6::new(300.0, 300.0, 300.0, 30.0, 30.0, 30.0);
        SkillDefaults {
            joint_gains: JointGains::critically_damped(600.0, model),
            damping: stiffness.map(|k| 2.0 * k.sqrt()),
            stiffness,
            duration: 3.0,
            joint_tolerance: 1e-3,
            position_tolerance: 2e-3,
            orientation_tolerance: 1e-2,
            settle_margin: 5.0,
            gripper_speed: 0.05,
        }
    }
}

impl Default for SkillDefaults {
    fn default() -> Self {
        Self::for_model(&ArmModel::panda())
    }
}

pub fn go_to_joints(d: &SkillDefaults, goal: JointVector, duration: f64) -> SkillSpec {
    SkillSpec {
        skill_type: SkillType::JointPositionSkill,
        traj_gen: TrajGenSpec::MinJerkJoint { goal, duration },
        feedback: FeedbackSpec::InternalJointPd {
            kp: d.joint_gains.kp,
            kd: d.joint_gains.kd,
        },
        termination: TermSpec::AnyOf(vec![
            TermSpec::JointGoal {
                tolerance: d.joint_tolerance,
            },
            TermSpec::Time {
                duration: duration + d.settle_margin,
            },
        ]),
        sensor_topics: vec![],
    }
}

/// Impedance variant computes torques from the Cartesian spring-damper;
/// the other streams poses to the arm's internal controller.
pub fn go_to_pose(d: &SkillDefaults, goal: Pose, duration: f64, use_impedance: bool) -> SkillSpec {
    let (skill_type, feedback) = if use_impedance {
        (
            SkillType::ImpedancePoseSkill,
            FeedbackSpec::CartesianImpedance {
                stiffness: d.stiffness,
                damping: d.damping,
            },
        )
    } else {
        (SkillType::CartesianPoseSkill, FeedbackSpec::Passthrough)
    };
    SkillSpec {
        skill_type,
        traj_gen: TrajGenSpec::MinJerkPose { goal, duration },
        feedback,
        termination: TermSpec::AnyOf(vec![
            TermSpec::PoseGoal {
                pos_tol: d.position_tolerance,
                ori_tol: d.orientation_tolerance,
            },
            TermSpec::Time {
                duration: duration + d.settle_margin,
            },
        ]),
        sensor_topics: vec![],
    }
}

/// DMP playback; runs for 1.5 τ.
pub fn execute_joint_dmp(d: &SkillDefaults, dmp: JointDmpSpec) -> SkillSpec {
    let tau = dmp.tau;
    SkillSpec {
        skill_type: SkillType::JointPositionSkill,
        traj_gen: TrajGenSpec::JointDmp(dmp),
        feedback: FeedbackSpec::InternalJointPd {
            kp: d.joint_gains.kp,
            kd: d.joint_gains.kd,
        },
        termination: TermSpec::Time {
            duration: tau * 1.5,
        },
        sensor_topics: vec![],
    }
}

pub fn goto_gripper(d: &SkillDefaults, width: f64, speed: f64, force: f64) -> SkillSpec {
    let travel = if speed > 0.0 {
        GRIPPER_MAX_WIDTH / speed
    } else {
        0.0
    };
    SkillSpec {
        skill_type: SkillType::GripperSkill,
        traj_gen: TrajGenSpec::GripperMove(GripperCommand {
            target_width: width,
            speed,
            grasp_force: force,
        }),
        feedback: FeedbackSpec::Passthrough,
        termination: TermSpec::AnyOf(vec![
            TermSpec::JointGoal { tolerance: 1e-4 },
            TermSpec::Time {
                duration: travel + d.settle_margin,
            },
        ]),
        sensor_topics: vec![],
    }
}

pub fn open_gripper(d: &SkillDefaults) -> SkillSpec {
    goto_gripper(d, GRIPPER_MAX_WIDTH, d.gripper_speed, 0.0)
}

pub fn close_gripper(d: &SkillDefaults) -> SkillSpec {
    goto_gripper(d, 0.0, d.gripper_speed, 0.0)
}

pub fn apply_force(wrench: Wrench, duration: f64) -> SkillSpec {
    SkillSpec {
        skill_type: SkillType::ForceSkill,
        traj_gen: TrajGenSpec::ConstantWrench { wrench, duration },
        feedback: FeedbackSpec::ForceToTorque,
        termination: TermSpec::Time { duration },
        sensor_topics: vec![],
    }
}

/// Follows pose setpoints published on `topic` for `duration` seconds.
pub fn stream_pose_setpoints(initial: Pose, topic: &str, duration: f64) -> SkillSpec {
    SkillSpec {
        skill_type: SkillType::CartesianPoseSkill,
        traj_gen: TrajGenSpec::StreamedPoseSetpoint { initial },
        feedback: FeedbackSpec::Passthrough,
        termination: TermSpec::Time { duration },
        sensor_topics: vec![topic.to_string()],
    }
}

/// Follows joint setpoints published on `topic` for `duration` seconds.
pub fn stream_joint_setpoints(initial: JointVector, topic: &str, duration: f64) -> SkillSpec {
    SkillSpec {
        skill_type: SkillType::JointPositionSkill,
        traj_gen: TrajGenSpec::StreamedJointSetpoint { initial },
        feedback: FeedbackSpec::Passthrough,
        termination: TermSpec::Time { duration },
        sensor_topics: vec![topic.to_string()],
    }
}

/// Holds the current configuration for `duration` seconds.
pub fn hold(duration: f64) -> SkillSpec {
    SkillSpec {
        skill_type: SkillType::JointPositionSkill,
        traj_gen: TrajGenSpec::Hold,
        feedback: FeedbackSpec::Passthrough,
        termination: TermSpec::Time { duration },
        sensor_topics: vec![],
    }
}

/// Every constructor above with representative arguments.
pub fn all_examples(d: &SkillDefaults, model: &ArmModel) -> Vec<(&'static str, SkillSpec)> {
    let pose = crate::kinematics::forward_kinematics(model, &model.q_home);
    let dmp = JointDmpSpec::zero_weights(model.q_home, 1.0, Default::default());
    vec![
        ("go_to_joints", go_to_joints(d, model.q_home, d.duration)),
        (
            "go_to_pose_impedance",
            go_to_pose(d, pose, d.duration, true),
        ),
        (
            "go_to_pose_passthrough",
            go_to_pose(d, pose, d.duration, false),
        ),
        ("execute_joint_dmp", execute_joint_dmp(d, dmp)),
        ("open_gripper", open_gripper(d)),
        ("close_gripper", close_gripper(d)),
        ("goto_gripper", goto_gripper(d, 0.04, 0.1, 20.0)),
        (
            "apply_force",
            apply_force(Wrench::from_array([0.0, 0.0, -5.0, 0.0, 0.0, 0.0]), 1.0),
        ),
        (
            "stream_pose_setpoints",
            stream_pose_setpoints(pose, "pose_stream", 2.0),
        ),
        (
            "stream_joint_setpoints",
            stream_joint_setpoints(model.q_home, "joint_stream", 2.0),
        ),
        ("hold", hold(1.0)),
    ]
}
