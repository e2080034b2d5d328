//! Random protocol values, shared by the protocol tests and the acceptance
//! suite.

use nalgebra::{UnitQuaternion, Vector3};
use rand::rngs::StdRng;
use rand::Rng;
use skillstack_core::control::{SkillStatus, StatusPhase};
use skillstack_core::kinematics::{canonical, JointVector, Pose, Vector6, Wrench};
use skillstack_core::protocol::{ErrorCode, Message, SubscribeMode};
use skillstack_core::safety::{Aabb, SafetyConfig};
use skillstack_core::sim::{GripperCommand, RobotState, SkillPhase};
use skillstack_core::skill::{
    FeedbackSpec, JointDmpSpec, SensorPayload, SensorUpdate, SkillSpec, SkillType, TermSpec,
    TerminationCause, TrajGenSpec,
};

pub fn real(rng: &mut StdRng) -> f64 {
    match rng.random_range(0..10) {
        0 => 0.0,
        1 => -0.0,
        2 => f64::MIN_POSITIVE,
        3 => rng.random_range(-1e6..1e6),
        _ => rng.random_range(-4.0..4.0),
    }
}

pub fn joints(rng: &mut StdRng) -> JointVector {
    JointVector::from_fn(|_, _| real(rng))
}

pub fn pose(rng: &mut StdRng) -> Pose {
    let axis = Vector3::new(real(rng), real(rng), real(rng)).map(|v| v.clamp(-3.0, 3.0));
    Pose::new(
        Vector3::new(real(rng), real(rng), real(rng)),
        canonical(UnitQuaternion::from_scaled_axis(axis)),
    )
}

pub fn wrench(rng: &mut StdRng) -> Wrench {
    Wrench::from_array(std::array::from_fn(|_| real(rng)))
}

pub fn six(rng: &mut StdRng) -> Vector6 {
    Vector6::from_fn(|_, _| real(rng))
}

pub fn text(rng: &mut StdRng) -> String {
    let n = rng.random_range(0..12);
    (0..n)
        .map(|_| ['a', 'z', '/', '_', 'é', '→', '0'][rng.random_range(0..7)])
        .collect()
}

pub fn traj_gen(rng: &mut StdRng) -> TrajGenSpec {
    match rng.random_range(0..8) {
        0 => TrajGenSpec::MinJerkJoint {
            goal: joints(rng),
            duration: real(rng),
        },
        1 => TrajGenSpec::MinJerkPose {
            goal: pose(rng),
            duration: real(rng),
        },
        2 => {
            let n = rng.random_range(1..12);
            TrajGenSpec::JointDmp(JointDmpSpec {
                weights: (0..n * 7).map(|_| real(rng)).collect(),
                goal: joints(rng),
                tau: real(rng),
                alpha: real(rng),
                beta: real(rng),
                alpha_x: real(rng),
                n_basis: n,
            })
        }
        3 => TrajGenSpec::StreamedJointSetpoint {
            initial: joints(rng),
        },
        4 => TrajGenSpec::StreamedPoseSetpoint { initial: pose(rng) },
        5 => TrajGenSpec::Hold,
        6 => TrajGenSpec::GripperMove(GripperCommand {
            target_width: real(rng),
            speed: real(rng),
            grasp_force: real(rng),
        }),
        _ => TrajGenSpec::ConstantWrench {
            wrench: wrench(rng),
            duration: real(rng),
        },
    }
}

pub fn feedback(rng: &mut StdRng) -> FeedbackSpec {
    match rng.random_range(0..4) {
        0 => FeedbackSpec::InternalJointPd {
            kp: joints(rng),
            kd: joints(rng),
        },
        1 => FeedbackSpec::CartesianImpedance {
            stiffness: six(rng),
            damping: six(rng),
        },
        2 => FeedbackSpec::Passthrough,
        _ => FeedbackSpec::ForceToTorque,
    }
}

pub fn term(rng: &mut StdRng, depth: u32) -> TermSpec {
    match rng.random_range(0..if depth < 3 { 5 } else { 4 }) {
        0 => TermSpec::Time {
            duration: real(rng),
        },
        1 => TermSpec::JointGoal {
            tolerance: real(rng),
        },
        2 => TermSpec::PoseGoal {
            pos_tol: real(rng),
            ori_tol: real(rng),
        },
        3 => TermSpec::Contact {
            force_threshold: std::array::from_fn(|_| real(rng)),
        },
        _ => {
            let n = rng.random_range(0..4);
            TermSpec::AnyOf((0..n).map(|_| term(rng, depth + 1)).collect())
        }
    }
}

pub fn spec(rng: &mut StdRng) -> SkillSpec {
    let n_topics = rng.random_range(0..3);
    SkillSpec {
        skill_type: SkillType::ALL[rng.random_range(0..6)],
        traj_gen: traj_gen(rng),
        feedback: feedback(rng),
        termination: term(rng, 0),
        sensor_topics: (0..n_topics).map(|_| text(rng)).collect(),
    }
}

pub fn state(rng: &mut StdRng) -> RobotState {
    let phases = [
        SkillPhase::Idle,
        SkillPhase::Running,
        SkillPhase::Finishing,
        SkillPhase::Aborted,
    ];
    RobotState {
        tick: rng.random(),
        wall_ns: rng.random(),
        q: joints(rng),
        dq: joints(rng),
        tau_commanded: joints(rng),
        tau_external: joints(rng),
        ee_pose: pose(rng),
        ee_wrench_external: wrench(rng),
        gripper_width: real(rng),
        gripper_moving: rng.random(),
        active_skill_id: if rng.random() {
            Some(rng.random_range(1..u32::MAX))
        } else {
            None
        },
        skill_phase: phases[rng.random_range(0..phases.len())],
    }
}

pub fn aabb(rng: &mut StdRng) -> Aabb {
    Aabb::new(
        [real(rng), real(rng), real(rng)],
        [real(rng).abs(), real(rng).abs(), real(rng).abs()],
    )
}

pub fn message(rng: &mut StdRng) -> Message {
    match rng.random_range(0..11) {
        0 => Message::ExecuteSkill {
            correlation: rng.random(),
            spec: spec(rng),
        },
        1 => Message::PreemptSkill {
            skill_id: if rng.random() {
                Some(rng.random_range(1..u32::MAX))
            } else {
                None
            },
            correlation: if rng.random() {
                Some(rng.random())
            } else {
                None
            },
        },
        2 => {
            let phases = [
                StatusPhase::Queued,
                StatusPhase::Running,
                StatusPhase::Succeeded,
                StatusPhase::Preempted,
                StatusPhase::Aborted,
            ];
            let causes = [
                None,
                Some(TerminationCause::Time),
                Some(TerminationCause::Contact),
                Some(TerminationCause::WallViolation),
                Some(TerminationCause::CommandError),
            ];
            Message::SkillStatus(SkillStatus {
                skill_id: rng.random(),
                phase: phases[rng.random_range(0..5)],
                cause: causes[rng.random_range(0..5)],
                state: state(rng),
            })
        }
        3 => Message::RobotState(state(rng)),
        4 => {
            let payload = match rng.random_range(0..4) {
                0 => SensorPayload::JointSetpoint(joints(rng)),
                1 => SensorPayload::PoseSetpoint(pose(rng)),
                2 => SensorPayload::GoalOverrideJoint(joints(rng)),
                _ => SensorPayload::GoalOverridePose(pose(rng)),
            };
            Message::Sensor(SensorUpdate {
                topic: text(rng),
                timestamp: real(rng),
                payload,
            })
        }
        5 => Message::SubscribeState {
            mode: [
                SubscribeMode::Once,
                SubscribeMode::Subscribe,
                SubscribeMode::Unsubscribe,
            ][rng.random_range(0..3)],
            rate_hz: rng.random(),
        },
        6 => {
            let n = rng.random_range(0..4);
            Message::SafetyReconfig {
                correlation: rng.random(),
                config: SafetyConfig {
                    enabled: rng.random(),
                    walls: (0..n).map(|_| aabb(rng)).collect(),
                    workspace: if rng.random() { Some(aabb(rng)) } else { None },
                    ee_half_extents: Vector3::new(real(rng), real(rng), real(rng)),
                },
            }
        }
        7 => Message::InjectWrench {
            correlation: rng.random(),
            wrench: wrench(rng),
            duration: real(rng),
        },
        8 => Message::Ack {
            correlation: rng.random(),
            value: rng.random(),
        },
        _ => Message::Error {
            correlation: rng.random(),
            code: ErrorCode::from_u16(rng.random_range(1..=8)).unwrap(),
            message: text(rng),
        },
    }
}
