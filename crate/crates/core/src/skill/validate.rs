use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kinematics::{ArmModel, JointVector};

use super::dmp::{MAX_BASIS, MIN_BASIS};
use super::{FeedbackSpec, SkillSpec, SkillType, TermSpec, TrajGenSpec};

const MAX_TERM_DEPTH: usize = 2;

/// One reason a skill spec is not executable.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

fn gains_ok<'a>(values: impl IntoIterator<Item = &'a f64>) -> bool {
    values.into_iter().all(|v| v.is_finite() && *v >= 0.0)
}

fn finite_joint(v: &JointVector) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Checks the compatibility matrix and every nested invariant. Never fails;
/// an empty list means the spec is executable.
pub fn validate_skill(spec: &SkillSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    check_matrix(spec, &mut out);
    check_generator(&spec.traj_gen, &mut out);
    check_feedback(&spec.feedback, &mut out);
    check_termination(spec, &spec.termination, 1, &mut out);
    for (i, t) in spec.sensor_topics.iter().enumerate() {
        if t.is_empty() {
            out.push(Violation::new(
                format!("sensor_topics[{i}]"),
                "empty topic name",
            ));
        }
    }
    out
}

/// [`validate_skill`] plus checks that need the arm model (joint goals
/// within position limits).
pub fn validate_skill_for_model(spec: &SkillSpec, model: &ArmModel) -> Vec<Violation> {
    let mut out = validate_skill(spec);
    let goal = match &spec.traj_gen {
        TrajGenSpec::MinJerkJoint { goal, .. } => Some(goal),
        TrajGenSpec::JointDmp(d) => Some(&d.goal),
        TrajGenSpec::StreamedJointSetpoint { initial } => Some(initial),
        _ => None,
    };
    if let Some(goal) = goal {
        if finite_joint(goal) && !model.within_position_limits(goal) {
            out.push(Violation::new(
                "traj_gen.goal",
                "joint goal outside position limits",
            ));
        }
    }
    out
}

fn check_matrix(spec: &SkillSpec, out: &mut Vec<Violation>) {
    use FeedbackSpec as F;
    use SkillType as S;
    let gen = &spec.traj_gen;
    let fb = &spec.feedback;
    let (gen_ok, fb_ok) = match spec.skill_type {
        S::GripperSkill => (
            matches!(gen, TrajGenSpec::GripperMove(_)),
            matches!(fb, F::Passthrough),
        ),
        S::ForceSkill => (
            matches!(gen, TrajGenSpec::ConstantWrench { .. }),
            matches!(fb, F::ForceToTorque),
        ),
        S::ImpedancePoseSkill => (
            gen.produces_pose(),
            matches!(fb, F::CartesianImpedance { .. }),
        ),
        S::JointPositionSkill => (
            gen.produces_joint(),
            matches!(
                fb,
                F::InternalJointPd { .. } | F::Passthrough | F::CartesianImpedance { .. }
            ),
        ),
        S::CartesianPoseSkill => (
            gen.produces_pose(),
            matches!(
                fb,
                F::Passthrough | F::InternalJointPd { .. } | F::CartesianImpedance { .. }
            ),
        ),
        S::TorqueSkill => {
            let fb_ok = match fb {
                F::InternalJointPd { .. } => gen.produces_joint(),
                F::CartesianImpedance { .. } => gen.produces_pose(),
                F::ForceToTorque => matches!(gen, TrajGenSpec::ConstantWrench { .. }),
                F::Passthrough => false,
            };
            (true, fb_ok)
        }
    };
    if !gen_ok {
        out.push(Violation::new(
            "traj_gen",
            format!("incompatible generator for {:?}", spec.skill_type),
        ));
    }
    if !fb_ok {
        out.push(Violation::new(
            "feedback",
            format!("incompatible controller for {:?}", spec.skill_type),
        ));
    }
}

fn check_generator(gen: &TrajGenSpec, out: &mut Vec<Violation>) {
    let f = "traj_gen";
    match gen {
        TrajGenSpec::MinJerkJoint { goal, duration } => {
            if !positive(*duration) {
                out.push(Violation::new(f, "invalid duration"));
            }
            if !finite_joint(goal) {
                out.push(Violation::new(f, "non-finite goal"));
            }
        }
        TrajGenSpec::MinJerkPose { goal, duration } => {
            if !positive(*duration) {
                out.push(Violation::new(f, "invalid duration"));
            }
            if !goal.is_finite() {
                out.push(Violation::new(f, "non-finite goal"));
            }
        }
        TrajGenSpec::JointDmp(d) => {
            if !(MIN_BASIS..=MAX_BASIS).contains(&d.n_basis) {
                out.push(Violation::new(f, "n_basis out of range"));
            } else if d.weights.len() != d.n_basis as usize * 7 {
                out.push(Violation::new(
                    f,
                    "weights shape does not match n_basis x 7",
                ));
            }
            if d.weights.iter().any(|w| !w.is_finite()) {
                out.push(Violation::new(f, "non-finite weights"));
            }
            if !positive(d.tau) {
                out.push(Violation::new(f, "invalid duration"));
            }
            if !(positive(d.alpha) && positive(d.beta) && positive(d.alpha_x)) {
                out.push(Violation::new(f, "gain out of range"));
            }
            if !finite_joint(&d.goal) {
                out.push(Violation::new(f, "non-finite goal"));
            }
        }
        TrajGenSpec::StreamedJointSetpoint { initial } => {
            if !finite_joint(initial) {
                out.push(Violation::new(f, "non-finite setpoint"));
            }
        }
        TrajGenSpec::StreamedPoseSetpoint { initial } => {
            if !initial.is_finite() {
                out.push(Violation::new(f, "non-finite setpoint"));
            }
        }
        TrajGenSpec::Hold => {}
        TrajGenSpec::GripperMove(cmd) => {
            if let Err(e) = cmd.validate() {
                out.push(Violation::new(f, e.to_string()));
            }
        }
        TrajGenSpec::ConstantWrench { wrench, duration } => {
            if !positive(*duration) {
                out.push(Violation::new(f, "invalid duration"));
            }
            if !wrench.is_finite() {
                out.push(Violation::new(f, "non-finite wrench"));
            }
        }
    }
}

fn check_feedback(fb: &FeedbackSpec, out: &mut Vec<Violation>) {
    let ok = match fb {
        FeedbackSpec::InternalJointPd { kp, kd } => gains_ok(kp.iter().chain(kd.iter())),
        FeedbackSpec::CartesianImpedance { stiffness, damping } => {
            gains_ok(stiffness.iter().chain(damping.iter()))
        }
        FeedbackSpec::Passthrough | FeedbackSpec::ForceToTorque => true,
    };
    if !ok {
        out.push(Violation::new("feedback", "gain out of range"));
    }
}

fn check_termination(spec: &SkillSpec, term: &TermSpec, depth: usize, out: &mut Vec<Violation>) {
    let f = "termination";
    let gripper = spec.skill_type == SkillType::GripperSkill;
    match term {
        TermSpec::Time { duration } => {
            if !positive(*duration) {
                out.push(Violation::new(f, "invalid duration"));
            }
        }
        TermSpec::JointGoal { tolerance } => {
            if !positive(*tolerance) {
                out.push(Violation::new(f, "invalid tolerance"));
            }
            if !gripper && !spec.traj_gen.produces_joint() {
                out.push(Violation::new(
                    f,
                    "joint goal needs a joint-producing generator",
                ));
            }
        }
        TermSpec::PoseGoal { pos_tol, ori_tol } => {
            if !(positive(*pos_tol) && positive(*ori_tol)) {
                out.push(Violation::new(f, "invalid tolerance"));
            }
            // Joint goals are checked at their forward-kinematics pose.
            if !gripper && !spec.traj_gen.produces_pose() && !spec.traj_gen.produces_joint() {
                out.push(Violation::new(f, "pose goal needs a pose or joint goal"));
            }
        }
        TermSpec::Contact { force_threshold } => {
            if force_threshold.iter().any(|t| t.is_nan() || *t <= 0.0) {
                out.push(Violation::new(f, "invalid tolerance"));
            }
        }
        TermSpec::AnyOf(children) => {
            if children.is_empty() {
                out.push(Violation::new(f, "AnyOf must not be empty"));
            }
            if depth > MAX_TERM_DEPTH {
                out.push(Violation::new(f, "AnyOf nested deeper than 2"));
                return;
            }
            for c in children {
                check_termination(spec, c, depth + 1, out);
            }
        }
    }
}
