use serde::{Deserialize, Serialize};

use crate::kinematics::{rotation_angle, JointVector, Pose};
use crate::sim::RobotState;

use super::TermSpec;

/// Joint speed below which the arm counts as arrived, rad/s.
pub const VELOCITY_GATE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TerminationCause {
    Time,
    JointGoal,
    PoseGoal,
    Contact,
    SafetyCap,
    WallViolation,
    Preempt,
    CommandError,
}

impl TerminationCause {
    pub fn to_u8(self) -> u8 {
        match self {
            TerminationCause::Time => 0,
            TerminationCause::JointGoal => 1,
            TerminationCause::PoseGoal => 2,
            TerminationCause::Contact => 3,
            TerminationCause::SafetyCap => 4,
            TerminationCause::WallViolation => 5,
            TerminationCause::Preempt => 6,
            TerminationCause::CommandError => 7,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => TerminationCause::Time,
            1 => TerminationCause::JointGoal,
            2 => TerminationCause::PoseGoal,
            3 => TerminationCause::Contact,
            4 => TerminationCause::SafetyCap,
            5 => TerminationCause::WallViolation,
            6 => TerminationCause::Preempt,
            7 => TerminationCause::CommandError,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TerminationCause::Time => "time",
            TerminationCause::JointGoal => "joint_goal",
            TerminationCause::PoseGoal => "pose_goal",
            TerminationCause::Contact => "contact",
            TerminationCause::SafetyCap => "safety_cap",
            TerminationCause::WallViolation => "wall_violation",
            TerminationCause::Preempt => "preempt",
            TerminationCause::CommandError => "command_error",
        }
    }
}

/// Goals the active generator is heading for, as seen by goal terminators.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GoalContext {
    pub joint: Option<JointVector>,
    pub pose: Option<Pose>,
    /// Commanded gripper width; gripper skills resolve goal terminators
    /// against jaw arrival instead of the arm.
    pub gripper_width: Option<f64>,
}

/// Seconds to whole control ticks.
pub fn duration_ticks(seconds: f64) -> u64 {
    (seconds * 1000.0).round().max(0.0) as u64
}

fn speed_gate(state: &RobotState) -> bool {
    state.dq.amax() < VELOCITY_GATE
}

/// Evaluates a termination handler against the post-step state. Returns the
/// cause when it fires.
pub fn should_terminate(
    term: &TermSpec,
    state: &RobotState,
    start_tick: u64,
    goal: &GoalContext,
) -> Option<TerminationCause> {
    match term {
        TermSpec::Time { duration } => {
            let elapsed = state.tick.saturating_sub(start_tick);
            (elapsed >= duration_ticks(*duration)).then_some(TerminationCause::Time)
        }
        TermSpec::JointGoal { tolerance } => {
            if let Some(width) = goal.gripper_width {
                let arrived = (state.gripper_width - width).abs() < tolerance.max(1e-4)
                    && !state.gripper_moving;
                return arrived.then_some(TerminationCause::JointGoal);
            }
            let q_goal = goal.joint?;
            let close = (state.q - q_goal).amax() < *tolerance;
            (close && speed_gate(state)).then_some(TerminationCause::JointGoal)
        }
        TermSpec::PoseGoal { pos_tol, ori_tol } => {
            if let Some(width) = goal.gripper_width {
                let arrived = (state.gripper_width - width).abs() < pos_tol.max(1e-4)
                    && !state.gripper_moving;
                return arrived.then_some(TerminationCause::PoseGoal);
            }
            let pose_goal = goal.pose?;
            let pos_err = (state.ee_pose.position - pose_goal.position).norm();
            let ang_err = rotation_angle(&state.ee_pose.orientation, &pose_goal.orientation);
            (pos_err < *pos_tol && ang_err < *ori_tol && speed_gate(state))
                .then_some(TerminationCause::PoseGoal)
        }
        TermSpec::Contact { force_threshold } => {
            let w = state.ee_wrench_external.to_array();
            w.iter()
                .zip(force_threshold)
                .any(|(v, t)| v.abs() > *t)
                .then_some(TerminationCause::Contact)
        }
        TermSpec::AnyOf(children) => children
            .iter()
            .find_map(|c| should_terminate(c, state, start_tick, goal)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{ArmModel, Wrench};

    fn state() -> RobotState {
        let m = ArmModel::panda();
        RobotState::at_rest(&m, m.q_home, 0.08)
    }

    #[test]
    fn time_fires_exactly() {
        let mut s = state();
        let term = TermSpec::Time { duration: 0.5 };
        let ctx = GoalContext::default();
        s.tick = 100 + 499;
        assert_eq!(should_terminate(&term, &s, 100, &ctx), None);
        s.tick = 100 + 500;
        assert_eq!(
            should_terminate(&term, &s, 100, &ctx),
            Some(TerminationCause::Time)
        );
    }

    #[test]
    fn contact_threshold_on_z() {
        let mut s = state();
        let inf = f64::INFINITY;
        let term = TermSpec::Contact {
            force_threshold: [inf, inf, 5.0, inf, inf, inf],
        };
        let ctx = GoalContext::default();
        assert_eq!(should_terminate(&term, &s, 0, &ctx), None);
        s.ee_wrench_external = Wrench::from_array([0.0, 0.0, 6.0, 0.0, 0.0, 0.0]);
        assert_eq!(
            should_terminate(&term, &s, 0, &ctx),
            Some(TerminationCause::Contact)
        );
    }

    #[test]
    fn joint_goal_needs_velocity_gate() {
        let mut s = state();
        let ctx = GoalContext {
            joint: Some(s.q),
            ..Default::default()
        };
        let term = TermSpec::JointGoal { tolerance: 1e-3 };
        s.dq[2] = 0.5;
        assert_eq!(should_terminate(&term, &s, 0, &ctx), None);
        s.dq[2] = 0.0;
        assert_eq!(
            should_terminate(&term, &s, 0, &ctx),
            Some(TerminationCause::JointGoal)
        );
    }

    #[test]
    fn any_of_reports_first_firing_child() {
        let mut s = state();
        s.tick = 10;
        let term = TermSpec::AnyOf(vec![
            TermSpec::JointGoal { tolerance: 1e-3 },
            TermSpec::Time { duration: 0.01 },
        ]);
        assert_eq!(
            should_terminate(&term, &s, 0, &GoalContext::default()),
            Some(TerminationCause::Time)
        );
    }
}
