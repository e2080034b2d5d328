use crate::kinematics::{
    forward_kinematics, pose_error, ArmModel, Jacobian, JointVector, Pose, Twist, Wrench,
};
use crate::sim::{
    CartesianGains, CommandInterface, CommandTarget, ControlMode, GripperCommand,
    InternalController, JointGains, RobotCommand, RobotState, DT,
};

use super::controllers::{cartesian_impedance, force_to_torque, joint_pd};
use super::dmp::DmpRuntime;
use super::minjerk::{minjerk_rate, traj_minjerk_joint, traj_minjerk_pose};
use super::streamed::{CartesianRateLimit, StreamedJoint, StreamedPose};
use super::termination::GoalContext;
use super::{
    FeedbackSpec, SensorPayload, SensorUpdate, SkillError, SkillSpec, SkillType, TrajGenSpec,
};

#[derive(Clone, Debug)]
enum Generator {
    MinJerkJoint {
        start: JointVector,
        goal: JointVector,
        duration: f64,
        origin: u64,
    },
    MinJerkPose {
        start: Pose,
        goal: Pose,
        duration: f64,
        origin: u64,
    },
    Dmp(DmpRuntime),
    StreamJoint(StreamedJoint),
    StreamPose(StreamedPose),
    Hold {
        q: JointVector,
        pose: Pose,
    },
    Gripper {
        cmd: GripperCommand,
        hold: JointVector,
    },
    Wrench {
        wrench: Wrench,
        duration: f64,
    },
}

enum Setpoint {
    Joint(JointVector, JointVector),
    Pose(Pose, Twist),
    Wrench(Wrench),
}

/// The control mode a validated skill runs the arm in.
///
/// Joint skills use the position interface, or the velocity interface when
/// the generator is streamed; pose skills likewise. The internal controller
/// is Cartesian impedance when the feedback is `CartesianImpedance` (or
/// `Passthrough` on a pose skill), joint impedance otherwise. Impedance,
/// force and torque skills compute torques themselves.
pub fn control_mode_for(spec: &SkillSpec) -> ControlMode {
    let streamed = spec.traj_gen.is_streamed();
    match spec.skill_type {
        SkillType::JointPositionSkill => {
            let interface = if streamed {
                CommandInterface::JointVelocity
            } else {
                CommandInterface::JointPosition
            };
            let internal = match spec.feedback {
                FeedbackSpec::CartesianImpedance { .. } => InternalController::CartesianImpedance,
                _ => InternalController::JointImpedance,
            };
            ControlMode::from_parts(interface, internal)
        }
        SkillType::CartesianPoseSkill => {
            let interface = if streamed {
                CommandInterface::CartesianVelocity
            } else {
                CommandInterface::CartesianPose
            };
            let internal = match spec.feedback {
                FeedbackSpec::InternalJointPd { .. } => InternalController::JointImpedance,
                _ => InternalController::CartesianImpedance,
            };
            ControlMode::from_parts(interface, internal)
        }
        SkillType::GripperSkill => ControlMode::JointPositionJointImpedance,
        SkillType::ImpedancePoseSkill | SkillType::ForceSkill | SkillType::TorqueSkill => {
            ControlMode::ExternalTorque
        }
    }
}

/// A skill being executed by the control loop: generator, controller and
/// terminator state, initialized from the live robot state.
#[derive(Clone, Debug)]
pub struct ActiveSkill {
    id: u32,
    spec: SkillSpec,
    start_tick: u64,
    steps: u64,
    mode: ControlMode,
    generator: Generator,
    gripper_sent: bool,
}

impl ActiveSkill {
    pub fn activate(
        id: u32,
        spec: SkillSpec,
        state: &RobotState,
        model: &ArmModel,
    ) -> Result<Self, SkillError> {
        let generator = match &spec.traj_gen {
            TrajGenSpec::MinJerkJoint { goal, duration } => Generator::MinJerkJoint {
                start: state.q,
                goal: *goal,
                duration: *duration,
                origin: 0,
            },
            TrajGenSpec::MinJerkPose { goal, duration } => Generator::MinJerkPose {
                start: state.ee_pose,
                goal: *goal,
                duration: *duration,
                origin: 0,
            },
            TrajGenSpec::JointDmp(d) => Generator::Dmp(DmpRuntime::new(d.clone(), state.q)),
            TrajGenSpec::StreamedJointSetpoint { initial } => {
                Generator::StreamJoint(StreamedJoint::new(state.q, *initial, model.dq_max))
            }
            TrajGenSpec::StreamedPoseSetpoint { initial } => Generator::StreamPose(
                StreamedPose::new(state.ee_pose, *initial, CartesianRateLimit::default()),
            ),
            TrajGenSpec::Hold => Generator::Hold {
                q: state.q,
                pose: state.ee_pose,
            },
            TrajGenSpec::GripperMove(cmd) => Generator::Gripper {
                cmd: *cmd,
                hold: state.q,
            },
            TrajGenSpec::ConstantWrench { wrench, duration } => Generator::Wrench {
                wrench: *wrench,
                duration: *duration,
            },
        };
        let mode = control_mode_for(&spec);
        Ok(ActiveSkill {
            id,
            spec,
            start_tick: state.tick,
            steps: 0,
            mode,
            generator,
            gripper_sent: false,
        })
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn spec(&self) -> &SkillSpec {
        &self.spec
    }

    pub fn start_tick(&self) -> u64 {
        self.start_tick
    }

    pub fn mode(&self) -> ControlMode {
        self.mode
    }

    pub fn subscribes(&self, topic: &str) -> bool {
        self.spec.sensor_topics.iter().any(|t| t == topic)
    }

    /// Joint goals also expose their end-effector pose, so pose terminators
    /// work on joint skills.
    pub fn goal_context(&self, model: &ArmModel) -> GoalContext {
        let joint = |q: JointVector| GoalContext {
            joint: Some(q),
            pose: Some(forward_kinematics(model, &q)),
            gripper_width: None,
        };
        match &self.generator {
            Generator::MinJerkJoint { goal, .. } => joint(*goal),
            Generator::MinJerkPose { goal, .. } => GoalContext {
                pose: Some(*goal),
                ..Default::default()
            },
            Generator::Dmp(d) => joint(d.goal()),
            Generator::StreamJoint(s) => joint(s.target()),
            Generator::StreamPose(s) => GoalContext {
                pose: Some(s.target()),
                ..Default::default()
            },
            Generator::Hold { q, pose } => GoalContext {
                joint: Some(*q),
                pose: Some(*pose),
                gripper_width: None,
            },
            Generator::Gripper { cmd, .. } => GoalContext {
                gripper_width: Some(cmd.target_width),
                ..Default::default()
            },
            Generator::Wrench { .. } => GoalContext::default(),
        }
    }

    /// Routes a sensor update to the generator.
    pub fn apply_sensor(&mut self, update: &SensorUpdate) -> Result<(), SkillError> {
        let steps = self.steps;
        match (&mut self.generator, &update.payload) {
            (Generator::StreamJoint(s), p) => s.update(p),
            (Generator::StreamPose(s), p) => s.update(p),
            (
                Generator::MinJerkJoint {
                    start,
                    goal,
                    duration,
                    origin,
                },
                SensorPayload::GoalOverrideJoint(new_goal),
            ) => {
                let t = (steps - *origin) as f64 * DT;
                let (current, _) = traj_minjerk_joint(start, goal, *duration, t)?;
                *start = current;
                *goal = *new_goal;
                *origin = steps;
                Ok(())
            }
            (
                Generator::MinJerkPose {
                    start,
                    goal,
                    duration,
                    origin,
                },
                SensorPayload::GoalOverridePose(new_goal),
            ) => {
                let t = (steps - *origin) as f64 * DT;
                *start = traj_minjerk_pose(start, goal, *duration, t)?;
                *goal = *new_goal;
                *origin = steps;
                Ok(())
            }
            (Generator::Dmp(d), SensorPayload::GoalOverrideJoint(g)) => {
                d.set_goal(*g);
                Ok(())
            }
            _ => Err(SkillError::TypeMismatch),
        }
    }

    /// Gripper command to issue this tick, if any (sent once per skill).
    pub fn gripper_command(&mut self) -> Option<GripperCommand> {
        match self.generator {
            Generator::Gripper { cmd, .. } if !self.gripper_sent => {
                self.gripper_sent = true;
                Some(cmd)
            }
            _ => None,
        }
    }

    fn next_setpoint(&mut self) -> Result<Setpoint, SkillError> {
        self.steps += 1;
        let steps = self.steps;
        Ok(match &mut self.generator {
            Generator::MinJerkJoint {
                start,
                goal,
                duration,
                origin,
            } => {
                let t = (steps - *origin) as f64 * DT;
                let (q, dq) = traj_minjerk_joint(start, goal, *duration, t)?;
                Setpoint::Joint(q, dq)
            }
            Generator::MinJerkPose {
                start,
                goal,
                duration,
                origin,
            } => {
                let t = (steps - *origin) as f64 * DT;
                let pose = traj_minjerk_pose(start, goal, *duration, t)?;
                let rate = minjerk_rate(t, *duration);
                let e = pose_error(start, goal) * rate;
                Setpoint::Pose(pose, Twist::from_vector(&e))
            }
            Generator::Dmp(d) => {
                let (q, dq) = d.step(DT);
                Setpoint::Joint(q, dq)
            }
            // The first tick replays the live state the stream starts from.
            Generator::StreamJoint(s) if steps == 1 => {
                Setpoint::Joint(s.output(), JointVector::zeros())
            }
            Generator::StreamJoint(s) => {
                let (q, dq) = s.advance(DT);
                Setpoint::Joint(q, dq)
            }
            Generator::StreamPose(s) if steps == 1 => Setpoint::Pose(s.output(), Twist::zero()),
            Generator::StreamPose(s) => {
                let (p, tw) = s.advance(DT);
                Setpoint::Pose(p, tw)
            }
            Generator::Hold { q, pose } => match self.spec.skill_type {
                SkillType::CartesianPoseSkill | SkillType::ImpedancePoseSkill => {
                    Setpoint::Pose(*pose, Twist::zero())
                }
                SkillType::TorqueSkill
                    if matches!(self.spec.feedback, FeedbackSpec::CartesianImpedance { .. }) =>
                {
                    Setpoint::Pose(*pose, Twist::zero())
                }
                _ => Setpoint::Joint(*q, JointVector::zeros()),
            },
            Generator::Gripper { hold, .. } => Setpoint::Joint(*hold, JointVector::zeros()),
            Generator::Wrench { wrench, duration } => {
                if steps as f64 * DT <= *duration + 1e-12 {
                    Setpoint::Wrench(*wrench)
                } else {
                    Setpoint::Wrench(Wrench::zero())
                }
            }
        })
    }

    /// Evaluates generator and feedback controller for this tick.
    pub fn command(
        &mut self,
        state: &RobotState,
        jac: &Jacobian,
    ) -> Result<RobotCommand, SkillError> {
        let setpoint = self.next_setpoint()?;
        let mut cmd = match (self.mode, setpoint) {
            (ControlMode::ExternalTorque, sp) => {
                let tau = match (&self.spec.feedback, sp) {
                    (
                        FeedbackSpec::CartesianImpedance { stiffness, damping },
                        Setpoint::Pose(p, _),
                    ) => cartesian_impedance(state, &p, stiffness, damping, jac),
                    (FeedbackSpec::ForceToTorque, Setpoint::Wrench(w)) => force_to_torque(&w, jac),
                    (FeedbackSpec::InternalJointPd { kp, kd }, Setpoint::Joint(q, dq)) => {
                        joint_pd(state, &q, &dq, kp, kd)
                    }
                    _ => {
                        return Err(SkillError::Incompatible(
                            "generator output does not feed the controller".into(),
                        ))
                    }
                };
                RobotCommand::new(ControlMode::ExternalTorque, CommandTarget::Torque { tau })
            }
            (mode, Setpoint::Joint(q, dq)) => {
                let target = match mode.interface() {
                    CommandInterface::JointVelocity => CommandTarget::JointVelocity { dq },
                    _ => CommandTarget::JointPosition { q, dq },
                };
                RobotCommand::new(mode, target)
            }
            (mode, Setpoint::Pose(pose, twist)) => {
                let target = match mode.interface() {
                    CommandInterface::CartesianVelocity => {
                        CommandTarget::CartesianVelocity { twist }
                    }
                    _ => CommandTarget::CartesianPose { pose, twist },
                };
                RobotCommand::new(mode, target)
            }
            (_, Setpoint::Wrench(_)) => {
                return Err(SkillError::Incompatible(
                    "wrench setpoint needs a torque skill".into(),
                ))
            }
        };
        match &self.spec.feedback {
            FeedbackSpec::InternalJointPd { kp, kd }
                if self.mode != ControlMode::ExternalTorque =>
            {
                cmd.joint_gains = Some(JointGains { kp: *kp, kd: *kd });
            }
            FeedbackSpec::CartesianImpedance { stiffness, damping }
                if self.mode != ControlMode::ExternalTorque =>
            {
                cmd.cartesian_gains = Some(CartesianGains {
                    stiffness: *stiffness,
                    damping: *damping,
                });
            }
            _ => {}
        }
        cmd.validate().map_err(|_| SkillError::NonFinite)?;
        Ok(cmd)
    }
}
