//! Deterministic simulated 7-DOF arm plus a 1-DOF gripper.
//!
//! Each joint is an independent double integrator with viscous friction,
//! integrated with semi-implicit Euler. Position, velocity and Cartesian
//! command modes are tracked by an emulated internal controller (joint PD or
//! Cartesian impedance); `ExternalTorque` applies the command directly.

use std::sync::Arc;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{
    canonical, clamp_joint_command, damped_pseudo_inverse, forward_kinematics_with_jacobian,
    joint_vector_is_finite, pose_error, ArmModel, Jacobian, JointVector, LimitFlags, Pose, Twist,
    Vector6, Wrench,
};
use crate::skill::controllers::impedance_torque;

/// Control period of the loop, seconds.
pub const DT: f64 = 0.001;
pub const TICK_NS: u64 = 1_000_000;

pub const GRIPPER_MAX_WIDTH: f64 = 0.08;
const GRIPPER_SETTLE: f64 = 1e-4;
const IK_DAMPING: f64 = 0.05;

/// Command interface × internal controller pairs the arm accepts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ControlMode {
    JointPositionJointImpedance,
    JointPositionCartesianImpedance,
    JointVelocityJointImpedance,
    JointVelocityCartesianImpedance,
    CartesianPoseJointImpedance,
    CartesianPoseCartesianImpedance,
    CartesianVelocityJointImpedance,
    CartesianVelocityCartesianImpedance,
    ExternalTorque,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommandInterface {
    JointPosition,
    JointVelocity,
    CartesianPose,
    CartesianVelocity,
    Torque,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InternalController {
    JointImpedance,
    CartesianImpedance,
    None,
}

impl ControlMode {
    pub const ALL: [ControlMode; 9] = [
        ControlMode::JointPositionJointImpedance,
        ControlMode::JointPositionCartesianImpedance,
        ControlMode::JointVelocityJointImpedance,
        ControlMode::JointVelocityCartesianImpedance,
        ControlMode::CartesianPoseJointImpedance,
        ControlMode::CartesianPoseCartesianImpedance,
        ControlMode::CartesianVelocityJointImpedance,
        ControlMode::CartesianVelocityCartesianImpedance,
        ControlMode::ExternalTorque,
    ];

    pub fn interface(self) -> CommandInterface {
        use ControlMode::*;
        match self {
            JointPositionJointImpedance | JointPositionCartesianImpedance => {
                CommandInterface::JointPosition
            }
            JointVelocityJointImpedance | JointVelocityCartesianImpedance => {
                CommandInterface::JointVelocity
            }
            CartesianPoseJointImpedance | CartesianPoseCartesianImpedance => {
                CommandInterface::CartesianPose
            }
            CartesianVelocityJointImpedance | CartesianVelocityCartesianImpedance => {
                CommandInterface::CartesianVelocity
            }
            ExternalTorque => CommandInterface::Torque,
        }
    }

    pub fn internal(self) -> InternalController {
        use ControlMode::*;
        match self {
            JointPositionJointImpedance
            | JointVelocityJointImpedance
            | CartesianPoseJointImpedance
            | CartesianVelocityJointImpedance => InternalController::JointImpedance,
            ExternalTorque => InternalController::None,
            _ => InternalController::CartesianImpedance,
        }
    }

    pub fn from_parts(interface: CommandInterface, internal: InternalController) -> ControlMode {
        use CommandInterface as C;
        use ControlMode::*;
        use InternalController as I;
        match (interface, internal) {
            (C::JointPosition, I::CartesianImpedance) => JointPositionCartesianImpedance,
            (C::JointPosition, _) => JointPositionJointImpedance,
            (C::JointVelocity, I::CartesianImpedance) => JointVelocityCartesianImpedance,
            (C::JointVelocity, _) => JointVelocityJointImpedance,
            (C::CartesianPose, I::JointImpedance) => CartesianPoseJointImpedance,
            (C::CartesianPose, _) => CartesianPoseCartesianImpedance,
            (C::CartesianVelocity, I::JointImpedance) => CartesianVelocityJointImpedance,
            (C::CartesianVelocity, _) => CartesianVelocityCartesianImpedance,
            (C::Torque, _) => ExternalTorque,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CommandTarget {
    JointPosition { q: JointVector, dq: JointVector },
    JointVelocity { dq: JointVector },
    CartesianPose { pose: Pose, twist: Twist },
    CartesianVelocity { twist: Twist },
    Torque { tau: JointVector },
}

impl CommandTarget {
    pub fn interface(&self) -> CommandInterface {
        match self {
            CommandTarget::JointPosition { .. } => CommandInterface::JointPosition,
            CommandTarget::JointVelocity { .. } => CommandInterface::JointVelocity,
            CommandTarget::CartesianPose { .. } => CommandInterface::CartesianPose,
            CommandTarget::CartesianVelocity { .. } => CommandInterface::CartesianVelocity,
            CommandTarget::Torque { .. } => CommandInterface::Torque,
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            CommandTarget::JointPosition { q, dq } => {
                joint_vector_is_finite(q) && joint_vector_is_finite(dq)
            }
            CommandTarget::JointVelocity { dq } => joint_vector_is_finite(dq),
            CommandTarget::CartesianPose { pose, twist } => pose.is_finite() && twist.is_finite(),
            CommandTarget::CartesianVelocity { twist } => twist.is_finite(),
            CommandTarget::Torque { tau } => joint_vector_is_finite(tau),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointGains {
    pub kp: JointVector,
    pub kd: JointVector,
}

impl JointGains {
    /// `kd = 2·sqrt(kp·I)` per joint.
    pub fn critically_damped(kp: f64, model: &ArmModel) -> Self {
        let kp = JointVector::repeat(kp);
        let kd = kp.zip_map(&model.inertia, |k, i| 2.0 * (k * i).sqrt());
        JointGains { kp, kd }
    }

    fn is_valid(&self) -> bool {
        self.kp
            .iter()
            .chain(self.kd.iter())
            .all(|v| v.is_finite() && *v >= 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CartesianGains {
    pub stiffness: Vector6,
    pub damping: Vector6,
}

impl CartesianGains {
    fn is_valid(&self) -> bool {
        self.stiffness
            .iter()
            .chain(self.damping.iter())
            .all(|v| v.is_finite() && *v >= 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotCommand {
    pub mode: ControlMode,
    pub target: CommandTarget,
    /// Overrides the arm's internal joint impedance for this command.
    pub joint_gains: Option<JointGains>,
    /// Overrides the arm's internal Cartesian impedance for this command.
    pub cartesian_gains: Option<CartesianGains>,
}

impl RobotCommand {
    pub fn new(mode: ControlMode, target: CommandTarget) -> Self {
        RobotCommand {
            mode,
            target,
            joint_gains: None,
            cartesian_gains: None,
        }
    }

    /// Hold `q` under the internal joint impedance.
    pub fn hold(q: JointVector) -> Self {
        Self::new(
            ControlMode::JointPositionJointImpedance,
            CommandTarget::JointPosition {
                q,
                dq: JointVector::zeros(),
            },
        )
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.target.interface() != self.mode.interface() {
            return Err(SimError::ModeMismatch(self.mode));
        }
        if !self.target.is_finite() {
            return Err(SimError::NonFiniteCommand);
        }
        if self.joint_gains.is_some_and(|g| !g.is_valid())
            || self.cartesian_gains.is_some_and(|g| !g.is_valid())
        {
            return Err(SimError::NonFiniteCommand);
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("command contains non-finite values or negative gains")]
    NonFiniteCommand,
    #[error("command target does not match control mode {0:?}")]
    ModeMismatch(ControlMode),
    #[error("gripper command out of range: {0}")]
    GripperOutOfRange(&'static str),
    #[error("gravity modeling is reserved and not implemented")]
    GravityUnsupported,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GripperCommand {
    pub target_width: f64,
    pub speed: f64,
    pub grasp_force: f64,
}

impl GripperCommand {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.target_width.is_finite()
            && (0.0..=GRIPPER_MAX_WIDTH).contains(&self.target_width))
        {
            return Err(SimError::GripperOutOfRange(
                "target_width must be in [0, 0.08] m",
            ));
        }
        if !(self.speed.is_finite() && self.speed > 0.0) {
            return Err(SimError::GripperOutOfRange("speed must be > 0"));
        }
        if !(self.grasp_force.is_finite() && self.grasp_force >= 0.0) {
            return Err(SimError::GripperOutOfRange("grasp_force must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GripperState {
    pub width: f64,
    pub moving: bool,
    pub command: Option<GripperCommand>,
}

/// Moves the jaws toward the commanded width at the commanded speed.
pub fn gripper_step(g: &GripperState, dt: f64) -> GripperState {
    let Some(cmd) = g.command else {
        return GripperState {
            moving: false,
            ..*g
        };
    };
    let diff = cmd.target_width - g.width;
    if diff.abs() < GRIPPER_SETTLE {
        return GripperState {
            width: cmd.target_width,
            moving: false,
            command: g.command,
        };
    }
    let step = cmd.speed * dt;
    let width = if diff.abs() <= step {
        cmd.target_width
    } else {
        g.width + step * diff.signum()
    };
    let moving = (cmd.target_width - width).abs() >= GRIPPER_SETTLE;
    GripperState {
        width: if moving { width } else { cmd.target_width },
        moving,
        command: g.command,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SkillPhase {
    #[default]
    Idle,
    Running,
    Finishing,
    Aborted,
}

impl SkillPhase {
    pub fn to_u8(self) -> u8 {
        match self {
            SkillPhase::Idle => 0,
            SkillPhase::Running => 1,
            SkillPhase::Finishing => 2,
            SkillPhase::Aborted => 3,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => SkillPhase::Idle,
            1 => SkillPhase::Running,
            2 => SkillPhase::Finishing,
            3 => SkillPhase::Aborted,
            _ => return None,
        })
    }
}

/// Per-tick snapshot of the arm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub tick: u64,
    pub wall_ns: u64,
    pub q: JointVector,
    pub dq: JointVector,
    pub tau_commanded: JointVector,
    pub tau_external: JointVector,
    pub ee_pose: Pose,
    pub ee_wrench_external: Wrench,
    pub gripper_width: f64,
    pub gripper_moving: bool,
    pub active_skill_id: Option<u32>,
    pub skill_phase: SkillPhase,
}

impl RobotState {
    pub fn at_rest(model: &ArmModel, q: JointVector, gripper_width: f64) -> Self {
        let (ee_pose, _) = forward_kinematics_with_jacobian(model, &q);
        RobotState {
            tick: 0,
            wall_ns: 0,
            q,
            dq: JointVector::zeros(),
            tau_commanded: JointVector::zeros(),
            tau_external: JointVector::zeros(),
            ee_pose,
            ee_wrench_external: Wrench::zero(),
            gripper_width,
            gripper_moving: false,
            active_skill_id: None,
            skill_phase: SkillPhase::Idle,
        }
    }

    /// All-zero state with identity pose.
    pub fn zeroed() -> Self {
        RobotState {
            tick: 0,
            wall_ns: 0,
            q: JointVector::zeros(),
            dq: JointVector::zeros(),
            tau_commanded: JointVector::zeros(),
            tau_external: JointVector::zeros(),
            ee_pose: Pose::identity(),
            ee_wrench_external: Wrench::zero(),
            gripper_width: 0.0,
            gripper_moving: false,
            active_skill_id: None,
            skill_phase: SkillPhase::Idle,
        }
    }

    pub fn kinetic_energy(&self, model: &ArmModel) -> f64 {
        0.5 * (0..7)
            .map(|i| model.inertia[i] * self.dq[i] * self.dq[i])
            .sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub joint_gains: JointGains,
    pub cartesian_gains: CartesianGains,
    /// Reserved. Must be false.
    pub gravity: bool,
    pub initial_gripper_width: f64,
}

impl SimConfig {
    pub fn for_model(model: &ArmModel) -> Self {
        SimConfig {
            joint_gains: JointGains::critically_damped(600.0, model),
            cartesian_gains: CartesianGains {
                stiffness: Vector6::new(1000.0, 1000.0, 1000.0, 100.0, 100.0, 100.0),
                damping: Vector6::new(80.0, 80.0, 80.0, 10.0, 10.0, 10.0),
            },
            gravity: false,
            initial_gripper_width: GRIPPER_MAX_WIDTH,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Injection {
    wrench: Wrench,
    remaining: u64,
}

/// Internal reference the emulated robot controller tracks.
#[derive(Clone, Copy, Debug, PartialEq)]
struct InternalReference {
    mode: Option<ControlMode>,
    q: JointVector,
    pose: Pose,
}

/// Outcome of one integration step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub limits: LimitFlags,
    /// Joint-space reference the command resolved to this step; the measured
    /// position for torque commands.
    pub joint_reference: JointVector,
}

#[derive(Clone, Debug)]
pub struct SimRobot {
    model: Arc<ArmModel>,
    cfg: SimConfig,
    state: RobotState,
    jacobian: Jacobian,
    reference: InternalReference,
    gripper: GripperState,
    injections: Vec<Injection>,
}

impl SimRobot {
    pub fn new(model: Arc<ArmModel>, cfg: SimConfig) -> Result<Self, SimError> {
        if cfg.gravity {
            return Err(SimError::GravityUnsupported);
        }
        let q = model.q_home;
        Ok(Self::with_state(
            model.clone(),
            cfg.clone(),
            RobotState::at_rest(&model, q, cfg.initial_gripper_width),
        ))
    }

    pub fn with_state(model: Arc<ArmModel>, cfg: SimConfig, state: RobotState) -> Self {
        let (pose, jacobian) = forward_kinematics_with_jacobian(&model, &state.q);
        let state = RobotState {
            ee_pose: pose,
            ..state
        };
        SimRobot {
            gripper: GripperState {
                width: state.gripper_width,
                moving: state.gripper_moving,
                command: None,
            },
            reference: InternalReference {
                mode: None,
                q: state.q,
                pose,
            },
            model,
            cfg,
            state,
            jacobian,
            injections: Vec::new(),
        }
    }

    pub fn model(&self) -> &Arc<ArmModel> {
        &self.model
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut RobotState {
        &mut self.state
    }

    /// Jacobian at the current configuration.
    pub fn jacobian(&self) -> &Jacobian {
        &self.jacobian
    }

    /// Applies `wrench` at the end-effector for the next `ticks` steps.
    pub fn inject_wrench(&mut self, wrench: Wrench, ticks: u64) {
        if ticks > 0 {
            self.injections.push(Injection {
                wrench,
                remaining: ticks,
            });
        }
    }

    /// Injected wrenches still counting down.
    pub fn has_injections(&self) -> bool {
        !self.injections.is_empty()
    }

    pub fn command_gripper(&mut self, cmd: GripperCommand) -> Result<(), SimError> {
        cmd.validate()?;
        self.gripper.command = Some(cmd);
        self.gripper.moving = (cmd.target_width - self.gripper.width).abs() >= GRIPPER_SETTLE;
        self.state.gripper_moving = self.gripper.moving;
        Ok(())
    }

    pub fn gripper(&self) -> &GripperState {
        &self.gripper
    }

    fn injected_sum(&self) -> Wrench {
        self.injections
            .iter()
            .fold(Wrench::zero(), |acc, i| acc + i.wrench)
    }

    /// Advances one control period. Pending wrench injections are applied and
    /// consumed.
    pub fn step(&mut self, cmd: &RobotCommand, dt: f64) -> Result<StepReport, SimError> {
        let injected = self.injected_sum();
        let report = self.step_with(cmd, injected, dt)?;
        for inj in &mut self.injections {
            inj.remaining -= 1;
        }
        self.injections.retain(|i| i.remaining > 0);
        Ok(report)
    }

    /// Result of [`SimRobot::step`] without committing it.
    pub fn predict(
        &self,
        cmd: &RobotCommand,
        dt: f64,
    ) -> Result<(RobotState, StepReport), SimError> {
        let mut probe = self.clone();
        let report = probe.step(cmd, dt)?;
        Ok((probe.state, report))
    }

    /// One semi-implicit Euler step with an explicit end-effector wrench.
    pub fn step_with(
        &mut self,
        cmd: &RobotCommand,
        injected: Wrench,
        dt: f64,
    ) -> Result<StepReport, SimError> {
        cmd.validate()?;
        if !injected.is_finite() {
            return Err(SimError::NonFiniteCommand);
        }
        let model = self.model.clone();
        let s = self.state;
        let j = self.jacobian;

        if self.reference.mode != Some(cmd.mode) {
            self.reference = InternalReference {
                mode: Some(cmd.mode),
                q: s.q,
                pose: s.ee_pose,
            };
        }
        let (tau, joint_reference) = self.internal_torque(cmd, &s, &j, dt);

        let tau_ext = j.transpose() * injected.to_vector();
        let zero = JointVector::zeros();
        let (clamped, mut flags) = clamp_joint_command(&model, &s.q, &zero, &tau);
        let tau = clamped.tau;

        let mut dq = s.dq;
        let mut q = s.q;
        for i in 0..7 {
            let acc =
                (tau[i] + tau_ext[i] - model.viscous_friction[i] * s.dq[i]) / model.inertia[i];
            dq[i] += acc * dt;
        }
        let (vel_clamped, vflags) = clamp_joint_command(&model, &s.q, &dq, &zero);
        flags = flags.merge(LimitFlags {
            velocity: vflags.velocity,
            ..Default::default()
        });
        dq = vel_clamped.dq;
        for i in 0..7 {
            q[i] += dq[i] * dt;
            if q[i] < model.q_min[i] || q[i] > model.q_max[i] {
                q[i] = q[i].clamp(model.q_min[i], model.q_max[i]);
                dq[i] = 0.0;
                flags.position = true;
            }
        }

        let (pose, jac) = forward_kinematics_with_jacobian(&model, &q);
        self.gripper = gripper_step(&self.gripper, dt);
        self.jacobian = jac;
        self.state = RobotState {
            tick: s.tick + 1,
            wall_ns: (s.tick + 1) * TICK_NS,
            q,
            dq,
            tau_commanded: tau,
            tau_external: tau_ext,
            ee_pose: pose,
            ee_wrench_external: injected,
            gripper_width: self.gripper.width,
            gripper_moving: self.gripper.moving,
            active_skill_id: s.active_skill_id,
            skill_phase: s.skill_phase,
        };
        Ok(StepReport {
            limits: flags,
            joint_reference,
        })
    }

    /// Torque produced by the emulated robot-side controller, plus the joint
    /// reference it tracked.
    fn internal_torque(
        &mut self,
        cmd: &RobotCommand,
        s: &RobotState,
        j: &Jacobian,
        dt: f64,
    ) -> (JointVector, JointVector) {
        let jg = cmd.joint_gains.unwrap_or(self.cfg.joint_gains);
        let cg = cmd.cartesian_gains.unwrap_or(self.cfg.cartesian_gains);
        let model = &self.model;

        // Reference in the command's own space.
        enum Ref {
            Joint(JointVector, JointVector),
            Cartesian(Pose, Twist),
        }
        let reference = match cmd.target {
            CommandTarget::Torque { tau } => return (tau, s.q),
            CommandTarget::JointPosition { q, dq } => {
                self.reference.q = q;
                Ref::Joint(q, dq)
            }
            CommandTarget::JointVelocity { dq } => {
                self.reference.q += dq * dt;
                Ref::Joint(self.reference.q, dq)
            }
            CommandTarget::CartesianPose { pose, twist } => {
                self.reference.pose = pose;
                Ref::Cartesian(pose, twist)
            }
            CommandTarget::CartesianVelocity { twist } => {
                let p = self.reference.pose;
                self.reference.pose = Pose::new(
                    p.position + twist.linear * dt,
                    canonical(UnitQuaternion::from_scaled_axis(twist.angular * dt) * p.orientation),
                );
                Ref::Cartesian(self.reference.pose, twist)
            }
        };

        match (reference, cmd.mode.internal()) {
            (Ref::Joint(q_ref, dq_ref), InternalController::CartesianImpedance) => {
                let (pose_ref, j_ref) = forward_kinematics_with_jacobian(model, &q_ref);
                let twist_ref = Twist::from_vector(&(j_ref * dq_ref));
                let tau = impedance_torque(s, &pose_ref, &twist_ref, &cg.stiffness, &cg.damping, j);
                // Only the pose of `q_ref` is tracked; the null space is free.
                let pinv = damped_pseudo_inverse(j, IK_DAMPING);
                (tau, s.q + pinv * pose_error(&s.ee_pose, &pose_ref))
            }
            (Ref::Joint(q_ref, dq_ref), _) => {
                let tau = crate::skill::controllers::joint_pd(s, &q_ref, &dq_ref, &jg.kp, &jg.kd);
                (tau, q_ref)
            }
            (Ref::Cartesian(pose_ref, twist_ref), InternalController::JointImpedance) => {
                let pinv = damped_pseudo_inverse(j, IK_DAMPING);
                let q_ref = s.q + pinv * pose_error(&s.ee_pose, &pose_ref);
                let dq_ref = pinv * twist_ref.to_vector();
                let tau = crate::skill::controllers::joint_pd(s, &q_ref, &dq_ref, &jg.kp, &jg.kd);
                (tau, q_ref)
            }
            (Ref::Cartesian(pose_ref, twist_ref), _) => {
                let pinv = damped_pseudo_inverse(j, IK_DAMPING);
                let q_ref = s.q + pinv * pose_error(&s.ee_pose, &pose_ref);
                let tau = impedance_torque(s, &pose_ref, &twist_ref, &cg.stiffness, &cg.damping, j);
                (tau, q_ref)
            }
        }
    }

    /// One period with the brakes engaged: the configuration is kept and the
    /// joint velocities drop to zero. Pending wrench injections still count
    /// down and are reported, but produce no motion.
    pub fn brake(&mut self, dt: f64) {
        let injected = self.injected_sum();
        for inj in &mut self.injections {
            inj.remaining -= 1;
        }
        self.injections.retain(|i| i.remaining > 0);
        let s = self.state;
        self.gripper = gripper_step(&self.gripper, dt);
        self.reference = InternalReference {
            mode: None,
            q: s.q,
            pose: s.ee_pose,
        };
        self.state = RobotState {
            tick: s.tick + 1,
            wall_ns: (s.tick + 1) * TICK_NS,
            dq: JointVector::zeros(),
            tau_commanded: JointVector::zeros(),
            tau_external: self.jacobian.transpose() * injected.to_vector(),
            ee_wrench_external: injected,
            gripper_width: self.gripper.width,
            gripper_moving: self.gripper.moving,
            ..s
        };
    }

    /// Replaces the arm state, e.g. to start a test from a chosen configuration.
    pub fn reset_to(&mut self, q: JointVector, dq: JointVector) {
        let (pose, jac) = forward_kinematics_with_jacobian(&self.model, &q);
        self.state.q = q;
        self.state.dq = dq;
        self.state.ee_pose = pose;
        self.jacobian = jac;
        self.reference = InternalReference {
            mode: None,
            q,
            pose,
        };
    }
}

/// Translational speed of the end-effector, m/s.
pub fn ee_linear_speed(j: &Jacobian, dq: &JointVector) -> f64 {
    let v = j * dq;
    Vector3::new(v[0], v[1], v[2]).norm()
}
