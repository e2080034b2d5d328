use std::sync::Arc;
use std::time::Instant;

use crossbeam::channel::Sender;

use crate::kinematics::{ArmModel, JointVector};
use crate::protocol::state::state_body;
use crate::safety::{check_safety, SafetyConfig, SafetyViolation, ViolationKind};
use crate::sim::{
    RobotCommand, RobotState, SimConfig, SimError, SimRobot, SkillPhase, StepReport, DT,
};
use crate::skill::termination::duration_ticks;
use crate::skill::{
    should_terminate, validate_skill_for_model, ActiveSkill, SkillSpec, TerminationCause,
    DEFAULT_MAX_DURATION,
};

use super::log::RecordBytes;
use super::mailbox::{Command, Mailbox, DRAIN_CAP};
use super::snapshot::SnapshotCell;
use super::{SkillStatus, StatusPhase};

#[derive(Clone, Debug)]
pub struct LoopOptions {
    pub robot_id: u16,
    pub sim: SimConfig,
    pub safety: SafetyConfig,
}

impl LoopOptions {
    pub fn for_model(model: &ArmModel) -> Self {
        LoopOptions {
            robot_id: 0,
            sim: SimConfig::for_model(model),
            safety: SafetyConfig::default(),
        }
    }
}

/// What happened during one tick.
#[derive(Clone, Debug, PartialEq)]
pub struct TickReport {
    pub tick: u64,
    /// Skill whose command drove this tick; `None` while holding.
    pub skill_id: Option<u32>,
    pub command: RobotCommand,
    /// Joint reference the arm tracked this tick.
    pub joint_reference: JointVector,
    /// Brakes engaged after a rejected command.
    pub braked: bool,
    pub violation: Option<SafetyViolation>,
    pub events: Vec<SkillStatus>,
}

/// Per-robot control loop. Each call to [`ControlLoop::tick`] runs one
/// 1 ms period.
pub struct ControlLoop {
    robot_id: u16,
    model: Arc<ArmModel>,
    sim: SimRobot,
    safety: SafetyConfig,
    mailbox: Arc<Mailbox>,
    snapshot: Arc<SnapshotCell>,
    log: Option<Sender<RecordBytes>>,
    wall_clock: Option<Instant>,
    active: Option<ActiveSkill>,
    queued: Option<(u32, SkillSpec)>,
    hold_q: JointVector,
    sensor_drops: u64,
    brake_ticks: u64,
}

impl ControlLoop {
    pub fn new(model: Arc<ArmModel>, opts: LoopOptions) -> Result<Self, SimError> {
        let sim = SimRobot::new(model.clone(), opts.sim)?;
        Ok(Self::with_sim(model, sim, opts.safety, opts.robot_id))
    }

    pub fn with_sim(
        model: Arc<ArmModel>,
        sim: SimRobot,
        safety: SafetyConfig,
        robot_id: u16,
    ) -> Self {
        ControlLoop {
            robot_id,
            mailbox: Arc::new(Mailbox::new(model.clone())),
            snapshot: Arc::new(SnapshotCell::new()),
            hold_q: sim.state().q,
            model,
            sim,
            safety,
            log: None,
            wall_clock: None,
            active: None,
            queued: None,
            sensor_drops: 0,
            brake_ticks: 0,
        }
    }

    /// Records go to `tx`, one per tick.
    pub fn set_log(&mut self, tx: Sender<RecordBytes>) {
        self.log = Some(tx);
    }

    /// Stamp records with elapsed real time since `start` instead of tick time.
    pub fn set_wall_clock(&mut self, start: Option<Instant>) {
        self.wall_clock = start;
    }

    pub fn robot_id(&self) -> u16 {
        self.robot_id
    }

    pub fn model(&self) -> &Arc<ArmModel> {
        &self.model
    }

    pub fn mailbox(&self) -> &Arc<Mailbox> {
        &self.mailbox
    }

    pub fn snapshot(&self) -> &Arc<SnapshotCell> {
        &self.snapshot
    }

    pub fn state(&self) -> &RobotState {
        self.sim.state()
    }

    pub fn sim(&self) -> &SimRobot {
        &self.sim
    }

    pub fn sim_mut(&mut self) -> &mut SimRobot {
        &mut self.sim
    }

    pub fn safety(&self) -> &SafetyConfig {
        &self.safety
    }

    pub fn active_id(&self) -> Option<u32> {
        self.active.as_ref().map(ActiveSkill::id)
    }

    pub fn sensor_drops(&self) -> u64 {
        self.sensor_drops
    }

    pub fn brake_ticks(&self) -> u64 {
        self.brake_ticks
    }

    /// Nothing to execute, nothing waiting in the mailbox and no wrench
    /// injection in progress. A sim-clock driver may stop advancing time here.
    pub fn is_idle(&self) -> bool {
        self.active.is_none()
            && self.queued.is_none()
            && self.mailbox.pending() == 0
            && !self.sim.has_injections()
    }

    pub fn queued_id(&self) -> Option<u32> {
        self.queued.as_ref().map(|(id, _)| *id)
    }

    fn status(
        &self,
        skill_id: u32,
        phase: StatusPhase,
        cause: Option<TerminationCause>,
        state: &RobotState,
    ) -> SkillStatus {
        SkillStatus {
            skill_id,
            phase,
            cause,
            state: *state,
        }
    }

    fn finish_active(
        &mut self,
        phase: StatusPhase,
        cause: TerminationCause,
        state: &RobotState,
        events: &mut Vec<SkillStatus>,
    ) {
        if let Some(a) = self.active.take() {
            events.push(self.status(a.id(), phase, Some(cause), state));
            self.mailbox.release();
            self.hold_q = state.q;
        }
    }

    fn drain(&mut self, pre: &RobotState, events: &mut Vec<SkillStatus>) {
        for _ in 0..DRAIN_CAP {
            let Some(cmd) = self.mailbox.pop() else { break };
            match cmd {
                Command::Submit { skill_id, spec } => {
                    if self.active.is_none() {
                        if let Some((id, spec)) = self.queued.take() {
                            self.activate(id, spec, pre, events);
                        }
                    }
                    if self.queued.is_some() {
                        // Admission control keeps this from happening.
                        events.push(self.status(
                            skill_id,
                            StatusPhase::Aborted,
                            Some(TerminationCause::CommandError),
                            pre,
                        ));
                        self.mailbox.release();
                    } else {
                        events.push(self.status(skill_id, StatusPhase::Queued, None, pre));
                        self.queued = Some((skill_id, spec));
                    }
                }
                Command::Preempt { skill_id } => {
                    let hits_active = match (skill_id, self.active_id()) {
                        (None, Some(_)) => true,
                        (Some(id), Some(a)) => id == a,
                        _ => false,
                    };
                    if hits_active {
                        self.finish_active(
                            StatusPhase::Preempted,
                            TerminationCause::Preempt,
                            pre,
                            events,
                        );
                    } else if let (Some(id), Some((qid, _))) = (skill_id, &self.queued) {
                        if id == *qid {
                            self.queued = None;
                            events.push(self.status(
                                id,
                                StatusPhase::Preempted,
                                Some(TerminationCause::Preempt),
                                pre,
                            ));
                            self.mailbox.release();
                        }
                    }
                }
                Command::Sensor(update) => match &mut self.active {
                    Some(a) if a.subscribes(&update.topic) => {
                        if a.apply_sensor(&update).is_err() {
                            self.finish_active(
                                StatusPhase::Aborted,
                                TerminationCause::CommandError,
                                pre,
                                events,
                            );
                        }
                    }
                    _ => self.sensor_drops += 1,
                },
                Command::InjectWrench { wrench, ticks } => self.sim.inject_wrench(wrench, ticks),
                Command::SafetyReconfig(cfg) => self.safety = cfg,
            }
        }
    }

    fn activate(
        &mut self,
        id: u32,
        spec: SkillSpec,
        pre: &RobotState,
        events: &mut Vec<SkillStatus>,
    ) {
        let ok = validate_skill_for_model(&spec, &self.model).is_empty();
        match ActiveSkill::activate(id, spec, pre, &self.model) {
            Ok(a) if ok => {
                events.push(self.status(id, StatusPhase::Running, None, pre));
                self.active = Some(a);
            }
            _ => {
                events.push(self.status(
                    id,
                    StatusPhase::Aborted,
                    Some(TerminationCause::CommandError),
                    pre,
                ));
                self.mailbox.release();
            }
        }
    }

    fn verdict(&self, probe: &SimRobot, report: &StepReport) -> Result<(), SafetyViolation> {
        if !self.safety.enabled {
            return Ok(());
        }
        if report.limits.position {
            let s = probe.state();
            let joint = (0..7)
                .find(|&i| s.q[i] <= self.model.q_min[i] || s.q[i] >= self.model.q_max[i])
                .unwrap_or(0);
            return Err(SafetyViolation {
                kind: ViolationKind::JointLimit(joint),
                detail: format!("joint {joint} would pass its position limit"),
            });
        }
        check_safety(
            &self.safety,
            &probe.state().ee_pose,
            &probe.state().q,
            &self.model,
        )
    }

    fn try_step(&self, cmd: &RobotCommand) -> Result<(SimRobot, StepReport), SimError> {
        let mut probe = self.sim.clone();
        let report = probe.step(cmd, DT)?;
        Ok((probe, report))
    }

    /// Runs one period: drain, activate, command, safety check, step,
    /// terminate, log, publish.
    pub fn tick(&mut self) -> TickReport {
        let pre = *self.sim.state();
        let mut events = Vec::new();

        self.drain(&pre, &mut events);
        if self.active.is_none() {
            if let Some((id, spec)) = self.queued.take() {
                self.activate(id, spec, &pre, &mut events);
            }
        }

        let mut gripper_error = false;
        let mut commander = None;
        let mut cmd = None;
        if let Some(a) = &mut self.active {
            if let Some(g) = a.gripper_command() {
                gripper_error = self.sim.command_gripper(g).is_err();
            }
            if !gripper_error {
                if let Ok(c) = a.command(&pre, self.sim.jacobian()) {
                    commander = Some(a.id());
                    cmd = Some(c);
                }
            }
            if cmd.is_none() {
                self.finish_active(
                    StatusPhase::Aborted,
                    TerminationCause::CommandError,
                    &pre,
                    &mut events,
                );
            }
        }
        let mut cmd = cmd.unwrap_or_else(|| RobotCommand::hold(self.hold_q));

        let mut stepped = self.try_step(&cmd);
        if stepped.is_err() && commander.is_some() {
            self.finish_active(
                StatusPhase::Aborted,
                TerminationCause::CommandError,
                &pre,
                &mut events,
            );
            commander = None;
            cmd = RobotCommand::hold(self.hold_q);
            stepped = self.try_step(&cmd);
        }

        let mut violation = None;
        let accepted = match stepped {
            Ok((probe, report)) => match self.verdict(&probe, &report) {
                Ok(()) => {
                    self.sim = probe;
                    Some(report.joint_reference)
                }
                Err(v) => {
                    violation = Some(v);
                    None
                }
            },
            Err(_) => None,
        };
        let braked = accepted.is_none();
        let joint_reference = accepted.unwrap_or(pre.q);
        if braked {
            if commander.is_some() {
                let cause = if violation.is_some() {
                    TerminationCause::WallViolation
                } else {
                    TerminationCause::CommandError
                };
                self.finish_active(StatusPhase::Aborted, cause, &pre, &mut events);
            }
            self.hold_q = pre.q;
            self.sim.brake(DT);
            self.brake_ticks += 1;
        }

        let mut phase = if commander.is_some() {
            SkillPhase::Running
        } else {
            SkillPhase::Idle
        };
        if braked && commander.is_some() {
            phase = SkillPhase::Aborted;
        }
        let post = *self.sim.state();
        if let (Some(a), false) = (&self.active, braked) {
            let cause = should_terminate(
                &a.spec().termination,
                &post,
                a.start_tick(),
                &a.goal_context(self.sim.model()),
            )
            .or_else(|| {
                (post.tick - a.start_tick() >= duration_ticks(DEFAULT_MAX_DURATION))
                    .then_some(TerminationCause::SafetyCap)
            });
            if let Some(c) = cause {
                let (status, p) = match c {
                    TerminationCause::SafetyCap => (StatusPhase::Aborted, SkillPhase::Aborted),
                    _ => (StatusPhase::Succeeded, SkillPhase::Finishing),
                };
                phase = p;
                let mut fin = post;
                fin.active_skill_id = commander;
                fin.skill_phase = phase;
                self.finish_active(status, c, &fin, &mut events);
            }
        }

        {
            let st = self.sim.state_mut();
            st.active_skill_id = commander;
            st.skill_phase = phase;
        }
        let post = *self.sim.state();

        if let Some(tx) = &self.log {
            let mut rec = pre;
            rec.tau_commanded = post.tau_commanded;
            rec.tau_external = post.tau_external;
            rec.ee_wrench_external = post.ee_wrench_external;
            rec.active_skill_id = commander;
            rec.skill_phase = phase;
            if let Some(start) = self.wall_clock {
                rec.wall_ns = start.elapsed().as_nanos() as u64;
            }
            // The receiver lives as long as the loop's owner; a closed channel
            // only means nobody wants the log.
            let _ = tx.send(state_body(&rec, false));
        }
        self.snapshot.publish(&post);

        TickReport {
            tick: pre.tick,
            skill_id: commander,
            command: cmd,
            joint_reference,
            braked,
            violation,
            events,
        }
    }

    /// Runs `n` ticks, collecting status events.
    pub fn run_ticks(&mut self, n: u64) -> Vec<SkillStatus> {
        let mut events = Vec::new();
        for _ in 0..n {
            events.extend(self.tick().events);
        }
        events
    }

    /// Ticks until skill `id` reaches a terminal status or `max_ticks` pass.
    pub fn run_until_done(&mut self, id: u32, max_ticks: u64) -> Option<SkillStatus> {
        for _ in 0..max_ticks {
            if let Some(s) = self
                .tick()
                .events
                .into_iter()
                .find(|e| e.skill_id == id && e.phase.is_terminal())
            {
                return Some(s);
            }
        }
        None
    }

    /// Preempts the queued and active skills, e.g. at shutdown.
    pub fn shutdown(&mut self) -> Vec<SkillStatus> {
        let state = *self.sim.state();
        let mut events = Vec::new();
        if let Some((id, _)) = self.queued.take() {
            events.push(self.status(
                id,
                StatusPhase::Preempted,
                Some(TerminationCause::Preempt),
                &state,
            ));
            self.mailbox.release();
        }
        self.finish_active(
            StatusPhase::Preempted,
            TerminationCause::Preempt,
            &state,
            &mut events,
        );
        events
    }
}
