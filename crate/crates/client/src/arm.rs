//! High-level arm handle: one method per common skill. Specs are checked
//! locally before anything is sent.

use std::sync::Arc;

use tokio::sync::mpsc;

use skillstack_core::control::{SkillStatus, StatusPhase};
use skillstack_core::kinematics::{ArmModel, JointVector, Pose, Wrench};
use skillstack_core::sim::RobotState;
use skillstack_core::skill::presets::{self, SkillDefaults};
use skillstack_core::skill::{
    validate_skill_for_model, JointDmpSpec, SensorPayload, SensorUpdate, SkillSpec,
};

use crate::{Client, ClientError, SkillHandle};

/// Extra time a streamed skill keeps running after the last setpoint.
const STREAM_SETTLE_S: f64 = 1.0;

pub struct ArmHandle {
    client: Client,
    robot_id: u16,
    model: Arc<ArmModel>,
    pub defaults: SkillDefaults,
}

impl ArmHandle {
    pub(crate) fn new(client: Client, robot_id: u16) -> Self {
        let model = Arc::new(ArmModel::panda());
        ArmHandle {
            defaults: SkillDefaults::for_model(&model),
            client,
            robot_id,
            model,
        }
    }

    /// Validates against `model` instead of the bundled arm.
    pub fn with_model(mut self, model: Arc<ArmModel>) -> Self {
        self.defaults = SkillDefaults::for_model(&model);
        self.model = model;
        self
    }

    pub fn robot_id(&self) -> u16 {
        self.robot_id
    }

    pub fn client(&self) -> &Client {
        &self.client
    }

    /// Validates locally, then submits.
    pub async fn start(&self, spec: &SkillSpec) -> Result<SkillHandle, ClientError> {
        let v = validate_skill_for_model(spec, &self.model);
        if !v.is_empty() {
            return Err(ClientError::Invalid(v));
        }
        self.client.execute(self.robot_id, spec).await
    }

    /// Submits and waits for success.
    pub async fn run(&self, spec: &SkillSpec) -> Result<SkillStatus, ClientError> {
        self.start(spec).await?.succeed().await
    }

    pub async fn go_to_joints(
        &self,
        goal: JointVector,
        duration: f64,
    ) -> Result<SkillStatus, ClientError> {
        self.run(&presets::go_to_joints(&self.defaults, goal, duration))
            .await
    }

    /// Non-unit quaternions are normalized by `Pose`.
    pub async fn go_to_pose(
        &self,
        goal: Pose,
        duration: f64,
        use_impedance: bool,
    ) -> Result<SkillStatus, ClientError> {
        self.run(&presets::go_to_pose(
            &self.defaults,
            goal,
            duration,
            use_impedance,
        ))
        .await
    }

    pub async fn execute_joint_dmp(&self, dmp: JointDmpSpec) -> Result<SkillStatus, ClientError> {
        self.run(&presets::execute_joint_dmp(&self.defaults, dmp))
            .await
    }

    pub async fn open_gripper(&self) -> Result<SkillStatus, ClientError> {
        self.run(&presets::open_gripper(&self.defaults)).await
    }

    pub async fn close_gripper(&self) -> Result<SkillStatus, ClientError> {
        self.run(&presets::close_gripper(&self.defaults)).await
    }

    pub async fn goto_gripper(
        &self,
        width: f64,
        speed: f64,
        force: f64,
    ) -> Result<SkillStatus, ClientError> {
        self.run(&presets::goto_gripper(&self.defaults, width, speed, force))
            .await
    }

    pub async fn apply_force(
        &self,
        wrench: Wrench,
        duration: f64,
    ) -> Result<SkillStatus, ClientError> {
        self.run(&presets::apply_force(wrench, duration)).await
    }

    /// Starts a streamed pose skill and publishes `(t, pose)` setpoints once
    /// the robot's own clock is `t` seconds past the skill start, so the
    /// stream keeps its timing under either clock mode. Uses this client's
    /// state subscription for the robot. `None` for an empty stream.
    pub async fn stream_pose_setpoints(
        &self,
        points: &[(f64, Pose)],
    ) -> Result<Option<SkillStatus>, ClientError> {
        let Some(&(t_last, _)) = points.last() else {
            return Ok(None);
        };
        if points.iter().any(|(t, _)| !t.is_finite() || *t < 0.0) {
            return Err(ClientError::Usage(
                "setpoint times must be finite and non-negative".into(),
            ));
        }
        let topic = self.client.fresh_topic("pose");
        let initial = self.get_state().await?.ee_pose;
        let spec = presets::stream_pose_setpoints(initial, &topic, t_last + STREAM_SETTLE_S);
        let mut states = self.subscribe_states(1000).await?;
        let mut handle = self.start(&spec).await?;
        let start_tick = loop {
            match handle.next().await {
                Some(s) if s.phase == StatusPhase::Running => break s.state.tick,
                Some(s) if s.phase.is_terminal() => {
                    let _ = self.client.unsubscribe_state(self.robot_id).await;
                    return Err(ClientError::SkillFailed(Box::new(s)));
                }
                Some(_) => continue,
                None => return Err(ClientError::Closed),
            }
        };
        let mut now = start_tick;
        for &(t, pose) in points {
            let due = start_tick + (t * 1000.0).round() as u64;
            while now < due {
                match states.recv().await {
                    Some(s) => now = s.tick,
                    None => return Err(ClientError::Closed),
                }
            }
            let update = SensorUpdate {
                topic: topic.clone(),
                timestamp: t,
                payload: SensorPayload::PoseSetpoint(pose),
            };
            self.client.send_sensor(self.robot_id, update).await?;
        }
        let _ = self.client.unsubscribe_state(self.robot_id).await;
        handle.succeed().await.map(Some)
    }

    /// Preempts the active skill. Nothing to stop is not an error.
    pub async fn stop_skill(&self) -> Result<(), ClientError> {
        self.client.preempt(self.robot_id, None).await
    }

    pub async fn get_state(&self) -> Result<RobotState, ClientError> {
        self.client.get_state(self.robot_id).await
    }

    pub async fn subscribe_states(
        &self,
        rate_hz: u16,
    ) -> Result<mpsc::Receiver<RobotState>, ClientError> {
        self.client.subscribe_state(self.robot_id, rate_hz).await
    }
}
