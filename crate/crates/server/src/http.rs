//! JSON over HTTP, mirroring the framed protocol's operations.

use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use skillstack_core::control::SubmitError;
use skillstack_core::kinematics::Wrench;
use skillstack_core::safety::SafetyTable;
use skillstack_core::skill::{SensorUpdate, SkillSpec};

use crate::config::ClockMode;
use crate::robot::{OpError, RobotRuntime};
use crate::Robots;

/// Longest a status request may wait for a terminal phase.
const MAX_WAIT_S: f64 = 120.0;

#[derive(Clone)]
struct AppState {
    robots: Arc<Robots>,
    clock: ClockMode,
}

pub(crate) fn router(robots: Arc<Robots>, clock: ClockMode) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/robots", get(list_robots))
        .route("/robots/{id}/state", get(robot_state))
        .route("/robots/{id}/skills", post(submit_skill))
        .route("/robots/{id}/skills/{skill_id}", get(skill_status))
        .route("/robots/{id}/preempt", post(preempt))
        .route("/robots/{id}/sensor", post(sensor))
        .route("/robots/{id}/wrench", post(wrench))
        .route("/robots/{id}/safety", put(safety))
        .with_state(AppState { robots, clock })
}

struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    violations: Vec<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            violations: Vec::new(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code, "message": self.message });
        if !self.violations.is_empty() {
            body["violations"] = json!(self.violations);
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<OpError> for ApiError {
    fn from(e: OpError) -> Self {
        match e {
            OpError::Invalid(m) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "INVALID", m),
            OpError::MailboxFull => ApiError::new(
                StatusCode::SERVICE_UNAVAILABLE,
                "MAILBOX_FULL",
                "mailbox full",
            ),
            OpError::Stopped => ApiError::new(
                StatusCode::SERVICE_UNAVAILABLE,
                "STOPPED",
                "server shutting down",
            ),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn robot(st: &AppState, id: u16) -> ApiResult<Arc<RobotRuntime>> {
    st.robots.get(id).cloned().ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "UNKNOWN_ROBOT",
            format!("no robot with id {id}"),
        )
    })
}

async fn health(State(st): State<AppState>) -> Json<serde_json::Value> {
    let ids: Vec<u16> = st.robots.iter().map(|r| r.id()).collect();
    Json(json!({ "status": "ok", "clock": st.clock.as_str(), "robots": ids }))
}

#[derive(Serialize)]
struct RobotSummary {
    id: u16,
    tick: u64,
    active_skill_id: Option<u32>,
    in_flight: u32,
    sensor_drops: u64,
    missed_deadlines: u64,
}

async fn list_robots(State(st): State<AppState>) -> Json<Vec<RobotSummary>> {
    Json(
        st.robots
            .iter()
            .map(|r| {
                let s = r.state();
                RobotSummary {
                    id: r.id(),
                    tick: s.tick,
                    active_skill_id: s.active_skill_id,
                    in_flight: r.in_flight(),
                    sensor_drops: r.sensor_drops(),
                    missed_deadlines: r.missed_deadlines(),
                }
            })
            .collect(),
    )
}

async fn robot_state(State(st): State<AppState>, Path(id): Path<u16>) -> ApiResult<Response> {
    Ok(Json(robot(&st, id)?.state()).into_response())
}

async fn submit_skill(
    State(st): State<AppState>,
    Path(id): Path<u16>,
    Json(spec): Json<SkillSpec>,
) -> ApiResult<Response> {
    let r = robot(&st, id)?;
    match r.submit(spec, None) {
        Ok(skill_id) => {
            Ok((StatusCode::CREATED, Json(json!({ "skill_id": skill_id }))).into_response())
        }
        Err(SubmitError::Busy) => Err(ApiError::new(
            StatusCode::CONFLICT,
            "BUSY",
            SubmitError::Busy.to_string(),
        )),
        Err(SubmitError::Invalid(v)) => Err(ApiError {
            violations: v.iter().map(ToString::to_string).collect(),
            ..ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "INVALID", "invalid skill")
        }),
        Err(SubmitError::MailboxFull) => Err(OpError::MailboxFull.into()),
    }
}

#[derive(Deserialize)]
struct WaitQuery {
    /// Seconds to wait for a terminal phase.
    wait: Option<f64>,
}

async fn skill_status(
    State(st): State<AppState>,
    Path((id, skill_id)): Path<(u16, u32)>,
    Query(q): Query<WaitQuery>,
) -> ApiResult<Response> {
    let r = robot(&st, id)?;
    let wait = q
        .wait
        .filter(|w| w.is_finite() && *w > 0.0)
        .map(|w| w.min(MAX_WAIT_S));
    let status = match wait {
        Some(w) => r.wait_status(skill_id, Duration::from_secs_f64(w)).await,
        None => r.status(skill_id),
    };
    match status {
        Some(s) => Ok(Json(s).into_response()),
        None => Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "UNKNOWN_SKILL",
            format!("no status for skill {skill_id}"),
        )),
    }
}

#[derive(Deserialize, Default)]
struct PreemptBody {
    skill_id: Option<u32>,
}

async fn preempt(
    State(st): State<AppState>,
    Path(id): Path<u16>,
    body: Option<Json<PreemptBody>>,
) -> ApiResult<StatusCode> {
    let body = body.map(|Json(b)| b).unwrap_or_default();
    robot(&st, id)?.preempt(body.skill_id)?;
    Ok(StatusCode::ACCEPTED)
}

async fn sensor(
    State(st): State<AppState>,
    Path(id): Path<u16>,
    Json(u): Json<SensorUpdate>,
) -> ApiResult<StatusCode> {
    robot(&st, id)?.sensor(u)?;
    Ok(StatusCode::ACCEPTED)
}

#[derive(Deserialize)]
struct WrenchBody {
    wrench: [f64; 6],
    duration: f64,
}

async fn wrench(
    State(st): State<AppState>,
    Path(id): Path<u16>,
    Json(b): Json<WrenchBody>,
) -> ApiResult<Response> {
    let ticks = robot(&st, id)?.inject_wrench(Wrench::from_array(b.wrench), b.duration)?;
    Ok(Json(json!({ "ticks": ticks })).into_response())
}

async fn safety(
    State(st): State<AppState>,
    Path(id): Path<u16>,
    Json(t): Json<SafetyTable>,
) -> ApiResult<StatusCode> {
    let r = robot(&st, id)?;
    let cfg = t
        .into_config()
        .map_err(|e| OpError::Invalid(e.to_string()))?;
    r.reconfigure_safety(cfg)?;
    Ok(StatusCode::NO_CONTENT)
}
