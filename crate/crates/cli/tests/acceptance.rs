//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any hard criterion fails. A name filter may be passed as the
//! first free argument, as with the default test harness.

#[path = "../../core/tests/support/messages.rs"]
#[allow(dead_code)]
mod messages;

use std::net::SocketAddr;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::Vector3;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use sha2::{Digest, Sha256};
use skillstack_client::Client;
use skillstack_core::control::log::{parse_csv_row, read_log, LogFile};
use skillstack_core::control::{
    Command as LoopCommand, ControlLoop, LoopOptions, SkillStatus, StatusPhase,
};
use skillstack_core::kinematics::{
    forward_kinematics, jacobian, pose_error, ArmModel, Jacobian, JointVector, Vector6, Wrench,
};
use skillstack_core::protocol::state::state_body;
use skillstack_core::protocol::{
    decode_frame, decode_skill_spec, encode_skill_spec, FrameError, Message,
};
use skillstack_core::safety::{boxes_intersect, penetration_depth, Aabb, SafetyConfig};
use skillstack_core::sim::{
    CommandInterface, CommandTarget, ControlMode, InternalController, JointGains, RobotCommand,
    RobotState, SimConfig, SimRobot, DT,
};
use skillstack_core::skill::controllers::{cartesian_impedance, force_to_torque};
use skillstack_core::skill::dmp::rollout;
use skillstack_core::skill::presets::{self, SkillDefaults};
use skillstack_core::skill::termination::VELOCITY_GATE;
use skillstack_core::skill::{
    control_mode_for, dmp_fit, minjerk_scalar, traj_minjerk_joint, DmpParams, FeedbackSpec,
    JointDmpSpec, SkillSpec, SkillType, TermSpec, TerminationCause, TrajGenSpec,
};
use skillstack_server::{log_file_name, ClockMode, RobotConfig, Server, ServerConfig};

const BIN: &str = env!("CARGO_BIN_EXE_skillstack");

enum Verdict {
    Pass(String),
    Fail(String),
    /// Failure of a criterion that depends on the host's scheduler.
    SoftFail(String),
}

type Check = fn() -> Verdict;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

/// Collects failed sub-checks so one line can report all of them.
#[derive(Default)]
struct Findings {
    failed: Vec<String>,
    notes: Vec<String>,
}

impl Findings {
    fn expect(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failed.push(what.into());
        }
    }

    fn note(&mut self, what: impl Into<String>) {
        self.notes.push(what.into());
    }

    fn verdict(self) -> Verdict {
        if self.failed.is_empty() {
            Verdict::Pass(self.notes.join("; "))
        } else {
            Verdict::Fail(self.failed.join("; "))
        }
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 11] = [
        ("loop_1khz", loop_1khz),
        ("controller_switching", controller_switching),
        ("logging_1khz", logging_1khz),
        ("minjerk", minjerk),
        ("dmp", dmp),
        ("impedance", impedance),
        ("terminators", terminators),
        ("safety", safety),
        ("protocol", protocol),
        ("determinism", determinism),
        ("multi_robot", multi_robot),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    panic::set_hook(Box::new(|_| {}));
    let mut hard_failures = 0;
    for (name, f) in criteria {
        if filter.as_deref().is_some_and(|p| !name.contains(p)) {
            continue;
        }
        let start = Instant::now();
        let verdict = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Verdict::Fail(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Verdict::Pass(d) => println!("PASS {name} ({secs:.1} s) {d}"),
            Verdict::Fail(d) => {
                hard_failures += 1;
                println!("FAIL {name} ({secs:.1} s) {d}");
            }
            Verdict::SoftFail(d) => println!("FAIL {name} (soft, {secs:.1} s) {d}"),
        }
    }
    let _ = panic::take_hook();
    if hard_failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn panda() -> Arc<ArmModel> {
    Arc::new(ArmModel::panda())
}

fn new_loop() -> ControlLoop {
    let m = panda();
    let opts = LoopOptions::for_model(&m);
    ControlLoop::new(m, opts).unwrap()
}

fn defaults() -> SkillDefaults {
    SkillDefaults::for_model(&ArmModel::panda())
}

fn terminal(events: &[SkillStatus], id: u32) -> Option<&SkillStatus> {
    events
        .iter()
        .find(|e| e.skill_id == id && e.phase.is_terminal())
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .unwrap()
}

// 1 kHz loop

fn loop_1khz() -> Verdict {
    let out = Command::new(BIN)
        .args(["bench", "loop", "--duration", "10"])
        .env_remove(skillstack_server::CONFIG_ENV)
        .output()
        .unwrap();
    if !out.status.success() {
        return Verdict::Fail(format!("bench exited {:?}", out.status.code()));
    }
    let text = String::from_utf8_lossy(&out.stdout);
    let Some(line) = text.lines().find(|l| l.starts_with("BENCH ")) else {
        return Verdict::Fail("no BENCH line".into());
    };
    let field = |k: &str| -> f64 {
        line.split_whitespace()
            .find_map(|f| f.strip_prefix(&format!("{k}=")))
            .and_then(|v| v.parse().ok())
            .unwrap_or(f64::NAN)
    };
    let (mean, p99, missed, ticks) = (
        field("mean_us"),
        field("p99_us"),
        field("missed"),
        field("ticks"),
    );
    let missed_frac = missed / ticks;
    let ok =
        (mean - 1000.0).abs() <= 50.0 && p99 < 2000.0 && missed_frac < 0.01 && ticks == 10_000.0;
    let detail = format!(
        "mean {mean:.1} us (1000 +/- 50), p99 {p99:.1} us (< 2000), missed {:.3}% (< 1%), ticks {ticks}",
        missed_frac * 100.0
    );
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::SoftFail(detail)
    }
}

// Controller switching

const A_CAP: f64 = 3.0;

/// Ends a skill once it has arrived at its goal and stopped.
fn arrival(mode: ControlMode) -> TermSpec {
    let joint_space = matches!(
        mode.interface(),
        CommandInterface::JointPosition | CommandInterface::JointVelocity
    ) && mode.internal() == InternalController::JointImpedance;
    let goal = if joint_space {
        TermSpec::JointGoal { tolerance: 2e-4 }
    } else {
        TermSpec::PoseGoal {
            pos_tol: 1e-4,
            ori_tol: 5e-4,
        }
    };
    TermSpec::AnyOf(vec![goal, TermSpec::Time { duration: A_CAP }])
}

/// A skill that runs in `mode` and moves a little before holding.
fn skill_in_mode(
    mode: ControlMode,
    state: &RobotState,
    d: &SkillDefaults,
    sign: f64,
    termination: TermSpec,
) -> SkillSpec {
    let q_goal = state.q + JointVector::repeat(0.01 * sign);
    let pose_goal = state.ee_pose.perturbed(
        Vector3::new(0.005 * sign, -0.004 * sign, 0.003 * sign),
        Vector3::zeros(),
    );
    let joint_pd = FeedbackSpec::InternalJointPd {
        kp: d.joint_gains.kp,
        kd: d.joint_gains.kd,
    };
    let cart = FeedbackSpec::CartesianImpedance {
        stiffness: d.stiffness,
        damping: d.damping,
    };
    let minjerk_joint = TrajGenSpec::MinJerkJoint {
        goal: q_goal,
        duration: 0.05,
    };
    let stream_joint = TrajGenSpec::StreamedJointSetpoint { initial: q_goal };
    let minjerk_pose = TrajGenSpec::MinJerkPose {
        goal: pose_goal,
        duration: 0.05,
    };
    let stream_pose = TrajGenSpec::StreamedPoseSetpoint { initial: pose_goal };
    use ControlMode as M;
    use SkillType as S;
    let (skill_type, traj_gen, feedback) = match mode {
        M::JointPositionJointImpedance => (S::JointPositionSkill, minjerk_joint, joint_pd),
        M::JointPositionCartesianImpedance => (S::JointPositionSkill, minjerk_joint, cart),
        M::JointVelocityJointImpedance => (S::JointPositionSkill, stream_joint, joint_pd),
        M::JointVelocityCartesianImpedance => (S::JointPositionSkill, stream_joint, cart),
        M::CartesianPoseJointImpedance => (S::CartesianPoseSkill, minjerk_pose, joint_pd),
        M::CartesianPoseCartesianImpedance => (
            S::CartesianPoseSkill,
            minjerk_pose,
            FeedbackSpec::Passthrough,
        ),
        M::CartesianVelocityJointImpedance => (S::CartesianPoseSkill, stream_pose, joint_pd),
        M::CartesianVelocityCartesianImpedance => (
            S::CartesianPoseSkill,
            stream_pose,
            FeedbackSpec::Passthrough,
        ),
        M::ExternalTorque => (S::ImpedancePoseSkill, minjerk_pose, cart),
    };
    let sensor_topics = if traj_gen.is_streamed() {
        vec!["sweep".to_string()]
    } else {
        vec![]
    };
    SkillSpec {
        skill_type,
        traj_gen,
        feedback,
        termination,
        sensor_topics,
    }
}

fn controller_switching() -> Verdict {
    let start = Instant::now();
    let d = defaults();
    let model = ArmModel::panda();
    let bound = model.dq_max * DT;
    let mut f = Findings::default();
    let mut pairs = 0;
    let mut gaps = 0usize;
    let mut worst_ratio: f64 = 0.0;
    let mut longest_a = 0;
    for &a in &ControlMode::ALL {
        for &b in &ControlMode::ALL {
            if a == b {
                continue;
            }
            pairs += 1;
            let mut lp = new_loop();
            let s0 = *lp.state();
            let spec_a = skill_in_mode(a, &s0, &d, 1.0, arrival(a));
            let spec_b = skill_in_mode(b, &s0, &d, -1.0, TermSpec::Time { duration: 0.1 });
            f.expect(
                control_mode_for(&spec_a) == a,
                format!("{a:?} spec maps to {:?}", control_mode_for(&spec_a)),
            );
            let id_a = lp.mailbox().submit_skill(spec_a).unwrap();
            let id_b = lp.mailbox().submit_skill(spec_b).unwrap();
            let mut reports = Vec::new();
            let cap = (A_CAP * 1000.0) as usize + 200;
            while reports.len() < cap {
                let r = lp.tick();
                let b_done = r
                    .events
                    .iter()
                    .any(|e| e.skill_id == id_b && e.phase.is_terminal());
                reports.push(r);
                if b_done {
                    break;
                }
            }
            let owners: Vec<Option<u32>> = reports.iter().map(|r| r.skill_id).collect();
            gaps += owners.iter().filter(|o| o.is_none()).count();
            let Some(k) = owners.iter().position(|o| *o == Some(id_b)) else {
                f.expect(false, format!("{a:?}->{b:?}: B never ran"));
                continue;
            };
            f.expect(
                k > 0 && owners[k - 1] == Some(id_a),
                format!("{a:?}->{b:?}: switch at tick {k}"),
            );
            let cause_a = reports[k - 1]
                .events
                .iter()
                .find(|e| e.skill_id == id_a)
                .and_then(|e| e.cause);
            f.expect(
                matches!(
                    cause_a,
                    Some(TerminationCause::JointGoal | TerminationCause::PoseGoal)
                ),
                format!("{a:?}->{b:?}: first skill ended with {cause_a:?} after {k} ticks"),
            );
            longest_a = longest_a.max(k);
            f.expect(
                reports[..k].iter().all(|r| r.command.mode == a)
                    && reports[k..].iter().all(|r| r.command.mode == b),
                format!("{a:?}->{b:?}: wrong command mode"),
            );
            f.expect(
                reports.iter().all(|r| !r.braked),
                format!("{a:?}->{b:?}: braked"),
            );
            let jump = reports[k].joint_reference - reports[k - 1].joint_reference;
            for i in 0..7 {
                let ratio = jump[i].abs() / bound[i];
                worst_ratio = worst_ratio.max(ratio);
                f.expect(
                    ratio <= 1.0,
                    format!("{a:?}->{b:?}: joint {i} jumps {:.3e} rad", jump[i].abs()),
                );
            }
            let done = reports
                .iter()
                .flat_map(|r| &r.events)
                .filter(|e| e.phase.is_terminal())
                .count();
            f.expect(done == 2, format!("{a:?}->{b:?}: {done} terminal statuses"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    f.expect(pairs == 72, format!("{pairs} pairs"));
    f.expect(gaps == 0, format!("{gaps} command-less ticks"));
    f.expect(secs < 60.0, format!("runtime {secs:.1} s"));
    f.note(format!(
        "{pairs} ordered pairs, {gaps} command-less ticks, worst switch jump {:.3} of dq_max*dt, longest first skill {longest_a} ticks, {secs:.1} s",
        worst_ratio
    ));
    f.verdict()
}

// Logging

async fn sim_server(robots: &[u16], log_dir: &Path) -> Server {
    let mut cfg = ServerConfig::local(robots.iter().map(|&id| RobotConfig::panda(id)).collect());
    cfg.clock = ClockMode::Sim;
    cfg.http_port = None;
    cfg.log_dir = Some(log_dir.to_path_buf());
    Server::start(cfg).await.unwrap()
}

fn logging_1khz() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let rt = runtime();
    rt.block_on(async {
        let server = sim_server(&[0], dir.path()).await;
        let client = Client::connect(server.tcp_addr()).await.unwrap();
        let st = client
            .execute(0, &presets::hold(5.0))
            .await
            .unwrap()
            .succeed()
            .await
            .unwrap();
        assert_eq!(st.cause, Some(TerminationCause::Time));
        client.close().await;
        server.shutdown().await;
    });
    let path = dir.path().join(log_file_name(0));
    let log = read_log(&path).unwrap();
    let mut f = Findings::default();
    f.expect(!log.is_truncated(), "truncated log");
    f.expect(
        log.records.len() == 5000,
        format!("{} records", log.records.len()),
    );
    let first = log.records.first().map_or(0, |r| r.tick);
    let consecutive = log
        .records
        .iter()
        .enumerate()
        .all(|(k, r)| r.tick == first + k as u64);
    f.expect(consecutive, "ticks not consecutive");

    let out = Command::new(BIN)
        .args(["logdump", "--csv"])
        .arg(&path)
        .output()
        .unwrap();
    f.expect(out.status.success(), "logdump failed");
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<RobotState> = text
        .lines()
        .skip(1)
        .map(|l| parse_csv_row(l).unwrap())
        .collect();
    f.expect(
        rows.len() == log.records.len(),
        format!("{} csv rows", rows.len()),
    );
    let exact = rows
        .iter()
        .zip(&log.records)
        .all(|(a, b)| state_body(a, false) == state_body(b, false));
    f.expect(exact, "csv round trip not bit-exact");
    f.note(format!(
        "5000 records, ticks {first}..{}, csv round trip bit-exact",
        first + 4999
    ));
    f.verdict()
}

// Min-jerk

fn minjerk() -> Verdict {
    let mut f = Findings::default();
    for t_total in [0.5, 1.0, 2.0, 3.7] {
        let (s0, ds0, dds0) = minjerk_scalar(0.0, t_total).unwrap();
        let (s1, ds1, dds1) = minjerk_scalar(t_total, t_total).unwrap();
        let worst = [
            s0.abs(),
            ds0.abs(),
            dds0.abs(),
            (s1 - 1.0).abs(),
            ds1.abs(),
            dds1.abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        f.expect(
            worst <= 1e-9,
            format!("T={t_total}: endpoint error {worst:e}"),
        );
        let (mid, _, _) = minjerk_scalar(t_total / 2.0, t_total).unwrap();
        f.expect(mid == 0.5, format!("T={t_total}: s(T/2) = {mid:?}"));
        let (q, _, _) = minjerk_scalar(t_total / 4.0, t_total).unwrap();
        f.expect(
            (q - 0.103515625).abs() <= 1e-12,
            format!("T={t_total}: s(T/4) = {q:?}"),
        );
    }
    let m = ArmModel::panda();
    let goal = m.q_home + JointVector::repeat(0.3);
    let (q, dq) = traj_minjerk_joint(&m.q_home, &goal, 2.0, 2.0).unwrap();
    f.expect(
        (q - goal).amax() <= 1e-9 && dq.amax() <= 1e-9,
        "joint profile endpoint",
    );
    f.note("endpoints within 1e-9, s(T/2) = 0.5 exactly, s(T/4) = 0.103515625 within 1e-12");
    f.verdict()
}

// DMP

fn dmp() -> Verdict {
    let m = ArmModel::panda();
    let start = m.q_home;
    let goal = start + JointVector::from([0.4, -0.3, 0.25, 0.5, -0.2, 0.35, 0.6]);
    let dt = 0.001;
    let n = 2000;
    let demo: Vec<JointVector> = (0..=n)
        .map(|k| {
            traj_minjerk_joint(&start, &goal, 2.0, k as f64 * dt)
                .unwrap()
                .0
        })
        .collect();
    let spec = dmp_fit(&demo, dt, &DmpParams::default(), 1e-9).unwrap();
    let out = rollout(&spec, start, dt, n);
    let sum: f64 = out
        .iter()
        .zip(&demo)
        .map(|(a, b)| (a - b).norm_squared())
        .sum();
    let rmse = (sum / (demo.len() * 7) as f64).sqrt();

    let tau = 1.0;
    let zgoal = start + JointVector::from([0.5, -0.4, 0.3, 0.6, -0.5, 0.2, 0.8]);
    let zero = JointDmpSpec::zero_weights(zgoal, tau, DmpParams::default());
    let traj = rollout(&zero, start, dt, (3.0 * tau / dt).round() as usize);
    let last = traj.last().unwrap();
    let rel = (0..7)
        .map(|j| (last[j] - zgoal[j]).abs() / (zgoal[j] - start[j]).abs())
        .fold(0.0, f64::max);
    check(
        rmse < 0.01 && rel < 1e-3,
        format!(
            "fit RMSE {rmse:.2e} rad (< 0.01), zero-weight error at 3 tau {:.4}% (< 0.1%)",
            rel * 100.0
        ),
    )
}

// Impedance

fn fd_jacobian(m: &ArmModel, q: &JointVector) -> Jacobian {
    let h = 1e-6;
    let mut j = Jacobian::zeros();
    for i in 0..7 {
        let mut qp = *q;
        let mut qm = *q;
        qp[i] += h;
        qm[i] -= h;
        let e = pose_error(&forward_kinematics(m, &qm), &forward_kinematics(m, &qp));
        j.set_column(i, &(e / (2.0 * h)));
    }
    j
}

fn random_q(m: &ArmModel, rng: &mut StdRng) -> JointVector {
    JointVector::from_fn(|i, _| rng.random_range(m.q_min[i]..m.q_max[i]))
}

fn impedance() -> Verdict {
    let m = ArmModel::panda();
    let mut rng = StdRng::seed_from_u64(11);
    let mut f = Findings::default();

    let mut zero_worst: f64 = 0.0;
    let mut lin_worst: f64 = 0.0;
    let mut jt_worst: f64 = 0.0;
    for _ in 0..200 {
        let q = random_q(&m, &mut rng);
        let s = RobotState::at_rest(&m, q, 0.08);
        let j = jacobian(&m, &q);
        let k = Vector6::from_fn(|i, _| {
            if i < 3 {
                rng.random_range(100.0..2000.0)
            } else {
                rng.random_range(10.0..200.0)
            }
        });
        let d = k.map(|v| 2.0 * v.sqrt());
        zero_worst = zero_worst.max(cartesian_impedance(&s, &s.ee_pose, &k, &d, &j).amax());

        let goal = s.ee_pose.perturbed(
            Vector3::from_fn(|_, _| rng.random_range(-0.1..0.1)),
            Vector3::from_fn(|_, _| rng.random_range(-0.3..0.3)),
        );
        let scale = rng.random_range(0.1..10.0);
        let t1 = cartesian_impedance(&s, &goal, &k, &Vector6::zeros(), &j);
        let t2 = cartesian_impedance(&s, &goal, &(k * scale), &Vector6::zeros(), &j);
        lin_worst = lin_worst.max((t2 - t1 * scale).amax() / (1.0 + t2.amax()));

        let w = Wrench::from_array(std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
        let tau = force_to_torque(&w, &j);
        jt_worst = jt_worst.max((tau - fd_jacobian(&m, &q).transpose() * w.to_vector()).amax());
    }
    f.expect(
        zero_worst <= 1e-12,
        format!("zero-error torque {zero_worst:e}"),
    );
    f.expect(
        lin_worst <= 1e-9,
        format!("stiffness scaling error {lin_worst:e}"),
    );
    f.expect(
        jt_worst <= 1e-6,
        format!("J^T vs finite differences {jt_worst:e}"),
    );

    let model = panda();
    let mut sim = SimRobot::new(model.clone(), SimConfig::for_model(&model)).unwrap();
    let step = JointVector::from([0.1, -0.1, 0.1, 0.1, -0.1, 0.1, 0.1]);
    let goal = model.q_home + step;
    let mut cmd = RobotCommand::new(
        ControlMode::JointPositionJointImpedance,
        CommandTarget::JointPosition {
            q: goal,
            dq: JointVector::zeros(),
        },
    );
    cmd.joint_gains = Some(JointGains::critically_damped(600.0, &model));
    let mut peak = JointVector::repeat(f64::NEG_INFINITY);
    for _ in 0..3000 {
        sim.step(&cmd, DT).unwrap();
        peak = peak.sup(&(sim.state().q - model.q_home).component_div(&step));
    }
    let overshoot = peak.max() - 1.0;
    f.expect(
        overshoot < 0.01,
        format!("overshoot {:.3}%", overshoot * 100.0),
    );
    f.note(format!(
        "zero-error torque {zero_worst:.1e}, scaling error {lin_worst:.1e}, overshoot {:.3}% (< 1%), J^T error {jt_worst:.1e} (< 1e-6)",
        overshoot.max(0.0) * 100.0
    ));
    f.verdict()
}

// Terminators

fn terminators() -> Verdict {
    let mut f = Findings::default();
    for (dur, want) in [(0.001, 1u64), (0.25, 250), (1.0, 1000), (2.5, 2500)] {
        let mut lp = new_loop();
        let id = lp.mailbox().submit_skill(presets::hold(dur)).unwrap();
        let mut commanded = 0;
        let mut fired = None;
        for _ in 0..want + 20 {
            let r = lp.tick();
            commanded += u64::from(r.skill_id == Some(id));
            if let Some(st) = terminal(&r.events, id) {
                fired = Some((st.cause, st.state.tick));
            }
        }
        f.expect(
            commanded == want && fired == Some((Some(TerminationCause::Time), want)),
            format!("Time {dur}: {commanded} ticks, {fired:?}"),
        );
    }

    let contact = |threshold: f64| SkillSpec {
        termination: TermSpec::AnyOf(vec![
            TermSpec::Contact {
                force_threshold: [threshold; 6],
            },
            TermSpec::Time { duration: 5.0 },
        ]),
        ..presets::hold(5.0)
    };
    let mut lp = new_loop();
    let id = lp.mailbox().submit_skill(contact(5.0)).unwrap();
    let quiet = lp.run_ticks(100);
    f.expect(
        terminal(&quiet, id).is_none(),
        "contact fired without force",
    );
    let wrench = Wrench::from_array([0.0, 0.0, 6.0, 0.0, 0.0, 0.0]);
    lp.mailbox()
        .post(LoopCommand::InjectWrench { wrench, ticks: 20 })
        .unwrap();
    let r = lp.tick();
    let hit = terminal(&r.events, id);
    f.expect(
        hit.is_some_and(|s| {
            s.cause == Some(TerminationCause::Contact) && s.state.ee_wrench_external.force.z == 6.0
        }),
        "contact did not fire on the first 6 N tick",
    );

    // Passing through the goal band at speed must not fire.
    let mut lp = new_loop();
    let d = SkillDefaults {
        joint_tolerance: 0.05,
        ..defaults()
    };
    let goal = lp.state().q + JointVector::from([0.6, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let id = lp
        .mailbox()
        .submit_skill(presets::go_to_joints(&d, goal, 0.8))
        .unwrap();
    let mut entered_fast = false;
    let mut joint_ok = false;
    for _ in 0..10_000 {
        let r = lp.tick();
        let s = *lp.state();
        if !entered_fast && (s.q - goal).amax() < 0.05 {
            entered_fast = s.dq.amax() >= VELOCITY_GATE && terminal(&r.events, id).is_none();
            f.expect(
                entered_fast,
                "joint goal band entered at rest or fired while moving",
            );
        }
        if let Some(st) = terminal(&r.events, id) {
            joint_ok =
                st.cause == Some(TerminationCause::JointGoal) && st.state.dq.amax() < VELOCITY_GATE;
            break;
        }
    }
    f.expect(joint_ok, "JointGoal did not fire with the gate satisfied");

    let mut lp = new_loop();
    let d = SkillDefaults {
        position_tolerance: 0.02,
        orientation_tolerance: 0.2,
        ..defaults()
    };
    let goal = lp
        .state()
        .ee_pose
        .perturbed(Vector3::new(0.0, 0.15, -0.05), Vector3::zeros());
    let id = lp
        .mailbox()
        .submit_skill(presets::go_to_pose(&d, goal, 0.6, false))
        .unwrap();
    let mut entered_fast = false;
    let mut pose_ok = false;
    for _ in 0..10_000 {
        let r = lp.tick();
        let s = *lp.state();
        if !entered_fast && (s.ee_pose.position - goal.position).norm() < 0.02 {
            entered_fast = s.dq.amax() >= VELOCITY_GATE && terminal(&r.events, id).is_none();
            f.expect(
                entered_fast,
                "pose goal band entered at rest or fired while moving",
            );
        }
        if let Some(st) = terminal(&r.events, id) {
            pose_ok =
                st.cause == Some(TerminationCause::PoseGoal) && st.state.dq.amax() < VELOCITY_GATE;
            break;
        }
    }
    f.expect(pose_ok, "PoseGoal did not fire with the gate satisfied");
    f.note("Time exact at 1/250/1000/2500 ticks, Contact on first 6 N tick, goal gates hold on pass-through");
    f.verdict()
}

// Safety

fn brute_force(a: &Aabb, b: &Aabb) -> bool {
    (0..3).all(|i| {
        let (alo, ahi) = (
            a.center[i] - a.half_extents[i],
            a.center[i] + a.half_extents[i],
        );
        let (blo, bhi) = (
            b.center[i] - b.half_extents[i],
            b.center[i] + b.half_extents[i],
        );
        alo <= bhi && blo <= ahi
    })
}

fn safety() -> Verdict {
    let mut f = Findings::default();
    let d = defaults();
    let mut worst_ratio: f64 = 0.0;
    for impedance in [false, true] {
        let mut lp = new_loop();
        let home = lp.state().ee_pose;
        let wall = Aabb::new([home.position.x + 0.22, 0.0, 0.5], [0.1, 1.0, 1.0]);
        let cfg = SafetyConfig {
            walls: vec![wall],
            ..SafetyConfig::default()
        };
        lp.mailbox().post(LoopCommand::SafetyReconfig(cfg)).unwrap();
        lp.tick();
        let goal = home.perturbed(Vector3::new(0.3, 0.0, 0.0), Vector3::zeros());
        let id = lp
            .mailbox()
            .submit_skill(presets::go_to_pose(&d, goal, 1.0, impedance))
            .unwrap();
        let mut worst: f64 = 0.0;
        let mut max_step: f64 = 0.0;
        let mut prev = lp.state().ee_pose.position;
        let mut status = None;
        for _ in 0..3000 {
            let r = lp.tick();
            let p = lp.state().ee_pose.position;
            max_step = max_step.max((p - prev).amax());
            prev = p;
            worst = worst.max(penetration_depth(
                &lp.safety().ee_box(&lp.state().ee_pose),
                &wall,
            ));
            if let Some(st) = terminal(&r.events, id) {
                status = Some(st.clone());
            }
        }
        let ok = status.as_ref().is_some_and(|s| {
            s.phase == StatusPhase::Aborted && s.cause == Some(TerminationCause::WallViolation)
        });
        f.expect(
            ok,
            format!("impedance={impedance}: {:?}", status.map(|s| s.cause)),
        );
        f.expect(
            worst <= max_step,
            format!("impedance={impedance}: penetrated {worst:e} m"),
        );
        if max_step > 0.0 {
            worst_ratio = worst_ratio.max(worst / max_step);
        }
    }

    let mut rng = StdRng::seed_from_u64(4096);
    let mut mismatches = 0;
    let mut hits = 0;
    for k in 0..10_000 {
        let mut v = |grid: bool| {
            if grid {
                f64::from(rng.random_range(-8i32..=8)) * 0.25
            } else {
                rng.random_range(-2.0..2.0)
            }
        };
        let grid = k % 2 == 0;
        let mut bx = || {
            Aabb::new(
                [v(grid), v(grid), v(grid)],
                [
                    v(grid).abs() + 0.25,
                    v(grid).abs() + 0.25,
                    v(grid).abs() + 0.25,
                ],
            )
        };
        let a = bx();
        let b = bx();
        let want = brute_force(&a, &b);
        hits += usize::from(want);
        mismatches += usize::from(boxes_intersect(&a, &b) != want);
    }
    f.expect(mismatches == 0, format!("{mismatches} box mismatches"));
    f.note(format!(
        "wall abort with penetration {:.2} of the one-tick bound, 10^4 box pairs agree ({hits} overlapping)",
        worst_ratio
    ));
    f.verdict()
}

// Protocol

fn protocol() -> Verdict {
    let mut f = Findings::default();
    let mut rng = StdRng::seed_from_u64(0xacce);
    let mut failures = 0;
    let mut panics = 0;
    for _ in 0..100_000 {
        let msg = messages::message(&mut rng);
        let robot: u16 = rng.random();
        let bytes = msg.to_frame(robot).unwrap();
        match decode_frame(&bytes).map(|(fr, used)| (Message::from_frame(&fr), used, fr.robot_id)) {
            Ok((Ok(back), used, id)) if back == msg && used == bytes.len() && id == robot => {}
            _ => failures += 1,
        }
        let cut = rng.random_range(0..bytes.len());
        let trunc = panic::catch_unwind(|| decode_frame(&bytes[..cut]).map(|_| ()));
        match trunc {
            Ok(Err(FrameError::Truncated(_))) => {}
            Ok(_) => failures += 1,
            Err(_) => panics += 1,
        }
        let payload = msg.encode_payload().unwrap();
        let t = msg.msg_type() as u8;
        let pcut = rng.random_range(0..=payload.len());
        if panic::catch_unwind(|| {
            let _ = Message::decode(t, &payload[..pcut]);
            let _ = decode_skill_spec(&payload[..pcut]);
        })
        .is_err()
        {
            panics += 1;
        }
    }
    f.expect(failures == 0, format!("{failures} round-trip failures"));
    f.expect(panics == 0, format!("{panics} decoder panics"));

    let preempt = Message::PreemptSkill {
        skill_id: None,
        correlation: None,
    }
    .to_frame(0)
    .unwrap();
    let golden = [
        0x46, 0x49, 0x46, 0x50, 0x01, 0x02, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0xde, 0xce, 0x17,
        0x3e,
    ];
    f.expect(preempt == golden, format!("preempt frame {preempt:02x?}"));

    let mut hold = Vec::new();
    hold.extend_from_slice(&[0x01, 0x00]);
    hold.extend_from_slice(&[0x06, 0x00, 0, 0, 0, 0]);
    hold.extend_from_slice(&[0x03, 0x00, 0, 0, 0, 0]);
    hold.extend_from_slice(&[0x01, 0x00, 8, 0, 0, 0]);
    hold.extend_from_slice(&1.0f64.to_le_bytes());
    hold.extend_from_slice(&[0x01, 0x00, 4, 0, 0, 0, 0, 0, 0, 0]);
    f.expect(
        encode_skill_spec(&presets::hold(1.0)) == hold,
        "hold spec bytes",
    );
    f.expect(
        decode_skill_spec(&hold).ok() == Some(presets::hold(1.0)),
        "hold spec decode",
    );
    f.note(format!(
        "10^5 round trips, {failures} failures, {panics} panics, golden frames match"
    ));
    f.verdict()
}

// End-to-end runs

/// A fixed client script. Every message goes out while the robot is idle,
/// so each lands on a known tick.
async fn script(client: &Client, robot: u16, variant: f64) {
    let arm = client.arm(robot);
    let q0 = arm.get_state().await.unwrap().q;
    let goal = q0 + JointVector::from([0.2, -0.1, 0.1, 0.2, 0.1, -0.2, 0.3]) * variant;
    arm.go_to_joints(goal, 0.8).await.unwrap();
    let pose = arm.get_state().await.unwrap().ee_pose.perturbed(
        Vector3::new(0.03, 0.02 * variant, -0.04),
        Vector3::new(0.0, 0.0, 0.2 * variant),
    );
    arm.run(&presets::go_to_pose(&arm.defaults, pose, 0.7, true))
        .await
        .unwrap();

    let t0 = arm.get_state().await.unwrap().tick;
    let ticks = client
        .inject_wrench(
            robot,
            Wrench::from_array([3.0 * variant, 0.0, -2.0, 0.0, 0.1, 0.0]),
            0.15,
        )
        .await
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(30);
    while arm.get_state().await.unwrap().tick < t0 + u64::from(ticks) {
        assert!(Instant::now() < deadline, "injection never finished");
        tokio::time::sleep(Duration::from_millis(5)).await;
    }

    arm.close_gripper().await.unwrap();
    let first = client.execute(robot, &presets::hold(0.2)).await.unwrap();
    let mut back = q0;
    back[6] += 0.05 * variant;
    let second = client
        .execute(robot, &presets::go_to_joints(&arm.defaults, back, 0.5))
        .await
        .unwrap();
    first.succeed().await.unwrap();
    second.succeed().await.unwrap();
}

fn hash_log(path: &Path) -> (String, LogFile) {
    let bytes = std::fs::read(path).unwrap();
    let digest = Sha256::digest(&bytes);
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    (hex, read_log(path).unwrap())
}

/// Runs `script` concurrently on each robot of a fresh sim-clock server and
/// returns the log paths.
fn e2e_run(robots: &[u16], dir: &Path) -> Vec<PathBuf> {
    let rt = runtime();
    rt.block_on(async {
        let server = sim_server(robots, dir).await;
        let addr: SocketAddr = server.tcp_addr();
        let client = Client::connect(addr).await.unwrap();
        let jobs: Vec<_> = robots
            .iter()
            .map(|&id| {
                let c = client.clone();
                tokio::spawn(async move { script(&c, id, 1.0 - 0.3 * f64::from(id % 4)).await })
            })
            .collect();
        for j in jobs {
            j.await.unwrap();
        }
        client.close().await;
        server.shutdown().await;
    });
    robots
        .iter()
        .map(|&id| dir.join(log_file_name(id)))
        .collect()
}

fn determinism() -> Verdict {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (ha, la) = hash_log(&e2e_run(&[0], a.path())[0]);
    let (hb, _) = hash_log(&e2e_run(&[0], b.path())[0]);
    check(
        ha == hb && !la.records.is_empty(),
        format!(
            "sha256 {}.. vs {}.. over {} records",
            &ha[..16],
            &hb[..16],
            la.records.len()
        ),
    )
}

fn multi_robot() -> Verdict {
    let ids = [1u16, 2, 3];
    let runs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    let concurrent: Vec<Vec<(String, LogFile)>> = runs
        .iter()
        .map(|d| {
            e2e_run(&ids, d.path())
                .iter()
                .map(|p| hash_log(p))
                .collect()
        })
        .collect();
    let mut f = Findings::default();
    for (k, &id) in ids.iter().enumerate() {
        let (h1, l1) = &concurrent[0][k];
        let (h2, _) = &concurrent[1][k];
        f.expect(h1 == h2, format!("robot {id}: runs differ"));
        f.expect(
            l1.header.robot_id == id,
            format!("robot {id}: header id {}", l1.header.robot_id),
        );
        let solo_dir = tempfile::tempdir().unwrap();
        let (hs, _) = hash_log(&e2e_run(&[id], solo_dir.path())[0]);
        f.expect(
            *h1 == hs,
            format!("robot {id}: log differs from a solo run"),
        );
    }
    let distinct =
        concurrent[0][0].0 != concurrent[0][1].0 && concurrent[0][1].0 != concurrent[0][2].0;
    f.expect(distinct, "robots produced identical logs");
    let counts: Vec<usize> = concurrent[0].iter().map(|(_, l)| l.records.len()).collect();
    f.note(format!(
        "3 robots, records {counts:?}, each bit-identical across runs and to its solo run"
    ));
    f.verdict()
}
