use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use skillstack_core::control::pacing::bench_loop_with;
use skillstack_core::control::{ControlLoop, LoopOptions};
use skillstack_core::kinematics::forward_kinematics;
use skillstack_core::sim::SimConfig;
use skillstack_core::skill::presets::{self, SkillDefaults};
use skillstack_core::skill::TermSpec;
use skillstack_server::{ClockMode, RobotConfig};

use crate::{config_path, load_config, BenchArgs, BenchLoad, EXIT_FAILURE, EXIT_OK};

pub(crate) fn run(a: BenchArgs) -> ExitCode {
    let (robot, clock) = match config_path(a.config) {
        Some(path) => match load_config(&path) {
            Ok(cfg) => (cfg.robots[0].clone(), cfg.clock),
            Err(code) => return code,
        },
        None => (RobotConfig::panda(0), ClockMode::Real),
    };
    let clock = a.clock.unwrap_or(clock);
    if clock != ClockMode::Real {
        eprintln!("error: bench requires real clock");
        return ExitCode::from(EXIT_FAILURE);
    }
    let model = robot.model.clone();
    let opts = LoopOptions {
        robot_id: robot.id,
        sim: SimConfig::for_model(&model),
        safety: robot.safety.clone(),
    };
    let mut lp = match ControlLoop::new(Arc::clone(&model), opts) {
        Ok(lp) => lp,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    };
    let hold_for = a.duration + 1.0;
    let load = match a.skill {
        BenchLoad::Hold => presets::hold(hold_for),
        BenchLoad::Impedance => {
            let pose = forward_kinematics(&model, &lp.state().q);
            let mut spec = presets::go_to_pose(&SkillDefaults::for_model(&model), pose, 1.0, true);
            spec.termination = TermSpec::Time { duration: hold_for };
            spec
        }
    };
    let report = bench_loop_with(&mut lp, Duration::from_secs_f64(a.duration), load);
    println!("ticks      {}", report.ticks);
    println!(
        "period     mean {:.2} us, median {:.2} us",
        report.mean_us, report.median_us
    );
    println!(
        "           p99 {:.2} us, max {:.2} us",
        report.p99_us, report.max_us
    );
    println!(
        "missed     {} ({:.4}%)",
        report.missed,
        report.missed_fraction() * 100.0
    );
    println!("{}", report.line());
    ExitCode::from(EXIT_OK)
}
