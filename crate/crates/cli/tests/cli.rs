//! The `skillstack` binary: exit codes, output formats and signal handling.

use std::io::{BufRead, BufReader, Read};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use skillstack_core::control::log::{flush_log, log_channel, parse_csv_row, read_log};
use skillstack_core::control::{ControlLoop, LoopOptions};
use skillstack_core::kinematics::ArmModel;
use skillstack_core::skill::presets::{self, SkillDefaults};
use skillstack_server::{RobotConfig, Server, ServerConfig, CONFIG_ENV};

const BIN: &str = env!("CARGO_BIN_EXE_skillstack");

fn cmd() -> Command {
    let mut c = Command::new(BIN);
    c.env_remove(CONFIG_ENV);
    c
}

fn run(args: &[&str]) -> Output {
    cmd().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited by signal")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("server.toml");
    std::fs::write(&p, body).unwrap();
    p
}

/// Config in `dir` with sim clock, ephemeral ports and two panda arms.
fn sim_config(dir: &Path) -> PathBuf {
    let arm = config_dir().join("panda.toml");
    write_config(
        dir,
        &format!(
            "[server]\nport = 0\nhttp_port = 0\nclock = \"sim\"\nlog_dir = \"logs\"\n\
             [[robots]]\nid = 0\narm_config = {arm:?}\n[[robots]]\nid = 3\n"
        ),
    )
}

/// Log with `n` records from a real control loop holding still.
fn make_log(path: &Path, robot_id: u16, n: usize) {
    let model = Arc::new(ArmModel::panda());
    let mut opts = LoopOptions::for_model(&model);
    opts.robot_id = robot_id;
    let mut lp = ControlLoop::new(model.clone(), opts).unwrap();
    let (tx, rx) = log_channel();
    lp.set_log(tx);
    let mut goal = model.q_home;
    goal[1] += 0.2;
    lp.mailbox()
        .submit_skill(presets::go_to_joints(
            &SkillDefaults::for_model(&model),
            goal,
            0.05,
        ))
        .unwrap();
    for _ in 0..n {
        lp.tick();
    }
    assert_eq!(flush_log(&rx, path, robot_id).unwrap(), n as u64);
}

fn spawn_serve(config: &Path) -> (Child, String) {
    let mut child = cmd()
        .args(["serve", "--config"])
        .arg(config)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    (child, line)
}

fn wait_exit(child: &mut Child, limit: Duration) -> i32 {
    let start = Instant::now();
    loop {
        if let Some(s) = child.try_wait().unwrap() {
            return s.code().expect("exited by signal");
        }
        if start.elapsed() > limit {
            let _ = child.kill();
            panic!("process did not exit within {limit:?}");
        }
        std::thread::sleep(Duration::from_millis(20));
    }
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&[])), 2);
    assert_eq!(code(&run(&["fly"])), 2);
    assert_eq!(code(&run(&["serve"])), 2);
    assert_eq!(code(&run(&["bench", "loop", "--duration", "0"])), 2);
    assert_eq!(code(&run(&["bench", "loop", "--duration", "-1"])), 2);
    assert_eq!(
        code(&run(&["inject-wrench", "--robot", "0", "--duration", "0"])),
        2
    );
    assert_eq!(
        code(&run(&[
            "inject-wrench",
            "--robot",
            "0",
            "--fx",
            "nan",
            "--duration",
            "1"
        ])),
        2
    );
    assert_eq!(code(&run(&["logdump"])), 2);
}

#[test]
fn bad_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(
        dir.path(),
        "[server]\nstate_rate_hz = 5000\n[[robots]]\nid = 0\n",
    );
    let o = run(&["validate-config", p.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(
        stderr(&o).contains("server.state_rate_hz"),
        "{}",
        stderr(&o)
    );

    let o = run(&["serve", "--config", p.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("server.state_rate_hz"));

    let p = write_config(
        dir.path(),
        "[server]\n[[robots]]\nid = 0\n[[robots]]\nid = 0\n",
    );
    let o = run(&["validate-config", p.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("robots[1].id"), "{}", stderr(&o));

    let o = run(&[
        "validate-config",
        dir.path().join("missing.toml").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn validate_config_prefers_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let good = sim_config(dir.path());
    let o = cmd()
        .env(CONFIG_ENV, &good)
        .args(["validate-config", "/nonexistent.toml"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("ok: "));
    assert!(stdout(&o).contains("2 robots [0, 3]"));
    let o = run(&[
        "validate-config",
        config_dir().join("server.toml").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn serve_prints_ready_and_stops_on_sigint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sim_config(dir.path());
    let (mut child, line) = spawn_serve(&cfg);
    assert!(line.starts_with("ready port="), "{line:?}");
    assert!(line.contains(" clock=sim robots=0,3"), "{line:?}");
    let port: u16 = line
        .split_whitespace()
        .find_map(|f| f.strip_prefix("port="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(port > 0);
    std::net::TcpStream::connect(("127.0.0.1", port)).unwrap();

    let st = Command::new("kill")
        .args(["-INT", &child.id().to_string()])
        .status()
        .unwrap();
    assert!(st.success());
    assert_eq!(wait_exit(&mut child, Duration::from_secs(20)), 0);
    let mut err = String::new();
    child
        .stderr
        .take()
        .unwrap()
        .read_to_string(&mut err)
        .unwrap();
    assert!(err.contains("robot 0: 0 records logged"), "{err}");
    for id in [0, 3] {
        let log = read_log(dir.path().join(format!("logs/robot_{id}.filg"))).unwrap();
        assert_eq!(log.header.robot_id, id);
    }
}

#[test]
fn serve_stops_on_sigterm() {
    let dir = tempfile::tempdir().unwrap();
    let (mut child, line) = spawn_serve(&sim_config(dir.path()));
    assert!(line.starts_with("ready "));
    let st = Command::new("kill")
        .args(["-TERM", &child.id().to_string()])
        .status()
        .unwrap();
    assert!(st.success());
    assert_eq!(wait_exit(&mut child, Duration::from_secs(20)), 0);
}

#[test]
fn port_conflict_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let o = cmd()
        .args(["serve", "--config"])
        .arg(sim_config(dir.path()))
        .args(["--port", &port])
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("cannot bind"), "{}", stderr(&o));
}

#[test]
fn logdump_text_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("robot_2.filg");
    make_log(&path, 2, 120);
    let o = run(&["logdump", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert_eq!(text.lines().next().unwrap(), "robot 2: 120 records");
    assert_eq!(text.lines().count(), 121);

    let o = run(&["logdump", "--csv", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let csv = stdout(&o);
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("tick,wall_ns,q0,"));
    let parsed: Vec<_> = lines.map(|l| parse_csv_row(l).unwrap()).collect();
    assert_eq!(parsed, read_log(&path).unwrap().records);
}

#[test]
fn logdump_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.filg");
    make_log(&empty, 1, 0);
    let o = run(&["logdump", empty.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("0 records"));

    let cut = dir.path().join("cut.filg");
    make_log(&cut, 1, 10);
    let bytes = std::fs::read(&cut).unwrap();
    std::fs::write(&cut, &bytes[..bytes.len() - 100]).unwrap();
    let o = run(&["logdump", cut.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("warning"), "{}", stderr(&o));
    assert!(stderr(&o).contains("9 whole records"), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("robot 1: 9 records"));

    let junk = dir.path().join("junk.filg");
    std::fs::write(&junk, b"not a log at all").unwrap();
    let o = run(&["logdump", junk.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("bad magic"));
    assert_eq!(
        code(&run(&[
            "logdump",
            dir.path().join("nope").to_str().unwrap()
        ])),
        1
    );
}

#[test]
fn inject_wrench_against_a_live_server() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let server = rt
        .block_on(Server::start(ServerConfig::local(vec![
            RobotConfig::panda(0),
        ])))
        .unwrap();
    let addr = server.tcp_addr().to_string();

    let o = run(&[
        "inject-wrench",
        "--robot",
        "0",
        "--fx",
        "6",
        "--fz",
        "-2.5",
        "--duration",
        "0.25",
        "--addr",
        &addr,
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "ack robot=0 ticks=250");

    let o = run(&[
        "inject-wrench",
        "--robot",
        "9",
        "--fx",
        "1",
        "--duration",
        "1",
        "--addr",
        &addr,
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("UNKNOWN_ROBOT"), "{}", stderr(&o));

    rt.block_on(server.shutdown());
    let dead = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .to_string();
    let o = run(&[
        "inject-wrench",
        "--robot",
        "0",
        "--duration",
        "1",
        "--addr",
        &dead,
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("cannot connect"));
}

#[test]
fn bench_needs_the_real_clock() {
    let dir = tempfile::tempdir().unwrap();
    let o = cmd()
        .args(["bench", "loop", "--duration", "1", "--config"])
        .arg(sim_config(dir.path()))
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("bench requires real clock"));
    let o = run(&["bench", "loop", "--duration", "1", "--clock", "sim"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn bench_prints_a_summary_line() {
    for load in ["hold", "impedance"] {
        let o = run(&["bench", "loop", "--duration", "0.2", "--skill", load]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let last = stdout(&o).lines().last().unwrap().to_string();
        assert!(last.starts_with("BENCH mean_us="), "{last}");
        assert!(last.contains(" ticks=200"), "{last}");
    }
}
