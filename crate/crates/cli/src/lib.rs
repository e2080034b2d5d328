//! The `skillstack` command: run the server, benchmark the loop, dump logs,
//! inject test wrenches and check config files.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod bench;
mod logdump;
mod serve;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use skillstack_client::Client;
use skillstack_core::kinematics::Wrench;
use skillstack_server::{ClockMode, ServerConfig, CONFIG_ENV};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "skillstack", version, about = "Skill-based arm control stack")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run the server until SIGINT or SIGTERM.
    Serve(ServeArgs),
    /// Benchmarks.
    Bench {
        #[command(subcommand)]
        which: BenchCmd,
    },
    /// Print a binary log, human-readable or as CSV.
    Logdump(LogdumpArgs),
    /// Apply an external wrench to a simulated arm on a running server.
    InjectWrench(InjectArgs),
    /// Parse and check a server config file.
    ValidateConfig(ValidateArgs),
}

#[derive(Args, Debug)]
struct ServeArgs {
    /// Server config (TOML). SKILLSTACK_CONFIG takes precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_clock)]
    clock: Option<ClockMode>,
    #[arg(long)]
    port: Option<u16>,
    /// Port of the HTTP API; 0 picks a free one.
    #[arg(long)]
    http_port: Option<u16>,
}

#[derive(Subcommand, Debug)]
enum BenchCmd {
    /// Run the control loop against the real clock and report tick jitter.
    Loop(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum BenchLoad {
    /// Hold skill with pass-through control.
    Hold,
    /// Cartesian impedance holding the current pose.
    Impedance,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Seconds to run.
    #[arg(long, value_parser = parse_positive)]
    duration: f64,
    /// Arm and safety settings come from the first robot in this config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_clock)]
    clock: Option<ClockMode>,
    #[arg(long, value_enum, default_value_t = BenchLoad::Hold)]
    skill: BenchLoad,
}

#[derive(Args, Debug)]
struct LogdumpArgs {
    path: PathBuf,
    #[arg(long)]
    csv: bool,
}

#[derive(Args, Debug)]
struct InjectArgs {
    #[arg(long)]
    robot: u16,
    #[arg(long, default_value_t = 0.0, value_parser = parse_finite, allow_negative_numbers = true)]
    fx: f64,
    #[arg(long, default_value_t = 0.0, value_parser = parse_finite, allow_negative_numbers = true)]
    fy: f64,
    #[arg(long, default_value_t = 0.0, value_parser = parse_finite, allow_negative_numbers = true)]
    fz: f64,
    #[arg(long, default_value_t = 0.0, value_parser = parse_finite, allow_negative_numbers = true)]
    tx: f64,
    #[arg(long, default_value_t = 0.0, value_parser = parse_finite, allow_negative_numbers = true)]
    ty: f64,
    #[arg(long, default_value_t = 0.0, value_parser = parse_finite, allow_negative_numbers = true)]
    tz: f64,
    /// Seconds the wrench acts for.
    #[arg(long, value_parser = parse_positive)]
    duration: f64,
    #[arg(long, default_value = "127.0.0.1:7878")]
    addr: String,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    path: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_clock(s: &str) -> Result<ClockMode, String> {
    s.parse()
}

fn parse_finite(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err("must be finite".into())
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v = parse_finite(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err("must be greater than zero".into())
    }
}

/// SKILLSTACK_CONFIG wins over a path from the command line.
fn config_path(explicit: Option<PathBuf>) -> Option<PathBuf> {
    match std::env::var_os(CONFIG_ENV) {
        Some(v) if !v.is_empty() => {
            let env = PathBuf::from(v);
            if explicit.as_ref().is_some_and(|p| *p != env) {
                eprintln!("note: {CONFIG_ENV} overrides the config path given on the command line");
            }
            Some(env)
        }
        _ => explicit,
    }
}

fn load_config(path: &PathBuf) -> Result<ServerConfig, ExitCode> {
    ServerConfig::from_file(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_FAILURE)
    })
}

fn usage(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_USAGE)
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match cli.command {
        Cmd::Serve(a) => serve::run(a),
        Cmd::Bench {
            which: BenchCmd::Loop(a),
        } => bench::run(a),
        Cmd::Logdump(a) => logdump::run(&a.path, a.csv),
        Cmd::InjectWrench(a) => inject_wrench(a),
        Cmd::ValidateConfig(a) => validate_config(a),
    }
}

fn inject_wrench(a: InjectArgs) -> ExitCode {
    let rt = match tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
    {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    };
    let wrench = Wrench::from_array([a.fx, a.fy, a.fz, a.tx, a.ty, a.tz]);
    rt.block_on(async {
        let client = match Client::connect(&a.addr).await {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: cannot connect to {}: {e}", a.addr);
                return ExitCode::from(EXIT_FAILURE);
            }
        };
        match client.inject_wrench(a.robot, wrench, a.duration).await {
            Ok(ticks) => {
                println!("ack robot={} ticks={ticks}", a.robot);
                ExitCode::from(EXIT_OK)
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_FAILURE)
            }
        }
    })
}

fn validate_config(a: ValidateArgs) -> ExitCode {
    let Some(path) = config_path(a.path.or(a.config)) else {
        return usage(&format!(
            "no config file given (pass a path or set {CONFIG_ENV})"
        ));
    };
    match load_config(&path) {
        Ok(cfg) => {
            let ids: Vec<String> = cfg.robots.iter().map(|r| r.id.to_string()).collect();
            println!(
                "ok: {} ({} robots [{}], clock {}, port {}, state_rate_hz {})",
                path.display(),
                cfg.robots.len(),
                ids.join(", "),
                cfg.clock.as_str(),
                cfg.port,
                cfg.state_rate_hz
            );
            ExitCode::from(EXIT_OK)
        }
        Err(code) => code,
    }
}
