//! Server configuration: the `[server]` table and one `[[robots]]` entry per arm.

use std::collections::HashSet;
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use skillstack_core::config::ConfigError;
use skillstack_core::kinematics::ArmModel;
use skillstack_core::safety::{SafetyConfig, SafetyTable};

/// Environment variable that replaces any config path given on the command line.
pub const CONFIG_ENV: &str = "SKILLSTACK_CONFIG";
pub const DEFAULT_PORT: u16 = 7878;
pub const DEFAULT_STATE_RATE_HZ: u32 = 100;
pub const MAX_STATE_RATE_HZ: u32 = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    /// 1 ms wall-clock periods.
    Real,
    /// One tick per step, as fast as the host allows; time stands still
    /// while the robot has nothing to do.
    Sim,
}

impl ClockMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ClockMode::Real => "real",
            ClockMode::Sim => "sim",
        }
    }
}

impl std::str::FromStr for ClockMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "real" => Ok(ClockMode::Real),
            "sim" => Ok(ClockMode::Sim),
            other => Err(format!(
                "unknown clock mode `{other}` (expected real or sim)"
            )),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RobotConfig {
    pub id: u16,
    pub model: Arc<ArmModel>,
    pub safety: SafetyConfig,
}

impl RobotConfig {
    /// Panda-like arm with default safety settings.
    pub fn panda(id: u16) -> Self {
        RobotConfig {
            id,
            model: Arc::new(ArmModel::panda()),
            safety: SafetyConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub address: IpAddr,
    pub port: u16,
    /// `None` disables the HTTP API; `Some(0)` picks a free port.
    pub http_port: Option<u16>,
    pub clock: ClockMode,
    pub state_rate_hz: u32,
    /// `None` disables logging.
    pub log_dir: Option<PathBuf>,
    pub robots: Vec<RobotConfig>,
}

impl ServerConfig {
    /// Loopback, ephemeral ports, sim clock, no logs.
    pub fn local(robots: Vec<RobotConfig>) -> Self {
        ServerConfig {
            address: IpAddr::from([127, 0, 0, 1]),
            port: 0,
            http_port: Some(0),
            clock: ClockMode::Sim,
            state_rate_hz: DEFAULT_STATE_RATE_HZ,
            log_dir: None,
            robots,
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base).map_err(|e| e.in_file(path))
    }

    /// Relative paths inside the document resolve against `base`.
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let doc: ConfigFile = toml::from_str(text)?;
        doc.resolve(base)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.robots.is_empty() {
            return Err(ConfigError::invalid(
                "robots",
                "at least one robot is required",
            ));
        }
        let mut seen = HashSet::new();
        for (i, r) in self.robots.iter().enumerate() {
            if !seen.insert(r.id) {
                return Err(ConfigError::invalid(
                    &format!("robots[{i}].id"),
                    format!("duplicate robot id {}", r.id),
                ));
            }
            r.safety
                .validate()
                .map_err(|e| prefix_key(e, &format!("robots[{i}].")))?;
        }
        if self.state_rate_hz == 0 || self.state_rate_hz > MAX_STATE_RATE_HZ {
            return Err(ConfigError::invalid(
                "server.state_rate_hz",
                format!("must be between 1 and {MAX_STATE_RATE_HZ}"),
            ));
        }
        Ok(())
    }

    pub fn robot(&self, id: u16) -> Option<&RobotConfig> {
        self.robots.iter().find(|r| r.id == id)
    }
}

/// Largest divisor of 1000 not above `hz`, so that publication lands on whole
/// ticks. Zero means the server default.
pub fn normalize_rate(hz: u32, default: u32) -> u32 {
    const DIVISORS: [u32; 16] = [
        1, 2, 4, 5, 8, 10, 20, 25, 40, 50, 100, 125, 200, 250, 500, 1000,
    ];
    let hz = if hz == 0 {
        default
    } else {
        hz.min(MAX_STATE_RATE_HZ)
    };
    DIVISORS
        .iter()
        .rev()
        .copied()
        .find(|d| *d <= hz)
        .unwrap_or(1)
}

fn prefix_key(e: ConfigError, prefix: &str) -> ConfigError {
    match e {
        ConfigError::Invalid { file, key, reason } => ConfigError::Invalid {
            file,
            key: format!("{prefix}{key}"),
            reason,
        },
        other => other,
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    server: ServerTable,
    #[serde(default)]
    robots: Vec<RobotTable>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ServerTable {
    #[serde(default = "default_address")]
    address: String,
    #[serde(default = "default_port")]
    port: u16,
    #[serde(default)]
    http_port: u16,
    #[serde(default)]
    http: Option<bool>,
    #[serde(default = "default_clock")]
    clock: ClockMode,
    #[serde(default = "default_rate")]
    state_rate_hz: u32,
    #[serde(default)]
    log_dir: Option<PathBuf>,
}

fn default_address() -> String {
    "127.0.0.1".into()
}

fn default_port() -> u16 {
    DEFAULT_PORT
}

fn default_clock() -> ClockMode {
    ClockMode::Real
}

fn default_rate() -> u32 {
    DEFAULT_STATE_RATE_HZ
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotTable {
    id: u16,
    #[serde(default)]
    arm_config: Option<PathBuf>,
    #[serde(default)]
    safety: Option<SafetyTable>,
}

impl ConfigFile {
    fn resolve(self, base: &Path) -> Result<ServerConfig, ConfigError> {
        let s = self.server;
        let address: IpAddr = s.address.parse().map_err(|_| {
            ConfigError::invalid(
                "server.address",
                format!("`{}` is not an IP address", s.address),
            )
        })?;
        let mut robots = Vec::with_capacity(self.robots.len());
        for (i, r) in self.robots.into_iter().enumerate() {
            let model = match r.arm_config {
                Some(p) => {
                    let p = base.join(p);
                    ArmModel::from_file(&p).map_err(|e| match e {
                        ConfigError::Io { source, .. } => ConfigError::invalid(
                            &format!("robots[{i}].arm_config"),
                            format!("{}: {source}", p.display()),
                        ),
                        other => other,
                    })?
                }
                None => ArmModel::panda(),
            };
            let safety = match r.safety {
                Some(t) => t
                    .into_config()
                    .map_err(|e| prefix_key(e, &format!("robots[{i}].")))?,
                None => SafetyConfig::default(),
            };
            robots.push(RobotConfig {
                id: r.id,
                model: Arc::new(model),
                safety,
            });
        }
        let cfg = ServerConfig {
            address,
            port: s.port,
            http_port: (s.http != Some(false)).then_some(s.http_port),
            clock: s.clock,
            state_rate_hz: s.state_rate_hz,
            log_dir: Some(base.join(s.log_dir.unwrap_or_else(|| PathBuf::from("logs")))),
            robots,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
