//! Network front-end for the control core. Each configured arm gets its own
//! control-loop thread; clients reach them over the framed TCP protocol or
//! the JSON HTTP API.

pub mod config;
mod http;
pub mod robot;
mod session;

use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::watch;
use tokio::task::JoinHandle;
use tracing::info;

pub use config::{normalize_rate, ClockMode, RobotConfig, ServerConfig, CONFIG_ENV};
pub use robot::{OpError, RobotRuntime, RobotStartError};

/// The running robots, by id.
pub struct Robots {
    list: Vec<Arc<RobotRuntime>>,
}

impl Robots {
    pub fn get(&self, id: u16) -> Option<&Arc<RobotRuntime>> {
        self.list.iter().find(|r| r.id() == id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<RobotRuntime>> {
        self.list.iter()
    }
}

#[derive(Debug, Error)]
pub enum StartError {
    #[error(transparent)]
    Config(#[from] skillstack_core::config::ConfigError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: io::Error },
    #[error("cannot create log directory {path}: {source}")]
    LogDir { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Robot(#[from] RobotStartError),
}

/// Records written per robot, from [`Server::shutdown`].
#[derive(Debug)]
pub struct ShutdownReport {
    pub logs: Vec<(u16, io::Result<u64>)>,
}

pub struct Server {
    config: ServerConfig,
    robots: Arc<Robots>,
    tcp_addr: SocketAddr,
    http_addr: Option<SocketAddr>,
    shutdown_tx: watch::Sender<bool>,
    acceptor: JoinHandle<Vec<JoinHandle<()>>>,
    http: Option<JoinHandle<()>>,
}

impl Server {
    /// Validates the config, binds the listeners and starts every robot.
    pub async fn start(config: ServerConfig) -> Result<Server, StartError> {
        config.validate()?;
        let tcp_addr = SocketAddr::new(config.address, config.port);
        let listener = TcpListener::bind(tcp_addr)
            .await
            .map_err(|source| StartError::Bind {
                addr: tcp_addr,
                source,
            })?;
        let http_listener = match config.http_port {
            Some(port) => {
                let addr = SocketAddr::new(config.address, port);
                Some(
                    TcpListener::bind(addr)
                        .await
                        .map_err(|source| StartError::Bind { addr, source })?,
                )
            }
            None => None,
        };
        if let Some(dir) = &config.log_dir {
            std::fs::create_dir_all(dir).map_err(|source| StartError::LogDir {
                path: dir.clone(),
                source,
            })?;
        }
        let mut list = Vec::new();
        for r in &config.robots {
            let log = config.log_dir.as_ref().map(|d| d.join(log_file_name(r.id)));
            list.push(Arc::new(RobotRuntime::start(r, config.clock, log)?));
        }
        let robots = Arc::new(Robots { list });
        let (shutdown_tx, shutdown_rx) = watch::channel(false);

        let tcp_addr = listener.local_addr().map_err(|source| StartError::Bind {
            addr: tcp_addr,
            source,
        })?;
        let acceptor = tokio::spawn(accept_loop(
            listener,
            robots.clone(),
            normalize_rate(config.state_rate_hz, config::DEFAULT_STATE_RATE_HZ),
            shutdown_rx.clone(),
        ));
        let (http_addr, http) = match http_listener {
            Some(l) => {
                let addr = l.local_addr().ok();
                let app = http::router(robots.clone(), config.clock);
                let mut rx = shutdown_rx.clone();
                let task = tokio::spawn(async move {
                    let _ = axum::serve(l, app)
                        .with_graceful_shutdown(async move {
                            let _ = rx.wait_for(|s| *s).await;
                        })
                        .await;
                });
                (addr, Some(task))
            }
            None => (None, None),
        };
        info!(%tcp_addr, ?http_addr, clock = config.clock.as_str(), robots = config.robots.len(), "server ready");
        Ok(Server {
            config,
            robots,
            tcp_addr,
            http_addr,
            shutdown_tx,
            acceptor,
            http,
        })
    }

    pub fn tcp_addr(&self) -> SocketAddr {
        self.tcp_addr
    }

    pub fn http_addr(&self) -> Option<SocketAddr> {
        self.http_addr
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    pub fn robot(&self, id: u16) -> Option<&Arc<RobotRuntime>> {
        self.robots.get(id)
    }

    pub fn robots(&self) -> &Arc<Robots> {
        &self.robots
    }

    /// Stops the loops (active skills are preempted and their sessions told),
    /// flushes the logs, then closes every session and listener.
    pub async fn shutdown(self) -> ShutdownReport {
        let robots = self.robots.clone();
        let logs = tokio::task::spawn_blocking(move || {
            robots
                .iter()
                .map(|r| (r.id(), r.stop()))
                .collect::<Vec<_>>()
        })
        .await
        .expect("robot shutdown task");
        for r in self.robots.iter() {
            r.clear_routes();
        }
        let _ = self.shutdown_tx.send(true);
        if let Ok(sessions) = self.acceptor.await {
            for s in sessions {
                let _ = s.await;
            }
        }
        if let Some(h) = self.http {
            let _ = h.await;
        }
        ShutdownReport { logs }
    }
}

/// Resolves once the shutdown flag is set.
pub(crate) async fn stopped(rx: &mut watch::Receiver<bool>) {
    let _ = rx.wait_for(|s| *s).await;
}

/// `robot_<id>.filg` inside the log directory.
pub fn log_file_name(robot_id: u16) -> String {
    format!("robot_{robot_id}.filg")
}

async fn accept_loop(
    listener: TcpListener,
    robots: Arc<Robots>,
    default_rate: u32,
    mut shutdown: watch::Receiver<bool>,
) -> Vec<JoinHandle<()>> {
    let mut sessions: Vec<JoinHandle<()>> = Vec::new();
    loop {
        tokio::select! {
            r = listener.accept() => match r {
                Ok((stream, _)) => {
                    sessions.retain(|h| !h.is_finished());
                    sessions.push(tokio::spawn(session::run(stream, robots.clone(), default_rate, shutdown.clone())));
                }
                Err(e) => tracing::warn!(%e, "accept failed"),
            },
            _ = crate::stopped(&mut shutdown) => return sessions,
        }
    }
}
