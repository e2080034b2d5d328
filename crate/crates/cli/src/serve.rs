use std::io::Write;
use std::process::ExitCode;

use skillstack_server::{Server, CONFIG_ENV};
use tracing_subscriber::filter::LevelFilter;

use crate::{config_path, load_config, usage, ServeArgs, EXIT_FAILURE, EXIT_OK};

pub(crate) fn run(a: ServeArgs) -> ExitCode {
    let Some(path) = config_path(a.config) else {
        return usage(&format!(
            "no config file given (use --config or set {CONFIG_ENV})"
        ));
    };
    let mut cfg = match load_config(&path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Some(c) = a.clock {
        cfg.clock = c;
    }
    if let Some(p) = a.port {
        cfg.port = p;
    }
    if let Some(p) = a.http_port {
        cfg.http_port = Some(p);
    }
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(LevelFilter::WARN)
        .try_init()
        .ok();
    let rt = match tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
    {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    };
    rt.block_on(async move {
        let server = match Server::start(cfg).await {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_FAILURE);
            }
        };
        let signals = match Signals::install() {
            Ok(s) => s,
            Err(e) => {
                eprintln!("error: cannot install signal handlers: {e}");
                server.shutdown().await;
                return ExitCode::from(EXIT_FAILURE);
            }
        };
        let ids: Vec<String> = server
            .config()
            .robots
            .iter()
            .map(|r| r.id.to_string())
            .collect();
        println!(
            "ready port={} http_port={} clock={} robots={}",
            server.tcp_addr().port(),
            server
                .http_addr()
                .map_or_else(|| "off".to_string(), |a| a.port().to_string()),
            server.config().clock.as_str(),
            ids.join(",")
        );
        let _ = std::io::stdout().flush();
        signals.wait().await;
        let report = server.shutdown().await;
        let mut code = EXIT_OK;
        for (id, r) in report.logs {
            match r {
                Ok(n) => eprintln!("robot {id}: {n} records logged"),
                Err(e) => {
                    eprintln!("error: robot {id} log: {e}");
                    code = EXIT_FAILURE;
                }
            }
        }
        ExitCode::from(code)
    })
}

/// Registered before the ready line goes out so an early signal is not lost.
#[cfg(unix)]
struct Signals {
    int: tokio::signal::unix::Signal,
    term: tokio::signal::unix::Signal,
}

#[cfg(unix)]
impl Signals {
    fn install() -> std::io::Result<Self> {
        use tokio::signal::unix::{signal, SignalKind};
        Ok(Signals {
            int: signal(SignalKind::interrupt())?,
            term: signal(SignalKind::terminate())?,
        })
    }

    async fn wait(mut self) {
        tokio::select! {
            _ = self.int.recv() => {}
            _ = self.term.recv() => {}
        }
    }
}

#[cfg(not(unix))]
struct Signals;

#[cfg(not(unix))]
impl Signals {
    fn install() -> std::io::Result<Self> {
        Ok(Signals)
    }

    async fn wait(self) {
        let _ = tokio::signal::ctrl_c().await;
    }
}
