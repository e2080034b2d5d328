//! One simulated arm: its control-loop thread, log flusher, status routing and
//! state fan-out.

use std::collections::{BTreeMap, HashMap};
use std::io;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle, Thread};
use std::time::{Duration, Instant};

use crossbeam::channel::{Receiver, RecvTimeoutError};
use crossbeam::queue::ArrayQueue;
use thiserror::Error;
use tokio::sync::{mpsc, watch, Notify};

use skillstack_core::control::log::{log_channel, LogWriter, RecordBytes};
use skillstack_core::control::pacing::Pacer;
use skillstack_core::control::{
    Command, ControlLoop, LoopOptions, Mailbox, MailboxFull, SkillStatus, SnapshotCell, SubmitError,
};
use skillstack_core::kinematics::{ArmModel, Wrench};
use skillstack_core::protocol::Message;
use skillstack_core::safety::SafetyConfig;
use skillstack_core::sim::{RobotState, SimError};
use skillstack_core::skill::{SensorUpdate, SkillSpec};

use crate::config::{ClockMode, RobotConfig};

/// Frames bound for one session, tagged with the robot they concern.
pub type Outbound = (u16, Message);
pub type OutboundTx = mpsc::UnboundedSender<Outbound>;

/// Terminal statuses kept for lookups after the fact.
const STATUS_HISTORY: usize = 4096;
/// State frames buffered per subscriber before the oldest are dropped.
pub const SUBSCRIBER_QUEUE: usize = 256;
const IDLE_PARK: Duration = Duration::from_millis(20);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpError {
    #[error("mailbox full")]
    MailboxFull,
    #[error("{0}")]
    Invalid(String),
    #[error("server shutting down")]
    Stopped,
}

impl From<MailboxFull> for OpError {
    fn from(_: MailboxFull) -> Self {
        OpError::MailboxFull
    }
}

/// A state subscription. The loop pushes every `divisor`-th tick; when the
/// queue is full the oldest frame goes.
#[derive(Debug)]
pub struct StateSub {
    pub divisor: u64,
    pub queue: ArrayQueue<RobotState>,
    pub notify: Arc<Notify>,
    dropped: AtomicU64,
}

impl StateSub {
    pub fn new(rate_hz: u32, notify: Arc<Notify>) -> Self {
        StateSub {
            divisor: u64::from(1000 / rate_hz.clamp(1, 1000)),
            queue: ArrayQueue::new(SUBSCRIBER_QUEUE),
            notify,
            dropped: AtomicU64::new(0),
        }
    }

    /// Frames lost to a full queue.
    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }
}

#[derive(Default)]
struct Subscribers {
    count: AtomicUsize,
    list: Mutex<Vec<Arc<StateSub>>>,
}

impl Subscribers {
    fn publish(&self, s: &RobotState) {
        if self.count.load(Ordering::Acquire) == 0 {
            return;
        }
        for sub in self.list.lock().unwrap().iter() {
            if s.tick % sub.divisor == 0 {
                if sub.queue.force_push(*s).is_some() {
                    sub.dropped.fetch_add(1, Ordering::Relaxed);
                }
                sub.notify.notify_one();
            }
        }
    }
}

#[derive(Default)]
struct Routes {
    sinks: HashMap<u32, OutboundTx>,
    latest: BTreeMap<u32, SkillStatus>,
}

/// Delivers status events to the session that submitted the skill and keeps
/// the latest status of recent skills.
struct Router {
    robot_id: u16,
    routes: Mutex<Routes>,
    version: watch::Sender<u64>,
}

impl Router {
    fn route(&self, events: &[SkillStatus]) {
        if events.is_empty() {
            return;
        }
        {
            let mut r = self.routes.lock().unwrap();
            for ev in events {
                r.latest.insert(ev.skill_id, ev.clone());
                while r.latest.len() > STATUS_HISTORY {
                    r.latest.pop_first();
                }
                if let Some(tx) = r.sinks.get(&ev.skill_id) {
                    let gone = tx
                        .send((self.robot_id, Message::SkillStatus(ev.clone())))
                        .is_err();
                    if gone || ev.phase.is_terminal() {
                        r.sinks.remove(&ev.skill_id);
                    }
                }
            }
        }
        self.version.send_modify(|v| *v += 1);
    }
}

struct Shared {
    router: Router,
    subs: Subscribers,
    stop: AtomicBool,
    sensor_drops: AtomicU64,
    ticks: AtomicU64,
    missed: AtomicU64,
}

/// Handle to a running robot.
pub struct RobotRuntime {
    id: u16,
    clock: ClockMode,
    model: Arc<ArmModel>,
    mailbox: Arc<Mailbox>,
    snapshot: Arc<SnapshotCell>,
    shared: Arc<Shared>,
    waker: Thread,
    threads: Mutex<Option<(JoinHandle<()>, Option<JoinHandle<io::Result<u64>>>)>>,
    log_path: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum RobotStartError {
    #[error("robot {id}: {source}")]
    Sim { id: u16, source: SimError },
    #[error("robot {id}: cannot create log {path}: {source}")]
    Log {
        id: u16,
        path: PathBuf,
        source: io::Error,
    },
}

impl RobotRuntime {
    /// Builds the control loop, opens the log and starts both threads.
    pub fn start(
        cfg: &RobotConfig,
        clock: ClockMode,
        log_path: Option<PathBuf>,
    ) -> Result<Self, RobotStartError> {
        let mut opts = LoopOptions::for_model(&cfg.model);
        opts.robot_id = cfg.id;
        opts.safety = cfg.safety.clone();
        let mut lp = ControlLoop::new(cfg.model.clone(), opts)
            .map_err(|source| RobotStartError::Sim { id: cfg.id, source })?;
        let flusher = match &log_path {
            Some(path) => {
                let writer =
                    LogWriter::create(path, cfg.id).map_err(|source| RobotStartError::Log {
                        id: cfg.id,
                        path: path.clone(),
                        source,
                    })?;
                let (tx, rx) = log_channel();
                lp.set_log(tx);
                Some(
                    thread::Builder::new()
                        .name(format!("log-{}", cfg.id))
                        .spawn(move || run_flusher(writer, rx))
                        .expect("spawn log thread"),
                )
            }
            None => None,
        };
        lp.snapshot().publish(lp.state());

        let shared = Arc::new(Shared {
            router: Router {
                robot_id: cfg.id,
                routes: Mutex::new(Routes::default()),
                version: watch::channel(0).0,
            },
            subs: Subscribers::default(),
            stop: AtomicBool::new(false),
            sensor_drops: AtomicU64::new(0),
            ticks: AtomicU64::new(0),
            missed: AtomicU64::new(0),
        });
        let mailbox = lp.mailbox().clone();
        let snapshot = lp.snapshot().clone();
        let loop_shared = shared.clone();
        let handle = thread::Builder::new()
            .name(format!("loop-{}", cfg.id))
            .spawn(move || run_loop(lp, loop_shared, clock))
            .expect("spawn control thread");
        Ok(RobotRuntime {
            id: cfg.id,
            clock,
            model: cfg.model.clone(),
            mailbox,
            snapshot,
            shared,
            waker: handle.thread().clone(),
            threads: Mutex::new(Some((handle, flusher))),
            log_path,
        })
    }

    pub fn id(&self) -> u16 {
        self.id
    }

    pub fn clock(&self) -> ClockMode {
        self.clock
    }

    pub fn model(&self) -> &Arc<ArmModel> {
        &self.model
    }

    pub fn log_path(&self) -> Option<&PathBuf> {
        self.log_path.as_ref()
    }

    fn running(&self) -> Result<(), OpError> {
        if self.shared.stop.load(Ordering::Acquire) {
            Err(OpError::Stopped)
        } else {
            Ok(())
        }
    }

    fn post(&self, cmd: Command) -> Result<(), OpError> {
        self.running()?;
        self.mailbox.post(cmd)?;
        self.waker.unpark();
        Ok(())
    }

    /// Admits a skill. With a sink, the Ack for `correlation` is queued before
    /// any status of the new skill can be routed.
    pub fn submit(
        &self,
        spec: SkillSpec,
        sink: Option<(&OutboundTx, u32)>,
    ) -> Result<u32, SubmitError> {
        if self.shared.stop.load(Ordering::Acquire) {
            return Err(SubmitError::MailboxFull);
        }
        let id = {
            let mut routes = self.shared.router.routes.lock().unwrap();
            let id = self.mailbox.submit_skill(spec)?;
            if let Some((tx, correlation)) = sink {
                let _ = tx.send((
                    self.id,
                    Message::Ack {
                        correlation,
                        value: id,
                    },
                ));
                routes.sinks.insert(id, tx.clone());
            }
            id
        };
        self.waker.unpark();
        Ok(id)
    }

    pub fn preempt(&self, skill_id: Option<u32>) -> Result<(), OpError> {
        self.post(Command::Preempt { skill_id })
    }

    pub fn sensor(&self, update: SensorUpdate) -> Result<(), OpError> {
        self.post(Command::Sensor(update))
    }

    /// Returns the number of ticks the wrench will act for.
    pub fn inject_wrench(&self, wrench: Wrench, duration: f64) -> Result<u64, OpError> {
        if !wrench.is_finite() {
            return Err(OpError::Invalid("wrench must be finite".into()));
        }
        if !(duration.is_finite() && duration > 0.0) {
            return Err(OpError::Invalid("duration must be positive".into()));
        }
        let ticks = ((duration * 1000.0).round() as u64).max(1);
        self.post(Command::InjectWrench { wrench, ticks })?;
        Ok(ticks)
    }

    pub fn reconfigure_safety(&self, cfg: SafetyConfig) -> Result<(), OpError> {
        cfg.validate()
            .map_err(|e| OpError::Invalid(e.to_string()))?;
        self.post(Command::SafetyReconfig(cfg))
    }

    pub fn state(&self) -> RobotState {
        // Published before the loop thread starts.
        self.snapshot.read().expect("initial snapshot published")
    }

    pub fn in_flight(&self) -> u32 {
        self.mailbox.in_flight()
    }

    pub fn sensor_drops(&self) -> u64 {
        self.shared.sensor_drops.load(Ordering::Relaxed)
    }

    /// Ticks run so far by this process.
    pub fn ticks(&self) -> u64 {
        self.shared.ticks.load(Ordering::Relaxed)
    }

    /// Real-clock periods that overran.
    pub fn missed_deadlines(&self) -> u64 {
        self.shared.missed.load(Ordering::Relaxed)
    }

    pub fn subscribe(&self, rate_hz: u32, notify: Arc<Notify>) -> Arc<StateSub> {
        let sub = Arc::new(StateSub::new(rate_hz, notify));
        let mut list = self.shared.subs.list.lock().unwrap();
        list.push(sub.clone());
        self.shared.subs.count.store(list.len(), Ordering::Release);
        sub
    }

    pub fn unsubscribe(&self, sub: &Arc<StateSub>) {
        let mut list = self.shared.subs.list.lock().unwrap();
        list.retain(|s| !Arc::ptr_eq(s, sub));
        self.shared.subs.count.store(list.len(), Ordering::Release);
    }

    pub fn status(&self, skill_id: u32) -> Option<SkillStatus> {
        self.shared
            .router
            .routes
            .lock()
            .unwrap()
            .latest
            .get(&skill_id)
            .cloned()
    }

    /// Latest status of `skill_id`, waiting up to `timeout` for a terminal one.
    pub async fn wait_status(&self, skill_id: u32, timeout: Duration) -> Option<SkillStatus> {
        let mut rx = self.shared.router.version.subscribe();
        let deadline = tokio::time::Instant::now() + timeout;
        loop {
            let st = self.status(skill_id);
            if st.as_ref().is_some_and(|s| s.phase.is_terminal()) {
                return st;
            }
            match tokio::time::timeout_at(deadline, rx.changed()).await {
                Ok(Ok(())) => continue,
                _ => return self.status(skill_id),
            }
        }
    }

    /// Drops every status sink so that sessions can close.
    pub fn clear_routes(&self) {
        self.shared.router.routes.lock().unwrap().sinks.clear();
    }

    /// Stops the loop after its current tick, reports the preempted skills to
    /// their sessions and flushes the log. Returns the record count.
    pub fn stop(&self) -> io::Result<u64> {
        self.shared.stop.store(true, Ordering::Release);
        self.waker.unpark();
        let Some((lp, flusher)) = self.threads.lock().unwrap().take() else {
            return Ok(0);
        };
        if lp.join().is_err() {
            return Err(io::Error::other(format!(
                "robot {} control thread panicked",
                self.id
            )));
        }
        match flusher.map(JoinHandle::join) {
            Some(Ok(r)) => r,
            Some(Err(_)) => Err(io::Error::other(format!(
                "robot {} log thread panicked",
                self.id
            ))),
            None => Ok(0),
        }
    }
}

impl Drop for RobotRuntime {
    fn drop(&mut self) {
        let _ = self.stop();
    }
}

fn step(lp: &mut ControlLoop, shared: &Shared) {
    let report = lp.tick();
    shared.router.route(&report.events);
    shared
        .sensor_drops
        .store(lp.sensor_drops(), Ordering::Relaxed);
    shared.ticks.fetch_add(1, Ordering::Relaxed);
    shared.subs.publish(lp.state());
}

fn run_loop(mut lp: ControlLoop, shared: Arc<Shared>, clock: ClockMode) {
    match clock {
        ClockMode::Sim => {
            while !shared.stop.load(Ordering::Acquire) {
                if lp.is_idle() {
                    thread::park_timeout(IDLE_PARK);
                    continue;
                }
                step(&mut lp, &shared);
            }
        }
        ClockMode::Real => {
            lp.set_wall_clock(Some(Instant::now()));
            let mut pacer = Pacer::new();
            while !shared.stop.load(Ordering::Acquire) {
                pacer.wait();
                step(&mut lp, &shared);
                if pacer.finish() {
                    shared.missed.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
    }
    let events = lp.shutdown();
    shared.router.route(&events);
}

fn run_flusher(mut w: LogWriter<std::fs::File>, rx: Receiver<RecordBytes>) -> io::Result<u64> {
    loop {
        match rx.recv_timeout(Duration::from_millis(100)) {
            Ok(rec) => {
                w.append(&rec)?;
                w.drain(&rx)?;
            }
            Err(RecvTimeoutError::Timeout) => w.flush()?,
            Err(RecvTimeoutError::Disconnected) => return w.finish(),
        }
    }
}
