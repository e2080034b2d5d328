//! Async client for the framed TCP protocol.
//!
//! A background task reads the connection and routes replies: Acks and
//! Errors by correlation id, skill statuses by skill id, robot states to
//! whoever asked for them.

mod arm;

use std::collections::{HashMap, VecDeque};
use std::io;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use thiserror::Error;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::tcp::OwnedWriteHalf;
use tokio::net::{TcpStream, ToSocketAddrs};
use tokio::sync::{mpsc, oneshot};
use tokio::task::JoinHandle;

use skillstack_core::control::{SkillStatus, StatusPhase};
use skillstack_core::kinematics::Wrench;
use skillstack_core::protocol::{EncodeError, ErrorCode, FrameDecoder, Message, SubscribeMode};
use skillstack_core::safety::SafetyConfig;
use skillstack_core::sim::RobotState;
use skillstack_core::skill::{SensorUpdate, SkillSpec, TerminationCause, Violation};

pub use arm::ArmHandle;

/// How long a request waits for its reply.
pub const REPLY_TIMEOUT: Duration = Duration::from_secs(10);
/// State frames buffered per subscription on the client side.
const STATE_BUFFER: usize = 4096;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("connection: {0}")]
    Io(#[from] io::Error),
    #[error("connection closed")]
    Closed,
    #[error("no reply within {0:?}")]
    Timeout(Duration),
    #[error("server error {}: {message}", .code.as_str())]
    Server { code: ErrorCode, message: String },
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("invalid skill: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("skill {} ended {} ({})", .0.skill_id, .0.phase.as_str(), .0.cause.map_or("none", TerminationCause::as_str))]
    SkillFailed(Box<SkillStatus>),
    #[error("{0}")]
    Usage(String),
}

impl ClientError {
    pub fn code(&self) -> Option<ErrorCode> {
        match self {
            ClientError::Server { code, .. } => Some(*code),
            _ => None,
        }
    }

    /// Termination cause of a failed skill.
    pub fn cause(&self) -> Option<TerminationCause> {
        match self {
            ClientError::SkillFailed(s) => s.cause,
            _ => None,
        }
    }
}

/// An Error frame that answered no request of ours.
#[derive(Clone, Debug, PartialEq)]
pub struct UnsolicitedError {
    pub robot_id: u16,
    pub code: ErrorCode,
    pub message: String,
}

type ExecuteReply = Result<(u32, mpsc::UnboundedReceiver<SkillStatus>), ClientError>;

enum Pending {
    Execute {
        robot: u16,
        reply: oneshot::Sender<ExecuteReply>,
    },
    Plain(oneshot::Sender<Result<u32, ClientError>>),
}

#[derive(Default)]
struct Routes {
    pending: HashMap<u32, Pending>,
    statuses: HashMap<(u16, u32), mpsc::UnboundedSender<SkillStatus>>,
    state_subs: HashMap<u16, mpsc::Sender<RobotState>>,
    once: HashMap<u16, VecDeque<oneshot::Sender<Result<RobotState, ClientError>>>>,
    unsolicited: Vec<UnsolicitedError>,
    closed: bool,
}

struct Inner {
    routes: Mutex<Routes>,
    writer: tokio::sync::Mutex<OwnedWriteHalf>,
    next_corr: AtomicU32,
    topic_seq: AtomicU32,
}

/// Connection to a server. Cheap to clone; clones share the connection.
#[derive(Clone)]
pub struct Client {
    inner: Arc<Inner>,
    reader: Arc<JoinHandle<()>>,
}

/// Statuses of one submitted skill.
#[derive(Debug)]
pub struct SkillHandle {
    pub robot_id: u16,
    pub skill_id: u32,
    rx: mpsc::UnboundedReceiver<SkillStatus>,
    last: Option<SkillStatus>,
}

impl SkillHandle {
    /// Next status; `None` once the terminal one has been read or the
    /// connection is gone.
    pub async fn next(&mut self) -> Option<SkillStatus> {
        if self.last.as_ref().is_some_and(|s| s.phase.is_terminal()) {
            return None;
        }
        let s = self.rx.recv().await?;
        self.last = Some(s.clone());
        Some(s)
    }

    /// Waits for the terminal status.
    pub async fn wait(mut self) -> Result<SkillStatus, ClientError> {
        while let Some(s) = self.next().await {
            if s.phase.is_terminal() {
                return Ok(s);
            }
        }
        match self.last {
            Some(s) if s.phase.is_terminal() => Ok(s),
            _ => Err(ClientError::Closed),
        }
    }

    /// Like [`SkillHandle::wait`] but anything other than success is an error.
    pub async fn succeed(self) -> Result<SkillStatus, ClientError> {
        let s = self.wait().await?;
        if s.phase == StatusPhase::Succeeded {
            Ok(s)
        } else {
            Err(ClientError::SkillFailed(Box::new(s)))
        }
    }
}

impl Client {
    pub async fn connect(addr: impl ToSocketAddrs) -> Result<Client, ClientError> {
        let stream = TcpStream::connect(addr).await?;
        stream.set_nodelay(true)?;
        let (rd, wr) = stream.into_split();
        let inner = Arc::new(Inner {
            routes: Mutex::new(Routes::default()),
            writer: tokio::sync::Mutex::new(wr),
            next_corr: AtomicU32::new(1),
            topic_seq: AtomicU32::new(0),
        });
        let reader = tokio::spawn(read_loop(rd, inner.clone()));
        Ok(Client {
            inner,
            reader: Arc::new(reader),
        })
    }

    pub fn arm(&self, robot_id: u16) -> ArmHandle {
        ArmHandle::new(self.clone(), robot_id)
    }

    fn correlation(&self) -> u32 {
        self.inner.next_corr.fetch_add(1, Ordering::Relaxed)
    }

    /// Writes already-encoded bytes to the connection.
    pub async fn send_raw(&self, bytes: &[u8]) -> Result<(), ClientError> {
        let mut w = self.inner.writer.lock().await;
        w.write_all(bytes).await?;
        Ok(())
    }

    async fn send(&self, robot_id: u16, msg: &Message) -> Result<(), ClientError> {
        self.send_raw(&msg.to_frame(robot_id)?).await
    }

    fn register(&self, corr: u32, p: Pending) -> Result<(), ClientError> {
        let mut r = self.inner.routes.lock().unwrap();
        if r.closed {
            return Err(ClientError::Closed);
        }
        r.pending.insert(corr, p);
        Ok(())
    }

    fn forget(&self, corr: u32) {
        self.inner.routes.lock().unwrap().pending.remove(&corr);
    }

    async fn await_reply<T>(
        &self,
        corr: u32,
        rx: oneshot::Receiver<Result<T, ClientError>>,
    ) -> Result<T, ClientError> {
        match tokio::time::timeout(REPLY_TIMEOUT, rx).await {
            Ok(Ok(r)) => r,
            Ok(Err(_)) => Err(ClientError::Closed),
            Err(_) => {
                self.forget(corr);
                Err(ClientError::Timeout(REPLY_TIMEOUT))
            }
        }
    }

    async fn request(&self, robot_id: u16, corr: u32, msg: &Message) -> Result<u32, ClientError> {
        let (tx, rx) = oneshot::channel();
        self.register(corr, Pending::Plain(tx))?;
        if let Err(e) = self.send(robot_id, msg).await {
            self.forget(corr);
            return Err(e);
        }
        self.await_reply(corr, rx).await
    }

    /// Submits a skill and returns once the server has acknowledged it.
    pub async fn execute(
        &self,
        robot_id: u16,
        spec: &SkillSpec,
    ) -> Result<SkillHandle, ClientError> {
        let corr = self.correlation();
        let (tx, rx) = oneshot::channel();
        self.register(
            corr,
            Pending::Execute {
                robot: robot_id,
                reply: tx,
            },
        )?;
        let msg = Message::ExecuteSkill {
            correlation: corr,
            spec: spec.clone(),
        };
        if let Err(e) = self.send(robot_id, &msg).await {
            self.forget(corr);
            return Err(e);
        }
        let (skill_id, rx) = self.await_reply(corr, rx).await?;
        Ok(SkillHandle {
            robot_id,
            skill_id,
            rx,
            last: None,
        })
    }

    /// Preempts `skill_id`, or the active skill when `None`.
    pub async fn preempt(&self, robot_id: u16, skill_id: Option<u32>) -> Result<(), ClientError> {
        let corr = self.correlation();
        let msg = Message::PreemptSkill {
            skill_id,
            correlation: Some(corr),
        };
        self.request(robot_id, corr, &msg).await.map(drop)
    }

    /// Fire-and-forget sensor update.
    pub async fn send_sensor(
        &self,
        robot_id: u16,
        update: SensorUpdate,
    ) -> Result<(), ClientError> {
        self.send(robot_id, &Message::Sensor(update)).await
    }

    pub async fn reconfigure_safety(
        &self,
        robot_id: u16,
        config: SafetyConfig,
    ) -> Result<(), ClientError> {
        let corr = self.correlation();
        let msg = Message::SafetyReconfig {
            correlation: corr,
            config,
        };
        self.request(robot_id, corr, &msg).await.map(drop)
    }

    /// Returns the number of ticks the wrench will act for.
    pub async fn inject_wrench(
        &self,
        robot_id: u16,
        wrench: Wrench,
        duration: f64,
    ) -> Result<u32, ClientError> {
        let corr = self.correlation();
        let msg = Message::InjectWrench {
            correlation: corr,
            wrench,
            duration,
        };
        self.request(robot_id, corr, &msg).await
    }

    pub async fn get_state(&self, robot_id: u16) -> Result<RobotState, ClientError> {
        let (tx, rx) = oneshot::channel();
        {
            let mut r = self.inner.routes.lock().unwrap();
            if r.closed {
                return Err(ClientError::Closed);
            }
            r.once.entry(robot_id).or_default().push_back(tx);
        }
        let msg = Message::SubscribeState {
            mode: SubscribeMode::Once,
            rate_hz: 0,
        };
        self.send(robot_id, &msg).await?;
        match tokio::time::timeout(REPLY_TIMEOUT, rx).await {
            Ok(Ok(r)) => r,
            Ok(Err(_)) => Err(ClientError::Closed),
            Err(_) => Err(ClientError::Timeout(REPLY_TIMEOUT)),
        }
    }

    /// States at `rate_hz` (0 = server default). A later call for the same
    /// robot replaces the stream.
    pub async fn subscribe_state(
        &self,
        robot_id: u16,
        rate_hz: u16,
    ) -> Result<mpsc::Receiver<RobotState>, ClientError> {
        let (tx, rx) = mpsc::channel(STATE_BUFFER);
        self.inner
            .routes
            .lock()
            .unwrap()
            .state_subs
            .insert(robot_id, tx);
        let msg = Message::SubscribeState {
            mode: SubscribeMode::Subscribe,
            rate_hz,
        };
        self.send(robot_id, &msg).await?;
        Ok(rx)
    }

    pub async fn unsubscribe_state(&self, robot_id: u16) -> Result<(), ClientError> {
        self.inner
            .routes
            .lock()
            .unwrap()
            .state_subs
            .remove(&robot_id);
        let msg = Message::SubscribeState {
            mode: SubscribeMode::Unsubscribe,
            rate_hz: 0,
        };
        self.send(robot_id, &msg).await
    }

    /// Errors the server sent without a matching request, oldest first.
    pub fn take_unsolicited(&self) -> Vec<UnsolicitedError> {
        std::mem::take(&mut self.inner.routes.lock().unwrap().unsolicited)
    }

    pub fn is_closed(&self) -> bool {
        self.inner.routes.lock().unwrap().closed
    }

    /// A topic name not used before by this client.
    pub fn fresh_topic(&self, prefix: &str) -> String {
        format!(
            "{prefix}-{}",
            self.inner.topic_seq.fetch_add(1, Ordering::Relaxed)
        )
    }

    pub async fn close(self) {
        let _ = self.inner.writer.lock().await.shutdown().await;
        self.reader.abort();
    }
}

async fn read_loop(mut rd: tokio::net::tcp::OwnedReadHalf, inner: Arc<Inner>) {
    let mut decoder = FrameDecoder::new();
    let mut buf = vec![0u8; 64 * 1024];
    loop {
        match rd.read(&mut buf).await {
            Ok(0) | Err(_) => break,
            Ok(n) => decoder.push(&buf[..n]),
        }
        while let Some(item) = decoder.next_frame() {
            let Ok(frame) = item else { continue };
            let Ok(msg) = Message::from_frame(&frame) else {
                continue;
            };
            dispatch(&inner, frame.robot_id, msg);
        }
    }
    let mut r = inner.routes.lock().unwrap();
    r.closed = true;
    for (_, p) in r.pending.drain() {
        match p {
            Pending::Execute { reply, .. } => drop(reply.send(Err(ClientError::Closed))),
            Pending::Plain(reply) => drop(reply.send(Err(ClientError::Closed))),
        }
    }
    r.statuses.clear();
    r.state_subs.clear();
    r.once.clear();
}

fn dispatch(inner: &Inner, robot_id: u16, msg: Message) {
    let mut r = inner.routes.lock().unwrap();
    match msg {
        Message::Ack { correlation, value } => match r.pending.remove(&correlation) {
            Some(Pending::Execute { robot, reply }) => {
                let (tx, rx) = mpsc::unbounded_channel();
                r.statuses.insert((robot, value), tx);
                let _ = reply.send(Ok((value, rx)));
            }
            Some(Pending::Plain(reply)) => {
                let _ = reply.send(Ok(value));
            }
            None => {}
        },
        Message::Error {
            correlation,
            code,
            message,
        } => {
            let err = || ClientError::Server {
                code,
                message: message.clone(),
            };
            match r.pending.remove(&correlation) {
                Some(Pending::Execute { reply, .. }) => drop(reply.send(Err(err()))),
                Some(Pending::Plain(reply)) => drop(reply.send(Err(err()))),
                None => {
                    if code == ErrorCode::UnknownRobot {
                        for tx in r.once.remove(&robot_id).unwrap_or_default() {
                            let _ = tx.send(Err(err()));
                        }
                    }
                    r.unsolicited.push(UnsolicitedError {
                        robot_id,
                        code,
                        message,
                    });
                }
            }
        }
        Message::SkillStatus(s) => {
            let key = (robot_id, s.skill_id);
            let terminal = s.phase.is_terminal();
            if let Some(tx) = r.statuses.get(&key) {
                let _ = tx.send(s);
            }
            if terminal {
                r.statuses.remove(&key);
            }
        }
        Message::RobotState(s) => {
            if let Some(tx) = r.once.get_mut(&robot_id).and_then(VecDeque::pop_front) {
                let _ = tx.send(Ok(s));
            } else if let Some(tx) = r.state_subs.get(&robot_id) {
                // A full buffer means the reader fell behind; skip the frame.
                let _ = tx.try_send(s);
            }
        }
        _ => {}
    }
}
