//! One TCP connection speaking the framed protocol.

use std::sync::Arc;

use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::tcp::OwnedWriteHalf;
use tokio::net::TcpStream;
use tokio::sync::{mpsc, watch, Mutex, Notify};
use tracing::{debug, warn};

use skillstack_core::control::SubmitError;
use skillstack_core::protocol::{
    ErrorCode, Frame, FrameDecoder, FrameError, Message, MessageError, MessageType, SubscribeMode,
};

use crate::config::normalize_rate;
use crate::robot::{OpError, Outbound, OutboundTx, RobotRuntime, StateSub};
use crate::Robots;

type SubList = Arc<Mutex<Vec<(u16, Arc<StateSub>)>>>;

pub(crate) struct Session {
    robots: Arc<Robots>,
    default_rate: u32,
    out: OutboundTx,
    notify: Arc<Notify>,
    subs: SubList,
}

fn error(correlation: u32, code: ErrorCode, message: impl Into<String>) -> Message {
    Message::Error {
        correlation,
        code,
        message: message.into(),
    }
}

/// Correlation id of a request whose body did not decode, when it has one.
fn salvage_correlation(frame: &Frame) -> u32 {
    let has_corr = matches!(
        frame.kind(),
        Some(MessageType::ExecuteSkill | MessageType::SafetyReconfig | MessageType::InjectWrench)
    );
    match (has_corr, frame.payload.get(..4)) {
        (true, Some(b)) => u32::from_le_bytes([b[0], b[1], b[2], b[3]]),
        _ => 0,
    }
}

pub(crate) async fn run(
    stream: TcpStream,
    robots: Arc<Robots>,
    default_rate: u32,
    mut shutdown: watch::Receiver<bool>,
) {
    let peer = stream.peer_addr().ok();
    let _ = stream.set_nodelay(true);
    let (mut rd, wr) = stream.into_split();
    let (out, out_rx) = mpsc::unbounded_channel();
    let notify = Arc::new(Notify::new());
    let subs: SubList = Arc::default();
    let writer = tokio::spawn(write_loop(wr, out_rx, notify.clone(), subs.clone()));
    let mut session = Session {
        robots,
        default_rate,
        out,
        notify,
        subs,
    };

    let mut decoder = FrameDecoder::new();
    let mut buf = vec![0u8; 64 * 1024];
    let closed_by_server = loop {
        tokio::select! {
            r = rd.read(&mut buf) => match r {
                Ok(0) | Err(_) => break false,
                Ok(n) => {
                    decoder.push(&buf[..n]);
                    while let Some(item) = decoder.next_frame() {
                        match item {
                            Ok(frame) => session.handle(frame).await,
                            Err(e) => session.frame_error(e),
                        }
                    }
                }
            },
            _ = crate::stopped(&mut shutdown) => break true,
        }
    };
    debug!(?peer, closed_by_server, "session ending");
    session.unsubscribe_all().await;
    drop(session);
    if closed_by_server {
        // Pending statuses go out before the socket closes.
        let _ = writer.await;
    } else {
        writer.abort();
    }
}

async fn write_loop(
    mut wr: OwnedWriteHalf,
    mut rx: mpsc::UnboundedReceiver<Outbound>,
    notify: Arc<Notify>,
    subs: SubList,
) {
    let mut frames = Vec::new();
    loop {
        let open = tokio::select! {
            biased;
            m = rx.recv() => match m {
                Some(m) => {
                    frames.push(m);
                    true
                }
                None => false,
            },
            _ = notify.notified() => true,
        };
        while let Ok(m) = rx.try_recv() {
            frames.push(m);
        }
        for (robot, sub) in subs.lock().await.iter() {
            while let Some(s) = sub.queue.pop() {
                frames.push((*robot, Message::RobotState(s)));
            }
        }
        let mut bytes = Vec::new();
        for (robot, msg) in frames.drain(..) {
            match msg.to_frame(robot) {
                Ok(f) => bytes.extend_from_slice(&f),
                Err(e) => warn!(%e, "dropping unencodable frame"),
            }
        }
        if !bytes.is_empty() && wr.write_all(&bytes).await.is_err() {
            return;
        }
        if !open {
            let _ = wr.flush().await;
            let _ = wr.shutdown().await;
            return;
        }
    }
}

impl Session {
    fn reply(&self, robot: u16, msg: Message) {
        let _ = self.out.send((robot, msg));
    }

    fn frame_error(&self, e: FrameError) {
        let (code, text) = match e {
            FrameError::BadMagic { .. } => return,
            FrameError::BadCrc { .. } => (ErrorCode::BadCrc, e.to_string()),
            FrameError::Oversize(_) => (ErrorCode::Oversize, e.to_string()),
            FrameError::Truncated(_) | FrameError::BadVersion(_) => {
                (ErrorCode::Malformed, e.to_string())
            }
        };
        self.reply(0, error(0, code, text));
    }

    fn robot(&self, id: u16) -> Option<&Arc<RobotRuntime>> {
        self.robots.get(id)
    }

    async fn handle(&mut self, frame: Frame) {
        let rid = frame.robot_id;
        let msg = match Message::from_frame(&frame) {
            Ok(m) => m,
            Err(MessageError::UnknownType(t)) => {
                return self.reply(
                    rid,
                    error(
                        0,
                        ErrorCode::UnknownType,
                        format!("unknown message type {t:#04x}"),
                    ),
                );
            }
            Err(MessageError::Decode(e)) => {
                return self.reply(
                    rid,
                    error(
                        salvage_correlation(&frame),
                        ErrorCode::Malformed,
                        e.to_string(),
                    ),
                );
            }
        };
        let correlation = match &msg {
            Message::ExecuteSkill { correlation, .. }
            | Message::SafetyReconfig { correlation, .. }
            | Message::InjectWrench { correlation, .. } => *correlation,
            Message::PreemptSkill { correlation, .. } => correlation.unwrap_or(0),
            _ => 0,
        };
        let Some(robot) = self.robot(rid).cloned() else {
            return self.reply(
                rid,
                error(
                    correlation,
                    ErrorCode::UnknownRobot,
                    format!("no robot with id {rid}"),
                ),
            );
        };
        match msg {
            Message::ExecuteSkill { correlation, spec } => {
                if let Err(e) = robot.submit(spec, Some((&self.out, correlation))) {
                    let code = match e {
                        SubmitError::Busy => ErrorCode::Busy,
                        SubmitError::Invalid(_) => ErrorCode::Invalid,
                        SubmitError::MailboxFull => ErrorCode::MailboxFull,
                    };
                    self.reply(rid, error(correlation, code, e.to_string()));
                }
            }
            Message::PreemptSkill {
                skill_id,
                correlation,
            } => {
                let r = robot.preempt(skill_id);
                if let Some(c) = correlation {
                    self.reply(rid, op_reply(c, r.map(|()| skill_id.unwrap_or(0))));
                }
            }
            Message::Sensor(update) => {
                if let Err(e) = robot.sensor(update) {
                    self.reply(rid, op_reply(0, Err(e)));
                }
            }
            Message::SubscribeState { mode, rate_hz } => match mode {
                SubscribeMode::Once => self.reply(rid, Message::RobotState(robot.state())),
                SubscribeMode::Subscribe => {
                    self.unsubscribe(rid).await;
                    let rate = normalize_rate(u32::from(rate_hz), self.default_rate);
                    let sub = robot.subscribe(rate, self.notify.clone());
                    self.subs.lock().await.push((rid, sub));
                }
                SubscribeMode::Unsubscribe => self.unsubscribe(rid).await,
            },
            Message::SafetyReconfig {
                correlation,
                config,
            } => {
                self.reply(
                    rid,
                    op_reply(correlation, robot.reconfigure_safety(config).map(|()| 0)),
                );
            }
            Message::InjectWrench {
                correlation,
                wrench,
                duration,
            } => {
                let r = robot.inject_wrench(wrench, duration).map(|t| t as u32);
                self.reply(rid, op_reply(correlation, r));
            }
            Message::SkillStatus(_)
            | Message::RobotState(_)
            | Message::Ack { .. }
            | Message::Error { .. } => {
                self.reply(
                    rid,
                    error(
                        0,
                        ErrorCode::Invalid,
                        "message type is sent by the server only",
                    ),
                );
            }
        }
    }

    async fn unsubscribe(&self, rid: u16) {
        let mut subs = self.subs.lock().await;
        subs.retain(|(r, sub)| {
            if *r == rid {
                if let Some(robot) = self.robots.get(rid) {
                    robot.unsubscribe(sub);
                }
                false
            } else {
                true
            }
        });
    }

    async fn unsubscribe_all(&self) {
        for (rid, sub) in self.subs.lock().await.drain(..) {
            if let Some(robot) = self.robots.get(rid) {
                robot.unsubscribe(&sub);
            }
        }
    }
}

fn op_reply(correlation: u32, r: Result<u32, OpError>) -> Message {
    match r {
        Ok(value) => Message::Ack { correlation, value },
        Err(e) => {
            let code = match e {
                OpError::MailboxFull | OpError::Stopped => ErrorCode::MailboxFull,
                OpError::Invalid(_) => ErrorCode::Invalid,
            };
            error(correlation, code, e.to_string())
        }
    }
}
