//! Per-connection protocol handling shared by the TCP and WebSocket transports.

use std::sync::Arc;

use holo_core::protocol::{
    self, Body, ErrorPayload, Event, Hello, Message, ProtocolError, SeqCheck, SeqTracker, PROTOCOL_VERSION,
};
use holo_core::session::Input;
use tokio::sync::{broadcast, mpsc, watch};

use crate::hub::{HubClosed, HubHandle};

/// Longest accepted line, terminator excluded.
pub const MAX_LINE: usize = 1 << 20;

pub(crate) fn error_body(code: &str, message: impl Into<String>, path: Option<String>) -> Body {
    Body::Error(ErrorPayload { code: code.into(), message: message.into(), path })
}

pub(crate) fn protocol_error_body(e: &ProtocolError) -> Body {
    let (code, path) = match e {
        ProtocolError::UnencodableValue(p) => ("unencodable_value", Some(p.clone())),
        ProtocolError::MalformedFrame(_) => ("malformed_frame", None),
        ProtocolError::UnknownType(_) => ("unknown_type", None),
        ProtocolError::SchemaViolation { path, .. } => ("schema_violation", Some(path.clone())),
    };
    error_body(code, e.to_string(), path)
}

/// What to do after one inbound line.
#[derive(Debug, Default)]
pub(crate) struct LineOutcome {
    pub replies: Vec<Body>,
    pub close: bool,
}

/// Inbound state of one peer.
pub(crate) struct Connection {
    hub: HubHandle,
    seq: SeqTracker,
    /// Server clock minus peer clock, once the peer said hello with a clock.
    offset_us: Option<i64>,
}

impl Connection {
    pub fn new(hub: HubHandle) -> Connection {
        Connection { hub, seq: SeqTracker::default(), offset_us: None }
    }

    pub async fn handle_line(&mut self, line: &[u8]) -> Result<LineOutcome, HubClosed> {
        let mut out = LineOutcome::default();
        let content = line.strip_suffix(b"\n").unwrap_or(line);
        let content = content.strip_suffix(b"\r").unwrap_or(content);
        if content.len() > MAX_LINE {
            out.replies.push(error_body("malformed_frame", format!("line exceeds {MAX_LINE} bytes"), None));
            out.close = true;
            return Ok(out);
        }
        let msg = match protocol::decode(line) {
            Ok(m) => m,
            Err(e) => {
                tracing::debug!(error = %e, "rejected line");
                out.replies.push(protocol_error_body(&e));
                return Ok(out);
            }
        };
        match self.seq.observe(msg.seq) {
            SeqCheck::InOrder => {}
            SeqCheck::Gap { expected, got } => {
                tracing::debug!(expected, got, "sequence gap");
                self.hub.report(Event::SeqGap { expected, got }).await?;
            }
            SeqCheck::Regressed { last, got } => {
                out.replies.push(error_body(
                    "seq_regressed",
                    format!("seq {got} is not greater than {last}"),
                    Some("seq".into()),
                ));
                return Ok(out);
            }
        }
        match msg.body {
            Body::Hello(h) => {
                if h.version != PROTOCOL_VERSION {
                    out.replies.push(error_body(
                        "version_mismatch",
                        format!("server speaks version {PROTOCOL_VERSION}, peer sent {}", h.version),
                        Some("payload.version".into()),
                    ));
                    out.close = true;
                    return Ok(out);
                }
                let now = self.hub.now_us();
                if let Some(peer) = h.clock_us {
                    self.offset_us = Some(now.saturating_sub(peer));
                }
                out.replies.push(Body::Hello(Hello {
                    version: PROTOCOL_VERSION,
                    client: Some("holo-server".into()),
                    clock_us: Some(now),
                }));
            }
            Body::PoseUpdate(mut pose) => {
                if let Some(off) = self.offset_us {
                    pose.timestamp_us = pose.timestamp_us.saturating_add(off);
                }
                self.hub.submit(Input::Pose(pose)).await?;
            }
            Body::Command(c) => self.hub.submit(Input::Command(c)).await?,
            other => {
                out.replies.push(error_body(
                    "unexpected_type",
                    format!("{} messages are only sent by the server", other.message_type().as_str()),
                    Some("type".into()),
                ));
            }
        }
        Ok(out)
    }
}

/// Outbound state of one peer: stamps a per-connection sequence number.
pub(crate) struct Outbox {
    next_seq: u64,
}

impl Outbox {
    pub fn new() -> Outbox {
        Outbox { next_seq: 1 }
    }

    pub fn encode(&mut self, body: Body) -> Option<String> {
        let msg = Message::new(self.next_seq, body);
        self.next_seq += 1;
        match protocol::encode_str(&msg) {
            Ok(s) => Some(s),
            Err(e) => {
                tracing::warn!(error = %e, "dropping unencodable outbound message");
                None
            }
        }
    }

    /// Messages dropped because the peer fell behind still consume numbers,
    /// so the peer sees the loss as a gap.
    pub fn skip(&mut self, n: u64) {
        self.next_seq += n;
    }
}

pub(crate) enum Outgoing {
    Line(String),
    Closed,
}

/// Waits for the next line to send to the peer: a direct reply first, then
/// broadcast traffic. `Closed` means the connection should end.
pub(crate) async fn next_outgoing(
    outbox: &mut Outbox,
    replies: &mut mpsc::Receiver<Body>,
    feed: &mut broadcast::Receiver<Arc<Body>>,
    shutdown: &mut watch::Receiver<bool>,
) -> Outgoing {
    loop {
        let body = tokio::select! {
            biased;
            _ = shutdown.changed() => return Outgoing::Closed,
            r = replies.recv() => match r {
                Some(b) => b,
                None => return Outgoing::Closed,
            },
            f = feed.recv() => match f {
                Ok(b) => (*b).clone(),
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    tracing::debug!(dropped = n, "slow peer; dropped oldest messages");
                    outbox.skip(n);
                    continue;
                }
                Err(broadcast::error::RecvError::Closed) => return Outgoing::Closed,
            },
        };
        if let Some(line) = outbox.encode(body) {
            return Outgoing::Line(line);
        }
    }
}
