//! Line-delimited JSON session protocol.
//!
//! Every message is one UTF-8 JSON object followed by `\n`:
//! `{"payload":{...},"seq":N,"type":"..."}`. Keys are sorted at every level so
//! the encoding of a message is unique.

mod finite;
mod payload;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::tracking::Pose;

pub use payload::{Command, ErrorPayload, Event, EventRecord, Hello, Snapshot, Tool};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("unencodable value: {0}")]
    UnencodableValue(String),
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("unknown message type {0:?}")]
    UnknownType(String),
    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageType {
    PoseUpdate,
    Command,
    StateSnapshot,
    Event,
    Hello,
    Error,
}

impl MessageType {
    pub const ALL: [MessageType; 6] = [
        MessageType::PoseUpdate,
        MessageType::Command,
        MessageType::StateSnapshot,
        MessageType::Event,
        MessageType::Hello,
        MessageType::Error,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MessageType::PoseUpdate => "pose_update",
            MessageType::Command => "command",
            MessageType::StateSnapshot => "state_snapshot",
            MessageType::Event => "event",
            MessageType::Hello => "hello",
            MessageType::Error => "error",
        }
    }

    pub fn parse(s: &str) -> Option<MessageType> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    PoseUpdate(Pose),
    Command(Command),
    StateSnapshot(Box<Snapshot>),
    Event(EventRecord),
    Hello(Hello),
    Error(ErrorPayload),
}

impl Body {
    pub fn message_type(&self) -> MessageType {
        match self {
            Body::PoseUpdate(_) => MessageType::PoseUpdate,
            Body::Command(_) => MessageType::Command,
            Body::StateSnapshot(_) => MessageType::StateSnapshot,
            Body::Event(_) => MessageType::Event,
            Body::Hello(_) => MessageType::Hello,
            Body::Error(_) => MessageType::Error,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub seq: u64,
    pub body: Body,
}

impl Message {
    pub fn new(seq: u64, body: Body) -> Message {
        Message { seq, body }
    }

    pub fn message_type(&self) -> MessageType {
        self.body.message_type()
    }
}

fn payload_value<T: Serialize>(v: &T) -> Result<Value, ProtocolError> {
    finite::check(v).map_err(|e| ProtocolError::UnencodableValue(format!("payload.{}", e.0)))?;
    serde_json::to_value(v).map_err(|e| ProtocolError::UnencodableValue(e.to_string()))
}

/// Canonical wire form of `msg` as a JSON value.
pub fn to_value(msg: &Message) -> Result<Value, ProtocolError> {
    let payload = match &msg.body {
        Body::PoseUpdate(p) => payload_value(p)?,
        Body::Command(c) => payload_value(c)?,
        Body::StateSnapshot(s) => payload_value(s.as_ref())?,
        Body::Event(e) => payload_value(e)?,
        Body::Hello(h) => payload_value(h)?,
        Body::Error(e) => payload_value(e)?,
    };
    let mut obj = Map::new();
    obj.insert("payload".into(), payload);
    obj.insert("seq".into(), Value::from(msg.seq));
    obj.insert("type".into(), Value::from(msg.message_type().as_str()));
    Ok(Value::Object(obj))
}

/// Encodes one message as a single newline-terminated line.
pub fn encode(msg: &Message) -> Result<Vec<u8>, ProtocolError> {
    let mut line = encode_str(msg)?.into_bytes();
    line.push(b'\n');
    Ok(line)
}

/// The encoded line without its terminator.
pub fn encode_str(msg: &Message) -> Result<String, ProtocolError> {
    let v = to_value(msg)?;
    Ok(v.to_string())
}

fn typed<T: DeserializeOwned>(payload: Value) -> Result<T, ProtocolError> {
    serde_path_to_error::deserialize(payload).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." { "payload".to_string() } else { format!("payload.{inner}") };
        ProtocolError::SchemaViolation { path, message: e.into_inner().to_string() }
    })
}

fn violation(path: &str, message: &str) -> ProtocolError {
    ProtocolError::SchemaViolation { path: path.into(), message: message.into() }
}

/// Parses and validates one line. A single trailing `\n` (or `\r\n`) is allowed.
pub fn decode(line: &[u8]) -> Result<Message, ProtocolError> {
    let line = line.strip_suffix(b"\n").unwrap_or(line);
    let line = line.strip_suffix(b"\r").unwrap_or(line);
    if line.contains(&b'\n') {
        return Err(ProtocolError::MalformedFrame("interior newline".into()));
    }
    let text = std::str::from_utf8(line).map_err(|e| ProtocolError::MalformedFrame(e.to_string()))?;
    let value: Value = serde_json::from_str(text).map_err(|e| ProtocolError::MalformedFrame(e.to_string()))?;
    decode_value(value)
}

/// Validates an already-parsed JSON message.
pub fn decode_value(value: Value) -> Result<Message, ProtocolError> {
    let Value::Object(mut obj) = value else {
        return Err(ProtocolError::MalformedFrame("message is not a JSON object".into()));
    };
    let ty = match obj.get("type") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(violation("type", "expected a string")),
        None => return Err(violation("type", "missing field")),
    };
    let ty = MessageType::parse(&ty).ok_or(ProtocolError::UnknownType(ty))?;
    let seq = match obj.get("seq") {
        Some(v) => v.as_u64().ok_or_else(|| violation("seq", "expected a non-negative integer"))?,
        None => return Err(violation("seq", "missing field")),
    };
    let payload = obj.remove("payload").ok_or_else(|| violation("payload", "missing field"))?;
    if !payload.is_object() {
        return Err(violation("payload", "expected an object"));
    }
    let body = match ty {
        MessageType::PoseUpdate => {
            let pose: Pose = typed(payload)?;
            if !pose.orientation.is_unit() {
                return Err(violation("payload.orientation", "quaternion must have unit norm"));
            }
            Body::PoseUpdate(pose)
        }
        MessageType::Command => Body::Command(typed(payload)?),
        MessageType::StateSnapshot => Body::StateSnapshot(Box::new(typed(payload)?)),
        MessageType::Event => Body::Event(typed(payload)?),
        MessageType::Hello => Body::Hello(typed(payload)?),
        MessageType::Error => Body::Error(typed(payload)?),
    };
    Ok(Message { seq, body })
}

/// Per-connection sequence bookkeeping.
#[derive(Debug, Clone, Default)]
pub struct SeqTracker {
    last: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeqCheck {
    InOrder,
    /// Messages were skipped; the message is still accepted.
    Gap { expected: u64, got: u64 },
    /// Not strictly increasing; the message must be rejected.
    Regressed { last: u64, got: u64 },
}

impl SeqTracker {
    pub fn observe(&mut self, seq: u64) -> SeqCheck {
        match self.last {
            Some(last) if seq <= last => SeqCheck::Regressed { last, got: seq },
            Some(last) if seq != last + 1 => {
                self.last = Some(seq);
                SeqCheck::Gap { expected: last + 1, got: seq }
            }
            _ => {
                self.last = Some(seq);
                SeqCheck::InOrder
            }
        }
    }
}
