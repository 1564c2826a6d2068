//! Text wire format between the simulator and its clients.
//!
//! One JSON object per line (or per websocket text frame), always carrying a
//! `type` tag. Client messages additionally carry a per-connection `seq`.
//!
//! ```text
//! {"type":"hand","seq":7,"position":{"x":0.1,"y":0.0,"z":1.3},"flex_raw":0.0,"timestamp":0.14}
//! {"type":"recalibrate","seq":8}
//! {"type":"telemetry","tick":12,"drone":{...},"object":{...},"pattern":{...},"stage":"Approach","goal":{...},...}
//! ```

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::haptics::{PatternId, TactileFrame};
use crate::mission::MissionStage;
use crate::trial::TrialPhase;
use crate::types::{DroneState, HandSample, TargetObject, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InboundKind {
    Hand(HandSample),
    Recalibrate,
    Release,
    StartMission,
    StartTrial { seed: u64, reps: usize },
    TrialAnswer { pattern: PatternId },
    /// Request the single operator role for this connection.
    ClaimOperator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InboundMsg {
    pub seq: u64,
    pub kind: InboundKind,
}

impl InboundMsg {
    pub fn new(seq: u64, kind: InboundKind) -> Self {
        Self { seq, kind }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialStatus {
    pub index: usize,
    pub total: usize,
    pub state: TrialPhase,
}

/// Per-tick world snapshot broadcast to every subscriber.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutboundMsg {
    pub tick: u64,
    pub drone: DroneState,
    pub object: TargetObject,
    pub pattern: TactileFrame,
    pub stage: MissionStage,
    pub goal: Vec3,
    /// Set when the object lies behind the drone, where no cue exists.
    #[serde(default)]
    pub object_behind: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial: Option<TrialStatus>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMsg {
    Telemetry(OutboundMsg),
    Role { operator: bool },
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("malformed message: {0}")]
    Syntax(String),
    #[error("message must be a JSON object")]
    NotObject,
    #[error("field `{field}`: {message}")]
    Field { field: String, message: String },
}

impl DecodeError {
    fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        DecodeError::Field { field: field.into(), message: message.into() }
    }

    /// Name of the offending field, when known.
    pub fn field_name(&self) -> Option<&str> {
        match self {
            DecodeError::Field { field, .. } => Some(field),
            _ => None,
        }
    }
}

fn parse_object(line: &str) -> Result<serde_json::Map<String, Value>, DecodeError> {
    match serde_json::from_str::<Value>(line) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(DecodeError::NotObject),
        Err(e) => Err(DecodeError::Syntax(e.to_string())),
    }
}

fn deserialize_value<T: for<'de> Deserialize<'de>>(value: Value) -> Result<T, DecodeError> {
    serde_path_to_error::deserialize(value).map_err(|err| {
        let path = err.path().to_string();
        let message = err.inner().to_string();
        // Missing fields are reported at the parent; pull the name out of the message.
        let missing = message.strip_prefix("missing field `").and_then(|rest| rest.split('`').next());
        let field = match (path.as_str(), missing) {
            (".", Some(name)) => name.to_string(),
            (parent, Some(name)) => format!("{parent}.{name}"),
            (".", None) => "type".to_string(),
            (other, None) => other.to_string(),
        };
        DecodeError::field(field, message)
    })
}

/// Rewrites `{"type": t, ...rest}` as `{t: rest}` (or the bare string `t`
/// when there is no payload) and decodes it through an externally tagged
/// mirror enum. Internally tagged enums buffer their input and lose field
/// paths; external tagging keeps them.
fn decode_retagged<M, T>(mut map: serde_json::Map<String, Value>) -> Result<T, DecodeError>
where
    M: for<'de> Deserialize<'de> + Into<T>,
{
    let tag = match map.remove("type") {
        Some(Value::String(tag)) => tag,
        Some(_) => return Err(DecodeError::field("type", "must be a string")),
        None => return Err(DecodeError::field("type", "missing field `type`")),
    };
    let value = if map.is_empty() {
        Value::String(tag.clone())
    } else {
        let mut outer = serde_json::Map::new();
        outer.insert(tag.clone(), Value::Object(map));
        Value::Object(outer)
    };
    let mirror: M = deserialize_value(value).map_err(|e| match e {
        DecodeError::Field { field, message } => {
            let prefix = format!("{tag}.");
            let field = match field.strip_prefix(&prefix) {
                Some(inner) => inner.to_string(),
                None if field == tag => "type".to_string(),
                None => field,
            };
            DecodeError::Field { field, message }
        }
        other => other,
    })?;
    Ok(mirror.into())
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum InboundMirror {
    Hand(HandSample),
    Recalibrate,
    Release,
    StartMission,
    StartTrial { seed: u64, reps: usize },
    TrialAnswer { pattern: PatternId },
    ClaimOperator,
}

impl From<InboundMirror> for InboundKind {
    fn from(m: InboundMirror) -> Self {
        match m {
            InboundMirror::Hand(h) => InboundKind::Hand(h),
            InboundMirror::Recalibrate => InboundKind::Recalibrate,
            InboundMirror::Release => InboundKind::Release,
            InboundMirror::StartMission => InboundKind::StartMission,
            InboundMirror::StartTrial { seed, reps } => InboundKind::StartTrial { seed, reps },
            InboundMirror::TrialAnswer { pattern } => InboundKind::TrialAnswer { pattern },
            InboundMirror::ClaimOperator => InboundKind::ClaimOperator,
        }
    }
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum ServerMirror {
    Telemetry(OutboundMsg),
    Role { operator: bool },
    Error { message: String },
}

impl From<ServerMirror> for ServerMsg {
    fn from(m: ServerMirror) -> Self {
        match m {
            ServerMirror::Telemetry(t) => ServerMsg::Telemetry(t),
            ServerMirror::Role { operator } => ServerMsg::Role { operator },
            ServerMirror::Error { message } => ServerMsg::Error { message },
        }
    }
}

fn check_hand(hand: &HandSample) -> Result<(), DecodeError> {
    for (field, v) in [
        ("position.x", hand.position.x),
        ("position.y", hand.position.y),
        ("position.z", hand.position.z),
        ("timestamp", hand.timestamp),
    ] {
        if !v.is_finite() {
            return Err(DecodeError::field(field, "must be finite"));
        }
    }
    if !(0.0..=1.0).contains(&hand.flex_raw) {
        return Err(DecodeError::field("flex_raw", format!("{} is outside [0, 1]", hand.flex_raw)));
    }
    Ok(())
}

pub fn encode_inbound(msg: &InboundMsg) -> String {
    let mut value = serde_json::to_value(&msg.kind).expect("inbound kinds serialize");
    if let Value::Object(map) = &mut value {
        map.insert("seq".to_string(), Value::from(msg.seq));
    }
    value.to_string()
}

pub fn decode_inbound(line: &str) -> Result<InboundMsg, DecodeError> {
    let mut map = parse_object(line)?;
    let seq = match map.remove("seq") {
        Some(v) => v.as_u64().ok_or_else(|| DecodeError::field("seq", "must be a non-negative integer"))?,
        None => return Err(DecodeError::field("seq", "missing field `seq`")),
    };
    let kind: InboundKind = decode_retagged::<InboundMirror, _>(map)?;
    if let InboundKind::Hand(hand) = &kind {
        check_hand(hand)?;
    }
    Ok(InboundMsg { seq, kind })
}

pub fn encode_server(msg: &ServerMsg) -> String {
    serde_json::to_string(msg).expect("server messages serialize")
}

pub fn decode_server(line: &str) -> Result<ServerMsg, DecodeError> {
    decode_retagged::<ServerMirror, _>(parse_object(line)?)
}

/// Drops inbound messages whose `seq` does not strictly increase.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SeqFilter {
    last: Option<u64>,
    dropped: u64,
}

impl SeqFilter {
    pub fn new() -> Self {
        Self::default()
    }

    /// True if the message should be processed.
    pub fn accept(&mut self, seq: u64) -> bool {
        match self.last {
            Some(last) if seq <= last => {
                self.dropped += 1;
                false
            }
            _ => {
                self.last = Some(seq);
                true
            }
        }
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}
