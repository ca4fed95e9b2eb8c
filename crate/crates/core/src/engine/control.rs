//! Control protocol messages, server-side validation and the parameter mailbox.
//!
//! Client to engine (JSON text):
//!
//! ```json
//! {"type":"set_param","name":"S","value":10}
//! {"type":"bypass","on":true}
//! {"type":"get_state"}
//! ```
//!
//! Engine to client: `ack`, `state`, `telemetry` and `error` objects.
//! Unknown fields are ignored.

use crossbeam_channel::{Receiver, Sender, TrySendError};
use serde::Serialize;
use serde_json::{json, Value};

use crate::cdr::{EnhancerParams, Estimator};
use crate::engine::telemetry::Telemetry;
use crate::gain::GainRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamName {
    S,
    Lambda,
    Mu,
    GMin,
}

impl ParamName {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "S" => Some(Self::S),
            "lambda" => Some(Self::Lambda),
            "mu" => Some(Self::Mu),
            "g_min" => Some(Self::GMin),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::S => "S",
            Self::Lambda => "lambda",
            Self::Mu => "mu",
            Self::GMin => "g_min",
        }
    }

    /// Accepts values inside the live-control bounds.
    pub fn check(self, value: f64) -> Result<(), String> {
        let ok = value.is_finite()
            && match self {
                Self::S => (0.01..=1000.0).contains(&value),
                Self::Lambda => (0.0..=0.999).contains(&value),
                Self::Mu => value > 0.0 && value <= 2.0,
                Self::GMin => value > 0.0 && value <= 1.0,
            };
        if ok {
            Ok(())
        } else {
            let range = match self {
                Self::S => "[0.01, 1000]",
                Self::Lambda => "[0, 0.999]",
                Self::Mu => "(0, 2]",
                Self::GMin => "(0, 1]",
            };
            Err(format!("{} = {value} outside {range}", self.as_str()))
        }
    }

    pub fn apply(self, params: &mut EnhancerParams, value: f64) {
        match self {
            Self::S => params.s = value,
            Self::Lambda => params.lambda = value,
            Self::Mu => params.mu = value,
            Self::GMin => params.g_min = value,
        }
    }

    pub fn get(self, params: &EnhancerParams) -> f64 {
        match self {
            Self::S => params.s,
            Self::Lambda => params.lambda,
            Self::Mu => params.mu,
            Self::GMin => params.g_min,
        }
    }
}

/// A validated change for the audio path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlCommand {
    SetParam(ParamName, f64),
    Bypass(bool),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClientMessage {
    SetParam { name: ParamName, value: f64 },
    Bypass { on: bool },
    GetState,
}

impl ClientMessage {
    /// Parses and validates one text frame; `Err` carries the reply message.
    pub fn parse(text: &str) -> Result<Self, String> {
        let v: Value = serde_json::from_str(text).map_err(|e| format!("malformed JSON: {e}"))?;
        let obj = v.as_object().ok_or("message must be a JSON object")?;
        let ty = obj.get("type").and_then(Value::as_str).ok_or("missing string field 'type'")?;
        match ty {
            "set_param" => {
                let name = obj.get("name").and_then(Value::as_str).ok_or("set_param needs a string 'name'")?;
                let name = ParamName::parse(name).ok_or_else(|| format!("unknown parameter '{name}'"))?;
                let value = obj.get("value").and_then(Value::as_f64).ok_or("set_param needs a numeric 'value'")?;
                name.check(value)?;
                Ok(Self::SetParam { name, value })
            }
            "bypass" => {
                let on = obj.get("on").and_then(Value::as_bool).ok_or("bypass needs a boolean 'on'")?;
                Ok(Self::Bypass { on })
            }
            "get_state" => Ok(Self::GetState),
            other => Err(format!("unknown message type '{other}'")),
        }
    }
}

/// Full parameter snapshot as reported by `state` replies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EngineState {
    #[serde(flatten)]
    pub params: EnhancerParams,
    pub bypass: bool,
    pub estimator: Estimator,
    pub gain_rule: GainRule,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ServerMessage {
    Ack { name: &'static str, value: Value },
    State(EngineState),
    Telemetry(Box<Telemetry>),
    Error { msg: String },
}

impl ServerMessage {
    pub fn to_json(&self) -> Value {
        match self {
            Self::Ack { name, value } => json!({"type": "ack", "name": name, "value": value}),
            Self::State(state) => tagged("state", state),
            Self::Telemetry(t) => tagged("telemetry", t),
            Self::Error { msg } => json!({"type": "error", "msg": msg}),
        }
    }

    pub fn to_text(&self) -> String {
        self.to_json().to_string()
    }
}

fn tagged<T: Serialize>(ty: &str, body: &T) -> Value {
    let mut v = serde_json::to_value(body).expect("plain data serializes");
    v.as_object_mut().expect("struct serializes to an object").insert("type".into(), ty.into());
    v
}

/// Control-side copy of the engine parameters.
///
/// The control thread is the only producer of commands, so after every
/// accepted message this copy matches what the audio path applies at its
/// next frame boundary.
#[derive(Debug, Clone)]
pub struct ControlState {
    state: EngineState,
}

impl ControlState {
    pub fn new(state: EngineState) -> Self {
        Self { state }
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    /// Handles one client text frame, returning the reply and the command to
    /// forward to the audio path, if any.
    pub fn handle_text(&mut self, text: &str) -> (ServerMessage, Option<ControlCommand>) {
        match ClientMessage::parse(text) {
            Err(msg) => (ServerMessage::Error { msg }, None),
            Ok(ClientMessage::GetState) => (ServerMessage::State(self.state), None),
            Ok(ClientMessage::SetParam { name, value }) => {
                name.apply(&mut self.state.params, value);
                (
                    ServerMessage::Ack { name: name.as_str(), value: value.into() },
                    Some(ControlCommand::SetParam(name, value)),
                )
            }
            Ok(ClientMessage::Bypass { on }) => {
                self.state.bypass = on;
                (ServerMessage::Ack { name: "bypass", value: on.into() }, Some(ControlCommand::Bypass(on)))
            }
        }
    }
}

/// Producer side of the parameter mailbox.
#[derive(Debug, Clone)]
pub struct ControlSender(Sender<ControlCommand>);

/// Consumer side, drained by the audio path once per frame.
#[derive(Debug)]
pub struct ControlReceiver(Receiver<ControlCommand>);

pub fn mailbox(capacity: usize) -> (ControlSender, ControlReceiver) {
    let (tx, rx) = crossbeam_channel::bounded(capacity);
    (ControlSender(tx), ControlReceiver(rx))
}

impl ControlSender {
    /// Queues a command without blocking. Returns `false` if the mailbox is full.
    pub fn send(&self, cmd: ControlCommand) -> bool {
        !matches!(self.0.try_send(cmd), Err(TrySendError::Full(_)))
    }
}

impl ControlReceiver {
    pub fn try_recv(&self) -> Option<ControlCommand> {
        self.0.try_recv().ok()
    }
}

/// Bounded telemetry queue; a full queue drops records instead of blocking.
#[derive(Debug, Clone)]
pub struct TelemetrySender(Sender<Telemetry>);

pub type TelemetryReceiver = Receiver<Telemetry>;

pub fn telemetry_queue(capacity: usize) -> (TelemetrySender, TelemetryReceiver) {
    let (tx, rx) = crossbeam_channel::bounded(capacity);
    (TelemetrySender(tx), rx)
}

impl TelemetrySender {
    /// Returns `false` when the record was dropped.
    pub fn offer(&self, t: &Telemetry) -> bool {
        self.0.try_send(*t).is_ok()
    }
}
