//! Wire messages, schema version 1. One JSON document per WebSocket text
//! message. See `docs/protocol.md`.

use pursuit_core::{Mode, MetricsReport, Simulation, TraceRow};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateView {
    /// `[x, y, vx, vy]`.
    pub mean: [f64; 4],
    pub valid: bool,
}

/// Metrics over the session so far. Undefined values are `null`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsView {
    pub initialization_time: Option<f64>,
    pub pct_time_in_fov: f64,
    pub mean_sdf: Option<f64>,
    pub max_relocate_time: f64,
    pub n_collisions: usize,
    pub min_obstacle_dist: Option<f64>,
}

impl From<&MetricsReport> for MetricsView {
    fn from(m: &MetricsReport) -> Self {
        let finite = |x: f64| x.is_finite().then_some(x);
        Self {
            initialization_time: m.initialization_time,
            pct_time_in_fov: m.pct_time_in_fov,
            mean_sdf: finite(m.mean_sdf),
            max_relocate_time: m.max_relocate_time,
            n_collisions: m.n_collisions,
            min_obstacle_dist: finite(m.min_obstacle_dist),
        }
    }
}

/// Server to client: the state at one control tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub v: u32,
    pub seq: u64,
    pub t: f64,
    pub pursuer: [f64; 3],
    pub evader: [f64; 2],
    pub estimate: EstimateView,
    pub fov: Vec<[f64; 2]>,
    pub h: f64,
    pub path: Vec<[f64; 3]>,
    pub metrics: MetricsView,
}

impl Frame {
    /// Frame for the most recent tick of `sim`, or `None` before the first.
    pub fn latest(sim: &Simulation, seq: u64) -> Option<Self> {
        let row: &TraceRow = sim.trace().rows.last()?;
        Some(Self {
            v: PROTOCOL_VERSION,
            seq,
            t: row.t,
            pursuer: row.pursuer,
            evader: row.evader,
            estimate: EstimateView {
                mean: row.estimate,
                valid: row.estimate_valid,
            },
            fov: fov_ring(sim),
            h: row.h,
            path: sim.plan_path().iter().map(|s| s.to_array()).collect(),
            metrics: MetricsView::from(&sim.metrics()),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("frame serialises")
    }
}

/// Apex then ray endpoints; empty for a blind pursuer.
fn fov_ring(sim: &Simulation) -> Vec<[f64; 2]> {
    let poly = sim.fov_polygon();
    if poly.vertices.is_empty() {
        return Vec::new();
    }
    std::iter::once(&poly.apex)
        .chain(&poly.vertices)
        .map(|p| [p.x, p.y])
        .collect()
}

/// Client to server.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Command {
    EvaderVelocity([f64; 2]),
    Pause,
    Resume,
    /// Restart at `t = 0`; also resumes a paused session.
    Reset,
    SetMode(Mode),
}

impl Command {
    pub fn kind(&self) -> &'static str {
        match self {
            Command::EvaderVelocity(_) => "evader_velocity",
            Command::Pause => "pause",
            Command::Resume => "resume",
            Command::Reset => "reset",
            Command::SetMode(_) => "set_mode",
        }
    }

    pub fn to_json(&self) -> String {
        let payload = match self {
            Command::EvaderVelocity(v) => serde_json::json!(v),
            Command::SetMode(m) => serde_json::json!(m.to_string()),
            _ => Value::Null,
        };
        serde_json::json!({ "v": PROTOCOL_VERSION, "kind": self.kind(), "payload": payload }).to_string()
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unsupported protocol version {0} (expected 1)")]
    Version(u32),
    #[error("unknown command kind `{0}`")]
    UnknownKind(String),
    #[error("bad payload for `{kind}`: {reason}")]
    Payload { kind: String, reason: String },
}

#[derive(Deserialize)]
struct RawCommand {
    v: u32,
    kind: String,
    #[serde(default)]
    payload: Value,
}

pub fn parse_command(text: &str) -> Result<Command, ProtocolError> {
    let raw: RawCommand = serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    if raw.v != PROTOCOL_VERSION {
        return Err(ProtocolError::Version(raw.v));
    }
    let bad = |reason: &str| ProtocolError::Payload {
        kind: raw.kind.clone(),
        reason: reason.into(),
    };
    match raw.kind.as_str() {
        "evader_velocity" => {
            let v: [f64; 2] =
                serde_json::from_value(raw.payload.clone()).map_err(|_| bad("expected [vx, vy]"))?;
            if !v.iter().all(|c| c.is_finite()) {
                return Err(bad("velocity must be finite"));
            }
            Ok(Command::EvaderVelocity(v))
        }
        "set_mode" => {
            let s = raw.payload.as_str().ok_or_else(|| bad("expected a mode name"))?;
            s.parse::<Mode>().map(Command::SetMode).map_err(|e| bad(&e))
        }
        "pause" => Ok(Command::Pause),
        "resume" => Ok(Command::Resume),
        "reset" => Ok(Command::Reset),
        other => Err(ProtocolError::UnknownKind(other.to_string())),
    }
}

/// Server to client replies to commands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reply {
    /// The command will show in frame `seq + 2` at the latest.
    Ack { v: u32, command: String, seq: u64 },
    Error { v: u32, message: String },
}

impl Reply {
    pub fn ack(command: &Command, seq: u64) -> Self {
        Reply::Ack {
            v: PROTOCOL_VERSION,
            command: command.kind().to_string(),
            seq,
        }
    }

    pub fn error(e: &ProtocolError) -> Self {
        Reply::Error {
            v: PROTOCOL_VERSION,
            message: e.to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("reply serialises")
    }
}

/// Anything the server sends.
#[derive(Clone, Debug, PartialEq)]
pub enum ServerMessage {
    Frame(Frame),
    Reply(Reply),
}

impl ServerMessage {
    /// Frames carry no `kind` field; replies always do.
    pub fn parse(text: &str) -> Result<Self, ProtocolError> {
        let value: Value = serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        let out = if value.get("kind").is_some() {
            serde_json::from_value(value).map(ServerMessage::Reply)
        } else {
            serde_json::from_value(value).map(ServerMessage::Frame)
        };
        out.map_err(|e| ProtocolError::Malformed(e.to_string()))
    }
}
