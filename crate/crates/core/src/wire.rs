//! JSON text frames exchanged with the tabletop UI over a websocket.
//!
//! Client frames are objects `{"type", "id"?, "ts"?, "body"}` where `id` is
//! an optional correlation number echoed in the matching `ack` or `error`.
//! Server frames are `{"type", "seq", "ts", "body"}` where `seq` is the
//! session's last journaled event when the frame was produced.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::mortgage::{MixEdit, MortgageMix};
use crate::notes::Stroke;
use crate::session::{summarize, render, CaseSummary, Payload, RenderEntry, RenderState, SessionState, UiAction};
use crate::tracker::{MarkerId, ObjectKind};

pub const PROTOCOL_VERSION: &str = "lp/1";
/// A full snapshot replaces deltas at least this often (in events).
pub const SNAPSHOT_INTERVAL: u64 = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "body", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello {
        protocol: String,
        #[serde(default)]
        session: Option<String>,
    },
    PlaceObject {
        marker: MarkerId,
        kind: ObjectKind,
        x: f64,
        y: f64,
        #[serde(default)]
        theta_deg: f64,
    },
    MoveObject {
        marker: MarkerId,
        x: f64,
        y: f64,
        #[serde(default)]
        theta_deg: Option<f64>,
    },
    RemoveObject {
        marker: MarkerId,
    },
    DialRotate {
        degrees: f64,
        #[serde(default)]
        marker: Option<MarkerId>,
    },
    ClickLabel {
        marker: MarkerId,
        label: String,
    },
    SetDialFocus {
        marker: MarkerId,
        field: String,
    },
    PenStrokeBatch {
        sheet: MarkerId,
        strokes: Vec<Stroke>,
    },
    LoadScenario {
        name: String,
    },
    EditMix {
        marker: MarkerId,
        edit: MixEdit,
    },
    SetMix {
        marker: MarkerId,
        mix: MortgageMix,
    },
    RequestSnapshot,
}

pub const CLIENT_TYPES: [&str; 12] = [
    "hello",
    "place_object",
    "move_object",
    "remove_object",
    "dial_rotate",
    "click_label",
    "set_dial_focus",
    "pen_stroke_batch",
    "load_scenario",
    "edit_mix",
    "set_mix",
    "request_snapshot",
];

impl ClientMessage {
    /// The session action this message maps to directly, if any.
    pub fn ui_payload(&self) -> Option<Payload> {
        let action = match self.clone() {
            ClientMessage::ClickLabel { marker, label } => UiAction::ClickLabel { marker, label },
            ClientMessage::SetDialFocus { marker, field } => UiAction::SetDialFocus { marker, field },
            ClientMessage::PenStrokeBatch { sheet, strokes } => UiAction::PenStrokeBatch { sheet, strokes },
            ClientMessage::LoadScenario { name } => UiAction::LoadScenario { name },
            ClientMessage::EditMix { marker, edit } => UiAction::EditMix { marker, edit },
            ClientMessage::SetMix { marker, mix } => UiAction::SetMix { marker, mix },
            _ => return None,
        };
        Some(Payload::Ui { action })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    MalformedFrame,
    UnknownType,
    VersionMismatch,
    HandshakeRequired,
    InvalidAction,
    Conservation,
    UnknownObject,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub render: RenderState,
    pub summary: CaseSummary,
}

impl Snapshot {
    pub fn of(state: &SessionState) -> Self {
        Self {
            render: render(state),
            summary: summarize(state),
        }
    }

    pub fn seq(&self) -> Option<u64> {
        self.render.seq
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub base_seq: Option<u64>,
    pub seq: Option<u64>,
    /// New or changed entries.
    pub upserts: Vec<RenderEntry>,
    /// Markers whose entry is gone (object left the table).
    pub removals: Vec<MarkerId>,
    pub blank_papers: Vec<crate::session::BlankPaper>,
    pub dial_focus: Option<crate::session::DialFocus>,
    pub summary: CaseSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "body", rename_all = "snake_case")]
pub enum ServerMessage {
    Welcome {
        session_id: String,
        protocol: String,
    },
    StateSnapshot(Snapshot),
    StateDelta(Delta),
    /// `seq` is the last event journaled for the request; `seqs` lists
    /// every event it produced, derived ones included.
    Ack {
        request: Option<u64>,
        seq: Option<u64>,
        seqs: Vec<u64>,
    },
    Error {
        request: Option<u64>,
        code: ErrorCode,
        message: String,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WireError {
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("unknown message type `{0}`")]
    UnknownType(String),
    #[error("protocol `{got}` is not supported (expected {expected})")]
    VersionMismatch { expected: String, got: String },
    #[error("delta based on seq {base:?} cannot apply to snapshot at {have:?}")]
    BaseMismatch { base: Option<u64>, have: Option<u64> },
}

impl WireError {
    pub fn code(&self) -> ErrorCode {
        match self {
            WireError::MalformedFrame(_) | WireError::BaseMismatch { .. } => ErrorCode::MalformedFrame,
            WireError::UnknownType(_) => ErrorCode::UnknownType,
            WireError::VersionMismatch { .. } => ErrorCode::VersionMismatch,
        }
    }
}

/// A decoded client frame and its correlation id.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientFrame {
    pub id: Option<u64>,
    pub ts: Option<u64>,
    pub message: ClientMessage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerFrame {
    pub seq: Option<u64>,
    pub ts: u64,
    pub message: ServerMessage,
}

fn optional_u64(obj: &mut Map<String, Value>, key: &str) -> Result<Option<u64>, WireError> {
    match obj.remove(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Number(n)) if n.as_u64().is_some() => Ok(n.as_u64()),
        Some(_) => Err(WireError::MalformedFrame(format!("`{key}` must be a non-negative integer"))),
    }
}

/// Decodes a client frame in two steps: the envelope first, so that an
/// unknown `type` is told apart from a malformed body.
pub fn decode_client(text: &str) -> Result<ClientFrame, WireError> {
    let value: Value = serde_json::from_str(text).map_err(|e| WireError::MalformedFrame(e.to_string()))?;
    let Value::Object(mut obj) = value else {
        return Err(WireError::MalformedFrame("frame is not a JSON object".into()));
    };
    let kind = match obj.get("type") {
        Some(Value::String(t)) => t.clone(),
        _ => return Err(WireError::MalformedFrame("missing string field `type`".into())),
    };
    if !CLIENT_TYPES.contains(&kind.as_str()) {
        return Err(WireError::UnknownType(kind));
    }
    let id = optional_u64(&mut obj, "id")?;
    let ts = optional_u64(&mut obj, "ts")?;
    let mut tagged = Map::new();
    tagged.insert("type".into(), Value::String(kind.clone()));
    // `request_snapshot` carries no body; anything sent with it is ignored.
    if kind != "request_snapshot" {
        let body = obj.remove("body").filter(|b| !b.is_null());
        tagged.insert("body".into(), body.unwrap_or_else(|| Value::Object(Map::new())));
    }
    let message: ClientMessage = serde_json::from_value(Value::Object(tagged))
        .map_err(|e| WireError::MalformedFrame(format!("{kind}: {e}")))?;
    if let ClientMessage::Hello { protocol, .. } = &message {
        if protocol != PROTOCOL_VERSION {
            return Err(WireError::VersionMismatch {
                expected: PROTOCOL_VERSION.into(),
                got: protocol.clone(),
            });
        }
    }
    Ok(ClientFrame { id, ts, message })
}

pub fn encode_client(frame: &ClientFrame) -> String {
    let mut value = serde_json::to_value(&frame.message).expect("client messages serialize");
    if let Value::Object(obj) = &mut value {
        if let Some(id) = frame.id {
            obj.insert("id".into(), Value::from(id));
        }
        if let Some(ts) = frame.ts {
            obj.insert("ts".into(), Value::from(ts));
        }
    }
    value.to_string()
}

pub fn encode_server(frame: &ServerFrame) -> String {
    let mut value = serde_json::to_value(&frame.message).expect("server messages serialize");
    if let Value::Object(obj) = &mut value {
        obj.insert("seq".into(), serde_json::to_value(frame.seq).expect("seq serializes"));
        obj.insert("ts".into(), Value::from(frame.ts));
    }
    value.to_string()
}

pub fn decode_server(text: &str) -> Result<ServerFrame, WireError> {
    let value: Value = serde_json::from_str(text).map_err(|e| WireError::MalformedFrame(e.to_string()))?;
    let Value::Object(mut obj) = value else {
        return Err(WireError::MalformedFrame("frame is not a JSON object".into()));
    };
    let seq = optional_u64(&mut obj, "seq")?;
    let ts = optional_u64(&mut obj, "ts")?.unwrap_or(0);
    let message = serde_json::from_value(Value::Object(obj)).map_err(|e| WireError::MalformedFrame(e.to_string()))?;
    Ok(ServerFrame { seq, ts, message })
}

/// Changes that turn `prev` into `next`.
pub fn diff(prev: &Snapshot, next: &Snapshot) -> Delta {
    let upserts = next
        .render
        .entries
        .iter()
        .filter(|e| prev.render.entry(&e.marker) != Some(*e))
        .cloned()
        .collect();
    let removals = prev
        .render
        .entries
        .iter()
        .filter(|e| next.render.entry(&e.marker).is_none())
        .map(|e| e.marker.clone())
        .collect();
    Delta {
        base_seq: prev.seq(),
        seq: next.seq(),
        upserts,
        removals,
        blank_papers: next.render.blank_papers.clone(),
        dial_focus: next.render.dial_focus.clone(),
        summary: next.summary.clone(),
    }
}

pub fn apply_delta(base: &Snapshot, delta: &Delta) -> Result<Snapshot, WireError> {
    if delta.base_seq != base.seq() {
        return Err(WireError::BaseMismatch {
            base: delta.base_seq,
            have: base.seq(),
        });
    }
    let mut entries: Vec<RenderEntry> = base
        .render
        .entries
        .iter()
        .filter(|e| !delta.removals.contains(&e.marker) && !delta.upserts.iter().any(|u| u.marker == e.marker))
        .cloned()
        .collect();
    entries.extend(delta.upserts.iter().cloned());
    entries.sort_by(|a, b| a.marker.cmp(&b.marker));
    Ok(Snapshot {
        render: RenderState {
            seq: delta.seq,
            entries,
            blank_papers: delta.blank_papers.clone(),
            dial_focus: delta.dial_focus.clone(),
        },
        summary: delta.summary.clone(),
    })
}

/// Turns a stream of session snapshots into wire updates: deltas, with a
/// full snapshot first and then every [`SNAPSHOT_INTERVAL`] events.
#[derive(Debug, Default)]
pub struct Publisher {
    last: Option<Snapshot>,
    last_full: Option<u64>,
}

impl Publisher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn publish(&mut self, next: Snapshot) -> ServerMessage {
        let seq = next.seq().unwrap_or(0);
        let due = match self.last_full {
            None => true,
            Some(full) => seq.saturating_sub(full) >= SNAPSHOT_INTERVAL,
        };
        let message = match (&self.last, due) {
            (Some(prev), false) => ServerMessage::StateDelta(diff(prev, &next)),
            _ => {
                self.last_full = Some(seq);
                ServerMessage::StateSnapshot(next.clone())
            }
        };
        self.last = Some(next);
        message
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_distinguishes_failures() {
        assert!(matches!(decode_client("{nope"), Err(WireError::MalformedFrame(_))));
        assert!(matches!(decode_client("[1]"), Err(WireError::MalformedFrame(_))));
        assert!(matches!(decode_client(r#"{"body":{}}"#), Err(WireError::MalformedFrame(_))));
        assert_eq!(
            decode_client(r#"{"type":"teleport","body":{}}"#),
            Err(WireError::UnknownType("teleport".into()))
        );
        assert!(matches!(
            decode_client(r#"{"type":"click_label","body":{"marker":"P1"}}"#),
            Err(WireError::MalformedFrame(m)) if m.contains("label")
        ));
        assert!(matches!(
            decode_client(r#"{"type":"hello","body":{"protocol":"lp/0"}}"#),
            Err(WireError::VersionMismatch { .. })
        ));
    }

    #[test]
    fn decode_accepts_valid_frames() {
        let f = decode_client(r#"{"type":"request_snapshot","id":4}"#).unwrap();
        assert_eq!(f.id, Some(4));
        assert_eq!(f.message, ClientMessage::RequestSnapshot);
        let f = decode_client(r#"{"type":"dial_rotate","body":{"degrees":47}}"#).unwrap();
        assert_eq!(f.message, ClientMessage::DialRotate { degrees: 47.0, marker: None });
        let m = ClientMessage::PlaceObject {
            marker: MarkerId::new("H1"),
            kind: ObjectKind::HouseToken,
            x: 400.0,
            y: 300.0,
            theta_deg: 0.0,
        };
        let frame = ClientFrame {
            id: Some(9),
            ts: None,
            message: m,
        };
        assert_eq!(decode_client(&encode_client(&frame)).unwrap(), frame);
    }

    #[test]
    fn every_client_type_is_listed() {
        let samples = [
            ClientMessage::Hello { protocol: PROTOCOL_VERSION.into(), session: None },
            ClientMessage::RemoveObject { marker: MarkerId::new("a") },
            ClientMessage::LoadScenario { name: "empty".into() },
            ClientMessage::RequestSnapshot,
        ];
        for m in samples {
            let v = serde_json::to_value(&m).unwrap();
            assert!(CLIENT_TYPES.contains(&v["type"].as_str().unwrap()));
        }
    }

    #[test]
    fn publisher_starts_with_snapshot() {
        let mut p = Publisher::new();
        let s = Snapshot::of(&SessionState::default());
        assert!(matches!(p.publish(s.clone()), ServerMessage::StateSnapshot(_)));
        assert!(matches!(p.publish(s), ServerMessage::StateDelta(_)));
    }
}
