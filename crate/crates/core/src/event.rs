//! Session events: the log, persistence and wire unit.
//!
//! JSONL rendering, one event per line:
//! `{"seq":1,"at_ms":0,"kind":"user_chat","cause":null,"data":{...}}`.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agent::PersonaChanges;
use crate::ids::{AgentId, RoomId};
use crate::monitor::{Channel, IdleTrigger};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserChat {
    pub room: RoomId,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserAudio {
    pub agent_id: AgentId,
    pub audio_b64: String,
    pub mime: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrushQueryData {
    /// `[min_x, min_y, max_x, max_y]` in intrinsic video pixels.
    pub region: [i64; 4],
    pub image_b64: String,
    pub question: String,
    pub video_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocEdit {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivityPing {
    pub channel: Channel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoPosition {
    pub video_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewedFeature {
    Notes,
    Profile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureView {
    pub agent_id: AgentId,
    pub feature: ViewedFeature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Customize {
    pub agent_id: AgentId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tone: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interaction_style: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub characteristic: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl Customize {
    pub fn changes(&self) -> PersonaChanges {
        PersonaChanges {
            tone: self.tone.clone(),
            interaction_style: self.interaction_style.clone(),
            characteristic: self.characteristic.clone(),
            name: self.name.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    Audio,
    BrushReply,
    SharedNotes,
    CodeReview,
    ProgressInquiry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentChat {
    pub agent_id: AgentId,
    pub room: RoomId,
    pub text: String,
    pub action: Option<String>,
    pub modality: Modality,
    /// Digest of an attached image or audio clip.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attachment: Option<String>,
    /// Seq of the agent message this one answers, for forwarded replies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_reply_to: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentAudio {
    pub agent_id: AgentId,
    pub text: String,
    pub voice_id: String,
    pub mime: String,
    pub duration_ms: u64,
    pub audio_b64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcription {
    pub agent_id: AgentId,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionChange {
    pub agent_id: AgentId,
    pub action: String,
    pub phase: Option<String>,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedScreenControl {
    pub agent_id: AgentId,
    pub playing: bool,
    pub position_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotesUpdate {
    pub agent_id: AgentId,
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileUpdate {
    pub agent_id: AgentId,
    pub profile: String,
    pub tone: String,
    pub interaction_style: String,
    pub characteristic: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerFired {
    pub trigger: IdleTrigger,
    pub agent_id: Option<AgentId>,
    pub status: TriggerStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageIncrement {
    pub feature: String,
    pub value: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemNotice {
    pub room: RoomId,
    pub text: String,
}

/// Placeholder for agent output suppressed in baseline mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gated {
    pub suppressed: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TickSource {
    Scheduler,
    Monitor,
    Forwarding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tick {
    pub source: TickSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_id: Option<AgentId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum EventPayload {
    // perceive
    UserChat(UserChat),
    UserAudio(UserAudio),
    BrushQuery(BrushQueryData),
    NotesEdit(DocEdit),
    CodeEdit(DocEdit),
    ActivityPing(ActivityPing),
    VideoPosition(VideoPosition),
    FeatureView(FeatureView),
    Customize(Customize),
    // act
    AgentChat(AgentChat),
    AgentAudio(AgentAudio),
    Transcription(Transcription),
    ActionChange(ActionChange),
    SharedScreenControl(SharedScreenControl),
    NotesUpdate(NotesUpdate),
    ProfileUpdate(ProfileUpdate),
    TriggerFired(TriggerFired),
    UsageIncrement(UsageIncrement),
    SystemNotice(SystemNotice),
    Gated(Gated),
    Tick(Tick),
}

impl EventPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            EventPayload::UserChat(_) => "user_chat",
            EventPayload::UserAudio(_) => "user_audio",
            EventPayload::BrushQuery(_) => "brush_query",
            EventPayload::NotesEdit(_) => "notes_edit",
            EventPayload::CodeEdit(_) => "code_edit",
            EventPayload::ActivityPing(_) => "activity_ping",
            EventPayload::VideoPosition(_) => "video_position",
            EventPayload::FeatureView(_) => "feature_view",
            EventPayload::Customize(_) => "customize",
            EventPayload::AgentChat(_) => "agent_chat",
            EventPayload::AgentAudio(_) => "agent_audio",
            EventPayload::Transcription(_) => "transcription",
            EventPayload::ActionChange(_) => "action_change",
            EventPayload::SharedScreenControl(_) => "shared_screen_control",
            EventPayload::NotesUpdate(_) => "notes_update",
            EventPayload::ProfileUpdate(_) => "profile_update",
            EventPayload::TriggerFired(_) => "trigger_fired",
            EventPayload::UsageIncrement(_) => "usage_increment",
            EventPayload::SystemNotice(_) => "system_notice",
            EventPayload::Gated(_) => "gated",
            EventPayload::Tick(_) => "tick",
        }
    }

    /// User input, as opposed to engine output.
    pub fn is_perceive(&self) -> bool {
        matches!(
            self,
            EventPayload::UserChat(_)
                | EventPayload::UserAudio(_)
                | EventPayload::BrushQuery(_)
                | EventPayload::NotesEdit(_)
                | EventPayload::CodeEdit(_)
                | EventPayload::ActivityPing(_)
                | EventPayload::VideoPosition(_)
                | EventPayload::FeatureView(_)
                | EventPayload::Customize(_)
        )
    }

    /// Output authored by a co-learner, suppressed in baseline mode. Passive
    /// action changes and shared-screen control are presence, not authorship.
    pub fn is_agent_authored(&self) -> bool {
        match self {
            EventPayload::AgentChat(_)
            | EventPayload::AgentAudio(_)
            | EventPayload::Transcription(_)
            | EventPayload::NotesUpdate(_)
            | EventPayload::ProfileUpdate(_)
            | EventPayload::TriggerFired(_) => true,
            EventPayload::ActionChange(change) => change.phase.is_some(),
            _ => false,
        }
    }

    /// Parses a perceive payload from its wire form `{"kind": ..., "data": {...}}`.
    pub fn from_wire(value: Value) -> Result<Self, EventError> {
        let payload: EventPayload =
            serde_json::from_value(value).map_err(|e| EventError::Invalid(e.to_string()))?;
        if !payload.is_perceive() {
            return Err(EventError::NotPerceive(payload.kind().to_string()));
        }
        Ok(payload)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionEvent {
    pub seq: u64,
    pub at_ms: u64,
    pub cause: Option<u64>,
    pub payload: EventPayload,
}

#[derive(Serialize, Deserialize)]
struct Record {
    seq: u64,
    at_ms: u64,
    kind: String,
    cause: Option<u64>,
    data: Value,
}

#[derive(Debug, Error)]
pub enum EventError {
    #[error("invalid event: {0}")]
    Invalid(String),
    #[error("`{0}` is not an input event kind")]
    NotPerceive(String),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl SessionEvent {
    pub fn kind(&self) -> &'static str {
        self.payload.kind()
    }

    pub fn to_value(&self) -> Value {
        let mut tagged = serde_json::to_value(&self.payload).expect("payloads serialize");
        let data = tagged
            .get_mut("data")
            .map(Value::take)
            .unwrap_or_else(|| Value::Object(Default::default()));
        serde_json::to_value(Record {
            seq: self.seq,
            at_ms: self.at_ms,
            kind: self.kind().to_string(),
            cause: self.cause,
            data,
        })
        .expect("records serialize")
    }

    pub fn to_json_line(&self) -> String {
        let record = Record {
            seq: self.seq,
            at_ms: self.at_ms,
            kind: self.kind().to_string(),
            cause: self.cause,
            data: self.to_value()["data"].take(),
        };
        serde_json::to_string(&record).expect("records serialize")
    }

    pub fn from_value(value: Value) -> Result<Self, EventError> {
        let record: Record = serde_json::from_value(value).map_err(|e| EventError::Invalid(e.to_string()))?;
        let payload = serde_json::from_value(serde_json::json!({
            "kind": record.kind,
            "data": record.data,
        }))
        .map_err(|e| EventError::Invalid(e.to_string()))?;
        Ok(Self {
            seq: record.seq,
            at_ms: record.at_ms,
            cause: record.cause,
            payload,
        })
    }
}

pub fn write_jsonl<W: Write>(events: &[SessionEvent], mut out: W) -> io::Result<()> {
    for event in events {
        out.write_all(event.to_json_line().as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<SessionEvent>, EventError> {
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| EventError::Line {
            line: i + 1,
            message: e.to_string(),
        })?;
        events.push(SessionEvent::from_value(value).map_err(|e| EventError::Line {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn chat() -> SessionEvent {
        SessionEvent {
            seq: 1,
            at_ms: 250,
            cause: None,
            payload: EventPayload::UserChat(UserChat {
                room: RoomId::Group,
                text: "hello".into(),
            }),
        }
    }

    #[test]
    fn jsonl_field_order_is_fixed() {
        assert_eq!(
            chat().to_json_line(),
            r#"{"seq":1,"at_ms":250,"kind":"user_chat","cause":null,"data":{"room":"group","text":"hello"}}"#
        );
    }

    #[test]
    fn round_trips_through_jsonl() {
        let events = vec![
            chat(),
            SessionEvent {
                seq: 2,
                at_ms: 300,
                cause: Some(1),
                payload: EventPayload::ActionChange(ActionChange {
                    agent_id: AgentId::from_index(2),
                    action: "explaining".into(),
                    phase: Some("starting".into()),
                    duration_ms: 1000,
                }),
            },
        ];
        let mut buf = Vec::new();
        write_jsonl(&events, &mut buf).unwrap();
        assert_eq!(read_jsonl(buf.as_slice()).unwrap(), events);
    }

    #[test]
    fn wire_ingress_accepts_only_perceive_kinds() {
        let ok = EventPayload::from_wire(json!({"kind": "activity_ping", "data": {"channel": "code"}}));
        assert!(matches!(ok, Ok(EventPayload::ActivityPing(_))));
        let act = EventPayload::from_wire(json!({
            "kind": "system_notice", "data": {"room": "group", "text": "x"}
        }));
        assert!(matches!(act, Err(EventError::NotPerceive(_))));
    }

    #[test]
    fn wire_errors_name_the_field() {
        let err = EventPayload::from_wire(json!({"kind": "user_chat", "data": {"room": "group"}}))
            .unwrap_err()
            .to_string();
        assert!(err.contains("text"), "{err}");
        let err = EventPayload::from_wire(json!({
            "kind": "user_chat", "data": {"room": "group", "text": "x", "colour": 1}
        }))
        .unwrap_err()
        .to_string();
        assert!(err.contains("colour"), "{err}");
    }

    #[test]
    fn customize_carries_changes() {
        let p = EventPayload::from_wire(json!({
            "kind": "customize", "data": {"agent_id": "agent-1", "tone": "casual"}
        }))
        .unwrap();
        match p {
            EventPayload::Customize(c) => assert_eq!(c.changes().tone.as_deref(), Some("casual")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_line_reports_line_number() {
        let input = format!("{}\nnot json\n", chat().to_json_line());
        match read_jsonl(input.as_bytes()) {
            Err(EventError::Line { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
