//! The session aggregate: agents, rooms, documents, usage and the event log.
//!
//! Every mutation happens through [`Session::accept`], [`Session::dispatch`]
//! or [`Session::advance`], driven by a host-supplied clock in milliseconds
//! since session start. Scheduled work (action boundaries, idle triggers,
//! agent-to-agent forwarding) is processed in due-time order, so the log does
//! not depend on how often the host calls `advance`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use base64::Engine as _;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::agent::{AgentError, CoLearner, Generation, Persona};
use crate::config::{ConfigError, Mode, SessionConfig};
use crate::event::{
    ActionChange, EventPayload, Gated, Modality, SessionEvent, SharedScreenControl, Tick, TickSource,
    UsageIncrement,
};
use crate::ids::{AgentId, RoomId};
use crate::monitor::{ActivityTrack, Channel};
use crate::provider::{ProviderError, SharedProvider};
use crate::rng::{derive_rng, short_digest, SessionRng};
use crate::scheduler::{ActionState, Transition};
use crate::transcript::{parse_transcript, Transcript, TranscriptError};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error("cannot create co-learner: {0}")]
    Agent(#[from] AgentError),
    #[error("cannot build provider: {0}")]
    Provider(#[from] ProviderError),
    #[error("unknown co-learner `{0}`")]
    UnknownAgent(AgentId),
    #[error("{field}: {message}")]
    Invalid { field: &'static str, message: String },
    #[error("event at {at_ms} ms precedes the session clock ({clock_ms} ms)")]
    ClockRegression { at_ms: u64, clock_ms: u64 },
    #[error("`{0}` is not a user input event")]
    NotPerceive(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("no event with seq {0}")]
    UnknownSeq(u64),
}

impl SessionError {
    pub(crate) fn invalid(field: &'static str, message: impl Into<String>) -> Self {
        SessionError::Invalid {
            field,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sender {
    User,
    Agent(AgentId),
}

impl fmt::Display for Sender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sender::User => f.write_str("user"),
            Sender::Agent(id) => id.fmt(f),
        }
    }
}

impl Serialize for Sender {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Sender {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        if s == "user" {
            return Ok(Sender::User);
        }
        s.parse().map(Sender::Agent).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub seq: u64,
    pub sender: Sender,
    pub text: String,
    pub at_ms: u64,
    pub modality: Modality,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attachment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRoom {
    pub id: RoomId,
    pub messages: Vec<ChatMessage>,
}

impl ChatRoom {
    fn new(id: RoomId) -> Self {
        Self {
            id,
            messages: Vec::new(),
        }
    }

    /// Private rooms take only the user and their own co-learner.
    pub fn admits(&self, sender: Sender) -> bool {
        match (self.id, sender) {
            (_, Sender::User) | (RoomId::Group, _) => true,
            (RoomId::Private(owner), Sender::Agent(agent)) => owner == agent,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub text: String,
    pub last_edit_ms: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Feature {
    Notes,
    Chat,
    Brush,
    Audio,
    Profile,
    Customization,
}

impl Feature {
    pub const ALL: [Feature; 6] = [
        Feature::Notes,
        Feature::Chat,
        Feature::Brush,
        Feature::Audio,
        Feature::Profile,
        Feature::Customization,
    ];

    /// Name of the counter this feature increments.
    pub fn counter_name(self) -> &'static str {
        match self {
            Feature::Notes => "notes_views",
            Feature::Chat => "chat_messages",
            Feature::Brush => "brush_uses",
            Feature::Audio => "audio_uses",
            Feature::Profile => "profile_views",
            Feature::Customization => "customization_changes",
        }
    }
}

impl FromStr for Feature {
    type Err = SessionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Feature::ALL
            .into_iter()
            .find(|f| {
                let name = f.counter_name();
                s == name || name.split('_').next() == Some(s)
            })
            .ok_or_else(|| SessionError::UnknownFeature(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageCounters {
    pub notes_views: u64,
    pub chat_messages: u64,
    pub brush_uses: u64,
    pub audio_uses: u64,
    pub profile_views: u64,
    pub customization_changes: u64,
}

impl UsageCounters {
    pub fn get(&self, feature: Feature) -> u64 {
        match feature {
            Feature::Notes => self.notes_views,
            Feature::Chat => self.chat_messages,
            Feature::Brush => self.brush_uses,
            Feature::Audio => self.audio_uses,
            Feature::Profile => self.profile_views,
            Feature::Customization => self.customization_changes,
        }
    }

    fn bump(&mut self, feature: Feature) -> u64 {
        let slot = match feature {
            Feature::Notes => &mut self.notes_views,
            Feature::Chat => &mut self.chat_messages,
            Feature::Brush => &mut self.brush_uses,
            Feature::Audio => &mut self.audio_uses,
            Feature::Profile => &mut self.profile_views,
            Feature::Customization => &mut self.customization_changes,
        };
        *slot += 1;
        *slot
    }
}

/// One co-learner with its action state and scheduler randomness.
#[derive(Debug)]
pub struct AgentSlot {
    pub(crate) learner: CoLearner,
    pub(crate) action: ActionState,
    pub(crate) rng: SessionRng,
}

impl AgentSlot {
    pub fn learner(&self) -> &CoLearner {
        &self.learner
    }

    pub fn action(&self) -> &ActionState {
        &self.action
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenSnapshot {
    pub playing: bool,
    pub position_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub agent_id: AgentId,
    pub persona: Persona,
    pub action: String,
    pub phase: Option<String>,
    pub until_ms: u64,
    pub shared_screen: ScreenSnapshot,
    pub notes: String,
    pub profile: String,
    pub memory_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub session_id: String,
    pub mode: Mode,
    pub clock_ms: u64,
    pub last_seq: u64,
    pub video_ms: u64,
    pub agents: Vec<AgentSnapshot>,
    pub rooms: BTreeMap<RoomId, Vec<ChatMessage>>,
    pub notes_doc: Document,
    pub code_doc: Document,
    pub usage: UsageCounters,
    pub predefined_prompts: Vec<String>,
}

pub struct Session {
    pub(crate) id: String,
    pub(crate) config: SessionConfig,
    pub(crate) transcript: Transcript,
    pub(crate) agents: Vec<AgentSlot>,
    pub(crate) rooms: BTreeMap<RoomId, ChatRoom>,
    pub(crate) notes_doc: Document,
    pub(crate) code_doc: Document,
    pub(crate) log: Vec<SessionEvent>,
    pub(crate) usage: UsageCounters,
    pub(crate) clock_ms: u64,
    pub(crate) video_ms: u64,
    pub(crate) monitor: ActivityTrack,
    pub(crate) forward_due_ms: Option<u64>,
    pub(crate) router_rng: SessionRng,
    pub(crate) provider: SharedProvider,
}

impl fmt::Debug for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Session")
            .field("id", &self.id)
            .field("mode", &self.config.mode)
            .field("agents", &self.agents.len())
            .field("events", &self.log.len())
            .field("clock_ms", &self.clock_ms)
            .finish()
    }
}

/// Creates a session with the provider described by `config`.
pub fn create_session(config: SessionConfig, transcript_text: &str) -> Result<Session, SessionError> {
    Session::create(config, transcript_text)
}

impl Session {
    pub fn create(config: SessionConfig, transcript_text: &str) -> Result<Self, SessionError> {
        config.validate()?;
        let provider = config.provider.build(config.seed)?;
        Self::create_with_provider(config, transcript_text, provider)
    }

    pub fn create_with_provider(
        config: SessionConfig,
        transcript_text: &str,
        provider: SharedProvider,
    ) -> Result<Self, SessionError> {
        config.validate()?;
        let transcript = parse_transcript(transcript_text)?;
        let mut agents = Vec::with_capacity(config.roster.len());
        let mut rooms = BTreeMap::new();
        rooms.insert(RoomId::Group, ChatRoom::new(RoomId::Group));
        for (i, persona) in config.roster.iter().enumerate() {
            let id = AgentId::from_index(i);
            let learner = CoLearner::new(id, persona.clone(), &transcript, config.memory.token_budget)?;
            let mut rng = derive_rng(config.seed, &format!("scheduler/{i}"));
            let action = ActionState::new(&config.scheduler, &mut rng, 0);
            agents.push(AgentSlot { learner, action, rng });
            rooms.insert(RoomId::Private(id), ChatRoom::new(RoomId::Private(id)));
        }
        let mut router_rng = derive_rng(config.seed, "router");
        let forward_due_ms = match config.mode {
            Mode::Full => {
                let [lo, hi] = config.router.forward_interval_ms;
                Some(router_rng.gen_range(lo..=hi))
            }
            Mode::Baseline => None,
        };
        let id = format!(
            "s-{}",
            short_digest(
                format!("{}\n{}", config.seed, transcript.to_webvtt()).as_bytes(),
                12
            )
        );
        Ok(Self {
            id,
            transcript,
            agents,
            rooms,
            notes_doc: Document::default(),
            code_doc: Document::default(),
            log: Vec::new(),
            usage: UsageCounters::default(),
            clock_ms: 0,
            video_ms: 0,
            monitor: ActivityTrack::new(0),
            forward_due_ms,
            router_rng,
            provider,
            config,
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn clock_ms(&self) -> u64 {
        self.clock_ms
    }

    pub fn log(&self) -> &[SessionEvent] {
        &self.log
    }

    pub fn last_seq(&self) -> u64 {
        self.log.len() as u64
    }

    /// Events with seq strictly greater than `seq`.
    pub fn events_after(&self, seq: u64) -> &[SessionEvent] {
        let start = (seq as usize).min(self.log.len());
        &self.log[start..]
    }

    pub fn usage(&self) -> UsageCounters {
        self.usage
    }

    pub fn agents(&self) -> &[AgentSlot] {
        &self.agents
    }

    pub fn agent(&self, id: AgentId) -> Result<&AgentSlot, SessionError> {
        self.agents.get(id.index()).ok_or(SessionError::UnknownAgent(id))
    }

    pub fn room(&self, id: RoomId) -> Option<&ChatRoom> {
        self.rooms.get(&id)
    }

    pub fn rooms(&self) -> impl Iterator<Item = &ChatRoom> {
        self.rooms.values()
    }

    pub fn notes_doc(&self) -> &Document {
        &self.notes_doc
    }

    pub fn code_doc(&self) -> &Document {
        &self.code_doc
    }

    pub fn activity(&self) -> &ActivityTrack {
        &self.monitor
    }

    pub fn next_forward_ms(&self) -> Option<u64> {
        self.forward_due_ms
    }

    pub(crate) fn generation(&self) -> Generation {
        Generation {
            temperature: self.config.provider.temperature,
            max_reply_tokens: self.config.provider.max_reply_tokens,
        }
    }

    pub(crate) fn check_agent(&self, id: AgentId) -> Result<(), SessionError> {
        self.agent(id).map(|_| ())
    }

    /// Appends with the next seq at the current clock. In baseline mode
    /// agent-authored payloads are replaced by a `gated` marker.
    pub fn append_event(&mut self, payload: EventPayload, cause: Option<u64>) -> SessionEvent {
        let payload = if self.config.mode == Mode::Baseline && payload.is_agent_authored() {
            EventPayload::Gated(Gated {
                suppressed: payload.kind().to_string(),
            })
        } else {
            payload
        };
        let event = SessionEvent {
            seq: self.log.len() as u64 + 1,
            at_ms: self.clock_ms,
            cause,
            payload,
        };
        self.log.push(event.clone());
        event
    }

    pub(crate) fn append(&mut self, payload: EventPayload, cause: Option<u64>) -> u64 {
        self.append_event(payload, cause).seq
    }

    pub fn record_usage(&mut self, feature: Feature, cause: Option<u64>) -> UsageCounters {
        let value = self.usage.bump(feature);
        self.append(
            EventPayload::UsageIncrement(UsageIncrement {
                feature: feature.counter_name().to_string(),
                value,
            }),
            cause,
        );
        self.usage
    }

    pub(crate) fn post_message(&mut self, room: RoomId, message: ChatMessage) {
        let chat_room = self
            .rooms
            .get_mut(&room)
            .expect("rooms exist for every roster member");
        debug_assert!(chat_room.admits(message.sender), "room discipline");
        chat_room.messages.push(message);
    }

    pub(crate) fn emit_transitions(
        &mut self,
        agent: AgentId,
        transitions: Vec<Transition>,
        cause: Option<u64>,
    ) {
        for transition in transitions {
            debug_assert_eq!(transition.at_ms(), self.clock_ms);
            let payload = match transition {
                Transition::Action {
                    activity,
                    duration_ms,
                    ..
                } => EventPayload::ActionChange(ActionChange {
                    agent_id: agent,
                    action: activity.action_name().to_string(),
                    phase: activity.phase().map(|p| p.as_str().to_string()),
                    duration_ms,
                }),
                Transition::SharedScreen {
                    playing, position_ms, ..
                } => EventPayload::SharedScreenControl(SharedScreenControl {
                    agent_id: agent,
                    playing,
                    position_ms,
                }),
            };
            self.append(payload, cause);
        }
    }

    /// Validates and logs one user input event, after processing everything
    /// scheduled up to `at_ms`. Returns the assigned seq; routing happens in
    /// [`Session::dispatch`].
    pub fn accept(&mut self, at_ms: u64, payload: EventPayload) -> Result<u64, SessionError> {
        if !payload.is_perceive() {
            return Err(SessionError::NotPerceive(payload.kind().to_string()));
        }
        if at_ms < self.clock_ms {
            return Err(SessionError::ClockRegression {
                at_ms,
                clock_ms: self.clock_ms,
            });
        }
        self.validate_input(&payload)?;
        self.advance(at_ms);
        let seq = self.append(payload.clone(), None);
        self.apply_input(seq, &payload);
        Ok(seq)
    }

    /// Runs the routing for a previously accepted input event.
    pub fn dispatch(&mut self, seq: u64) -> Result<(), SessionError> {
        let event = self
            .log
            .get((seq as usize).wrapping_sub(1))
            .ok_or(SessionError::UnknownSeq(seq))?;
        if !event.payload.is_perceive() {
            return Err(SessionError::NotPerceive(event.kind().to_string()));
        }
        let payload = event.payload.clone();
        self.route(seq, payload);
        Ok(())
    }

    /// `accept` followed by `dispatch`.
    pub fn ingest(&mut self, at_ms: u64, payload: EventPayload) -> Result<u64, SessionError> {
        let seq = self.accept(at_ms, payload)?;
        self.dispatch(seq)?;
        Ok(seq)
    }

    fn apply_input(&mut self, seq: u64, payload: &EventPayload) {
        let at = self.clock_ms;
        let channel = match payload {
            EventPayload::NotesEdit(edit) => {
                self.notes_doc = Document {
                    text: edit.text.clone(),
                    last_edit_ms: Some(at),
                };
                Channel::Notes
            }
            EventPayload::CodeEdit(edit) => {
                self.code_doc = Document {
                    text: edit.text.clone(),
                    last_edit_ms: Some(at),
                };
                Channel::Code
            }
            EventPayload::ActivityPing(ping) => ping.channel,
            EventPayload::VideoPosition(pos) => {
                self.video_ms = pos.video_ms;
                Channel::Mouse
            }
            EventPayload::UserChat(chat) => {
                self.post_message(
                    chat.room,
                    ChatMessage {
                        seq,
                        sender: Sender::User,
                        text: chat.text.clone(),
                        at_ms: at,
                        modality: Modality::Text,
                        attachment: None,
                    },
                );
                Channel::Mouse
            }
            EventPayload::BrushQuery(query) => {
                self.video_ms = query.video_ms;
                Channel::Mouse
            }
            _ => Channel::Mouse,
        };
        self.monitor.observe(channel, at);
    }

    fn validate_input(&self, payload: &EventPayload) -> Result<(), SessionError> {
        match payload {
            EventPayload::UserChat(chat) => {
                if let RoomId::Private(agent) = chat.room {
                    self.check_agent(agent)?;
                }
                if chat.text.trim().is_empty() {
                    return Err(SessionError::invalid("text", "must not be empty"));
                }
            }
            EventPayload::UserAudio(audio) => {
                self.check_agent(audio.agent_id)?;
                let bytes = decode_b64("audio_b64", &audio.audio_b64)?;
                if bytes.is_empty() {
                    return Err(SessionError::invalid("audio_b64", "audio is empty"));
                }
                if audio.mime.trim().is_empty() {
                    return Err(SessionError::invalid("mime", "must not be empty"));
                }
            }
            EventPayload::BrushQuery(query) => {
                crate::router::validate_region(query.region, &self.config.video)?;
                if query.question.trim().is_empty() {
                    return Err(SessionError::invalid("question", "must not be empty"));
                }
                if decode_b64("image_b64", &query.image_b64)?.is_empty() {
                    return Err(SessionError::invalid("image_b64", "image is empty"));
                }
            }
            EventPayload::FeatureView(view) => self.check_agent(view.agent_id)?,
            EventPayload::Customize(custom) => {
                let agent = self.agent(custom.agent_id)?;
                if let Some(name) = &custom.name {
                    if *name != agent.learner.persona().name {
                        return Err(SessionError::invalid(
                            "name",
                            "co-learner names cannot be changed",
                        ));
                    }
                }
                for (field, value) in [
                    ("tone", &custom.tone),
                    ("interaction_style", &custom.interaction_style),
                    ("characteristic", &custom.characteristic),
                ] {
                    if value.as_ref().is_some_and(|v| v.trim().is_empty()) {
                        return Err(SessionError::invalid(field, "must not be empty"));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Processes every scheduled item due at or before `now_ms`, in due-time
    /// order, then moves the clock to `now_ms`. Earlier times are ignored.
    pub fn advance(&mut self, now_ms: u64) {
        if now_ms < self.clock_ms {
            return;
        }
        loop {
            let scheduler_due = self.agents.iter().map(|a| a.action.until_ms()).min();
            let monitor_due = match self.config.mode {
                Mode::Full => self.monitor.next_due(&self.config.idle),
                Mode::Baseline => None,
            };
            let due = [scheduler_due, monitor_due, self.forward_due_ms]
                .into_iter()
                .flatten()
                .min();
            let Some(due) = due.filter(|d| *d <= now_ms) else {
                break;
            };
            self.clock_ms = self.clock_ms.max(due);

            for i in 0..self.agents.len() {
                if self.agents[i].action.until_ms() == due {
                    self.scheduler_step(i, due);
                }
            }
            if monitor_due == Some(due) {
                let tick = self.append(
                    EventPayload::Tick(Tick {
                        source: TickSource::Monitor,
                        agent_id: None,
                    }),
                    None,
                );
                for trigger in self.monitor.tick(&self.config.idle, due) {
                    self.dispatch_trigger(trigger, tick);
                }
            }
            if self.forward_due_ms == Some(due) {
                let tick = self.append(
                    EventPayload::Tick(Tick {
                        source: TickSource::Forwarding,
                        agent_id: None,
                    }),
                    None,
                );
                self.forward_between_agents(tick);
                let [lo, hi] = self.config.router.forward_interval_ms;
                self.forward_due_ms = Some(due + self.router_rng.gen_range(lo..=hi));
            }
        }
        self.clock_ms = now_ms;
    }

    fn scheduler_step(&mut self, index: usize, due: u64) {
        let id = AgentId::from_index(index);
        let tick = self.append(
            EventPayload::Tick(Tick {
                source: TickSource::Scheduler,
                agent_id: Some(id),
            }),
            None,
        );
        let slot = &mut self.agents[index];
        let transitions = slot.action.tick(&self.config.scheduler, &mut slot.rng, due);
        self.emit_transitions(id, transitions, Some(tick));
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        let agents = self
            .agents
            .iter()
            .map(|slot| {
                let activity = slot.action.current();
                AgentSnapshot {
                    agent_id: slot.learner.id(),
                    persona: slot.learner.persona().clone(),
                    action: activity.action_name().to_string(),
                    phase: activity.phase().map(|p| p.as_str().to_string()),
                    until_ms: slot.action.until_ms(),
                    shared_screen: ScreenSnapshot {
                        playing: slot.action.track().is_playing(),
                        position_ms: slot.action.track().position(self.clock_ms),
                    },
                    notes: slot.learner.notes().to_string(),
                    profile: slot.learner.profile().to_string(),
                    memory_tokens: slot.learner.memory().token_estimate(),
                }
            })
            .collect();
        SessionSnapshot {
            session_id: self.id.clone(),
            mode: self.config.mode,
            clock_ms: self.clock_ms,
            last_seq: self.last_seq(),
            video_ms: self.video_ms,
            agents,
            rooms: self
                .rooms
                .iter()
                .map(|(id, room)| (*id, room.messages.clone()))
                .collect(),
            notes_doc: self.notes_doc.clone(),
            code_doc: self.code_doc.clone(),
            usage: self.usage,
            predefined_prompts: self.config.router.predefined_prompts.clone(),
        }
    }

    pub fn export_log<W: Write>(&self, out: W) -> io::Result<()> {
        crate::event::write_jsonl(&self.log, out)
    }

    pub fn export_log_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.export_log(&mut out).expect("writing to memory cannot fail");
        out
    }

    /// Rebuilds a session by feeding the user inputs of `log` back in order.
    pub fn replay(
        config: SessionConfig,
        transcript_text: &str,
        log: &[SessionEvent],
    ) -> Result<Self, SessionError> {
        let session = Self::create(config, transcript_text)?;
        session.replay_into(log)
    }

    pub fn replay_with_provider(
        config: SessionConfig,
        transcript_text: &str,
        log: &[SessionEvent],
        provider: SharedProvider,
    ) -> Result<Self, SessionError> {
        Self::create_with_provider(config, transcript_text, provider)?.replay_into(log)
    }

    fn replay_into(mut self, log: &[SessionEvent]) -> Result<Self, SessionError> {
        for event in log {
            match &event.payload {
                payload if payload.is_perceive() => {
                    self.ingest(event.at_ms, payload.clone())?;
                }
                // usage recorded by the caller rather than by a reply
                EventPayload::UsageIncrement(usage) if event.cause.is_none() => {
                    let feature: Feature = usage.feature.parse()?;
                    self.advance(event.at_ms);
                    self.record_usage(feature, None);
                }
                _ => {}
            }
        }
        if let Some(last) = log.last() {
            self.advance(last.at_ms);
        }
        Ok(self)
    }
}

pub(crate) fn decode_b64(field: &'static str, text: &str) -> Result<Vec<u8>, SessionError> {
    base64::engine::general_purpose::STANDARD
        .decode(text.trim())
        .map_err(|e| SessionError::invalid(field, format!("invalid base64: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{ActivityPing, DocEdit, UserChat};

    const VTT: &str = "WEBVTT\n\n00:00.000 --> 00:05.000\nBubble sort compares neighbours.\n\n00:05.000 --> 00:09.000\nIt swaps them when out of order.\n";

    fn session(mode: Mode, roster: usize) -> Session {
        let mut config = SessionConfig::default().with_roster_size(roster);
        config.mode = mode;
        config.seed = 3;
        Session::create(config, VTT).unwrap()
    }

    fn chat(room: RoomId, text: &str) -> EventPayload {
        EventPayload::UserChat(UserChat {
            room,
            text: text.into(),
        })
    }

    #[test]
    fn full_roster_has_one_private_room_each() {
        let s = session(Mode::Full, 6);
        assert_eq!(s.rooms().count(), 7);
        assert!(s.room(RoomId::Group).is_some());
        assert!(s.log().is_empty());
    }

    #[test]
    fn single_agent_roster() {
        let s = session(Mode::Full, 1);
        assert_eq!(s.rooms().count(), 2);
    }

    #[test]
    fn bad_transcript_reports_line() {
        let err = Session::create(SessionConfig::default(), "00:00.000 --> nope\nhi").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn duplicate_names_fail() {
        let mut config = SessionConfig::default();
        config.roster[2].name = config.roster[0].name.clone();
        assert!(matches!(
            Session::create(config, VTT),
            Err(SessionError::Config(ConfigError::DuplicateName(_)))
        ));
    }

    #[test]
    fn seqs_are_dense_at_one_clock_value() {
        let mut s = session(Mode::Full, 2);
        let a = s.append_event(chat(RoomId::Group, "x"), None);
        let b = s.append_event(chat(RoomId::Group, "y"), None);
        let c = s.append_event(chat(RoomId::Group, "z"), None);
        assert_eq!((a.seq, b.seq, c.seq), (1, 2, 3));
        assert!(a.at_ms == b.at_ms && b.at_ms == c.at_ms);
    }

    #[test]
    fn baseline_gate_replaces_agent_output() {
        let mut s = session(Mode::Baseline, 2);
        s.append_event(chat(RoomId::Group, "hi"), None);
        let gated = s.append_event(
            EventPayload::AgentChat(crate::event::AgentChat {
                agent_id: AgentId::from_index(0),
                room: RoomId::Group,
                text: "hello".into(),
                action: Some("welcoming".into()),
                modality: Modality::Text,
                attachment: None,
                in_reply_to: None,
            }),
            Some(1),
        );
        assert_eq!(gated.seq, 2);
        assert_eq!(
            gated.payload,
            EventPayload::Gated(Gated {
                suppressed: "agent_chat".into()
            })
        );
    }

    #[test]
    fn usage_counts_and_logs() {
        let mut s = session(Mode::Full, 1);
        assert_eq!(s.record_usage(Feature::Brush, None).brush_uses, 1);
        for _ in 0..5 {
            s.record_usage("chat".parse().unwrap(), None);
        }
        assert_eq!(s.usage().chat_messages, 5);
        assert_eq!(s.log().len(), 6);
        assert!(matches!(
            "unknown".parse::<Feature>(),
            Err(SessionError::UnknownFeature(_))
        ));
        assert_eq!("brush_uses".parse::<Feature>().unwrap(), Feature::Brush);
    }

    #[test]
    fn empty_text_is_rejected_without_logging() {
        let mut s = session(Mode::Full, 2);
        let err = s.ingest(0, chat(RoomId::Group, "   ")).unwrap_err();
        assert!(matches!(err, SessionError::Invalid { field: "text", .. }));
        assert!(s.log().is_empty());
    }

    #[test]
    fn unknown_private_room_is_rejected() {
        let mut s = session(Mode::Full, 2);
        let err = s
            .ingest(0, chat(RoomId::Private(AgentId::from_index(5)), "hi"))
            .unwrap_err();
        assert!(matches!(err, SessionError::UnknownAgent(_)));
    }

    #[test]
    fn clock_cannot_run_backwards() {
        let mut s = session(Mode::Full, 2);
        s.advance(1_000);
        let ping = EventPayload::ActivityPing(ActivityPing {
            channel: Channel::Code,
        });
        assert!(matches!(
            s.ingest(500, ping),
            Err(SessionError::ClockRegression { .. })
        ));
    }

    #[test]
    fn edits_update_documents() {
        let mut s = session(Mode::Baseline, 1);
        s.ingest(
            10,
            EventPayload::CodeEdit(DocEdit {
                text: "xs[len(xs)]".into(),
            }),
        )
        .unwrap();
        assert_eq!(s.code_doc().text, "xs[len(xs)]");
        assert_eq!(s.code_doc().last_edit_ms, Some(10));
        assert_eq!(s.activity().channel(Channel::Code).last_activity_ms, 10);
    }

    #[test]
    fn export_is_one_line_per_event() {
        let mut s = session(Mode::Baseline, 1);
        assert!(s.export_log_bytes().is_empty());
        for i in 0..10 {
            s.record_usage(Feature::Notes, Some(i));
        }
        let text = String::from_utf8(s.export_log_bytes()).unwrap();
        let seqs: Vec<u64> = text
            .lines()
            .map(|l| {
                serde_json::from_str::<serde_json::Value>(l).unwrap()["seq"]
                    .as_u64()
                    .unwrap()
            })
            .collect();
        assert_eq!(seqs, (1..=10).collect::<Vec<_>>());
    }

    #[test]
    fn advance_granularity_does_not_change_the_log() {
        let mut coarse = session(Mode::Full, 3);
        let mut fine = session(Mode::Full, 3);
        coarse.advance(400_000);
        for t in (0..=400_000).step_by(7_000) {
            fine.advance(t);
        }
        fine.advance(400_000);
        assert_eq!(coarse.export_log_bytes(), fine.export_log_bytes());
        assert!(!coarse.log().is_empty());
    }

    #[test]
    fn snapshot_serializes() {
        let s = session(Mode::Full, 2);
        let value = serde_json::to_value(s.snapshot()).unwrap();
        assert_eq!(value["agents"][0]["agent_id"], "agent-1");
        assert!(value["rooms"]["group"].is_array());
        assert!(value["rooms"]["agent-2"].is_array());
    }

    #[test]
    fn private_rooms_reject_other_agents() {
        let room = ChatRoom::new(RoomId::Private(AgentId::from_index(0)));
        assert!(room.admits(Sender::User));
        assert!(room.admits(Sender::Agent(AgentId::from_index(0))));
        assert!(!room.admits(Sender::Agent(AgentId::from_index(1))));
    }
}
