//! Interaction rules: who answers what, in which room, with which action.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentError, AgentReply, CoLearner, Stimulus, StimulusKind};
use crate::config::{Mode, VideoConfig};
use crate::event::{
    AgentAudio, AgentChat, EventPayload, Modality, NotesUpdate, ProfileUpdate, SystemNotice, Transcription,
    TriggerFired, TriggerStatus, ViewedFeature,
};
use crate::ids::{AgentId, RoomId};
use crate::monitor::IdleTrigger;
use crate::rng::short_digest;
use crate::scheduler::ReplyLength;
use crate::session::{decode_b64, ChatMessage, Feature, Sender, Session, SessionError};
use crate::transcript::format_timestamp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RouterConfig {
    /// Inclusive bounds on group-chat responders, clamped to the roster size.
    pub group_responders: [usize; 2],
    pub forward_interval_ms: [u64; 2],
    pub predefined_prompts: Vec<String>,
}

impl Default for RouterConfig {
    fn default() -> Self {
        Self {
            group_responders: [1, 3],
            forward_interval_ms: [45_000, 90_000],
            predefined_prompts: vec![
                "Explain this part".into(),
                "Why is this correct?".into(),
                "Give an example".into(),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RouterConfigError {
    #[error("group_responders must satisfy 1 <= lo <= hi")]
    Responders,
    #[error("forward_interval_ms must satisfy 0 < lo <= hi")]
    ForwardInterval,
}

impl RouterConfig {
    pub fn validate(&self) -> Result<(), RouterConfigError> {
        let [lo, hi] = self.group_responders;
        if lo == 0 || lo > hi {
            return Err(RouterConfigError::Responders);
        }
        let [lo, hi] = self.forward_interval_ms;
        if lo == 0 || lo > hi {
            return Err(RouterConfigError::ForwardInterval);
        }
        Ok(())
    }
}

/// Draws k uniformly from the clamped bounds, then k distinct agents
/// uniformly without replacement. The order is the selection order.
pub fn pick_responders<R: Rng + ?Sized>(rng: &mut R, roster: usize, bounds: [usize; 2]) -> Vec<usize> {
    if roster == 0 {
        return Vec::new();
    }
    let hi = bounds[1].min(roster);
    let lo = bounds[0].clamp(1, hi);
    let k = rng.gen_range(lo..=hi);
    index::sample(rng, roster, k).into_vec()
}

/// Uniform pick from `candidates`, preferring those not flagged busy.
pub fn pick_available<R: Rng + ?Sized>(rng: &mut R, candidates: &[(usize, bool)]) -> Option<usize> {
    let idle: Vec<usize> = candidates.iter().filter(|c| !c.1).map(|c| c.0).collect();
    let pool: Vec<usize> = if idle.is_empty() {
        candidates.iter().map(|c| c.0).collect()
    } else {
        idle
    };
    if pool.is_empty() {
        None
    } else {
        Some(pool[rng.gen_range(0..pool.len())])
    }
}

/// Checks a `[min_x, min_y, max_x, max_y]` region against the video frame.
pub fn validate_region(region: [i64; 4], video: &VideoConfig) -> Result<(), SessionError> {
    let [min_x, min_y, max_x, max_y] = region;
    if min_x >= max_x || min_y >= max_y {
        return Err(SessionError::invalid(
            "region",
            "expected min_x < max_x and min_y < max_y",
        ));
    }
    if min_x < 0 || min_y < 0 || max_x > i64::from(video.width) || max_y > i64::from(video.height) {
        return Err(SessionError::invalid(
            "region",
            format!("outside the {}x{} frame", video.width, video.height),
        ));
    }
    Ok(())
}

fn failure_text(name: &str) -> String {
    format!("{name} could not reply just now. Please try again.")
}

impl Session {
    pub(crate) fn route(&mut self, seq: u64, payload: EventPayload) {
        match payload {
            EventPayload::UserChat(chat) => {
                self.record_usage(Feature::Chat, Some(seq));
                match chat.room {
                    RoomId::Group => self.route_group(seq, &chat.text),
                    RoomId::Private(agent) => self.route_private(seq, agent, &chat.text),
                }
            }
            EventPayload::UserAudio(audio) => {
                self.record_usage(Feature::Audio, Some(seq));
                let bytes = decode_b64("audio_b64", &audio.audio_b64).unwrap_or_default();
                self.route_audio(seq, audio.agent_id, &bytes, &audio.mime);
            }
            EventPayload::BrushQuery(query) => {
                self.record_usage(Feature::Brush, Some(seq));
                let image = decode_b64("image_b64", &query.image_b64).unwrap_or_default();
                self.route_brush(seq, &query.question, image, query.video_ms);
            }
            EventPayload::FeatureView(view) => {
                let feature = match view.feature {
                    ViewedFeature::Notes => Feature::Notes,
                    ViewedFeature::Profile => Feature::Profile,
                };
                self.record_usage(feature, Some(seq));
                if self.mode() == Mode::Full {
                    self.ensure_generated(seq, view.agent_id, view.feature);
                }
            }
            EventPayload::Customize(custom) => {
                self.record_usage(Feature::Customization, Some(seq));
                if self.mode() == Mode::Full {
                    self.customize(seq, custom.agent_id, &custom.changes());
                }
            }
            _ => {}
        }
    }

    fn agent_name(&self, agent: AgentId) -> String {
        self.agents[agent.index()].learner.persona().name.clone()
    }

    fn busy_flags(&self, exclude: Option<AgentId>) -> Vec<(usize, bool)> {
        self.agents
            .iter()
            .enumerate()
            .filter(|(i, _)| exclude.map(AgentId::index) != Some(*i))
            .map(|(i, slot)| (i, slot.action.in_active_episode()))
            .collect()
    }

    fn pick_agent(&mut self, exclude: Option<AgentId>) -> Option<AgentId> {
        let candidates = self.busy_flags(exclude);
        pick_available(&mut self.router_rng, &candidates).map(AgentId::from_index)
    }

    fn notice(&mut self, room: RoomId, text: String, cause: u64) {
        self.append(
            EventPayload::SystemNotice(SystemNotice { room, text }),
            Some(cause),
        );
    }

    fn respond_one(&mut self, agent: AgentId, stimulus: &Stimulus) -> Result<AgentReply, AgentError> {
        let generation = self.generation();
        let provider = self.provider.clone();
        self.agents[agent.index()]
            .learner
            .respond(provider.as_ref(), stimulus, generation)
    }

    /// Runs several agents' replies concurrently, at most `max_in_flight` at
    /// a time. Results come back in the order of `picks`.
    fn respond_many(&mut self, picks: &[usize], stimulus: &Stimulus) -> Vec<Result<AgentReply, AgentError>> {
        if picks.len() == 1 {
            return vec![self.respond_one(AgentId::from_index(picks[0]), stimulus)];
        }
        let generation = self.generation();
        let provider = self.provider.clone();
        let cap = self.config.provider.max_in_flight.max(1);
        let mut slots: Vec<Option<&mut CoLearner>> =
            self.agents.iter_mut().map(|a| Some(&mut a.learner)).collect();
        let mut work: Vec<&mut CoLearner> = picks
            .iter()
            .map(|&i| slots[i].take().expect("responders are distinct"))
            .collect();
        let mut results = Vec::with_capacity(picks.len());
        for chunk in work.chunks_mut(cap) {
            std::thread::scope(|scope| {
                let handles: Vec<_> = chunk
                    .iter_mut()
                    .map(|learner| {
                        let provider = provider.as_ref();
                        scope.spawn(move || learner.respond(provider, stimulus, generation))
                    })
                    .collect();
                for handle in handles {
                    results.push(handle.join().expect("responder thread panicked"));
                }
            });
        }
        results
    }

    /// Posts an agent message to `room`, logs it, and starts the matching
    /// active action.
    #[allow(clippy::too_many_arguments)]
    fn deliver(
        &mut self,
        agent: AgentId,
        room: RoomId,
        text: String,
        action: Option<crate::scheduler::ActiveAction>,
        modality: Modality,
        attachment: Option<String>,
        in_reply_to: Option<u64>,
        length: ReplyLength,
        cause: u64,
    ) -> u64 {
        let seq = self.append(
            EventPayload::AgentChat(AgentChat {
                agent_id: agent,
                room,
                text: text.clone(),
                action: action.map(|a| a.as_str().to_string()),
                modality,
                attachment: attachment.clone(),
                in_reply_to,
            }),
            Some(cause),
        );
        self.post_message(
            room,
            ChatMessage {
                seq,
                sender: Sender::Agent(agent),
                text,
                at_ms: self.clock_ms,
                modality,
                attachment,
            },
        );
        if let Some(action) = action {
            let now = self.clock_ms;
            let slot = &mut self.agents[agent.index()];
            let transitions = slot
                .action
                .begin_active(action, length, &self.config.scheduler, now);
            self.emit_transitions(agent, transitions, Some(cause));
        }
        seq
    }

    fn deliver_reply(
        &mut self,
        agent: AgentId,
        room: RoomId,
        reply: AgentReply,
        modality: Modality,
        in_reply_to: Option<u64>,
        cause: u64,
    ) -> u64 {
        let length = ReplyLength::of_text(&reply.text);
        self.deliver(
            agent,
            room,
            reply.text,
            Some(reply.action),
            modality,
            None,
            in_reply_to,
            length,
            cause,
        )
    }

    pub(crate) fn route_private(&mut self, cause: u64, agent: AgentId, text: &str) {
        if self.mode() == Mode::Baseline {
            return;
        }
        let room = RoomId::Private(agent);
        match self.respond_one(agent, &Stimulus::new(StimulusKind::PrivateChat, text)) {
            Ok(reply) => {
                self.deliver_reply(agent, room, reply, Modality::Text, None, cause);
            }
            Err(err) => {
                tracing::warn!(%agent, error = %err, "private reply failed");
                let name = self.agent_name(agent);
                self.notice(room, failure_text(&name), cause);
            }
        }
    }

    pub(crate) fn route_group(&mut self, cause: u64, text: &str) {
        if self.mode() == Mode::Baseline {
            return;
        }
        let picks = pick_responders(
            &mut self.router_rng,
            self.agents.len(),
            self.config.router.group_responders,
        );
        let stimulus = Stimulus::new(StimulusKind::GroupChat, text);
        let results = self.respond_many(&picks, &stimulus);
        for (index, result) in picks.into_iter().zip(results) {
            let agent = AgentId::from_index(index);
            match result {
                Ok(reply) => {
                    self.deliver_reply(agent, RoomId::Group, reply, Modality::Text, None, cause);
                }
                Err(err) => {
                    tracing::warn!(%agent, error = %err, "group reply failed");
                    let name = self.agent_name(agent);
                    self.notice(RoomId::Group, failure_text(&name), cause);
                }
            }
        }
    }

    /// Has a second agent answer the most recent agent message in the group
    /// room, or opens the discussion when there is none yet.
    pub(crate) fn forward_between_agents(&mut self, cause: u64) {
        if self.mode() == Mode::Baseline || self.agents.len() < 2 {
            return;
        }
        let last = self.rooms[&RoomId::Group]
            .messages
            .iter()
            .rev()
            .find_map(|m| match m.sender {
                Sender::Agent(author) => Some((author, m.seq, m.text.clone())),
                Sender::User => None,
            });
        let (target, stimulus, in_reply_to) = match last {
            Some((author, seq, text)) => {
                let Some(target) = self.pick_agent(Some(author)) else {
                    return;
                };
                let name = self.agent_name(author);
                let stimulus = Stimulus::new(StimulusKind::ForwardedPeerMsg, format!("{name}: {text}"));
                (target, stimulus, Some(seq))
            }
            None => {
                let Some(target) = self.pick_agent(None) else {
                    return;
                };
                let topic = self
                    .transcript
                    .cues()
                    .first()
                    .map(|c| c.text.clone())
                    .unwrap_or_default();
                let stimulus = Stimulus::new(
                    StimulusKind::ForwardedPeerMsg,
                    format!("Nobody has said anything yet. Open the discussion about: {topic}"),
                );
                (target, stimulus, None)
            }
        };
        match self.respond_one(target, &stimulus) {
            Ok(reply) => {
                self.deliver_reply(target, RoomId::Group, reply, Modality::Text, in_reply_to, cause);
            }
            Err(err) => tracing::warn!(agent = %target, error = %err, "forwarded reply failed"),
        }
    }

    pub(crate) fn route_brush(&mut self, cause: u64, question: &str, image: Vec<u8>, video_ms: u64) {
        if self.mode() == Mode::Baseline {
            return;
        }
        let Some(agent) = self.pick_agent(None) else {
            return;
        };
        let attachment = format!("image:{}", short_digest(&image, 16));
        let stimulus = Stimulus::new(
            StimulusKind::Brush,
            format!("{question} (video time {})", format_timestamp(video_ms)),
        )
        .with_image(image);
        match self.respond_one(agent, &stimulus) {
            Ok(reply) => {
                let length = ReplyLength::of_text(&reply.text);
                self.deliver(
                    agent,
                    RoomId::Group,
                    reply.text,
                    Some(reply.action),
                    Modality::BrushReply,
                    Some(attachment),
                    None,
                    length,
                    cause,
                );
            }
            Err(err) => {
                tracing::warn!(%agent, error = %err, "brush reply failed");
                let name = self.agent_name(agent);
                self.notice(
                    RoomId::Group,
                    format!("{name} could not look at the highlighted area just now."),
                    cause,
                );
            }
        }
    }

    pub(crate) fn route_audio(&mut self, cause: u64, agent: AgentId, audio: &[u8], mime: &str) {
        if self.mode() == Mode::Baseline {
            return;
        }
        let room = RoomId::Private(agent);
        let name = self.agent_name(agent);
        let heard = match self.provider.transcribe(audio, mime) {
            Ok(text) if !text.trim().is_empty() => text,
            Ok(_) | Err(_) => {
                self.notice(
                    room,
                    format!("{name} could not understand the audio message."),
                    cause,
                );
                return;
            }
        };
        self.append(
            EventPayload::Transcription(Transcription {
                agent_id: agent,
                text: heard.clone(),
            }),
            Some(cause),
        );
        self.post_message(
            room,
            ChatMessage {
                seq: cause,
                sender: Sender::User,
                text: heard.clone(),
                at_ms: self.clock_ms,
                modality: Modality::Audio,
                attachment: Some(format!("audio:{}", short_digest(audio, 16))),
            },
        );
        let reply = match self.respond_one(agent, &Stimulus::new(StimulusKind::AudioText, &heard)) {
            Ok(reply) => reply,
            Err(err) => {
                tracing::warn!(%agent, error = %err, "audio reply failed");
                self.notice(room, failure_text(&name), cause);
                return;
            }
        };
        let voice = self.agents[agent.index()].learner.persona().voice_id.clone();
        match self.provider.synthesize(&reply.text, &voice) {
            Ok(clip) => {
                let digest = short_digest(&clip.bytes, 16);
                self.deliver(
                    agent,
                    room,
                    reply.text.clone(),
                    Some(reply.action),
                    Modality::Audio,
                    Some(format!("audio:{digest}")),
                    None,
                    ReplyLength::AudioMs(clip.duration_ms),
                    cause,
                );
                self.append(
                    EventPayload::AgentAudio(AgentAudio {
                        agent_id: agent,
                        text: reply.text,
                        voice_id: clip.voice_id,
                        mime: clip.mime,
                        duration_ms: clip.duration_ms,
                        audio_b64: base64::Engine::encode(
                            &base64::engine::general_purpose::STANDARD,
                            &clip.bytes,
                        ),
                    }),
                    Some(cause),
                );
            }
            Err(err) => {
                tracing::warn!(%agent, error = %err, "speech synthesis failed, sending text");
                self.deliver_reply(agent, room, reply, Modality::Text, None, cause);
            }
        }
    }

    pub(crate) fn dispatch_trigger(&mut self, trigger: IdleTrigger, cause: u64) {
        if self.mode() == Mode::Baseline {
            return;
        }
        let Some(agent) = self.pick_agent(None) else {
            return;
        };
        let room = RoomId::Private(agent);
        let generation = self.generation();
        let provider = self.provider.clone();
        let ok = match trigger {
            IdleTrigger::MouseIdle => {
                let stimulus =
                    Stimulus::new(StimulusKind::IdleProbe, "Ask how the tutorial is going so far.");
                match self.respond_one(agent, &stimulus) {
                    Ok(reply) => {
                        self.deliver_reply(agent, room, reply, Modality::ProgressInquiry, None, cause);
                        true
                    }
                    Err(err) => {
                        tracing::warn!(%agent, error = %err, "progress inquiry failed");
                        false
                    }
                }
            }
            IdleTrigger::NotesIdle => {
                let transcript = self.transcript.clone();
                let learner = &mut self.agents[agent.index()].learner;
                match learner.generate_notes(provider.as_ref(), &transcript, generation) {
                    Ok(notes) => {
                        let notes = notes.to_string();
                        self.append(
                            EventPayload::NotesUpdate(NotesUpdate {
                                agent_id: agent,
                                notes: notes.clone(),
                            }),
                            Some(cause),
                        );
                        let length = ReplyLength::of_text(&notes);
                        self.deliver(
                            agent,
                            room,
                            notes,
                            None,
                            Modality::SharedNotes,
                            None,
                            None,
                            length,
                            cause,
                        );
                        true
                    }
                    Err(err) => {
                        tracing::warn!(%agent, error = %err, "note sharing failed");
                        false
                    }
                }
            }
            IdleTrigger::CodeIdle => {
                let code = if self.code_doc.text.trim().is_empty() {
                    "(the editor is empty)".to_string()
                } else {
                    self.code_doc.text.clone()
                };
                match self.respond_one(agent, &Stimulus::new(StimulusKind::CodeReview, code)) {
                    Ok(reply) => {
                        self.deliver_reply(agent, room, reply, Modality::CodeReview, None, cause);
                        true
                    }
                    Err(err) => {
                        tracing::warn!(%agent, error = %err, "code review failed");
                        false
                    }
                }
            }
        };
        self.append(
            EventPayload::TriggerFired(TriggerFired {
                trigger,
                agent_id: Some(agent),
                status: if ok {
                    TriggerStatus::Ok
                } else {
                    TriggerStatus::Failed
                },
            }),
            Some(cause),
        );
    }

    fn ensure_generated(&mut self, cause: u64, agent: AgentId, feature: ViewedFeature) {
        let generation = self.generation();
        let provider = self.provider.clone();
        let transcript = self.transcript.clone();
        let learner = &mut self.agents[agent.index()].learner;
        match feature {
            ViewedFeature::Notes if learner.notes().is_empty() => {
                match learner.generate_notes(provider.as_ref(), &transcript, generation) {
                    Ok(notes) => {
                        let notes = notes.to_string();
                        self.append(
                            EventPayload::NotesUpdate(NotesUpdate {
                                agent_id: agent,
                                notes,
                            }),
                            Some(cause),
                        );
                    }
                    Err(err) => tracing::warn!(%agent, error = %err, "notes generation failed"),
                }
            }
            ViewedFeature::Profile if learner.profile().is_empty() => {
                match learner.generate_profile(provider.as_ref(), generation) {
                    Ok(_) => self.append_profile(agent, cause),
                    Err(err) => tracing::warn!(%agent, error = %err, "profile generation failed"),
                }
            }
            _ => {}
        }
    }

    fn append_profile(&mut self, agent: AgentId, cause: u64) {
        let learner = &self.agents[agent.index()].learner;
        let persona = learner.persona();
        let payload = EventPayload::ProfileUpdate(ProfileUpdate {
            agent_id: agent,
            profile: learner.profile().to_string(),
            tone: persona.tone.clone(),
            interaction_style: persona.interaction_style.clone(),
            characteristic: persona.characteristic.clone(),
        });
        self.append(payload, Some(cause));
    }

    fn customize(&mut self, cause: u64, agent: AgentId, changes: &crate::agent::PersonaChanges) {
        let generation = self.generation();
        let provider = self.provider.clone();
        let transcript = self.transcript.clone();
        let learner = &mut self.agents[agent.index()].learner;
        match learner.update_persona(changes, &transcript, provider.as_ref(), generation) {
            Ok(false) => {}
            Ok(true) => {
                self.append_profile(agent, cause);
                let learner = &mut self.agents[agent.index()].learner;
                match learner.generate_notes(provider.as_ref(), &transcript, generation) {
                    Ok(notes) => {
                        let notes = notes.to_string();
                        self.append(
                            EventPayload::NotesUpdate(NotesUpdate {
                                agent_id: agent,
                                notes,
                            }),
                            Some(cause),
                        );
                    }
                    Err(err) => tracing::warn!(%agent, error = %err, "notes regeneration failed"),
                }
            }
            Err(err) => {
                tracing::warn!(%agent, error = %err, "customization failed");
                let name = self.agent_name(agent);
                self.notice(
                    RoomId::Private(agent),
                    format!("{name} could not apply the new settings just now."),
                    cause,
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    #[test]
    fn default_config_is_valid() {
        RouterConfig::default().validate().unwrap();
        let bad = RouterConfig {
            group_responders: [2, 1],
            ..RouterConfig::default()
        };
        assert_eq!(bad.validate(), Err(RouterConfigError::Responders));
    }

    #[test]
    fn two_agent_roster_clamps_to_two() {
        let mut rng = seeded(5);
        for _ in 0..500 {
            let picks = pick_responders(&mut rng, 2, [1, 3]);
            assert!((1..=2).contains(&picks.len()));
        }
    }

    #[test]
    fn region_checks() {
        let video = VideoConfig::default();
        validate_region([100, 50, 300, 200], &video).unwrap();
        assert!(validate_region([100, 50, 100, 200], &video).is_err());
        assert!(validate_region([0, 0, 1921, 10], &video).is_err());
        assert!(validate_region([-1, 0, 10, 10], &video).is_err());
    }

    #[test]
    fn available_pick_skips_busy_agents() {
        let mut rng = seeded(1);
        for _ in 0..100 {
            assert_eq!(
                pick_available(&mut rng, &[(0, true), (1, false), (2, true)]),
                Some(1)
            );
        }
        assert!(pick_available(&mut rng, &[(0, true), (1, true)]).is_some());
        assert_eq!(pick_available(&mut rng, &[]), None);
    }

    proptest! {
        #[test]
        fn responders_are_distinct_and_bounded(seed in any::<u64>(), roster in 1usize..12) {
            let mut rng = seeded(seed);
            let picks = pick_responders(&mut rng, roster, [1, 3]);
            prop_assert!(!picks.is_empty() && picks.len() <= roster.min(3));
            let mut sorted = picks.clone();
            sorted.sort_unstable();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), picks.len());
            prop_assert!(picks.iter().all(|&i| i < roster));
        }
    }
}
