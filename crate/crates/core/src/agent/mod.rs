//! One generative co-learner: persona, prompt, memory, replies, notes and profile.

pub mod memory;
pub mod prompt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use memory::{estimate_tokens, Exchange, MemoryBuffer, Speaker, DEFAULT_TOKEN_BUDGET};
pub use prompt::assemble_system_prompt;

use crate::ids::AgentId;
use crate::provider::{ChatRequest, PromptMessage, Provider, ProviderError, Purpose, Role};
use crate::scheduler::ActiveAction;
use crate::transcript::Transcript;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Persona {
    pub name: String,
    pub tone: String,
    pub interaction_style: String,
    pub characteristic: String,
    pub voice_id: String,
}

impl Persona {
    pub fn new(
        name: &str,
        tone: &str,
        interaction_style: &str,
        characteristic: &str,
        voice_id: &str,
    ) -> Self {
        Self {
            name: name.into(),
            tone: tone.into(),
            interaction_style: interaction_style.into(),
            characteristic: characteristic.into(),
            voice_id: voice_id.into(),
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        for (field, value) in [
            ("name", &self.name),
            ("tone", &self.tone),
            ("interaction_style", &self.interaction_style),
            ("characteristic", &self.characteristic),
        ] {
            if value.trim().is_empty() {
                return Err(AgentError::EmptyField(field));
            }
        }
        Ok(())
    }

    /// The shipped six-agent roster.
    pub fn default_roster() -> Vec<Persona> {
        vec![
            Persona::new(
                "Ava",
                "warm and encouraging",
                "asks follow-up questions",
                "curious",
                "nova",
            ),
            Persona::new(
                "Ben",
                "casual and upbeat",
                "shares quick examples",
                "energetic",
                "echo",
            ),
            Persona::new(
                "Chloe",
                "calm and precise",
                "explains step by step",
                "detail-oriented",
                "shimmer",
            ),
            Persona::new(
                "Diego",
                "playful",
                "jokes to keep things light",
                "creative",
                "onyx",
            ),
            Persona::new(
                "Emma",
                "thoughtful",
                "summarizes what others said",
                "organized",
                "fable",
            ),
            Persona::new(
                "Farid",
                "direct",
                "points out mistakes kindly",
                "analytical",
                "alloy",
            ),
        ]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PersonaChanges {
    pub tone: Option<String>,
    pub interaction_style: Option<String>,
    pub characteristic: Option<String>,
    /// Present only to be rejected: names are roster identity.
    pub name: Option<String>,
}

impl PersonaChanges {
    pub fn is_empty(&self) -> bool {
        self.tone.is_none()
            && self.interaction_style.is_none()
            && self.characteristic.is_none()
            && self.name.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StimulusKind {
    PrivateChat,
    GroupChat,
    Brush,
    AudioText,
    IdleProbe,
    CodeReview,
    ForwardedPeerMsg,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stimulus {
    pub kind: StimulusKind,
    pub text: String,
    pub image: Option<Vec<u8>>,
}

impl Stimulus {
    pub fn new(kind: StimulusKind, text: impl Into<String>) -> Self {
        Self {
            kind,
            text: text.into(),
            image: None,
        }
    }

    pub fn with_image(mut self, image: Vec<u8>) -> Self {
        self.image = Some(image);
        self
    }

    /// The user-turn text the model sees.
    fn render(&self) -> String {
        match self.kind {
            StimulusKind::PrivateChat | StimulusKind::AudioText => self.text.clone(),
            StimulusKind::GroupChat => format!("(group chat) {}", self.text),
            StimulusKind::Brush => format!(
                "(The learner highlighted this part of the tutorial video) {}",
                self.text
            ),
            StimulusKind::IdleProbe => format!(
                "(The learner has been inactive for a while. Reach out and ask how their progress is going.) {}",
                self.text
            ),
            StimulusKind::CodeReview => format!(
                "(The learner has stopped editing their code. Review it and point out mistakes.)\n{}",
                self.text
            ),
            StimulusKind::ForwardedPeerMsg => format!("(classmate in group chat) {}", self.text),
        }
    }

    fn speaker(&self) -> Speaker {
        match self.kind {
            StimulusKind::PrivateChat
            | StimulusKind::GroupChat
            | StimulusKind::Brush
            | StimulusKind::AudioText => Speaker::Learner,
            StimulusKind::IdleProbe | StimulusKind::CodeReview | StimulusKind::ForwardedPeerMsg => {
                Speaker::Other
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentReply {
    pub action: ActiveAction,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("persona field `{0}` must not be empty")]
    EmptyField(&'static str),
    #[error("co-learner names cannot be changed")]
    NameChange,
    #[error("stimulus text is empty")]
    EmptyStimulus,
    #[error("brush stimuli need an image")]
    MissingImage,
    #[error("model returned an empty reply")]
    EmptyReply,
    #[error("transcript is empty")]
    EmptyTranscript,
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Splits a leading `<action>` tag off a completion. Missing or unknown tags
/// fall back to `chatting`.
pub fn parse_action_tag(raw: &str) -> Result<AgentReply, AgentError> {
    let trimmed = raw.trim_start();
    if let Some(rest) = trimmed.strip_prefix('<') {
        if let Some((tag, body)) = rest.split_once('>') {
            if let Ok(action) = tag.parse::<ActiveAction>() {
                let text = body.trim();
                if text.is_empty() {
                    return Err(AgentError::EmptyReply);
                }
                return Ok(AgentReply {
                    action,
                    text: text.to_string(),
                });
            }
        }
    }
    let text = raw.trim();
    if text.is_empty() {
        return Err(AgentError::EmptyReply);
    }
    Ok(AgentReply {
        action: ActiveAction::Chatting,
        text: text.to_string(),
    })
}

/// Sampling knobs passed through to the provider.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Generation {
    pub temperature: f64,
    pub max_reply_tokens: u32,
}

impl Default for Generation {
    fn default() -> Self {
        Self {
            temperature: 0.9,
            max_reply_tokens: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoLearner {
    id: AgentId,
    persona: Persona,
    system_prompt: String,
    memory: MemoryBuffer,
    notes: String,
    profile: String,
}

impl CoLearner {
    pub fn new(
        id: AgentId,
        persona: Persona,
        transcript: &Transcript,
        token_budget: u32,
    ) -> Result<Self, AgentError> {
        persona.validate()?;
        if transcript.is_empty() {
            return Err(AgentError::EmptyTranscript);
        }
        let system_prompt = assemble_system_prompt(&persona, transcript);
        Ok(Self {
            id,
            persona,
            system_prompt,
            memory: MemoryBuffer::new(token_budget),
            notes: String::new(),
            profile: String::new(),
        })
    }

    pub fn id(&self) -> AgentId {
        self.id
    }

    pub fn persona(&self) -> &Persona {
        &self.persona
    }

    pub fn system_prompt(&self) -> &str {
        &self.system_prompt
    }

    pub fn memory(&self) -> &MemoryBuffer {
        &self.memory
    }

    pub fn notes(&self) -> &str {
        &self.notes
    }

    pub fn profile(&self) -> &str {
        &self.profile
    }

    /// Builds the completion request for `stimulus` without touching memory.
    pub fn build_request(&self, stimulus: &Stimulus, generation: Generation) -> ChatRequest {
        let mut messages = self.memory.as_messages();
        let mut user = PromptMessage::new(Role::User, stimulus.render());
        user.image = stimulus.image.clone();
        messages.push(user);
        ChatRequest {
            system_prompt: self.system_prompt.clone(),
            messages,
            temperature: generation.temperature,
            max_reply_tokens: generation.max_reply_tokens,
            purpose: Purpose::Reply,
        }
    }

    /// Generates a reply, records both turns in memory, then condenses.
    pub fn respond(
        &mut self,
        provider: &dyn Provider,
        stimulus: &Stimulus,
        generation: Generation,
    ) -> Result<AgentReply, AgentError> {
        if stimulus.text.trim().is_empty() {
            return Err(AgentError::EmptyStimulus);
        }
        if stimulus.kind == StimulusKind::Brush && stimulus.image.is_none() {
            return Err(AgentError::MissingImage);
        }
        let request = self.build_request(stimulus, generation);
        let raw = provider.complete(&request)?;
        let reply = parse_action_tag(&raw)?;
        self.memory.record(stimulus.speaker(), stimulus.render());
        self.memory
            .record(Speaker::Agent, format!("<{}> {}", reply.action, reply.text));
        if let Err(err) = self.memory.condense(provider, generation.temperature) {
            tracing::warn!(agent = %self.id, error = %err, "memory condensation failed");
        }
        Ok(reply)
    }

    pub fn generate_notes(
        &mut self,
        provider: &dyn Provider,
        transcript: &Transcript,
        generation: Generation,
    ) -> Result<&str, AgentError> {
        if transcript.is_empty() {
            return Err(AgentError::EmptyTranscript);
        }
        let request = ChatRequest {
            system_prompt: self.system_prompt.clone(),
            messages: vec![PromptMessage::new(
                Role::User,
                format!("{}\n{}", prompt::NOTES_PROMPT, transcript.timestamped_lines()),
            )],
            temperature: generation.temperature,
            max_reply_tokens: generation.max_reply_tokens.saturating_mul(2),
            purpose: Purpose::Notes,
        };
        let notes = provider.complete(&request)?;
        if notes.trim().is_empty() {
            return Err(AgentError::EmptyReply);
        }
        self.notes = notes;
        Ok(&self.notes)
    }

    pub fn generate_profile(
        &mut self,
        provider: &dyn Provider,
        generation: Generation,
    ) -> Result<&str, AgentError> {
        let request = ChatRequest {
            system_prompt: self.system_prompt.clone(),
            messages: vec![PromptMessage::new(Role::User, prompt::PROFILE_PROMPT)],
            temperature: generation.temperature,
            max_reply_tokens: generation.max_reply_tokens,
            purpose: Purpose::Profile,
        };
        let profile = provider.complete(&request)?;
        let profile = profile.trim();
        if profile.is_empty() {
            return Err(AgentError::EmptyReply);
        }
        self.profile = profile.to_string();
        Ok(&self.profile)
    }

    /// Applies persona changes, reassembles the prompt and regenerates the
    /// profile. Returns `Ok(false)` when nothing changed.
    pub fn update_persona(
        &mut self,
        changes: &PersonaChanges,
        transcript: &Transcript,
        provider: &dyn Provider,
        generation: Generation,
    ) -> Result<bool, AgentError> {
        if let Some(name) = &changes.name {
            if *name != self.persona.name {
                return Err(AgentError::NameChange);
            }
        }
        let mut next = self.persona.clone();
        for (slot, value, field) in [
            (&mut next.tone, &changes.tone, "tone"),
            (
                &mut next.interaction_style,
                &changes.interaction_style,
                "interaction_style",
            ),
            (
                &mut next.characteristic,
                &changes.characteristic,
                "characteristic",
            ),
        ] {
            if let Some(value) = value {
                if value.trim().is_empty() {
                    return Err(AgentError::EmptyField(field));
                }
                *slot = value.clone();
            }
        }
        if next == self.persona {
            return Ok(false);
        }
        let previous = (self.persona.clone(), self.system_prompt.clone());
        self.persona = next;
        self.system_prompt = assemble_system_prompt(&self.persona, transcript);
        if let Err(err) = self.generate_profile(provider, generation) {
            (self.persona, self.system_prompt) = previous;
            return Err(err);
        }
        Ok(true)
    }
}
