//! Co-study engine: simulated co-learners that watch a tutorial with the
//! user, chat, react to highlighted video regions and nudge when the user
//! goes idle.
//!
//! The engine is a set of clock-driven state machines. A [`Session`] owns the
//! agents, chat rooms and an append-only event log; hosts feed it user input
//! with [`Session::ingest`] and move time forward with [`Session::advance`].

pub mod agent;
pub mod config;
pub mod event;
pub mod ids;
pub mod monitor;
pub mod provider;
pub mod rng;
pub mod router;
pub mod scheduler;
pub mod session;
pub mod transcript;

pub use agent::{parse_action_tag, AgentReply, CoLearner, Persona, Stimulus, StimulusKind};
pub use config::{ConfigError, Mode, SessionConfig};
pub use event::{EventPayload, SessionEvent};
pub use ids::{AgentId, RoomId};
pub use monitor::{ActivityTrack, Channel, IdleThresholds, IdleTrigger};
pub use provider::{Provider, ProviderConfig, ProviderError, SharedProvider, StubProvider};
pub use router::RouterConfig;
pub use scheduler::{ActionState, ActiveAction, PassiveAction, Phase, SchedulerConfig};
pub use session::{create_session, Feature, Session, SessionError, SessionSnapshot, UsageCounters};
pub use transcript::{parse_transcript, Transcript};
