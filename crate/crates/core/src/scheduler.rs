//! Visible co-learner behavior: passive study/break cycling, the three-phase
//! active action lifecycle, and the looping shared-screen track.
//!
//! Everything here is a pure state machine driven by an injected clock. The
//! host calls [`ActionState::tick`] with non-decreasing timestamps and gets
//! back every transition that elapsed, each stamped with the instant it
//! happened.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassiveAction {
    Typing,
    Watching,
    Thinking,
    TakingNotes,
    ExpressingConfusion,
    Stretching,
    RubbingEyes,
    Eating,
    Drinking,
    CheckingPhone,
}

impl PassiveAction {
    pub const ALL: [PassiveAction; 10] = [
        PassiveAction::Typing,
        PassiveAction::Watching,
        PassiveAction::Thinking,
        PassiveAction::TakingNotes,
        PassiveAction::ExpressingConfusion,
        PassiveAction::Stretching,
        PassiveAction::RubbingEyes,
        PassiveAction::Eating,
        PassiveAction::Drinking,
        PassiveAction::CheckingPhone,
    ];

    /// Study behaviors the scheduler cycles into (typing is the resting state).
    pub const STUDY_CYCLE: [PassiveAction; 4] = [
        PassiveAction::Watching,
        PassiveAction::Thinking,
        PassiveAction::TakingNotes,
        PassiveAction::ExpressingConfusion,
    ];

    pub const BREAKS: [PassiveAction; 5] = [
        PassiveAction::Stretching,
        PassiveAction::RubbingEyes,
        PassiveAction::Eating,
        PassiveAction::Drinking,
        PassiveAction::CheckingPhone,
    ];

    pub fn is_break(self) -> bool {
        Self::BREAKS.contains(&self)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PassiveAction::Typing => "typing",
            PassiveAction::Watching => "watching",
            PassiveAction::Thinking => "thinking",
            PassiveAction::TakingNotes => "taking_notes",
            PassiveAction::ExpressingConfusion => "expressing_confusion",
            PassiveAction::Stretching => "stretching",
            PassiveAction::RubbingEyes => "rubbing_eyes",
            PassiveAction::Eating => "eating",
            PassiveAction::Drinking => "drinking",
            PassiveAction::CheckingPhone => "checking_phone",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActiveAction {
    Asking,
    Chatting,
    Encouraging,
    Exciting,
    Explaining,
    Welcoming,
}

impl ActiveAction {
    pub const ALL: [ActiveAction; 6] = [
        ActiveAction::Asking,
        ActiveAction::Chatting,
        ActiveAction::Encouraging,
        ActiveAction::Exciting,
        ActiveAction::Explaining,
        ActiveAction::Welcoming,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActiveAction::Asking => "asking",
            ActiveAction::Chatting => "chatting",
            ActiveAction::Encouraging => "encouraging",
            ActiveAction::Exciting => "exciting",
            ActiveAction::Explaining => "explaining",
            ActiveAction::Welcoming => "welcoming",
        }
    }
}

impl fmt::Display for ActiveAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown action `{0}`")]
pub struct UnknownAction(pub String);

impl FromStr for ActiveAction {
    type Err = UnknownAction;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == lower)
            .ok_or_else(|| UnknownAction(s.to_string()))
    }
}

impl FromStr for PassiveAction {
    type Err = UnknownAction;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| UnknownAction(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Starting,
    Continuing,
    Ending,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Starting, Phase::Continuing, Phase::Ending];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Starting => "starting",
            Phase::Continuing => "continuing",
            Phase::Ending => "ending",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activity {
    Passive(PassiveAction),
    Active(ActiveAction, Phase),
}

impl Activity {
    pub const RESTING: Activity = Activity::Passive(PassiveAction::Typing);

    /// Whether the shared screen must be paused while this activity shows.
    pub fn pauses_screen(self) -> bool {
        match self {
            Activity::Passive(p) => p.is_break(),
            Activity::Active(..) => true,
        }
    }

    pub fn is_active(self) -> bool {
        matches!(self, Activity::Active(..))
    }

    pub fn action_name(self) -> &'static str {
        match self {
            Activity::Passive(p) => p.as_str(),
            Activity::Active(a, _) => a.as_str(),
        }
    }

    pub fn phase(self) -> Option<Phase> {
        match self {
            Activity::Passive(_) => None,
            Activity::Active(_, phase) => Some(phase),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    pub passive_interval_ms: [u64; 2],
    pub break_probability: f64,
    pub active_rate_wps: f64,
    pub active_clamp_ms: [u64; 2],
    pub phase_ms: u64,
    /// How long a cycled passive clip plays before reverting to typing.
    pub passive_action_ms: u64,
    pub shared_screen_len_ms: u64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            passive_interval_ms: [90_000, 180_000],
            break_probability: 0.3,
            active_rate_wps: 2.5,
            active_clamp_ms: [3_000, 60_000],
            phase_ms: 1_000,
            passive_action_ms: 10_000,
            shared_screen_len_ms: 900_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchedulerConfigError {
    #[error("passive interval lower bound exceeds upper bound")]
    Interval,
    #[error("break probability must lie in [0, 1]")]
    BreakProbability,
    #[error("active rate must be positive")]
    Rate,
    #[error("active clamp minimum exceeds maximum")]
    Clamp,
    #[error("shared screen length must be positive")]
    TrackLength,
    #[error("passive action duration must be positive")]
    PassiveDuration,
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<(), SchedulerConfigError> {
        let [lo, hi] = self.passive_interval_ms;
        if lo > hi {
            return Err(SchedulerConfigError::Interval);
        }
        if !(0.0..=1.0).contains(&self.break_probability) {
            return Err(SchedulerConfigError::BreakProbability);
        }
        if !(self.active_rate_wps > 0.0 && self.active_rate_wps.is_finite()) {
            return Err(SchedulerConfigError::Rate);
        }
        if self.active_clamp_ms[0] > self.active_clamp_ms[1] {
            return Err(SchedulerConfigError::Clamp);
        }
        if self.shared_screen_len_ms == 0 {
            return Err(SchedulerConfigError::TrackLength);
        }
        if self.passive_action_ms == 0 {
            return Err(SchedulerConfigError::PassiveDuration);
        }
        Ok(())
    }

    /// Continuing-phase duration for a text reply of `words` words.
    pub fn continuing_ms_for_words(&self, words: u32) -> u64 {
        let raw = (f64::from(words) / self.active_rate_wps * 1000.0).round();
        let [min, max] = self.active_clamp_ms;
        (raw as u64).clamp(min, max)
    }
}

/// Length of the reply an active action accompanies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplyLength {
    Words(u32),
    AudioMs(u64),
}

impl ReplyLength {
    pub fn of_text(text: &str) -> Self {
        ReplyLength::Words(text.split_whitespace().count() as u32)
    }
}

/// Draws the next passive segment: the delay spent typing before it, and the
/// action it switches into.
pub fn next_passive_transition<R: Rng + ?Sized>(
    rng: &mut R,
    config: &SchedulerConfig,
) -> (u64, PassiveAction) {
    let [lo, hi] = config.passive_interval_ms;
    let delay = rng.gen_range(lo..=hi);
    let action = if rng.gen_bool(config.break_probability) {
        PassiveAction::BREAKS[rng.gen_range(0..PassiveAction::BREAKS.len())]
    } else {
        PassiveAction::STUDY_CYCLE[rng.gen_range(0..PassiveAction::STUDY_CYCLE.len())]
    };
    (delay, action)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedScreenTrack {
    length_ms: u64,
    /// Position at `since_ms`.
    anchor_ms: u64,
    since_ms: u64,
    playing: bool,
}

impl SharedScreenTrack {
    pub fn new(length_ms: u64, now_ms: u64) -> Self {
        assert!(length_ms > 0, "shared screen track must have positive length");
        Self {
            length_ms,
            anchor_ms: 0,
            since_ms: now_ms,
            playing: true,
        }
    }

    pub fn length_ms(&self) -> u64 {
        self.length_ms
    }

    pub fn is_playing(&self) -> bool {
        self.playing
    }

    pub fn position(&self, now_ms: u64) -> u64 {
        if self.playing {
            (self.anchor_ms + now_ms.saturating_sub(self.since_ms)) % self.length_ms
        } else {
            self.anchor_ms
        }
    }

    pub fn pause(&mut self, now_ms: u64) {
        if self.playing {
            self.anchor_ms = self.position(now_ms);
            self.since_ms = now_ms;
            self.playing = false;
        }
    }

    pub fn resume(&mut self, now_ms: u64) {
        if !self.playing {
            self.since_ms = now_ms;
            self.playing = true;
        }
    }
}

pub fn shared_screen_position(track: &SharedScreenTrack, now_ms: u64) -> u64 {
    track.position(now_ms)
}

/// One observable scheduler output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    Action {
        at_ms: u64,
        activity: Activity,
        duration_ms: u64,
    },
    SharedScreen {
        at_ms: u64,
        playing: bool,
        position_ms: u64,
    },
}

impl Transition {
    pub fn at_ms(&self) -> u64 {
        match *self {
            Transition::Action { at_ms, .. } | Transition::SharedScreen { at_ms, .. } => at_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PendingActive {
    action: ActiveAction,
    continuing_ms: u64,
}

/// One co-learner's action state.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionState {
    current: Activity,
    until_ms: u64,
    /// Passive action that takes over when the current typing segment ends.
    next_passive: Option<PassiveAction>,
    continuing_ms: u64,
    queue: VecDeque<PendingActive>,
    track: SharedScreenTrack,
    last_tick_ms: u64,
}

impl ActionState {
    /// Starts in the resting typing state with the first passive transition
    /// already drawn.
    pub fn new<R: Rng + ?Sized>(config: &SchedulerConfig, rng: &mut R, now_ms: u64) -> Self {
        let (delay, action) = next_passive_transition(rng, config);
        Self {
            current: Activity::RESTING,
            until_ms: now_ms + delay,
            next_passive: Some(action),
            continuing_ms: 0,
            queue: VecDeque::new(),
            track: SharedScreenTrack::new(config.shared_screen_len_ms, now_ms),
            last_tick_ms: now_ms,
        }
    }

    pub fn current(&self) -> Activity {
        self.current
    }

    pub fn until_ms(&self) -> u64 {
        self.until_ms
    }

    pub fn paused_shared_screen(&self) -> bool {
        !self.track.is_playing()
    }

    pub fn track(&self) -> &SharedScreenTrack {
        &self.track
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    pub fn in_active_episode(&self) -> bool {
        self.current.is_active()
    }

    /// Starts an active episode now, or queues it behind the running one.
    pub fn begin_active(
        &mut self,
        action: ActiveAction,
        reply: ReplyLength,
        config: &SchedulerConfig,
        now_ms: u64,
    ) -> Vec<Transition> {
        let continuing_ms = match reply {
            ReplyLength::AudioMs(ms) => ms,
            ReplyLength::Words(words) => config.continuing_ms_for_words(words),
        };
        let pending = PendingActive {
            action,
            continuing_ms,
        };
        if self.current.is_active() {
            self.queue.push_back(pending);
            return Vec::new();
        }
        let mut out = Vec::new();
        self.last_tick_ms = self.last_tick_ms.max(now_ms);
        self.start_episode(pending, config, now_ms, &mut out);
        out
    }

    /// Advances through every boundary at or before `now_ms`.
    pub fn tick<R: Rng + ?Sized>(
        &mut self,
        config: &SchedulerConfig,
        rng: &mut R,
        now_ms: u64,
    ) -> Vec<Transition> {
        debug_assert!(now_ms >= self.last_tick_ms, "scheduler ticks must be monotone");
        let mut out = Vec::new();
        while self.until_ms <= now_ms {
            let at = self.until_ms;
            self.step(config, rng, at, &mut out);
        }
        self.last_tick_ms = self.last_tick_ms.max(now_ms);
        out
    }

    fn step<R: Rng + ?Sized>(
        &mut self,
        config: &SchedulerConfig,
        rng: &mut R,
        at: u64,
        out: &mut Vec<Transition>,
    ) {
        match self.current {
            Activity::Passive(PassiveAction::Typing) => {
                let next = self
                    .next_passive
                    .take()
                    .expect("typing segment always has a scheduled successor");
                self.set(Activity::Passive(next), at, config.passive_action_ms, out);
            }
            Activity::Passive(_) => self.rest(config, rng, at, out),
            Activity::Active(action, Phase::Starting) => {
                self.set(
                    Activity::Active(action, Phase::Continuing),
                    at,
                    self.continuing_ms,
                    out,
                );
            }
            Activity::Active(action, Phase::Continuing) => {
                self.set(Activity::Active(action, Phase::Ending), at, config.phase_ms, out);
            }
            Activity::Active(_, Phase::Ending) => match self.queue.pop_front() {
                Some(pending) => {
                    self.set(Activity::RESTING, at, 0, out);
                    self.start_episode(pending, config, at, out);
                }
                None => self.rest(config, rng, at, out),
            },
        }
    }

    fn rest<R: Rng + ?Sized>(
        &mut self,
        config: &SchedulerConfig,
        rng: &mut R,
        at: u64,
        out: &mut Vec<Transition>,
    ) {
        let (delay, next) = next_passive_transition(rng, config);
        self.next_passive = Some(next);
        self.set(Activity::RESTING, at, delay, out);
    }

    fn start_episode(
        &mut self,
        pending: PendingActive,
        config: &SchedulerConfig,
        at: u64,
        out: &mut Vec<Transition>,
    ) {
        // any interrupted passive segment is dropped; a fresh one is drawn after ending
        self.next_passive = None;
        self.continuing_ms = pending.continuing_ms;
        self.set(
            Activity::Active(pending.action, Phase::Starting),
            at,
            config.phase_ms,
            out,
        );
    }

    fn set(&mut self, activity: Activity, at: u64, duration_ms: u64, out: &mut Vec<Transition>) {
        self.current = activity;
        self.until_ms = at + duration_ms;
        out.push(Transition::Action {
            at_ms: at,
            activity,
            duration_ms,
        });
        let should_play = !activity.pauses_screen();
        if should_play != self.track.is_playing() {
            if should_play {
                self.track.resume(at);
            } else {
                self.track.pause(at);
            }
            out.push(Transition::SharedScreen {
                at_ms: at,
                playing: should_play,
                position_ms: self.track.position(at),
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ManifestError {
    #[error("asset manifest is not valid JSON: {0}")]
    Parse(String),
    #[error("asset manifest has no entry for {agent}")]
    MissingAgent { agent: String },
    #[error("asset manifest for {agent} is missing `{asset}`")]
    MissingAsset { agent: String, asset: String },
}

/// Per-agent map from action clip ids to asset paths.
///
/// Clip ids are the passive action names (`typing`, `eating`, ...) and
/// `<active>.<phase>` for active actions (`explaining.starting`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetManifest {
    pub agents: std::collections::BTreeMap<String, AgentAssets>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentAssets {
    pub shared_screen: String,
    pub actions: std::collections::BTreeMap<String, String>,
}

impl AssetManifest {
    pub fn from_json(text: &str) -> Result<Self, ManifestError> {
        serde_json::from_str(text).map_err(|e| ManifestError::Parse(e.to_string()))
    }

    pub fn required_clip_ids() -> Vec<String> {
        let mut ids: Vec<String> = PassiveAction::ALL
            .iter()
            .map(|p| p.as_str().to_string())
            .collect();
        for action in ActiveAction::ALL {
            for phase in Phase::ALL {
                ids.push(format!("{}.{}", action.as_str(), phase.as_str()));
            }
        }
        ids
    }

    /// Checks that every agent in `agent_ids` has all 28 clips plus a shared screen.
    pub fn validate<I, S>(&self, agent_ids: I) -> Result<(), ManifestError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let required = Self::required_clip_ids();
        for agent in agent_ids {
            let agent = agent.as_ref();
            let assets = self
                .agents
                .get(agent)
                .ok_or_else(|| ManifestError::MissingAgent {
                    agent: agent.to_string(),
                })?;
            if assets.shared_screen.trim().is_empty() {
                return Err(ManifestError::MissingAsset {
                    agent: agent.to_string(),
                    asset: "shared_screen".into(),
                });
            }
            for id in &required {
                if assets.actions.get(id).is_none_or(|p| p.trim().is_empty()) {
                    return Err(ManifestError::MissingAsset {
                        agent: agent.to_string(),
                        asset: id.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// A manifest following the `assets/<agent>/<clip>.mp4` layout.
    pub fn conventional<I, S>(agent_ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let agents = agent_ids
            .into_iter()
            .map(|agent| {
                let agent = agent.as_ref().to_string();
                let actions = Self::required_clip_ids()
                    .into_iter()
                    .map(|id| {
                        let path = format!("{agent}/{id}.mp4");
                        (id, path)
                    })
                    .collect();
                let shared_screen = format!("{agent}/shared_screen.mp4");
                (
                    agent,
                    AgentAssets {
                        shared_screen,
                        actions,
                    },
                )
            })
            .collect();
        Self { agents }
    }
}
