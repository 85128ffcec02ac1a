//! Inactivity detection over the mouse, notes and code channels.
//!
//! A channel fires once when its idle time strictly exceeds the threshold,
//! then stays disarmed until the next observed activity on that channel.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Mouse,
    Notes,
    Code,
}

impl Channel {
    /// Evaluation order within one tick.
    pub const ALL: [Channel; 3] = [Channel::Mouse, Channel::Notes, Channel::Code];

    fn slot(self) -> usize {
        self as usize
    }

    pub fn trigger(self) -> IdleTrigger {
        match self {
            Channel::Mouse => IdleTrigger::MouseIdle,
            Channel::Notes => IdleTrigger::NotesIdle,
            Channel::Code => IdleTrigger::CodeIdle,
        }
    }
}

impl FromStr for Channel {
    type Err = UnknownChannel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mouse" => Ok(Channel::Mouse),
            "notes" => Ok(Channel::Notes),
            "code" => Ok(Channel::Code),
            other => Err(UnknownChannel(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown activity channel `{0}`")]
pub struct UnknownChannel(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdleTrigger {
    MouseIdle,
    NotesIdle,
    CodeIdle,
}

impl fmt::Display for IdleTrigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IdleTrigger::MouseIdle => "mouse_idle",
            IdleTrigger::NotesIdle => "notes_idle",
            IdleTrigger::CodeIdle => "code_idle",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdleThresholds {
    pub mouse_idle_ms: u64,
    pub notes_idle_ms: u64,
    pub code_idle_ms: u64,
}

impl Default for IdleThresholds {
    fn default() -> Self {
        Self {
            mouse_idle_ms: 120_000,
            notes_idle_ms: 180_000,
            code_idle_ms: 60_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("idle threshold for {0:?} must be positive")]
pub struct ThresholdError(pub Channel);

impl IdleThresholds {
    pub fn for_channel(&self, channel: Channel) -> u64 {
        match channel {
            Channel::Mouse => self.mouse_idle_ms,
            Channel::Notes => self.notes_idle_ms,
            Channel::Code => self.code_idle_ms,
        }
    }

    pub fn validate(&self) -> Result<(), ThresholdError> {
        match Channel::ALL.into_iter().find(|c| self.for_channel(*c) == 0) {
            Some(c) => Err(ThresholdError(c)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelState {
    pub last_activity_ms: u64,
    pub armed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityTrack {
    channels: [ChannelState; 3],
}

impl ActivityTrack {
    /// All channels armed, counting idleness from `start_ms`.
    pub fn new(start_ms: u64) -> Self {
        let state = ChannelState {
            last_activity_ms: start_ms,
            armed: true,
        };
        Self { channels: [state; 3] }
    }

    pub fn channel(&self, channel: Channel) -> ChannelState {
        self.channels[channel.slot()]
    }

    pub fn observe(&mut self, channel: Channel, at_ms: u64) {
        let state = &mut self.channels[channel.slot()];
        state.last_activity_ms = state.last_activity_ms.max(at_ms);
        state.armed = true;
    }

    /// Fires every armed channel whose idle time strictly exceeds its threshold.
    pub fn tick(&mut self, thresholds: &IdleThresholds, now_ms: u64) -> Vec<IdleTrigger> {
        let mut fired = Vec::new();
        for channel in Channel::ALL {
            let state = &mut self.channels[channel.slot()];
            if state.armed && now_ms.saturating_sub(state.last_activity_ms) > thresholds.for_channel(channel)
            {
                state.armed = false;
                fired.push(channel.trigger());
            }
        }
        fired
    }

    /// Earliest instant at which some armed channel would fire.
    pub fn next_due(&self, thresholds: &IdleThresholds) -> Option<u64> {
        Channel::ALL
            .into_iter()
            .filter(|c| self.channels[c.slot()].armed)
            .map(|c| self.channels[c.slot()].last_activity_ms + thresholds.for_channel(c) + 1)
            .min()
    }
}
