use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Roster identity of a co-learner, rendered on the wire as `agent-N` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId(usize);

impl AgentId {
    pub fn from_index(index: usize) -> Self {
        Self(index)
    }

    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "agent-{}", self.0 + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid agent id `{0}`")]
pub struct ParseIdError(pub String);

impl FromStr for AgentId {
    type Err = ParseIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix("agent-")
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|n| *n >= 1)
            .map(|n| AgentId(n - 1))
            .ok_or_else(|| ParseIdError(s.to_string()))
    }
}

impl Serialize for AgentId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AgentId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A chat room: the shared group room or one co-learner's private room.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RoomId {
    Group,
    Private(AgentId),
}

impl fmt::Display for RoomId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RoomId::Group => f.write_str("group"),
            RoomId::Private(agent) => agent.fmt(f),
        }
    }
}

impl FromStr for RoomId {
    type Err = ParseIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "group" {
            Ok(RoomId::Group)
        } else {
            s.parse().map(RoomId::Private)
        }
    }
}

impl Serialize for RoomId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RoomId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn agent_ids_are_one_based_on_the_wire() {
        let id = AgentId::from_index(0);
        assert_eq!(id.to_string(), "agent-1");
        assert_eq!("agent-1".parse::<AgentId>().unwrap(), id);
        assert!("agent-0".parse::<AgentId>().is_err());
        assert!("bob".parse::<AgentId>().is_err());
    }

    #[test]
    fn room_ids_parse() {
        assert_eq!("group".parse::<RoomId>().unwrap(), RoomId::Group);
        assert_eq!(
            "agent-3".parse::<RoomId>().unwrap(),
            RoomId::Private(AgentId::from_index(2))
        );
        assert_eq!(
            serde_json::to_string(&RoomId::Private(AgentId::from_index(1))).unwrap(),
            "\"agent-2\""
        );
    }
}
