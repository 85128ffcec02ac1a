//! Session configuration, loaded from one TOML or JSON document.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{Persona, DEFAULT_TOKEN_BUDGET};
use crate::monitor::IdleThresholds;
use crate::provider::ProviderConfig;
use crate::router::RouterConfig;
use crate::scheduler::SchedulerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Full,
    /// Passive presence only: no agent-authored output.
    Baseline,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Full => "full",
            Mode::Baseline => "baseline",
        })
    }
}

impl FromStr for Mode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Mode::Full),
            "baseline" => Ok(Mode::Baseline),
            other => Err(ConfigError::Invalid(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VideoConfig {
    pub width: u32,
    pub height: u32,
}

impl Default for VideoConfig {
    fn default() -> Self {
        Self {
            width: 1920,
            height: 1080,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryConfig {
    pub token_budget: u32,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            token_budget: DEFAULT_TOKEN_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub mode: Mode,
    pub seed: u64,
    pub roster: Vec<Persona>,
    pub scheduler: SchedulerConfig,
    pub router: RouterConfig,
    pub idle: IdleThresholds,
    pub memory: MemoryConfig,
    pub provider: ProviderConfig,
    pub video: VideoConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Full,
            seed: 0,
            roster: Persona::default_roster(),
            scheduler: SchedulerConfig::default(),
            router: RouterConfig::default(),
            idle: IdleThresholds::default(),
            memory: MemoryConfig::default(),
            provider: ProviderConfig::default(),
            video: VideoConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("roster must contain at least one co-learner")]
    EmptyRoster,
    #[error("duplicate co-learner name `{0}`")]
    DuplicateName(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot parse configuration: {0}")]
    Parse(String),
    #[error("cannot read configuration: {0}")]
    Io(#[from] std::io::Error),
}

impl SessionConfig {
    pub fn with_roster_size(mut self, n: usize) -> Self {
        let defaults = Persona::default_roster();
        self.roster = (0..n)
            .map(|i| {
                let mut p = defaults[i % defaults.len()].clone();
                if i >= defaults.len() {
                    p.name = format!("{} {}", p.name, i / defaults.len() + 1);
                }
                p
            })
            .collect();
        self
    }

    pub fn roster_size(&self) -> usize {
        self.roster.len()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.roster.is_empty() {
            return Err(ConfigError::EmptyRoster);
        }
        let mut names = BTreeSet::new();
        for persona in &self.roster {
            persona
                .validate()
                .map_err(|e| ConfigError::Invalid(format!("{}: {e}", persona.name)))?;
            if !names.insert(persona.name.trim().to_lowercase()) {
                return Err(ConfigError::DuplicateName(persona.name.clone()));
            }
            if !self.provider.voices.contains(&persona.voice_id) {
                return Err(ConfigError::Invalid(format!(
                    "{}: unknown voice `{}`",
                    persona.name, persona.voice_id
                )));
            }
        }
        self.scheduler
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("scheduler: {e}")))?;
        self.router
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("router: {e}")))?;
        self.idle
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("idle: {e}")))?;
        self.provider
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("provider: {e}")))?;
        if self.memory.token_budget == 0 {
            return Err(ConfigError::Invalid(
                "memory.token_budget must be positive".into(),
            ));
        }
        if self.video.width == 0 || self.video.height == 0 {
            return Err(ConfigError::Invalid("video dimensions must be positive".into()));
        }
        Ok(())
    }

    /// Parses JSON when the document starts with `{`, TOML otherwise.
    pub fn from_str_auto(text: &str) -> Result<Self, ConfigError> {
        let config: SessionConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?
        };
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str_auto(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = SessionConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.roster_size(), 6);
        let voices: BTreeSet<_> = cfg.roster.iter().map(|p| &p.voice_id).collect();
        assert_eq!(voices.len(), 6, "voices are distinct");
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut cfg = SessionConfig::default();
        cfg.roster[1].name = "ava".into();
        assert!(matches!(cfg.validate(), Err(ConfigError::DuplicateName(_))));
    }

    #[test]
    fn empty_roster_is_rejected() {
        let cfg = SessionConfig::default().with_roster_size(0);
        assert!(matches!(cfg.validate(), Err(ConfigError::EmptyRoster)));
    }

    #[test]
    fn large_rosters_get_unique_names() {
        SessionConfig::default().with_roster_size(13).validate().unwrap();
    }

    #[test]
    fn parses_toml_and_json() {
        let toml_doc = r#"
            mode = "baseline"
            seed = 9

            [[roster]]
            name = "Ava"
            tone = "warm"
            interaction_style = "curious"
            characteristic = "kind"
            voice_id = "nova"

            [idle]
            code_idle_ms = 30000

            [provider]
            backend = "stub"
        "#;
        let cfg = SessionConfig::from_str_auto(toml_doc).unwrap();
        assert_eq!(cfg.mode, Mode::Baseline);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.roster_size(), 1);
        assert_eq!(cfg.idle.code_idle_ms, 30_000);
        assert_eq!(cfg.idle.mouse_idle_ms, 120_000);
        cfg.validate().unwrap();

        let json_doc = serde_json::to_string(&cfg).unwrap();
        assert_eq!(SessionConfig::from_str_auto(&json_doc).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(matches!(
            SessionConfig::from_str_auto("sed = 1"),
            Err(ConfigError::Parse(_))
        ));
    }
}
