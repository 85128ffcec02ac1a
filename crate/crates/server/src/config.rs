use std::path::{Path, PathBuf};

use costudy_core::config::SessionConfig;
use costudy_core::scheduler::AssetManifest;
use serde::{Deserialize, Serialize};

use crate::ServerError;

/// Server settings. Relative paths resolve against the directory of the
/// file they were loaded from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: String,
    pub port: u16,
    /// Session defaults (TOML or JSON). Built-in defaults when absent.
    pub session_config: Option<PathBuf>,
    /// Transcript used when a create request does not carry one.
    pub transcript: Option<PathBuf>,
    pub asset_manifest: Option<PathBuf>,
    pub assets_dir: PathBuf,
    pub log_dir: PathBuf,
    pub heartbeat_ms: u64,
    /// How often each session worker advances its clock.
    pub tick_ms: u64,
    /// Minimum spacing between log flushes while a session is live.
    pub persist_interval_ms: u64,
    pub stream_buffer: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: 8080,
            session_config: None,
            transcript: None,
            asset_manifest: None,
            assets_dir: PathBuf::from("assets"),
            log_dir: PathBuf::from("logs"),
            heartbeat_ms: 15_000,
            tick_ms: 200,
            persist_interval_ms: 1_000,
            stream_buffer: 1024,
        }
    }
}

impl ServerConfig {
    pub fn load(path: &Path) -> Result<Self, ServerError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServerError::Config(format!("{}: {e}", path.display())))?;
        let mut config: ServerConfig =
            toml::from_str(&text).map_err(|e| ServerError::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.session_config,
            &mut self.transcript,
            &mut self.asset_manifest,
        ]
        .into_iter()
        .flatten()
        {
            join(p);
        }
        join(&mut self.assets_dir);
        join(&mut self.log_dir);
    }

    pub fn validate(&self) -> Result<(), ServerError> {
        if self.heartbeat_ms == 0 || self.tick_ms == 0 {
            return Err(ServerError::Config(
                "heartbeat_ms and tick_ms must be positive".into(),
            ));
        }
        if self.stream_buffer == 0 {
            return Err(ServerError::Config("stream_buffer must be positive".into()));
        }
        Ok(())
    }

    pub fn session_defaults(&self) -> Result<SessionConfig, ServerError> {
        let config = match &self.session_config {
            Some(path) => SessionConfig::load(path)
                .map_err(|e| ServerError::Config(format!("{}: {e}", path.display())))?,
            None => SessionConfig::default(),
        };
        Ok(config)
    }

    pub fn default_transcript(&self) -> Result<Option<String>, ServerError> {
        self.transcript
            .as_ref()
            .map(|path| {
                std::fs::read_to_string(path)
                    .map_err(|e| ServerError::Config(format!("{}: {e}", path.display())))
            })
            .transpose()
    }

    /// Loads the asset manifest and checks it covers every roster member.
    pub fn manifest(&self, session: &SessionConfig) -> Result<Option<AssetManifest>, ServerError> {
        let Some(path) = &self.asset_manifest else {
            return Ok(None);
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServerError::Config(format!("{}: {e}", path.display())))?;
        let manifest = AssetManifest::from_json(&text)?;
        let ids = (0..session.roster.len()).map(|i| costudy_core::AgentId::from_index(i).to_string());
        manifest.validate(ids)?;
        Ok(Some(manifest))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("server.toml");
        std::fs::write(&path, "port = 9000\nlog_dir = \"out\"\n").unwrap();
        let config = ServerConfig::load(&path).unwrap();
        assert_eq!(config.port, 9000);
        assert_eq!(config.log_dir, dir.path().join("out"));
        assert_eq!(config.heartbeat_ms, 15_000);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("server.toml");
        std::fs::write(&path, "prot = 9000\n").unwrap();
        assert!(ServerConfig::load(&path).is_err());
    }
}
