//! Service configuration: one TOML file plus `COMPONENTHUB_` environment
//! overrides. Nested keys use a double underscore, so
//! `COMPONENTHUB_SANDBOX__WORKERS=4` sets `sandbox.workers`.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use componenthub_core::federation::RemoteRegistry;
use componenthub_core::pid::is_valid_namespace;
use componenthub_core::watch::{SandboxConfig, ViabilityPool, DEFAULT_POLL_INTERVAL};
use componenthub_core::{Clock, ManualClock, SystemClock, Timestamp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENV_PREFIX: &str = "COMPONENTHUB_";

/// Top-level keys that environment variables may override. Other
/// `COMPONENTHUB_*` variables (the CLI's server and token) are ignored.
const OVERRIDABLE: [&str; 10] = [
    "namespace",
    "listen_address",
    "storage_path",
    "eager_verification",
    "attachment_threshold",
    "watch",
    "sync",
    "sandbox",
    "tokens",
    "clock",
];

#[derive(Debug, Error)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    pub namespace: String,
    #[serde(default = "default_listen")]
    pub listen_address: String,
    pub storage_path: PathBuf,
    #[serde(default)]
    pub eager_verification: bool,
    #[serde(default = "default_threshold")]
    pub attachment_threshold: u64,
    #[serde(default)]
    pub remotes: Vec<RemoteRegistry>,
    #[serde(default)]
    pub watch: WatchSettings,
    #[serde(default)]
    pub sync: SyncSettings,
    #[serde(default)]
    pub sandbox: SandboxSettings,
    #[serde(default)]
    pub tokens: TokenSettings,
    #[serde(default)]
    pub clock: ClockSettings,
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_threshold() -> u64 {
    componenthub_core::store::DEFAULT_ATTACHMENT_THRESHOLD
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WatchSettings {
    /// Seconds between watch cycles; 0 turns the scheduler off.
    #[serde(default = "default_poll")]
    pub poll_interval_secs: u64,
}

fn default_poll() -> u64 {
    DEFAULT_POLL_INTERVAL as u64
}

impl Default for WatchSettings {
    fn default() -> Self {
        WatchSettings {
            poll_interval_secs: default_poll(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyncSettings {
    /// Seconds between scheduled pulls from every remote; 0 means manual only.
    #[serde(default)]
    pub interval_secs: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SandboxSettings {
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_wall_clock")]
    pub wall_clock_secs: u64,
    #[serde(default)]
    pub allow_network: bool,
}

fn default_workers() -> usize {
    ViabilityPool::DEFAULT_WORKERS
}

fn default_wall_clock() -> u64 {
    SandboxConfig::default().wall_clock.as_secs()
}

impl Default for SandboxSettings {
    fn default() -> Self {
        SandboxSettings {
            workers: default_workers(),
            wall_clock_secs: default_wall_clock(),
            allow_network: false,
        }
    }
}

impl SandboxSettings {
    pub fn sandbox_config(&self) -> SandboxConfig {
        SandboxConfig {
            wall_clock: Duration::from_secs(self.wall_clock_secs),
            allow_network: self.allow_network,
            ..SandboxConfig::default()
        }
    }
}

#[derive(Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenSettings {
    /// HMAC secret for the built-in token verifier.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secret: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secret_file: Option<PathBuf>,
}

impl std::fmt::Debug for TokenSettings {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TokenSettings")
            .field("secret", &self.secret.as_ref().map(|_| "<redacted>"))
            .field("secret_file", &self.secret_file)
            .finish()
    }
}

impl TokenSettings {
    pub fn load_secret(&self) -> Result<Option<Vec<u8>>, ConfigError> {
        match (&self.secret, &self.secret_file) {
            (Some(_), Some(_)) => Err(ConfigError("set tokens.secret or tokens.secret_file, not both".into())),
            (Some(s), None) => Ok(Some(s.as_bytes().to_vec())),
            (None, Some(path)) => std::fs::read(path)
                .map(|b| Some(b.trim_ascii().to_vec()))
                .map_err(|e| ConfigError(format!("tokens.secret_file {}: {e}", path.display()))),
            (None, None) => Ok(None),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockSettings {
    #[serde(default)]
    pub source: ClockSource,
    /// RFC 3339 instant used when `source = "fixed"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_at: Option<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockSource {
    #[default]
    System,
    Fixed,
}

impl ClockSettings {
    pub fn build(&self) -> Result<Arc<dyn Clock>, ConfigError> {
        match self.source {
            ClockSource::System => Ok(Arc::new(SystemClock)),
            ClockSource::Fixed => {
                let raw = self
                    .fixed_at
                    .as_deref()
                    .ok_or_else(|| ConfigError("clock.fixed_at is required for a fixed clock".into()))?;
                let at = Timestamp::parse_rfc3339(raw)
                    .ok_or_else(|| ConfigError(format!("clock.fixed_at {raw:?} is not RFC 3339")))?;
                Ok(Arc::new(ManualClock::new(at)))
            }
        }
    }
}

impl ServiceConfig {
    /// Minimal configuration for `namespace` storing under `storage_path`.
    pub fn new(namespace: impl Into<String>, storage_path: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            namespace: namespace.into(),
            listen_address: default_listen(),
            storage_path: storage_path.into(),
            eager_verification: false,
            attachment_threshold: default_threshold(),
            remotes: Vec::new(),
            watch: WatchSettings::default(),
            sync: SyncSettings::default(),
            sandbox: SandboxSettings::default(),
            tokens: TokenSettings::default(),
            clock: ClockSettings::default(),
        }
    }

    /// Read `path` (if any) and apply overrides from the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        Self::load_from(path, std::env::vars())
    }

    pub fn load_from(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml(&text, env).map_err(|e| match path {
            Some(p) => ConfigError(format!("{}: {}", p.display(), e.0)),
            None => e,
        })
    }

    /// Parse TOML text, then apply `COMPONENTHUB_*` overrides from `env`.
    pub fn from_toml(text: &str, env: impl IntoIterator<Item = (String, String)>) -> Result<Self, ConfigError> {
        let mut table = toml::from_str::<toml::Table>(text).map_err(|e| ConfigError(e.to_string()))?;
        for (key, raw) in env {
            let Some(rest) = key.strip_prefix(ENV_PREFIX) else { continue };
            let path: Vec<String> = rest.split("__").map(str::to_ascii_lowercase).collect();
            if !OVERRIDABLE.contains(&path[0].as_str()) {
                continue;
            }
            set_path(&mut table, &path, env_value(&raw))?;
        }
        let config: ServiceConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError(e.message().to_string()))?;
        config.check()?;
        Ok(config)
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if !is_valid_namespace(&self.namespace) {
            return Err(ConfigError(format!("namespace {:?} is not a valid PID namespace", self.namespace)));
        }
        if self.sandbox.workers == 0 {
            return Err(ConfigError("sandbox.workers must be at least 1".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for r in &self.remotes {
            if r.namespace == self.namespace {
                return Err(ConfigError(format!("remote {} reuses the local namespace", r.name)));
            }
            if !names.insert(r.name.as_str()) {
                return Err(ConfigError(format!("remote {} listed twice", r.name)));
            }
        }
        self.tokens.load_secret()?;
        self.clock.build()?;
        Ok(())
    }
}

/// Environment values are read as TOML scalars when they parse as one
/// (numbers, booleans, quoted strings) and as plain strings otherwise.
fn env_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .filter(|v| !v.is_table())
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<(), ConfigError> {
    let (last, parents) = path.split_last().expect("non-empty key path");
    let mut cursor = table;
    for segment in parents {
        cursor = cursor
            .entry(segment.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| ConfigError(format!("{segment} is not a table")))?;
    }
    cursor.insert(last.clone(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn file_then_environment() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hub.toml");
        std::fs::write(
            &path,
            r#"
namespace = "olcf"
storage_path = "/tmp/hub"

[sandbox]
workers = 3

[[remotes]]
name = "wfhub"
base_url = "https://hub.example"
namespace = "wfh"
trust = "bidirectional"
"#,
        )
        .unwrap();
        let c = ServiceConfig::load_from(
            Some(&path),
            env(&[
                ("COMPONENTHUB_SANDBOX__WORKERS", "5"),
                ("COMPONENTHUB_LISTEN_ADDRESS", "0.0.0.0:9000"),
                ("COMPONENTHUB_TOKEN", "ignored"),
                ("UNRELATED", "x"),
            ]),
        )
        .unwrap();
        assert_eq!(c.sandbox.workers, 5);
        assert_eq!(c.listen_address, "0.0.0.0:9000");
        assert_eq!(c.remotes[0].mirror_enclave, "federation");
        assert_eq!(c.watch.poll_interval_secs, 900);
    }

    #[test]
    fn environment_alone_suffices() {
        let c = ServiceConfig::load_from(
            None,
            env(&[
                ("COMPONENTHUB_NAMESPACE", "lab"),
                ("COMPONENTHUB_STORAGE_PATH", "/srv/hub"),
                ("COMPONENTHUB_CLOCK__SOURCE", "fixed"),
                ("COMPONENTHUB_CLOCK__FIXED_AT", "2024-05-01T00:00:00Z"),
            ]),
        )
        .unwrap();
        assert_eq!(c.namespace, "lab");
        assert_eq!(c.clock.build().unwrap().now(), Timestamp::parse_rfc3339("2024-05-01T00:00:00Z").unwrap());
    }

    #[test]
    fn rejects_bad_values() {
        let base = [("COMPONENTHUB_STORAGE_PATH", "/x")];
        let with = |extra: (&str, &str)| {
            let mut e = env(&base);
            e.extend(env(&[extra]));
            ServiceConfig::load_from(None, e)
        };
        assert!(with(("COMPONENTHUB_NAMESPACE", "Not Valid")).is_err());
        assert!(with(("COMPONENTHUB_SANDBOX__WORKERS", "0")).is_err());
        assert!(with(("COMPONENTHUB_CLOCK__SOURCE", "fixed")).is_err());
        assert!(ServiceConfig::load_from(None, env(&[("COMPONENTHUB_NAMESPACE", "ok")])).is_err());
    }

    #[test]
    fn secret_is_redacted_in_debug() {
        let t = TokenSettings {
            secret: Some("hunter2".into()),
            secret_file: None,
        };
        assert!(!format!("{t:?}").contains("hunter2"));
    }
}
