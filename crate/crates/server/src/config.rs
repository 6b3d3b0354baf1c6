//! Server configuration: a TOML file with `EASEL_*` environment overrides.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    /// Deterministic in-process backend.
    Mock,
    /// A ComfyUI-compatible server at `backend.url`.
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub mode: BackendMode,
    pub url: Option<String>,
    /// Progress ticks per job on the mock backend.
    pub mock_ticks: u32,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            mode: BackendMode::Mock,
            url: None,
            mock_ticks: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Journal, snapshots and blobs live here.
    pub data_dir: PathBuf,
    pub listen: String,
    pub backend: BackendConfig,
    /// Jobs running on the backend at once.
    pub max_inflight: usize,
    /// Default bucket width of `/trails`, in milliseconds.
    pub trail_bucket_ms: i64,
    /// Events buffered per stream consumer before it is dropped to a resync.
    pub event_buffer: usize,
    /// Snapshot the document every this many journal records (0 disables).
    pub snapshot_every: u64,
    /// `fsync` the journal after every append.
    pub sync: bool,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("easel-data"),
            listen: "127.0.0.1:8080".into(),
            backend: BackendConfig::default(),
            max_inflight: 1,
            trail_bucket_ms: 60_000,
            event_buffer: 1024,
            snapshot_every: 500,
            sync: true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("environment variable {var}={value}: {reason}")]
    Env { var: String, value: String, reason: String },
    #[error("{0}")]
    Invalid(String),
}

/// Environment variables read by [`Config::apply_env`].
pub const ENV_VARS: [&str; 9] = [
    "EASEL_DATA_DIR",
    "EASEL_LISTEN",
    "EASEL_BACKEND",
    "EASEL_BACKEND_URL",
    "EASEL_MOCK_TICKS",
    "EASEL_MAX_INFLIGHT",
    "EASEL_TRAIL_BUCKET_MS",
    "EASEL_EVENT_BUFFER",
    "EASEL_SNAPSHOT_EVERY",
];

fn parse<T: std::str::FromStr>(var: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Env {
        var: var.to_owned(),
        value: value.to_owned(),
        reason: e.to_string(),
    })
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Reads `path`, applies the process environment and validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        let mut config = Self::from_toml(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })?;
        let env: HashMap<String, String> = std::env::vars().filter(|(k, _)| k.starts_with("EASEL_")).collect();
        config.apply_env(&env)?;
        config.validate()?;
        Ok(config)
    }

    /// Overrides fields from `EASEL_*` variables present in `env`.
    pub fn apply_env(&mut self, env: &HashMap<String, String>) -> Result<(), ConfigError> {
        for (var, value) in env {
            match var.as_str() {
                "EASEL_DATA_DIR" => self.data_dir = PathBuf::from(value),
                "EASEL_LISTEN" => self.listen = value.clone(),
                "EASEL_BACKEND" => {
                    self.backend.mode = match value.as_str() {
                        "mock" => BackendMode::Mock,
                        "remote" => BackendMode::Remote,
                        _ => {
                            return Err(ConfigError::Env {
                                var: var.clone(),
                                value: value.clone(),
                                reason: "expected mock or remote".into(),
                            })
                        }
                    }
                }
                "EASEL_BACKEND_URL" => self.backend.url = Some(value.clone()),
                "EASEL_MOCK_TICKS" => self.backend.mock_ticks = parse(var, value)?,
                "EASEL_MAX_INFLIGHT" => self.max_inflight = parse(var, value)?,
                "EASEL_TRAIL_BUCKET_MS" => self.trail_bucket_ms = parse(var, value)?,
                "EASEL_EVENT_BUFFER" => self.event_buffer = parse(var, value)?,
                "EASEL_SNAPSHOT_EVERY" => self.snapshot_every = parse(var, value)?,
                _ => {}
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_inflight == 0 {
            return Err(ConfigError::Invalid("max_inflight must be at least 1".into()));
        }
        if self.trail_bucket_ms <= 0 {
            return Err(ConfigError::Invalid("trail_bucket_ms must be positive".into()));
        }
        if self.event_buffer == 0 {
            return Err(ConfigError::Invalid("event_buffer must be at least 1".into()));
        }
        if self.backend.mode == BackendMode::Remote && self.backend.url.is_none() {
            return Err(ConfigError::Invalid("backend.url is required in remote mode".into()));
        }
        Ok(())
    }
}
