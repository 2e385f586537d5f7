use std::fs;
use std::path::{Path, PathBuf};

use taoi_core::SimConfig;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config key `{key}`: {message}")]
    Parse { key: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// Reads a JSON config. Absent keys take their defaults and an empty file
/// yields the default config.
pub fn parse_config(path: &Path) -> Result<SimConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    let cfg = parse_config_str(&text)?;
    tracing::info!(path = %path.display(), "effective config:\n{}", effective_config(&cfg));
    Ok(cfg)
}

pub fn parse_config_str(text: &str) -> Result<SimConfig, ConfigError> {
    let cfg = if text.trim().is_empty() {
        SimConfig::default()
    } else {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            ConfigError::Parse { key, message: e.into_inner().to_string() }
        })?
    };
    cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(cfg)
}

/// Pretty JSON of every setting, defaults included.
pub fn effective_config(cfg: &SimConfig) -> String {
    serde_json::to_string_pretty(cfg).expect("config serializes")
}
