//! Layered configuration: flags > `SEIZKNN_*` environment > config file >
//! defaults. Every resolved value remembers where it came from.
//!
//! The config file is line-based `key = value`; `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::detector::DetectorConfig;
use crate::features::FeatureMode;
use crate::knn::QFormat;
use crate::signal::FilterSpec;

pub const ENV_PREFIX: &str = "SEIZKNN_";

/// Recognised keys and their defaults.
pub const KEYS: &[(&str, &str)] = &[
    ("k", "3"),
    ("alpha", "30"),
    ("threshold", "0.5"),
    ("window_len", "178"),
    ("sample_rate_hz", "178"),
    ("filter.cutoff_hz", "40"),
    ("filter.order", "4"),
    ("features", "raw"),
    ("q_format", "13.3"),
    ("model_path", ""),
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("config line {line}: expected key = value")]
    BadLine { line: usize },
    #[error("unknown config key {key:?} ({origin})")]
    UnknownKey { key: String, origin: String },
    #[error("bad value {value:?} for {key} ({source_of}): {reason}")]
    BadValue {
        key: String,
        value: String,
        source_of: Source,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Default,
    File,
    Env,
    Flag,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Default => "default",
            Source::File => "file",
            Source::Env => "env",
            Source::Flag => "flag",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Setting {
    pub value: String,
    pub source: Source,
}

pub fn env_var_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.replace('.', "_").to_ascii_uppercase())
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

pub fn parse_file(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::BadLine { line: i + 1 })?;
        let key = k.trim().to_owned();
        if !known(&key) {
            return Err(ConfigError::UnknownKey {
                key,
                origin: format!("config line {}", i + 1),
            });
        }
        out.push((key, v.trim().to_owned()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ResolvedConfig {
    settings: BTreeMap<String, Setting>,
}

impl ResolvedConfig {
    pub fn defaults() -> Self {
        let settings = KEYS
            .iter()
            .map(|(k, v)| {
                (
                    k.to_string(),
                    Setting {
                        value: v.to_string(),
                        source: Source::Default,
                    },
                )
            })
            .collect();
        Self { settings }
    }

    fn set(&mut self, key: &str, value: String, source: Source) {
        self.settings.insert(key.to_owned(), Setting { value, source });
    }

    /// Builds the layered view. `env` is consulted for every known key;
    /// `flags` holds only the flags the user actually passed.
    pub fn resolve(
        file: Option<&Path>,
        env: impl Fn(&str) -> Option<String>,
        flags: &[(&str, String)],
    ) -> Result<Self, ConfigError> {
        let mut cfg = Self::defaults();
        if let Some(path) = file {
            for (k, v) in parse_file(&std::fs::read_to_string(path)?)? {
                cfg.set(&k, v, Source::File);
            }
        }
        for (key, _) in KEYS {
            if let Some(v) = env(&env_var_name(key)) {
                cfg.set(key, v, Source::Env);
            }
        }
        for (key, value) in flags {
            if !known(key) {
                return Err(ConfigError::UnknownKey {
                    key: key.to_string(),
                    origin: "flag".into(),
                });
            }
            cfg.set(key, value.clone(), Source::Flag);
        }
        Ok(cfg)
    }

    pub fn get(&self, key: &str) -> Option<&Setting> {
        self.settings.get(key)
    }

    fn parsed<T>(&self, key: &str) -> Result<T, ConfigError>
    where
        T: std::str::FromStr,
        T::Err: fmt::Display,
    {
        let s = &self.settings[key];
        s.value.trim().parse().map_err(|e: T::Err| ConfigError::BadValue {
            key: key.to_owned(),
            value: s.value.clone(),
            source_of: s.source,
            reason: e.to_string(),
        })
    }

    pub fn model_path(&self) -> Option<String> {
        self.get("model_path").map(|s| s.value.clone()).filter(|v| !v.is_empty())
    }

    pub fn detector_config(&self) -> Result<DetectorConfig, ConfigError> {
        let sample_rate_hz: f64 = self.parsed("sample_rate_hz")?;
        Ok(DetectorConfig {
            k: self.parsed("k")?,
            alpha: self.parsed("alpha")?,
            window_len: self.parsed("window_len")?,
            sample_rate_hz,
            filter: FilterSpec {
                cutoff_hz: self.parsed("filter.cutoff_hz")?,
                order: self.parsed("filter.order")?,
                sample_rate_hz,
            },
            q_format: self.parsed::<QFormat>("q_format")?,
            threshold: self.parsed("threshold")?,
            features: self.parsed::<FeatureMode>("features")?,
        })
    }

    /// One `key = value  (source)` line per setting.
    pub fn describe(&self) -> String {
        self.settings
            .iter()
            .map(|(k, s)| format!("{k} = {}  ({})\n", s.value, s.source))
            .collect()
    }
}
