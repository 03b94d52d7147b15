//! Plain-text key/value configuration with include support.
//!
//! Format, one entry per line:
//!
//! ```text
//! # comment
//! key.subkey = value
//! include other_file.cfg
//! ```
//!
//! Later assignments override earlier ones, so a file can include a base
//! configuration and then override individual keys. Include paths are
//! resolved relative to the including file.

use crate::frames::Vec3;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

const MAX_INCLUDE_DEPTH: usize = 8;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("key `{key}`: {msg}")]
    BadValue { key: String, msg: String },
    #[error("include depth exceeds {MAX_INCLUDE_DEPTH} (cycle?) at {path}:{line}")]
    IncludeDepth { path: String, line: usize },
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Parsed key/value assignments, in override order.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    map: BTreeMap<String, String>,
}

impl KeyValues {
    /// Parses a single source string. `include` directives are rejected;
    /// use [`load`] for file-based configs with includes.
    pub fn parse_str(src: &str, label: &str) -> Result<KeyValues, ConfigError> {
        let mut kv = KeyValues::default();
        kv.ingest(src, label, None, 0)?;
        Ok(kv)
    }

    fn ingest(
        &mut self,
        src: &str,
        label: &str,
        dir: Option<&Path>,
        depth: usize,
    ) -> Result<(), ConfigError> {
        for (idx, raw) in src.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("include") {
                let rest = rest.trim();
                if rest.is_empty() || !raw.trim_start().starts_with("include ") {
                    return Err(ConfigError::Parse {
                        path: label.to_string(),
                        line: idx + 1,
                        msg: "include requires a path".to_string(),
                    });
                }
                let dir = dir.ok_or_else(|| ConfigError::Parse {
                    path: label.to_string(),
                    line: idx + 1,
                    msg: "include is not available in string configs".to_string(),
                })?;
                if depth + 1 > MAX_INCLUDE_DEPTH {
                    return Err(ConfigError::IncludeDepth {
                        path: label.to_string(),
                        line: idx + 1,
                    });
                }
                let target = dir.join(rest);
                let src = fs::read_to_string(&target).map_err(|source| ConfigError::Io {
                    path: target.display().to_string(),
                    source,
                })?;
                let sub_dir: PathBuf =
                    target.parent().map(Path::to_path_buf).unwrap_or_else(|| dir.to_path_buf());
                self.ingest(&src, &target.display().to_string(), Some(&sub_dir), depth + 1)?;
                continue;
            }
            let Some(eq) = line.find('=') else {
                return Err(ConfigError::Parse {
                    path: label.to_string(),
                    line: idx + 1,
                    msg: format!("expected `key = value`, found {line:?}"),
                });
            };
            let key = line[..eq].trim();
            let value = line[eq + 1..].trim();
            if key.is_empty() {
                return Err(ConfigError::Parse {
                    path: label.to_string(),
                    line: idx + 1,
                    msg: "empty key".to_string(),
                });
            }
            if !key
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '.' || c == '_' || c == '-')
            {
                return Err(ConfigError::Parse {
                    path: label.to_string(),
                    line: idx + 1,
                    msg: format!("invalid key {key:?}"),
                });
            }
            self.map.insert(key.to_string(), value.to_string());
        }
        Ok(())
    }

    /// Loads a config file, resolving `include` directives relative to it.
    pub fn load(path: &Path) -> Result<KeyValues, ConfigError> {
        let src = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        let mut kv = KeyValues::default();
        kv.ingest(&src, &path.display().to_string(), Some(&dir), 0)?;
        Ok(kv)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    pub fn get_str(&self, key: &str) -> Result<&str, ConfigError> {
        self.map
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| ConfigError::MissingKey(key.to_string()))
    }

    pub fn get_str_or(&self, key: &str, default: &'static str) -> &str {
        self.map.get(key).map(String::as_str).unwrap_or(default)
    }

    pub fn get_f64(&self, key: &str) -> Result<f64, ConfigError> {
        let raw = self.get_str(key)?;
        let v: f64 = raw.parse().map_err(|e| ConfigError::BadValue {
            key: key.to_string(),
            msg: format!("{e} (value {raw:?})"),
        })?;
        if !v.is_finite() {
            return Err(ConfigError::BadValue {
                key: key.to_string(),
                msg: "value must be finite".to_string(),
            });
        }
        Ok(v)
    }

    pub fn get_f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        if self.contains(key) {
            self.get_f64(key)
        } else {
            Ok(default)
        }
    }

    pub fn get_usize(&self, key: &str) -> Result<usize, ConfigError> {
        let raw = self.get_str(key)?;
        raw.parse().map_err(|e| ConfigError::BadValue {
            key: key.to_string(),
            msg: format!("{e} (value {raw:?})"),
        })
    }

    pub fn get_usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        if self.contains(key) {
            self.get_usize(key)
        } else {
            Ok(default)
        }
    }

    pub fn get_u64_or(&self, key: &str, default: u64) -> Result<u64, ConfigError> {
        if !self.contains(key) {
            return Ok(default);
        }
        let raw = self.get_str(key)?;
        raw.parse().map_err(|e| ConfigError::BadValue {
            key: key.to_string(),
            msg: format!("{e} (value {raw:?})"),
        })
    }

    /// Accepts `on`/`off`/`true`/`false`.
    pub fn get_bool_or(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        if !self.contains(key) {
            return Ok(default);
        }
        match self.get_str(key)? {
            "on" | "true" => Ok(true),
            "off" | "false" => Ok(false),
            other => Err(ConfigError::BadValue {
                key: key.to_string(),
                msg: format!("expected on/off/true/false, found {other:?}"),
            }),
        }
    }

    /// Three whitespace-separated floats.
    pub fn get_vec3(&self, key: &str) -> Result<Vec3, ConfigError> {
        let raw = self.get_str(key)?;
        let parts: Vec<&str> = raw.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(ConfigError::BadValue {
                key: key.to_string(),
                msg: format!("expected 3 components, found {}", parts.len()),
            });
        }
        let mut v = [0.0f64; 3];
        for (i, p) in parts.iter().enumerate() {
            v[i] = p.parse().map_err(|e| ConfigError::BadValue {
                key: key.to_string(),
                msg: format!("component {}: {e}", i + 1),
            })?;
            if !v[i].is_finite() {
                return Err(ConfigError::BadValue {
                    key: key.to_string(),
                    msg: format!("component {} must be finite", i + 1),
                });
            }
        }
        Ok(Vec3::new(v[0], v[1], v[2]))
    }

    /// Comma-separated string list; empty value yields an empty list.
    pub fn get_list(&self, key: &str) -> Result<Vec<String>, ConfigError> {
        let raw = self.get_str(key)?;
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        Ok(raw.split(',').map(|s| s.trim().to_string()).collect())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }
}
