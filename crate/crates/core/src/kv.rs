//! Minimal `key = value` text format used for run and oracle configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are unique.

use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum KvError {
    #[error("{path}: line {line}: expected `key = value`")]
    Syntax { path: String, line: usize },
    #[error("{path}: line {line}: duplicate key `{key}`")]
    Duplicate { path: String, line: usize, key: String },
    #[error("key `{key}`: cannot parse `{value}`: {reason}")]
    Value { key: String, value: String, reason: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub fn parse(text: &str, origin: &str) -> Result<BTreeMap<String, String>, KvError> {
    let mut out = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(KvError::Syntax { path: origin.to_string(), line: idx + 1 });
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(KvError::Syntax { path: origin.to_string(), line: idx + 1 });
        }
        if out.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(KvError::Duplicate {
                path: origin.to_string(),
                line: idx + 1,
                key: key.to_string(),
            });
        }
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<BTreeMap<String, String>, KvError> {
    let text = std::fs::read_to_string(path).map_err(|source| KvError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse(&text, &path.display().to_string())
}

pub fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, KvError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| KvError::Value {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}
