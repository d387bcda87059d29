//! Flat key-value inputs: `key = value` config files and `key,value` CSVs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{file}:{line}: {message}")]
    Syntax { file: String, line: usize, message: String },
    #[error("{0}: {1}")]
    Io(String, String),
    #[error("setting {key}: {message}")]
    Invalid { key: String, message: String },
    #[error("unknown setting {0:?}")]
    Unknown(String),
}

/// Ordered string map read from a config or key-value CSV file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    map: BTreeMap<String, String>,
}

impl KeyValues {
    /// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
    pub fn parse_cfg(text: &str, file: &str) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                file: file.into(),
                line: n + 1,
                message: "expected key = value".into(),
            })?;
            let key = k.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax { file: file.into(), line: n + 1, message: "empty key".into() });
            }
            if map.insert(key.to_string(), v.trim().to_string()).is_some() {
                return Err(ConfigError::Syntax {
                    file: file.into(),
                    line: n + 1,
                    message: format!("duplicate key {key:?}"),
                });
            }
        }
        Ok(KeyValues { map })
    }

    /// Parses a two-column CSV with header `key,value`.
    pub fn parse_csv(text: &str) -> Result<Self, ConfigError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| syntax(0, e))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["key", "value"] {
            return Err(ConfigError::Syntax {
                file: "csv".into(),
                line: 1,
                message: "header must be key,value".into(),
            });
        }
        let mut map = BTreeMap::new();
        for (n, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| syntax(n + 2, e))?;
            let key = rec.get(0).unwrap_or_default().to_string();
            if map.insert(key.clone(), rec.get(1).unwrap_or_default().to_string()).is_some() {
                return Err(ConfigError::Syntax {
                    file: "csv".into(),
                    line: n + 2,
                    message: format!("duplicate key {key:?}"),
                });
            }
        }
        Ok(KeyValues { map })
    }

    pub fn read_csv(path: &Path) -> Result<Self, ConfigError> {
        Self::parse_csv(&read_to_string(path)?).map_err(|e| match e {
            ConfigError::Syntax { line, message, .. } => {
                ConfigError::Syntax { file: path.display().to_string(), line, message }
            }
            other => other,
        })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.map.insert(key.into(), value.into());
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &String)> {
        self.map.iter()
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| ConfigError::Invalid { key: key.into(), message: format!("cannot parse {v:?}") }),
        }
    }

    pub fn f64(&self, key: &str) -> Result<f64, ConfigError> {
        self.parsed(key)?.ok_or_else(|| ConfigError::Invalid { key: key.into(), message: "missing".into() })
    }
}

fn syntax(line: usize, e: csv::Error) -> ConfigError {
    ConfigError::Syntax { file: "csv".into(), line, message: e.to_string() }
}

pub fn read_to_string(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.display().to_string(), e.to_string()))
}

/// Resolves `value` relative to the directory holding the config file.
pub fn resolve_path(config_dir: &Path, value: &str) -> PathBuf {
    let p = Path::new(value);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config_dir.join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cfg_parsing() {
        let kv = KeyValues::parse_cfg("# header\nseed = 7  # trailing\n\nout=dir\n", "t.cfg").unwrap();
        assert_eq!(kv.get("seed"), Some("7"));
        assert_eq!(kv.get("out"), Some("dir"));
        assert_eq!(kv.parsed::<u64>("seed").unwrap(), Some(7));
        assert!(kv.parsed::<u64>("out").is_err());
        assert!(KeyValues::parse_cfg("novalue\n", "t.cfg").is_err());
        assert!(KeyValues::parse_cfg("a=1\na=2\n", "t.cfg").is_err());
    }

    #[test]
    fn csv_parsing() {
        let kv = KeyValues::parse_csv("key,value\neta0,-2.5\n# note\nalpha_fail,0.1\n").unwrap();
        assert_eq!(kv.f64("eta0").unwrap(), -2.5);
        assert_eq!(kv.keys().count(), 2);
        assert!(KeyValues::parse_csv("k,v\na,1\n").is_err());
        assert!(KeyValues::parse_csv("key,value\na,1\na,2\n").is_err());
    }
}
