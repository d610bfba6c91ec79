//! Flat key-value text files (`key = value`, one per line, `#` comments).
//! Used for camera intrinsics, fit configuration, scaling records and
//! diagnostic reports.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
    source: Option<PathBuf>,
}

impl KeyValues {
    pub fn parse(text: &str, source: Option<&Path>) -> Result<Self> {
        let origin = || source.map(Path::to_path_buf).unwrap_or_else(|| "<text>".into());
        let mut entries = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = match line.split_once('=') {
                Some((k, v)) => (k.trim(), v.trim()),
                None => match line.split_once(char::is_whitespace) {
                    Some((k, v)) => (k.trim(), v.trim()),
                    None => {
                        return Err(Error::parse(
                            origin(),
                            format!("line {}: expected `key = value`", lineno + 1),
                        ))
                    }
                },
            };
            if key.is_empty() {
                return Err(Error::parse(origin(), format!("line {}: empty key", lineno + 1)));
            }
            entries.push((key.to_string(), value.to_string()));
        }
        Ok(Self {
            entries,
            source: source.map(Path::to_path_buf),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, Some(path))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_string()).map_err(|e| Error::io(path, e))
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    /// Last occurrence wins.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    fn origin(&self) -> PathBuf {
        self.source.clone().unwrap_or_else(|| "<text>".into())
    }

    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .get(key)
            .ok_or_else(|| Error::parse(self.origin(), format!("missing key `{key}`")))?;
        raw.parse()
            .map_err(|_| Error::parse(self.origin(), format!("bad value for `{key}`: {raw}")))
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        self.get_parsed(key)
    }

    pub fn get_usize(&self, key: &str) -> Result<usize> {
        self.get_parsed(key)
    }

    pub fn get_f64_list(&self, key: &str) -> Result<Vec<f64>> {
        let raw = self
            .get(key)
            .ok_or_else(|| Error::parse(self.origin(), format!("missing key `{key}`")))?;
        raw.split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| Error::parse(self.origin(), format!("bad number in `{key}`: {t}")))
            })
            .collect()
    }
}

impl std::fmt::Display for KeyValues {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// Space-separated list, shortest round-trip representation.
pub fn join_f64(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}
