//! Flat `key = value` configuration files with `[section]` headers.
//!
//! The format is deliberately minimal so manifests stay diff-able: blank
//! lines and `#` comments are ignored, values are bare tokens parsed on
//! demand.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::path::Path;

/// Parsed configuration text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl ConfigFile {
    pub fn parse(text: &str, origin: &str) -> Result<ConfigFile> {
        let mut out = ConfigFile::default();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = line[1..line.len() - 1].trim().to_string();
                out.sections.entry(section.clone()).or_default();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::MalformedLine {
                    path: origin.into(),
                    line: lineno + 1,
                    reason: "expected `key = value` or `[section]`".into(),
                });
            };
            out.sections
                .entry(section.clone())
                .or_default()
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<ConfigFile> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ConfigFile::parse(&text, &path.display().to_string())
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn keys(&self, section: &str) -> Vec<&str> {
        self.sections
            .get(section)
            .map(|m| m.keys().map(String::as_str).collect())
            .unwrap_or_default()
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    fn parse_with<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::Config(format!("[{section}] {key}: cannot parse {raw:?}"))
            }),
        }
    }

    pub fn f64(&self, section: &str, key: &str) -> Result<Option<f64>> {
        self.parse_with(section, key)
    }

    pub fn u64(&self, section: &str, key: &str) -> Result<Option<u64>> {
        self.parse_with(section, key)
    }

    pub fn usize(&self, section: &str, key: &str) -> Result<Option<usize>> {
        self.parse_with(section, key)
    }

    pub fn bool(&self, section: &str, key: &str) -> Result<Option<bool>> {
        self.parse_with(section, key)
    }
}
