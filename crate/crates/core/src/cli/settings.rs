//! Flat `key=value` configuration with a fixed set of known keys per command.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn with_defaults(defaults: &[(&str, &str)]) -> Self {
        Self { values: defaults.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(v) => {
                *v = value.to_string();
                Ok(())
            }
            None => {
                let known: Vec<&str> = self.values.keys().map(String::as_str).collect();
                Err(Error::Config(format!("unknown key {key:?}; known keys: {}", known.join(", "))))
            }
        }
    }

    /// `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.apply_assignment(line).map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_assignment(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("expected key=value, got {kv:?}")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        self.apply_text(&std::fs::read_to_string(path)?)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.values.get(key).ok_or_else(|| Error::Config(format!("no key {key:?}")))?;
        raw.parse().map_err(|_| Error::Config(format!("{key}={raw:?} is not a valid {}", std::any::type_name::<T>())))
    }

    pub fn get_str(&self, key: &str) -> Result<&str> {
        self.values.get(key).map(String::as_str).ok_or_else(|| Error::Config(format!("no key {key:?}")))
    }

    /// Effective values in key order, for `run.meta`.
    pub fn echo(&self) -> Vec<(String, String)> {
        self.values.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    }
}
