//! Plain-text `key=value` run configuration.
//!
//! Every command starts from its own table of defaults. A config file and
//! then command-line overrides replace entries; unknown keys are errors so
//! typos do not silently fall back to defaults.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn from_defaults(defaults: &[(&str, &str)]) -> Self {
        let values = defaults.iter().map(|&(k, v)| (k.to_string(), v.to_string())).collect();
        Self { values }
    }

    /// Replaces an existing key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.trim().to_string();
                Ok(())
            }
            None => {
                let known: Vec<&str> = self.values.keys().map(String::as_str).collect();
                bail!("unknown config key {key:?}; known keys: {}", known.join(", "))
            }
        }
    }

    /// Applies `key=value` lines. Blank lines and `#` comments are skipped.
    pub fn merge_text(&mut self, text: &str, source: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{source}:{}: expected key=value, got {raw:?}", i + 1))?;
            self.set(key.trim(), value).with_context(|| format!("{source}:{}", i + 1))?;
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        self.merge_text(&text, &path.display().to_string())
    }

    pub fn get_str(&self, key: &str) -> Result<&str> {
        self.values.get(key).map(String::as_str).ok_or_else(|| anyhow!("config key {key:?} is not defined"))
    }

    pub fn get<T>(&self, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        let raw = self.get_str(key)?;
        raw.parse().map_err(|e| anyhow!("config key {key}={raw:?}: {e}"))
    }

    /// Comma-separated list.
    pub fn get_list(&self, key: &str) -> Result<Vec<String>> {
        Ok(self.get_str(key)?.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
    }

    pub fn get_path(&self, key: &str) -> Result<PathBuf> {
        Ok(PathBuf::from(self.get_str(key)?))
    }

    pub fn get_bool(&self, key: &str) -> Result<bool> {
        match self.get_str(key)? {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            other => bail!("config key {key}={other:?}: expected true or false"),
        }
    }

    /// Sorted `key=value` lines.
    pub fn snapshot(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Snapshot without the keys that do not influence results.
    pub fn snapshot_without(&self, skip: &[&str]) -> String {
        self.values
            .iter()
            .filter(|(k, _)| !skip.contains(&k.as_str()))
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}
