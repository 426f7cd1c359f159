//! `key=value` run configuration with flag overrides and a content hash.

use crate::fail::{Failure, Result};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

/// Effective settings for one command: defaults, then the config file, then
/// flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    command: &'static str,
    values: BTreeMap<String, String>,
}

/// Parses `key=value` lines. Blank lines and lines starting with `#` are
/// ignored; later duplicates win.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Failure::Param(format!("config line {}: expected key=value", n + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Failure::Param(format!("config line {}: empty key", n + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    pub fn new(
        command: &'static str,
        defaults: &[(&str, &str)],
        file: Option<&Path>,
        flags: Vec<(String, Option<String>)>,
    ) -> Result<Self> {
        let mut values: BTreeMap<String, String> =
            defaults.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Param(format!("cannot read config {}: {e}", path.display())))?;
            for (k, v) in parse_pairs(&text)? {
                match values.get_mut(&k) {
                    Some(slot) => *slot = v,
                    None => return Err(Failure::Param(format!("unknown config key '{k}' for {command}"))),
                }
            }
        }
        for (k, v) in flags {
            if let Some(v) = v {
                match values.get_mut(&k) {
                    Some(slot) => *slot = v,
                    None => return Err(Failure::Param(format!("unknown key '{k}' for {command}"))),
                }
            }
        }
        Ok(Self { command, values })
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("{} has no key {key}", self.command))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|e| Failure::Param(format!("{key}={raw}: {e}")))
    }

    /// Empty values read as `None`.
    pub fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        if self.raw(key).is_empty() {
            Ok(None)
        } else {
            self.get(key).map(Some)
        }
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        let raw = self.raw(key);
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|e| Failure::Param(format!("{key}={raw}: {e}")))
            })
            .collect()
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.raw(key) {
            "true" | "1" | "yes" | "on" => Ok(true),
            "false" | "0" | "no" | "off" => Ok(false),
            other => Err(Failure::Param(format!("{key}={other}: expected a boolean"))),
        }
    }

    /// Canonical text: the command name, then sorted `key=value` lines.
    pub fn canonical(&self) -> String {
        let mut s = format!("command={}\n", self.command);
        for (k, v) in &self.values {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }

    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.canonical().as_bytes()).into()
    }

    pub fn hash_hex(&self) -> String {
        self.hash().iter().map(|b| format!("{b:02x}")).collect()
    }
}
