//! Flat `key = value` configuration files and run manifests.
//!
//! Config syntax: one `key = value` pair per line, keys made of lowercase
//! ASCII letters, digits and `_`. Text after `#` is a comment. Blank lines
//! are ignored and a key may appear only once. Lists are comma separated.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn valid_key(k: &str) -> bool {
    !k.is_empty() && k.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content
                .split_once('=')
                .ok_or_else(|| parse_err(line, "expected `key = value`"))?;
            let (k, v) = (k.trim(), v.trim());
            if !valid_key(k) {
                return Err(parse_err(line, format!("invalid key `{k}`")));
            }
            if v.is_empty() {
                return Err(parse_err(line, format!("key `{k}` has no value")));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(parse_err(line, format!("key `{k}` appears twice")));
            }
        }
        Ok(Self { entries })
    }

    pub fn from_map(entries: BTreeMap<String, String>) -> Result<Self> {
        let mut c = Self::default();
        for (k, v) in entries {
            c.set(&k, &v)?;
        }
        Ok(c)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !valid_key(key) {
            return Err(parse_err(0, format!("invalid key `{key}`")));
        }
        let value = value.trim();
        if value.is_empty() || value.contains(['#', '\n']) {
            return Err(parse_err(0, format!("invalid value for `{key}`")));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

/// One accepted key of an experiment config. `None` default means required.
#[derive(Debug, Clone, Copy)]
pub struct ParamSpec {
    pub key: &'static str,
    pub default: Option<&'static str>,
    pub help: &'static str,
}

/// A config checked against a schema, with defaults filled in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Params {
    values: BTreeMap<String, String>,
}

fn bad(key: &str, value: &str, what: &str) -> Error {
    Error::Parse {
        line: 0,
        message: format!("`{key}` = `{value}` is not {what}"),
    }
}

impl Params {
    pub fn resolve(config: &Config, schema: &[ParamSpec]) -> Result<Self> {
        if let Some(k) = config.entries.keys().find(|k| !schema.iter().any(|s| s.key == k.as_str())) {
            return Err(parse_err(0, format!("unknown key `{k}`")));
        }
        let mut values = BTreeMap::new();
        for spec in schema {
            let v = match (config.get(spec.key), spec.default) {
                (Some(v), _) => v.to_string(),
                (None, Some(d)) => d.to_string(),
                (None, None) => return Err(parse_err(0, format!("missing required key `{}`", spec.key))),
            };
            values.insert(spec.key.to_string(), v);
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn str(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("key `{key}` is not in the schema"))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let v = self.str(key);
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| bad(key, v, "a finite number"))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        let v = self.str(key);
        v.parse().map_err(|_| bad(key, v, "a nonnegative integer"))
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        let v = self.str(key);
        v.parse().map_err(|_| bad(key, v, "a nonnegative integer"))
    }

    pub fn bool(&self, key: &str) -> Result<bool> {
        let v = self.str(key);
        v.parse().map_err(|_| bad(key, v, "`true` or `false`"))
    }

    pub fn list(&self, key: &str) -> Vec<String> {
        self.str(key)
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect()
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        let v = self.str(key);
        self.list(key)
            .iter()
            .map(|s| s.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad(key, v, "a list of finite numbers"))
    }

    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>> {
        let v = self.str(key);
        self.list(key)
            .iter()
            .map(|s| s.parse().ok())
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad(key, v, "a list of nonnegative integers"))
    }

    pub fn to_config(&self) -> Config {
        Config {
            entries: self.values.clone(),
        }
    }
}

pub fn schema_help(schema: &[ParamSpec]) -> String {
    let mut s = String::new();
    for p in schema {
        let d = p.default.unwrap_or("(required)");
        let _ = writeln!(s, "{:<20} {:<28} {}", p.key, d, p.help);
    }
    s
}

pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Record written next to every experiment's outputs. Feeding `params` back
/// as a config reproduces the outputs byte for byte.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub experiment: String,
    pub library_version: String,
    pub seed: u64,
    pub params: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(experiment: &str, params: &Params, outputs: Vec<String>) -> Result<Self> {
        let seed = params.u64("seed")?;
        Ok(Self {
            experiment: experiment.to_string(),
            library_version: LIBRARY_VERSION.to_string(),
            seed,
            params: params.values.clone(),
            outputs,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Parses and checks internal consistency: the seed matches
    /// `params.seed` and every key and value is a legal config entry.
    pub fn parse(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text)?;
        if m.experiment.is_empty() {
            return Err(parse_err(0, "manifest has an empty experiment name"));
        }
        match m.params.get("seed").map(|s| s.parse::<u64>()) {
            Some(Ok(s)) if s == m.seed => {}
            _ => return Err(parse_err(0, "manifest seed does not match params.seed")),
        }
        m.config()?;
        Ok(m)
    }

    pub fn config(&self) -> Result<Config> {
        Config::from_map(self.params.clone())
    }
}
