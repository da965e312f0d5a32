//! Plain-text `key = value` configuration files.
//!
//! One pair per line; `#` starts a comment; blank lines are ignored.
//! Values may be wrapped in double quotes. This is also a valid subset of
//! TOML, so `params.toml` files with flat keys parse here unchanged.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{IvError, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
    pending: BTreeMap<String, String>,
}

pub fn parse_key_values(text: &str) -> Result<KeyValues> {
    let mut pending = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            IvError::InvalidArgument(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let key = key.trim().to_string();
        let value = value.trim().trim_matches('"').to_string();
        if pending.insert(key.clone(), value).is_some() {
            return Err(IvError::InvalidArgument(format!(
                "line {}: duplicate key `{key}`",
                lineno + 1
            )));
        }
    }
    Ok(KeyValues {
        entries: Vec::new(),
        pending,
    })
}

impl KeyValues {
    /// Remove and parse `key`, or return `default` when absent.
    pub fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.pending.remove(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| {
                IvError::InvalidArgument(format!("cannot parse `{key}` value {v:?}"))
            }),
        }
    }

    /// Remove and parse a required `key`.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<T> {
        if !self.pending.contains_key(key) {
            return Err(IvError::InvalidArgument(format!("missing key `{key}`")));
        }
        let v = self.pending.remove(key).expect("checked");
        v.parse()
            .map_err(|_| IvError::InvalidArgument(format!("cannot parse `{key}` value {v:?}")))
    }

    /// Remove and return the raw string for `key`.
    pub fn take_str(&mut self, key: &str) -> Option<String> {
        self.pending.remove(key)
    }

    /// Error if any key was not consumed.
    pub fn finish(self) -> Result<()> {
        match self.pending.keys().next() {
            None => Ok(()),
            Some(k) => Err(IvError::InvalidArgument(format!("unknown key `{k}`"))),
        }
    }

    pub fn insert(&mut self, key: &str, value: impl Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
