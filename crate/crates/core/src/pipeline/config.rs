//! Line-oriented `key = value` configuration text.
//!
//! Blank lines and `#` comments are ignored. A key may repeat (for example
//! `shape`); single-valued getters reject repeats.

use std::collections::BTreeSet;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: Vec<(String, String, usize)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", i + 1)));
            }
            entries.push((k.to_string(), v.trim().to_string(), i + 1));
        }
        Ok(KeyValues { entries })
    }

    pub fn all(&self, key: &str) -> Vec<&str> {
        self.entries.iter().filter(|e| e.0 == key).map(|e| e.1.as_str()).collect()
    }

    pub fn raw(&self, key: &str) -> Result<Option<&str>> {
        let mut found = self.entries.iter().filter(|e| e.0 == key);
        let first = found.next();
        if let Some(dup) = found.next() {
            return Err(Error::Config(format!("line {}: `{key}` given more than once", dup.2)));
        }
        Ok(first.map(|e| e.1.as_str()))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key)? {
            None => Ok(None),
            Some(v) => parse_value(key, v).map(Some),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn get_vec(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.raw(key)? {
            None => Ok(None),
            Some(v) => parse_numbers(key, v).map(Some),
        }
    }

    /// Fails on keys outside `known`.
    pub fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        let known: BTreeSet<&str> = known.iter().copied().collect();
        for (k, _, line) in &self.entries {
            if !known.contains(k.as_str()) {
                return Err(Error::Config(format!("line {line}: unknown key `{k}`")));
            }
        }
        Ok(())
    }
}

pub fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse {v:?}")))
}

/// Whitespace- or comma-separated numbers.
pub fn parse_numbers(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| parse_value(key, t))
        .collect()
}
