//! Defaults from a plain-text config file of `key value` lines.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::Failure;

/// Keys a config file may set. Each one names the long flag it backs.
pub const KEYS: &[&str] = &[
    "rows",
    "cols",
    "mode",
    "seed",
    "max-cycles",
    "threshold",
    "damping",
    "max-iters",
    "tol",
    "schedule",
    "burn-in",
    "samples",
    "gibbs-period",
    "cap-vars",
    "cap-shadows",
    "cap-rels",
    "cap-table-words",
    "noise-lsb",
    "noise-seed",
    "evidence",
    "out",
    "trace",
    "stats",
    "beliefs",
    "assignment",
];

#[derive(Debug, Default, Clone)]
pub struct Config {
    values: BTreeMap<String, (usize, String)>,
    path: String,
}

impl Config {
    pub fn parse(text: &str, path: &str) -> Result<Config, Failure> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let mut parts = body.splitn(2, char::is_whitespace);
            let key = parts.next().unwrap_or("").replace('_', "-");
            let value = parts.next().unwrap_or("").trim();
            if !KEYS.contains(&key.as_str()) {
                return Err(Failure::input(format!(
                    "{path}:{line}: unknown key '{key}'"
                )));
            }
            if value.is_empty() {
                return Err(Failure::input(format!(
                    "{path}:{line}: key '{key}' has no value"
                )));
            }
            if values
                .insert(key.clone(), (line, value.to_string()))
                .is_some()
            {
                return Err(Failure::input(format!(
                    "{path}:{line}: key '{key}' set twice"
                )));
            }
        }
        Ok(Config {
            values,
            path: path.to_string(),
        })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, Failure>
    where
        T::Err: std::fmt::Display,
    {
        debug_assert!(KEYS.contains(&key), "{key}");
        match self.values.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|e| {
                Failure::input(format!(
                    "{}:{line}: bad value '{v}' for '{key}': {e}",
                    self.path
                ))
            }),
        }
    }

    /// The flag if given, else the config value, else `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, Failure>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.pick_opt(flag, key)?.unwrap_or(default))
    }

    pub fn pick_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, Failure>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }
}
