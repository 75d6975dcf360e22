//! `key = value` run configuration with typed access.

use std::fmt;
use std::str::FromStr;

use super::CliError;

/// One configurable key with its default and help text.
#[derive(Debug, Clone, Copy)]
pub struct ParamSpec {
    pub key: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

pub(crate) const fn p(key: &'static str, default: &'static str, help: &'static str) -> ParamSpec {
    ParamSpec { key, default, help }
}

/// Resolved values of one subcommand, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    command: &'static str,
    entries: Vec<(&'static str, String)>,
}

impl RunConfig {
    pub fn from_specs(command: &'static str, specs: &[ParamSpec]) -> Self {
        Self {
            command,
            entries: specs.iter().map(|s| (s.key, s.default.to_string())).collect(),
        }
    }

    pub fn command(&self) -> &'static str {
        self.command
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let entry = self
            .entries
            .iter_mut()
            .find(|(k, _)| *k == key)
            .ok_or_else(|| CliError::Usage(format!("unknown key '{key}' for '{}'", self.command)))?;
        entry.1 = value.trim().to_string();
        Ok(())
    }

    /// Applies a config file: one `key = value` per line, `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected 'key = value'", lineno + 1)))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.entries
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v.as_str())
            .unwrap_or_else(|| panic!("key '{key}' is not declared for '{}'", self.command))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        let v = self.raw(key);
        v.parse()
            .map_err(|_| CliError::Usage(format!("invalid value '{v}' for '{key}'")))
    }

    /// Comma-separated list; empty string gives an empty list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, CliError> {
        let v = self.raw(key);
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| CliError::Usage(format!("invalid list item '{s}' for '{key}'")))
            })
            .collect()
    }

    /// Non-empty string value.
    pub fn required(&self, key: &str) -> Result<&str, CliError> {
        match self.raw(key) {
            "" => Err(CliError::Usage(format!("'{key}' is required"))),
            v => Ok(v),
        }
    }

    /// Value of `key`, or `fallback` when empty.
    pub fn path_or(&self, key: &str, fallback: String) -> String {
        match self.raw(key) {
            "" => fallback,
            v => v.to_string(),
        }
    }
}

impl fmt::Display for RunConfig {
    /// Parseable by [`RunConfig::apply_text`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# pcinst {}", self.command)?;
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}
