//! Flat `key=value` configuration files.
//!
//! Keys mirror the long flag names (`lambda-grid-size`, `gamma-grid`, ...);
//! underscores are accepted in place of dashes. Blank lines and lines
//! starting with `#` are ignored. Flags given on the command line win over
//! the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::CliError;

/// Every key a config file may contain.
pub const KNOWN_KEYS: [&str; 22] = [
    "data",
    "rule",
    "gamma-grid",
    "lambda-grid-size",
    "folds",
    "seed",
    "workers",
    "m",
    "preset",
    "out",
    "methods",
    "covariates",
    "clip-epsilon",
    "intercept",
    "scenario",
    "strength",
    "heterogeneity",
    "n",
    "p",
    "mu",
    "noise-sd",
    "name",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    source: PathBuf,
    /// key -> (1-based line, raw value)
    entries: BTreeMap<String, (usize, String)>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, source: &Path) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "{}: line {line_no}: expected key=value, got {line:?}",
                    source.display()
                ))
            })?;
            let key = key.trim().replace('_', "-").to_ascii_lowercase();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!(
                    "{}: line {line_no}: unknown key `{key}`",
                    source.display()
                )));
            }
            if entries.insert(key.clone(), (line_no, value.trim().to_string())).is_some() {
                return Err(CliError::Usage(format!(
                    "{}: line {line_no}: duplicate key `{key}`",
                    source.display()
                )));
            }
        }
        Ok(Self {
            source: source.to_path_buf(),
            entries,
        })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Typed value of `key`; a parse failure names the key and line.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|e| {
                CliError::Usage(format!(
                    "{}: line {line}: invalid value for `{key}`: {e}",
                    self.source.display()
                ))
            }),
        }
    }

    /// Comma-separated list value of `key`.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => parse_list(v).map(Some).map_err(|e| {
                CliError::Usage(format!(
                    "{}: line {line}: invalid value for `{key}`: {e}",
                    self.source.display()
                ))
            }),
        }
    }
}

/// Splits `a,b,c` and parses each item.
pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|e| format!("{t:?}: {e}")))
        .collect()
}

/// Renders `(key, value)` pairs in the file format.
pub fn render(pairs: &[(&str, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}
